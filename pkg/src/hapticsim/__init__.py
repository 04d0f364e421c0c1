"""Deterministic discrete-event simulator of a client-server distributed
haptic virtual environment on an impaired network.

Submodules: ``statemodel`` (updates, quantization, wire codec), ``channel``
(delay/jitter/loss/capacity link model), ``compensation`` (concealment
techniques), ``engine`` (scenario and event loop), ``metrics`` (interval
statistics and perceptual checks), ``scenario_io`` and ``cli``.
"""

from .channel import (
    CapacityMode,
    Channel,
    ChannelConfig,
    Delivered,
    Dropped,
    DropReason,
)
from .compensation import (
    CompensationConfig,
    DedupWindow,
    PredictorHistory,
    ReceiveDisposition,
    adaptive_stiffness,
    delay_equalization_lags,
    fec_encode,
    fec_receive,
    predict_linear,
    reliable_send_schedule,
    render_force,
    smoothing_release,
)
from .engine import (
    Scenario,
    SimResult,
    Waypoint,
    box_penetration,
    regenerate_report,
    run,
    trajectory_position,
)
from .metrics import (
    MetricsReport,
    PerceptualFlags,
    bandwidth_kbps,
    force_discontinuities,
    interval_stats,
    jitter_stats,
    perceptual_flags,
    state_divergence,
)
from .scenario_io import (
    ScenarioError,
    load_scenario,
    parse_scenario,
    serialize_scenario,
    standard_scenario,
)
from .statemodel import (
    EncodingOverflowError,
    QuantizerConfig,
    UpdateKind,
    UpdatePacket,
    Vec3,
    WireFormatError,
    decode_packet,
    encode_packet,
    packet_size,
    quantize,
    should_transmit,
)

__version__ = "0.1.0"
