import pytest

from hapticsim.engine import run
from hapticsim.scenario_io import standard_scenario


@pytest.fixture(scope="session")
def std_fine():
    """Standard 120 s workload as bundled: quantum 1/10000, 12 decimals."""
    return run(standard_scenario())


@pytest.fixture(scope="session")
def std_coarse12():
    """Quantum reduced to 1/1000, wire width unchanged."""
    return run(standard_scenario(overrides=["quantizer.quantum=0.001"]))


@pytest.fixture(scope="session")
def std_coarse4():
    """Quantum 1/1000 and wire width reduced to 4 decimals."""
    return run(standard_scenario(
        overrides=["quantizer.quantum=0.001", "quantizer.decimals=4"]))


@pytest.fixture(scope="session")
def std_loss_predictor_off():
    return run(standard_scenario(overrides=["channel.s2c.loss_prob=0.2"]))


@pytest.fixture(scope="session")
def std_loss_predictor_on():
    return run(standard_scenario(overrides=[
        "channel.s2c.loss_prob=0.2", "compensation.predictor_enabled=true"]))


@pytest.fixture(scope="session")
def all_standard_runs(std_fine, std_coarse12, std_coarse4,
                      std_loss_predictor_off, std_loss_predictor_on):
    return {
        "fine": std_fine,
        "coarse12": std_coarse12,
        "coarse4": std_coarse4,
        "loss_off": std_loss_predictor_off,
        "loss_on": std_loss_predictor_on,
    }
