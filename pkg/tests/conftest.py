import json

import pytest

from darca_ncs_tuning.fractional import ControllerParams
from darca_ncs_tuning.network import ChannelConfig, DelayLaw
from darca_ncs_tuning.plants import make_fodup, make_foptd, plant_preset
from darca_ncs_tuning.simloop import CostWeights, SimConfig, StepSignal

# Reference controllers for the preset plants, tuned with and without a network.
NO_NETWORK_PID = ControllerParams(2.688684627, 1.486143944, 0.045784858)
NETWORKED_PID = ControllerParams(2.725339, 1.624656, 0.026691)
P1_FOPID = ControllerParams(2.522454, 1.470881, 0.182351, 0.989966, 0.766836)
P2_FOPID = ControllerParams(0.401094, 0.478495, 4.220372, 0.734643, 0.468884)


@pytest.fixture
def p1():
    return plant_preset("p1_fodup")


@pytest.fixture
def p2():
    return plant_preset("p2_sodup")


@pytest.fixture
def unit_fodup():
    return make_fodup(1.0, 0.0, 1.0)


@pytest.fixture
def stable_foptd():
    return make_foptd(1.0, 0.1, 1.0)


@pytest.fixture
def weights():
    return CostWeights(1.0, 1.0)


@pytest.fixture
def lossy_network():
    return ChannelConfig(0.1, DelayLaw.uniform(0.0, 0.1))


@pytest.fixture
def short_sim():
    """Two seconds, no disturbance: cheap enough for many replicates."""
    return SimConfig(
        ts=0.01,
        horizon=2.0,
        load_disturbance=StepSignal(0.0, 1.0),
    )


@pytest.fixture
def write_config(tmp_path):
    """Write a config mapping to a JSON file and return its path."""

    def _write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return str(path)

    return _write
