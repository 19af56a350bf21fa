from .artifacts import ArtifactException, ArtifactUtils
from .config import ConfigException, load_experiment, parse_experiment
from .fractional import (
    ControllerParams,
    FilterBand,
    FractionalException,
    OustaloupConfig,
    RationalFilter,
    StateSpaceModel,
    filter_to_statespace,
    fopid_controller,
    freq_response,
    oustaloup_filter,
)
from .network import (
    ChannelConfig,
    DelayLaw,
    NetworkException,
    Packet,
    TsoBuffer,
    channel_poll,
    channel_send,
    channel_stats,
    tso_accept,
)
from .optimizers import (
    DEConfig,
    GAConfig,
    OptimizerException,
    OptResult,
    SearchBox,
    de_optimize,
    ga_optimize,
    tune_controller,
)
from .plants import (
    PLANT_PRESETS,
    DelayedRationalPlant,
    PlantException,
    integrate_step,
    make_fodup,
    make_foptd,
    make_sodup,
    plant_preset,
)
from .simloop import (
    CostWeights,
    SimConfig,
    SimulationException,
    Trace,
    cost,
    expected_cost,
    run_closed_loop,
    surface_sweep,
)

__all__ = [
    "ArtifactException",
    "ArtifactUtils",
    "ChannelConfig",
    "ConfigException",
    "ControllerParams",
    "CostWeights",
    "DEConfig",
    "DelayLaw",
    "DelayedRationalPlant",
    "FilterBand",
    "FractionalException",
    "GAConfig",
    "NetworkException",
    "OptResult",
    "OptimizerException",
    "OustaloupConfig",
    "PLANT_PRESETS",
    "Packet",
    "PlantException",
    "RationalFilter",
    "SearchBox",
    "SimConfig",
    "SimulationException",
    "StateSpaceModel",
    "Trace",
    "TsoBuffer",
    "channel_poll",
    "channel_send",
    "channel_stats",
    "cost",
    "de_optimize",
    "expected_cost",
    "filter_to_statespace",
    "fopid_controller",
    "freq_response",
    "ga_optimize",
    "integrate_step",
    "load_experiment",
    "make_fodup",
    "make_foptd",
    "make_sodup",
    "oustaloup_filter",
    "parse_experiment",
    "plant_preset",
    "run_closed_loop",
    "surface_sweep",
    "tso_accept",
    "tune_controller",
]
