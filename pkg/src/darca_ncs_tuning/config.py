"""
config.py

Turns experiment config mappings (loaded by ``ArtifactUtils.load_config``)
into the library's frozen dataclasses. Every parser collects the problems
it finds and raises a single ``ConfigException`` listing all of them.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Union

import numpy as np
from darca_exception.exception import DarcaException
from darca_log_facility.logger import DarcaLogger

from darca_ncs_tuning.artifacts import ArtifactException, ArtifactUtils
from darca_ncs_tuning.fractional import (
    ControllerParams,
    FilterBand,
    FractionalException,
)
from darca_ncs_tuning.network import ChannelConfig, DelayLaw, NetworkException
from darca_ncs_tuning.optimizers import (
    DEConfig,
    GAConfig,
    OptimizerException,
    SearchBox,
)
from darca_ncs_tuning.plants import (
    DelayedRationalPlant,
    PlantException,
    plant_from_config,
)
from darca_ncs_tuning.simloop import (
    CostWeights,
    SimConfig,
    SimulationException,
    StepSignal,
)

# Initialize the logger
logger = DarcaLogger(name="config").get_logger()

# horizon and disturbance instant per plant family
LONG_HORIZON_PLANTS = {"p2_sodup": (40.0, 20.0)}
DEFAULT_SHAPE = (10.0, 5.0)
DEFAULT_REPLICATES = 5

_LIBRARY_ERRORS = (
    ArtifactException,
    FractionalException,
    NetworkException,
    OptimizerException,
    PlantException,
    SimulationException,
)


class ConfigException(DarcaException):
    """
    Custom exception for experiment config errors.
    Inherits from DarcaException to provide structured logging,
    metadata handling, and optional chaining of original exceptions.
    """

    def __init__(self, message, error_code=None, metadata=None, cause=None):
        super().__init__(
            message=message,
            error_code=error_code or "CONFIG_SCHEMA_ERROR",
            metadata=metadata,
            cause=cause,
        )


class _Problems:
    """Collects schema problems under a dotted path."""

    def __init__(self):
        self.items: List[str] = []

    def add(self, path: str, message: str) -> None:
        self.items.append(f"{path}: {message}")

    def guard(self, path: str, build, default=None):
        try:
            return build()
        except _LIBRARY_ERRORS as e:
            self.add(path, f"{e.error_code}: {e.message}")
        except (KeyError, TypeError, ValueError) as e:
            self.add(path, f"{type(e).__name__}: {e}")
        return default

    def raise_if_any(self, source: str) -> None:
        if self.items:
            raise ConfigException(
                message=f"Config '{source}' has {len(self.items)} problem(s): "
                + "; ".join(self.items),
                error_code="CONFIG_SCHEMA_ERROR",
                metadata={"source": source, "problems": list(self.items)},
            )


def parse_delay_law(data: dict) -> DelayLaw:
    law = data.get("law", "constant")
    if law == "constant":
        return DelayLaw.constant(float(data.get("d", data.get("lo", 0.0))))
    if law == "uniform":
        return DelayLaw.uniform(float(data["lo"]), float(data["hi"]))
    if law == "truncated_normal":
        return DelayLaw.truncated_normal(
            float(data["mean"]), float(data["sd"]), float(data["lo"]), float(data["hi"])
        )
    if law == "truncated_exponential":
        return DelayLaw.truncated_exponential(
            float(data["rate"]), float(data["lo"]), float(data["hi"])
        )
    return DelayLaw(law, 0.0, 0.0)


def parse_channel(data: dict) -> ChannelConfig:
    seed = data.get("seed")
    return ChannelConfig(
        drop_prob=float(data.get("drop_prob", 0.0)),
        delay=parse_delay_law(data.get("delay", {})),
        seed=None if seed is None else int(seed),
    )


def parse_loop_channel(data: dict) -> ChannelConfig:
    """
    Channel of a closed-loop path. Loop streams derive from the experiment
    seed, so a per-channel ``seed`` (honoured by ``channel-audit`` only) is
    rejected here.
    """
    if "seed" in data:
        raise ValueError(
            "per-channel 'seed' only applies to channel-audit; closed-loop "
            "streams derive from the experiment seed"
        )
    return parse_channel(data)


def _step(data: Optional[dict], default: StepSignal) -> StepSignal:
    if data is None:
        return default
    return StepSignal(
        float(data.get("amplitude", default.amplitude)),
        float(data.get("time", default.time)),
    )


def resolve_controller(data: dict) -> dict:
    """
    Controller mapping, with ``from_result`` pointing at a ``result.json``
    written by ``tune``. Keys given next to ``from_result`` win.
    """
    if "from_result" not in data:
        return data
    loaded = ArtifactUtils.load_config(data["from_result"])
    merged = dict(loaded["parameters"])
    merged.update({k: v for k, v in data.items() if k != "from_result"})
    return merged


def parse_band(data: dict) -> FilterBand:
    defaults = FilterBand()
    return FilterBand(
        float(data.get("omega_b", defaults.omega_b)),
        float(data.get("omega_h", defaults.omega_h)),
        int(data.get("n_half", defaults.n_half)),
    )


def parse_sim(
    data: dict,
    plant_name: str = "custom",
    band: Optional[FilterBand] = None,
) -> SimConfig:
    """
    Build a SimConfig. ``network`` sets both paths; ``sc_channel`` and
    ``ca_channel`` override it per path.
    """
    horizon_default, disturbance_default = LONG_HORIZON_PLANTS.get(
        plant_name, DEFAULT_SHAPE
    )
    network = ChannelConfig()
    if "network" in data:
        network = parse_loop_channel(data["network"])
    sc = parse_loop_channel(data["sc_channel"]) if "sc_channel" in data else network
    ca = parse_loop_channel(data["ca_channel"]) if "ca_channel" in data else network
    return SimConfig(
        ts=float(data.get("ts", 0.01)),
        horizon=float(data.get("horizon", horizon_default)),
        setpoint_step=_step(data.get("setpoint"), StepSignal(1.0, 0.0)),
        load_disturbance=_step(
            data.get("disturbance"), StepSignal(1.0, disturbance_default)
        ),
        sc_channel=sc,
        ca_channel=ca,
        tso_enabled=bool(data.get("tso_enabled", True)),
        substeps=int(data.get("substeps", 10)),
        band=band or FilterBand(),
    )


def parse_optimizer(data: dict) -> Union[DEConfig, GAConfig]:
    algorithm = data.get("algorithm", "de")
    if algorithm == "de":
        return DEConfig(
            variant=data.get("variant", "rand_1"),
            pop_size=int(data.get("np", 20)),
            g_max=int(data.get("g_max", 200)),
            f=float(data.get("f", 0.85)),
            cr=float(data.get("cr", 0.5)),
        )
    if algorithm == "ga":
        return GAConfig(
            pop=int(data.get("pop", 20)),
            g_max=int(data.get("g_max", 200)),
            crossover_fraction=float(data.get("crossover_fraction", 0.8)),
            mutation_fraction=float(data.get("mutation_fraction", 0.2)),
            elite_count=int(data.get("elite_count", 2)),
        )
    raise ValueError(f"algorithm must be 'de' or 'ga', got {algorithm!r}")


def parse_grid(data: Any) -> List[float]:
    """Explicit list or ``{"start", "stop", "num"}``."""
    if isinstance(data, dict):
        return [
            float(v)
            for v in np.linspace(
                float(data["start"]), float(data["stop"]), int(data["num"])
            )
        ]
    return [float(v) for v in data]


@dataclass(frozen=True)
class Experiment:
    """Everything a command needs, parsed and validated."""

    source: str
    raw: Dict[str, Any]
    seed: int
    replicates: int
    weights: CostWeights
    sim: SimConfig
    plant: Optional[DelayedRationalPlant] = None
    controller: Optional[ControllerParams] = None
    optimizer: Optional[Union[DEConfig, GAConfig]] = None
    mode: str = "fopid"
    box: Optional[SearchBox] = None


def parse_experiment(
    raw: Dict[str, Any],
    source: str = "<memory>",
    require: tuple = (),
    seed_override: Optional[int] = None,
) -> Experiment:
    """
    Parse a whole experiment mapping.

    Args:
        raw (dict): Loaded config.
        source (str): Name used in diagnostics.
        require (tuple): Top-level keys the calling command needs.
        seed_override (int, optional): Replaces the config seed.

    Raises:
        ConfigException: ``CONFIG_SCHEMA_ERROR`` with every problem found.
    """
    problems = _Problems()
    for key in require:
        if key not in raw:
            problems.add(key, "required key is missing")

    plant = None
    if "plant" in raw:
        plant = problems.guard("plant", lambda: plant_from_config(raw["plant"]))

    controller = None
    band = FilterBand()
    if "controller" in raw:
        section = problems.guard(
            "controller", lambda: resolve_controller(raw["controller"]), {}
        )
        controller = problems.guard(
            "controller", lambda: ControllerParams.from_dict(section)
        )
        band = problems.guard(
            "controller", lambda: parse_band(section), FilterBand()
        )

    plant_name = plant.name if plant is not None else "custom"
    sim = problems.guard(
        "sim", lambda: parse_sim(raw.get("sim", {}), plant_name, band)
    )
    weights = problems.guard(
        "weights",
        lambda: CostWeights(
            float(raw.get("weights", {}).get("w1", 1.0)),
            float(raw.get("weights", {}).get("w2", 1.0)),
        ),
    )

    optimizer = None
    if "optimizer" in raw:
        optimizer = problems.guard(
            "optimizer", lambda: parse_optimizer(raw["optimizer"])
        )

    mode = raw.get("mode", "fopid")
    box = problems.guard("mode", lambda: SearchBox.for_mode(mode))
    if "bounds" in raw:
        box = problems.guard(
            "bounds",
            lambda: SearchBox(raw["bounds"]["lower"], raw["bounds"]["upper"]),
        )

    replicates = problems.guard(
        "replicates", lambda: int(raw.get("replicates", DEFAULT_REPLICATES)), 0
    )
    if replicates is not None and replicates < 1:
        problems.add("replicates", "must be >= 1")
    seed = problems.guard("seed", lambda: int(raw.get("seed", 0)), 0)
    if seed_override is not None:
        seed = int(seed_override)
    if seed is not None and seed < 0:
        problems.add("seed", "must be a non-negative integer")

    problems.raise_if_any(source)
    logger.debug(f"Parsed experiment '{source}' (plant={plant_name}, mode={mode})")
    return Experiment(
        source=source,
        raw=raw,
        seed=seed,
        replicates=replicates,
        weights=weights,
        sim=sim,
        plant=plant,
        controller=controller,
        optimizer=optimizer,
        mode=mode,
        box=box,
    )


def load_experiment(
    path: str,
    require: tuple = (),
    seed_override: Optional[int] = None,
) -> Experiment:
    """
    Read and parse an experiment config file.

    Raises:
        ConfigException: ``CONFIG_READ_ERROR`` if the file cannot be read or
                         parsed, ``CONFIG_SCHEMA_ERROR`` for schema problems.
    """
    try:
        raw = ArtifactUtils.load_config(path)
    except ArtifactException as e:
        raise ConfigException(
            message=f"Cannot read config: {path}",
            error_code="CONFIG_READ_ERROR",
            metadata={"path": path, "reason": e.error_code},
            cause=e,
        ) from e
    return parse_experiment(raw, path, require, seed_override)


def parse_section(source: str, path: str, build):
    """Parse one command-specific section with the same diagnostics."""
    problems = _Problems()
    value = problems.guard(path, build)
    problems.raise_if_any(source)
    return value
