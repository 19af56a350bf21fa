"""
optimizers.py

Population-based minimizers over a box: differential evolution with five
mutation variants and a real-coded genetic algorithm, plus the controller
tuning campaign that drives them with the expected closed-loop cost.

All random draws for a generation happen on the coordinator, in a fixed
order, before the candidates are evaluated; evaluation may then run on
several workers without changing the result.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from darca_exception.exception import DarcaException
from darca_log_facility.logger import DarcaLogger

from darca_ncs_tuning.fractional import ControllerParams
from darca_ncs_tuning.plants import DelayedRationalPlant
from darca_ncs_tuning.simloop import (
    CostWeights,
    ExpectedCost,
    SimConfig,
    expected_cost,
)
from darca_ncs_tuning.workers import parallel_map

# Initialize the logger
logger = DarcaLogger(name="optimizers").get_logger()

DE_VARIANTS = (
    "rand_1",
    "local_to_best_1",
    "best_1_jitter",
    "rand_1_vector_dither",
    "rand_1_generation_dither",
)
JITTER_SCALE = 0.0001
GAIN_BOUNDS = (0.0, 100.0)
ORDER_BOUNDS = (0.0, 2.0)
BLEND_ALPHA = 0.5
MUTATION_SD_FRACTION = 0.1


class OptimizerException(DarcaException):
    """
    Custom exception for optimizer configuration errors.
    Inherits from DarcaException to provide structured logging,
    metadata handling, and optional chaining of original exceptions.
    """

    def __init__(self, message, error_code=None, metadata=None, cause=None):
        super().__init__(
            message=message,
            error_code=error_code or "OPTIMIZER_ERROR",
            metadata=metadata,
            cause=cause,
        )


@dataclass(frozen=True)
class SearchBox:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if len(lower) != len(upper) or not lower or any(
            lo >= hi for lo, hi in zip(lower, upper)
        ):
            raise OptimizerException(
                message="Search box needs lower < upper in every dimension",
                error_code="INVALID_SEARCH_BOX",
                metadata={"lower": list(lower), "upper": list(upper)},
            )

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(count, self.dim))

    @classmethod
    def for_mode(cls, mode: str) -> "SearchBox":
        """{Kp, Ki, Kd} in [0, 100]; fopid adds {lambda, mu} in [0, 2]."""
        if mode == "pid":
            return cls((GAIN_BOUNDS[0],) * 3, (GAIN_BOUNDS[1],) * 3)
        if mode == "fopid":
            return cls(
                (GAIN_BOUNDS[0],) * 3 + (ORDER_BOUNDS[0],) * 2,
                (GAIN_BOUNDS[1],) * 3 + (ORDER_BOUNDS[1],) * 2,
            )
        raise OptimizerException(
            message=f"Unknown tuning mode: {mode}",
            error_code="UNKNOWN_MODE",
            metadata={"mode": mode},
        )


@dataclass(frozen=True)
class DEConfig:
    variant: str = "rand_1"
    pop_size: int = 20
    g_max: int = 200
    f: float = 0.85
    cr: float = 0.5

    def __post_init__(self):
        problems = []
        if self.variant not in DE_VARIANTS:
            problems.append(f"variant must be one of {', '.join(DE_VARIANTS)}")
        if not 0.0 < self.f <= 2.0:
            problems.append("F must lie in (0, 2]")
        if not 0.0 <= self.cr <= 1.0:
            problems.append("Cr must lie in [0, 1]")
        if self.g_max < 0:
            problems.append("g_max must be >= 0")
        if problems:
            raise OptimizerException(
                message="; ".join(problems),
                error_code="INVALID_DE_CONFIG",
                metadata=self.to_dict(),
            )
        _check_population(self.pop_size)

    @property
    def algorithm(self) -> str:
        return "de"

    def to_dict(self) -> dict:
        return {
            "algorithm": "de",
            "variant": self.variant,
            "np": self.pop_size,
            "g_max": self.g_max,
            "f": self.f,
            "cr": self.cr,
        }


@dataclass(frozen=True)
class GAConfig:
    pop: int = 20
    g_max: int = 200
    crossover_fraction: float = 0.8
    mutation_fraction: float = 0.2
    elite_count: int = 2

    def __post_init__(self):
        problems = []
        if not 0 <= self.elite_count < self.pop:
            problems.append("elite_count must lie in [0, pop)")
        for name in ("crossover_fraction", "mutation_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if self.pop < 2:
            problems.append("pop must be >= 2")
        if self.g_max < 0:
            problems.append("g_max must be >= 0")
        if problems:
            raise OptimizerException(
                message="; ".join(problems),
                error_code="INVALID_GA_CONFIG",
                metadata=self.to_dict(),
            )

    @property
    def algorithm(self) -> str:
        return "ga"

    def to_dict(self) -> dict:
        return {
            "algorithm": "ga",
            "pop": self.pop,
            "g_max": self.g_max,
            "crossover_fraction": self.crossover_fraction,
            "mutation_fraction": self.mutation_fraction,
            "elite_count": self.elite_count,
        }


@dataclass
class OptResult:
    best_params: np.ndarray
    best_cost: float
    history: List[float] = field(default_factory=list)
    evaluations: int = 0

    def history_rows(self) -> list:
        return [(g, c) for g, c in enumerate(self.history)]


def _check_population(size: int) -> None:
    if size < 4:
        raise OptimizerException(
            message="DE needs a population of at least 4",
            error_code="POPULATION_TOO_SMALL",
            metadata={"size": size},
        )


def _pick_distinct(rng: np.random.Generator, size: int, exclude: int, count: int):
    candidates = [i for i in range(size) if i != exclude]
    return rng.choice(candidates, size=count, replace=False)


def de_mutate(
    population: np.ndarray,
    best: np.ndarray,
    rng: np.random.Generator,
    cfg: DEConfig,
    target: int = 0,
    generation_dither: Optional[float] = None,
) -> np.ndarray:
    """
    Build the mutant vector for population member *target*.

    Args:
        population (np.ndarray): Current population, one row per member.
        best (np.ndarray): Best member of the current population.
        rng (np.random.Generator): Coordinator stream.
        cfg (DEConfig): Variant and scale factor F.
        target (int): Index of the target vector x_i.
        generation_dither (float, optional): Shared factor for
            ``rand_1_generation_dither``; drawn here when absent.

    Returns:
        np.ndarray: The unclamped mutant.

    Raises:
        OptimizerException: If the population has fewer than 4 members.
    """
    _check_population(len(population))
    r0, r1, r2 = _pick_distinct(rng, len(population), target, 3)
    diff = population[r1] - population[r2]
    f = cfg.f
    if cfg.variant == "rand_1":
        return population[r0] + f * diff
    if cfg.variant == "local_to_best_1":
        x_i = population[target]
        return x_i + f * (best - x_i) + f * diff
    if cfg.variant == "best_1_jitter":
        f_j = f + JITTER_SCALE * rng.random(len(best))
        return best + f_j * diff
    if cfg.variant == "rand_1_vector_dither":
        dither = f + rng.random() * (1.0 - f)
        return population[r0] + dither * diff
    if generation_dither is None:
        generation_dither = f + rng.random() * (1.0 - f)
    return population[r0] + generation_dither * diff


def binomial_crossover(
    target: np.ndarray,
    mutant: np.ndarray,
    cr: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Take each component from the mutant with probability Cr; one always."""
    dim = len(target)
    forced = rng.integers(dim)
    mask = rng.random(dim) < cr
    mask[forced] = True
    return np.where(mask, mutant, target)


def _evaluate(objective: Callable, candidates: np.ndarray, jobs: int) -> np.ndarray:
    return np.array(parallel_map(objective, list(candidates), jobs), dtype=float)


def de_optimize(
    objective: Callable[[np.ndarray], float],
    box: SearchBox,
    cfg: DEConfig,
    seed: int,
    jobs: int = 1,
) -> OptResult:
    """
    Differential evolution with binomial crossover and greedy selection.

    Args:
        objective (Callable): Total function of a parameter vector.
        box (SearchBox): Trial vectors are clamped into it.
        cfg (DEConfig): Variant, NP, G_max, F, Cr.
        seed (int): Seed of the coordinator stream.
        jobs (int): Evaluation workers; results do not depend on it.

    Returns:
        OptResult: Best member, generation-best history (G_max + 1 entries)
        and NP * (G_max + 1) evaluations.
    """
    rng = np.random.default_rng(seed)
    population = box.sample(rng, cfg.pop_size)
    costs = _evaluate(objective, population, jobs)
    evaluations = cfg.pop_size
    history = [float(costs.min())]

    for generation in range(cfg.g_max):
        best = population[int(np.argmin(costs))].copy()
        shared = None
        if cfg.variant == "rand_1_generation_dither":
            shared = cfg.f + rng.random() * (1.0 - cfg.f)
        trials = np.empty_like(population)
        for i in range(cfg.pop_size):
            mutant = de_mutate(population, best, rng, cfg, i, shared)
            trial = binomial_crossover(population[i], mutant, cfg.cr, rng)
            trials[i] = box.clamp(trial)
        trial_costs = _evaluate(objective, trials, jobs)
        evaluations += cfg.pop_size
        improved = trial_costs < costs
        population[improved] = trials[improved]
        costs[improved] = trial_costs[improved]
        history.append(float(costs.min()))
        logger.debug(
            f"DE/{cfg.variant} generation {generation + 1}: best {history[-1]:.6g}"
        )

    best_index = int(np.argmin(costs))
    logger.info(
        f"DE/{cfg.variant} finished: best {costs[best_index]:.6g} "
        f"after {evaluations} evaluations"
    )
    return OptResult(
        population[best_index].copy(), float(costs[best_index]), history, evaluations
    )


def _tournament(rng: np.random.Generator, costs: np.ndarray) -> int:
    a, b = rng.integers(len(costs), size=2)
    return int(a) if costs[a] <= costs[b] else int(b)


def ga_optimize(
    objective: Callable[[np.ndarray], float],
    box: SearchBox,
    cfg: GAConfig,
    seed: int,
    jobs: int = 1,
) -> OptResult:
    """
    Real-coded GA: elites survive unchanged, the rest of each generation is
    blend-crossover children, Gaussian-mutation children and plain copies
    of tournament-selected parents, in the configured fractions.
    """
    rng = np.random.default_rng(seed)
    population = box.sample(rng, cfg.pop)
    costs = _evaluate(objective, population, jobs)
    evaluations = cfg.pop
    history = [float(costs.min())]

    n_offspring = cfg.pop - cfg.elite_count
    n_cross = int(round(cfg.crossover_fraction * n_offspring))
    n_mutate = min(
        int(round(cfg.mutation_fraction * n_offspring)), n_offspring - n_cross
    )
    sd = MUTATION_SD_FRACTION * box.width

    for generation in range(cfg.g_max):
        order = np.argsort(costs, kind="stable")
        elites = population[order[: cfg.elite_count]].copy()
        elite_costs = costs[order[: cfg.elite_count]].copy()

        children = np.empty((n_offspring, box.dim))
        for c in range(n_offspring):
            parent = population[_tournament(rng, costs)]
            if c < n_cross:
                other = population[_tournament(rng, costs)]
                beta = rng.uniform(-BLEND_ALPHA, 1.0 + BLEND_ALPHA, box.dim)
                child = parent + beta * (other - parent)
            elif c < n_cross + n_mutate:
                child = parent + rng.normal(0.0, sd)
            else:
                child = parent.copy()
            children[c] = box.clamp(child)

        child_costs = _evaluate(objective, children, jobs)
        evaluations += n_offspring
        population = np.vstack([elites, children])
        costs = np.concatenate([elite_costs, child_costs])
        history.append(float(costs.min()))
        logger.debug(f"GA generation {generation + 1}: best {history[-1]:.6g}")

    best_index = int(np.argmin(costs))
    logger.info(
        f"GA finished: best {costs[best_index]:.6g} after {evaluations} evaluations"
    )
    return OptResult(
        population[best_index].copy(), float(costs[best_index]), history, evaluations
    )


class TuningObjective:
    """
    Expected closed-loop cost of a parameter vector, picklable for workers.

    Every candidate is evaluated on the same replicate seeds, so the
    objective is a deterministic function of the parameters.
    """

    def __init__(
        self,
        plant: DelayedRationalPlant,
        mode: str,
        sim_cfg: SimConfig,
        weights: CostWeights,
        replicates: int,
        seed: int,
    ):
        SearchBox.for_mode(mode)
        self.plant = plant
        self.mode = mode
        self.sim_cfg = sim_cfg
        self.weights = weights
        self.replicates = replicates
        self.seed = seed

    def params(self, vector: Sequence[float]) -> ControllerParams:
        return ControllerParams.from_vector(vector)

    def evaluate(self, vector: Sequence[float]) -> ExpectedCost:
        return expected_cost(
            self.plant,
            self.params(vector),
            self.sim_cfg,
            self.weights,
            self.replicates,
            self.seed,
        )

    def __call__(self, vector: Sequence[float]) -> float:
        j = self.evaluate(vector).mean.j
        return j if math.isfinite(j) else float("inf")


@dataclass
class TuningRecord:
    algorithm: str
    variant: Optional[str]
    mode: str
    result: OptResult
    params: ControllerParams
    evaluation: ExpectedCost

    @property
    def penalized(self) -> bool:
        return self.evaluation.mean.penalized

    def to_dict(self) -> dict:
        params = self.params.to_dict()
        if self.mode == "pid":
            params.pop("lambda")
            params.pop("mu")
        return {
            "algorithm": self.algorithm,
            "variant": self.variant,
            "mode": self.mode,
            "j_min": self.result.best_cost,
            "parameters": params,
            "evaluations": self.result.evaluations,
            "generations": len(self.result.history) - 1,
            "penalized": self.penalized,
            "reevaluation": {
                "mean": self.evaluation.mean.to_dict(),
                "std": self.evaluation.std,
                "divergence_fraction": self.evaluation.divergence_fraction,
            },
        }


def tune_controller(
    plant: DelayedRationalPlant,
    mode: str,
    cfg: Union[DEConfig, GAConfig],
    sim_cfg: SimConfig,
    weights: CostWeights,
    replicates: int,
    seed: int,
    box: Optional[SearchBox] = None,
    jobs: int = 1,
) -> TuningRecord:
    """
    Tune a PID (lambda = mu = 1, 3-box) or a FOPID (5-box) controller.

    Args:
        plant (DelayedRationalPlant): Process to control.
        mode (str): ``pid`` or ``fopid``.
        cfg (DEConfig | GAConfig): Optimizer and its settings.
        sim_cfg (SimConfig): Closed-loop experiment.
        weights (CostWeights): ITAE/ISCO weights.
        replicates (int): Network realizations averaged per evaluation.
        seed (int): Seeds both the optimizer and the replicate streams.
        box (SearchBox, optional): Overrides the default box of the mode.
        jobs (int): Evaluation workers.

    Returns:
        TuningRecord: Optimizer result, best params and their re-evaluation.
    """
    default_box = SearchBox.for_mode(mode)
    box = box or default_box
    if box.dim != default_box.dim:
        raise OptimizerException(
            message=(
                f"Search box for mode '{mode}' needs {default_box.dim} dimensions"
            ),
            error_code="INVALID_SEARCH_BOX",
            metadata={"mode": mode, "dim": box.dim},
        )
    objective = TuningObjective(plant, mode, sim_cfg, weights, replicates, seed)
    logger.info(
        f"Tuning {mode} for plant '{plant.name}' with {cfg.to_dict()} "
        f"and {replicates} replicates"
    )
    if isinstance(cfg, DEConfig):
        result = de_optimize(objective, box, cfg, seed, jobs)
        variant = cfg.variant
    else:
        result = ga_optimize(objective, box, cfg, seed, jobs)
        variant = None
    params = objective.params(result.best_params)
    evaluation = objective.evaluate(result.best_params)
    record = TuningRecord(cfg.algorithm, variant, mode, result, params, evaluation)
    if record.penalized:
        logger.warning(
            f"No stabilizing {mode} controller found for plant '{plant.name}'"
        )
    return record
