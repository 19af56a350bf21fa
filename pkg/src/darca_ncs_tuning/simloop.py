"""
simloop.py

Hybrid closed-loop simulation of a plant controlled over two lossy,
randomly delaying channels, and the integral cost computed from it.

Per sample instant k*Ts the loop runs, in order:

1. the time-driven sensor samples y and sends it on the sensor-to-controller
   (SC) channel;
2. SC deliveries pass the controller-side TSO buffer, which holds the
   newest accepted measurement;
3. the controller advances one period on e = r - held measurement and
   sends its output on the controller-to-actuator (CA) channel;
4. CA deliveries pass the actuator-side buffer (zero-order hold);
5. the plant integrates one period under actuator hold + load disturbance.

With ``tso_enabled`` off both buffers take every delivered packet in
arrival order.
"""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from darca_exception.exception import DarcaException
from darca_log_facility.logger import DarcaLogger
from scipy.integrate import trapezoid

from darca_ncs_tuning.fractional import (
    ControllerParams,
    FilterBand,
    StateSpaceModel,
    fopid_controller,
)
from darca_ncs_tuning.network import (
    CA_CHANNEL_ID,
    SC_CHANNEL_ID,
    ChannelConfig,
    ChannelState,
    TsoBuffer,
    channel_poll,
    channel_rng,
    channel_send,
    receive_into,
)
from darca_ncs_tuning.plants import (
    DelayedRationalPlant,
    PlantException,
    Rk4Propagator,
    init_plant_state,
    integrate_step,
)
from darca_ncs_tuning.workers import parallel_map

# Initialize the logger
logger = DarcaLogger(name="simloop").get_logger()

PENALTY = 1e6
# deliveries this close to a sample instant count as on it
TIME_EPS = 1e-9
# a loop has settled when |e| over the last tenth of the horizon stays
# within SETTLING_FACTOR times the summed step amplitudes
SETTLING_WINDOW = 0.1
SETTLING_FACTOR = 5.0


class SimulationException(DarcaException):
    """
    Custom exception for closed-loop simulation and cost errors.
    Inherits from DarcaException to provide structured logging,
    metadata handling, and optional chaining of original exceptions.
    """

    def __init__(self, message, error_code=None, metadata=None, cause=None):
        super().__init__(
            message=message,
            error_code=error_code or "SIMULATION_ERROR",
            metadata=metadata,
            cause=cause,
        )


@dataclass(frozen=True)
class StepSignal:
    amplitude: float = 0.0
    time: float = 0.0

    def value(self, t: float) -> float:
        return self.amplitude if t >= self.time - TIME_EPS else 0.0

    def to_dict(self) -> dict:
        return {"amplitude": self.amplitude, "time": self.time}


@dataclass(frozen=True)
class SimConfig:
    ts: float = 0.01
    horizon: float = 10.0
    setpoint_step: StepSignal = field(default_factory=lambda: StepSignal(1.0, 0.0))
    load_disturbance: StepSignal = field(
        default_factory=lambda: StepSignal(1.0, 5.0)
    )
    sc_channel: ChannelConfig = field(default_factory=ChannelConfig)
    ca_channel: ChannelConfig = field(default_factory=ChannelConfig)
    tso_enabled: bool = True
    substeps: int = 10
    band: FilterBand = field(default_factory=FilterBand)

    def __post_init__(self):
        problems = []
        if not self.ts > 0.0:
            problems.append("ts must be positive")
        if not self.horizon >= self.setpoint_step.time:
            problems.append("horizon must not precede the setpoint step")
        if not self.load_disturbance.time < self.horizon:
            problems.append("disturbance time must precede the horizon")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            problems.append("substeps must be an integer >= 1")
        if problems:
            raise SimulationException(
                message="; ".join(problems),
                error_code="INVALID_SIM_CONFIG",
                metadata=self.to_dict(),
            )

    @property
    def n_samples(self) -> int:
        """Number of periods; traces hold n_samples + 1 points."""
        return int(round(self.horizon / self.ts))

    @property
    def h_sub(self) -> float:
        return self.ts / self.substeps

    def with_network(self, channel: ChannelConfig) -> "SimConfig":
        """Same config with *channel* on both paths."""
        return replace(self, sc_channel=channel, ca_channel=channel)

    def to_dict(self) -> dict:
        return {
            "ts": self.ts,
            "horizon": self.horizon,
            "setpoint": self.setpoint_step.to_dict(),
            "disturbance": self.load_disturbance.to_dict(),
            "sc_channel": self.sc_channel.to_dict(),
            "ca_channel": self.ca_channel.to_dict(),
            "tso_enabled": self.tso_enabled,
            "substeps": self.substeps,
            "band": self.band.to_dict(),
        }


@dataclass(frozen=True)
class CostWeights:
    w1: float = 1.0
    w2: float = 1.0

    def __post_init__(self):
        if self.w1 < 0.0 or self.w2 < 0.0 or (self.w1 == 0.0 and self.w2 == 0.0):
            raise SimulationException(
                message="Weights must be non-negative and not both zero",
                error_code="INVALID_WEIGHTS",
                metadata={"w1": self.w1, "w2": self.w2},
            )


@dataclass(eq=False)
class Trace:
    t: np.ndarray
    r: np.ndarray
    y: np.ndarray
    u: np.ndarray
    e: np.ndarray
    diverged: bool = False

    def __len__(self) -> int:
        return len(self.t)

    def rows(self) -> List[Tuple[float, float, float, float, float]]:
        return list(
            zip(
                self.t.tolist(),
                self.r.tolist(),
                self.y.tolist(),
                self.u.tolist(),
                self.e.tolist(),
            )
        )


@dataclass(frozen=True)
class CostBreakdown:
    itae: float
    isco: float
    j: float
    penalized: bool = False

    def to_dict(self) -> dict:
        return {
            "itae": self.itae,
            "isco": self.isco,
            "j": self.j,
            "penalized": self.penalized,
        }


@dataclass(frozen=True)
class ExpectedCost:
    mean: CostBreakdown
    replicates: Tuple[CostBreakdown, ...]
    std: float

    @property
    def divergence_fraction(self) -> float:
        return sum(c.penalized for c in self.replicates) / len(self.replicates)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.to_dict(),
            "std": self.std,
            "divergence_fraction": self.divergence_fraction,
            "replicates": [c.to_dict() for c in self.replicates],
        }


def controller_propagator(
    controller: StateSpaceModel, cfg: SimConfig
) -> Rk4Propagator:
    """One sampling period of the controller: ``substeps`` RK4 steps, error held."""
    return Rk4Propagator.build(
        controller.a, controller.b, cfg.h_sub, steps=cfg.substeps
    )


def run_closed_loop(
    plant: DelayedRationalPlant,
    controller: StateSpaceModel,
    cfg: SimConfig,
    seed: int = 0,
    replicate: int = 0,
) -> Trace:
    """
    Simulate one replicate of the networked loop.

    Args:
        plant (DelayedRationalPlant): Process under control.
        controller (StateSpaceModel): Proper continuous controller.
        cfg (SimConfig): Timing, excitation and channel settings.
        seed (int): Master seed; each channel gets its own stream derived
                    from (seed, channel id, replicate).
        replicate (int): Replicate index.

    Returns:
        Trace: Samples at k*Ts. A diverging plant truncates the trace at
        the last finite sample and sets ``diverged``; a complete trace that
        has not settled (see ``settled``) is flagged the same way.
    """
    if not math.isfinite(controller.d):
        raise SimulationException(
            message="Controller feedthrough must be finite",
            error_code="INVALID_SIM_CONFIG",
            metadata={"d": controller.d},
        )
    ts = cfg.ts
    n = cfg.n_samples
    prop = controller_propagator(controller, cfg)
    plant_state = init_plant_state(plant, cfg.h_sub)
    sc_rng = channel_rng(seed, SC_CHANNEL_ID, replicate)
    ca_rng = channel_rng(seed, CA_CHANNEL_ID, replicate)
    sc_state, ca_state = ChannelState(), ChannelState()
    sc_buffer, ca_buffer = TsoBuffer(), TsoBuffer()

    t = np.zeros(n + 1)
    r = np.zeros(n + 1)
    y = np.zeros(n + 1)
    u = np.zeros(n + 1)
    xc = np.zeros(controller.order)
    y_now = 0.0
    last = n
    diverged = False

    for k in range(n + 1):
        now = k * ts
        poll_at = now + TIME_EPS * ts
        r_now = cfg.setpoint_step.value(now)

        channel_send(cfg.sc_channel, sc_state, sc_state.stamp(y_now, now), sc_rng)
        receive_into(
            sc_state, sc_buffer, channel_poll(sc_state, poll_at), cfg.tso_enabled
        )

        e_ctrl = r_now - sc_buffer.held_value
        xc = prop.step(xc, e_ctrl)
        u_ctrl = float(controller.c @ xc + controller.d * e_ctrl)

        channel_send(cfg.ca_channel, ca_state, ca_state.stamp(u_ctrl, now), ca_rng)
        receive_into(
            ca_state, ca_buffer, channel_poll(ca_state, poll_at), cfg.tso_enabled
        )
        u_act = ca_buffer.held_value

        t[k], r[k], y[k], u[k] = now, r_now, y_now, u_act
        if not math.isfinite(u_act):
            diverged, last = True, k - 1
            break
        if k == n:
            break
        try:
            _, y_now = integrate_step(
                plant,
                plant_state,
                u_act + cfg.load_disturbance.value(now),
                ts,
                cfg.substeps,
            )
        except PlantException as exc:
            if exc.error_code != "PLANT_DIVERGED":
                raise
            diverged, last = True, k
            logger.debug(f"Replicate {replicate} diverged at t={now:.2f}s")
            break

    last = max(last, 0)
    keep = slice(0, last + 1)
    trace = Trace(
        t=t[keep],
        r=r[keep],
        y=y[keep],
        u=u[keep],
        e=r[keep] - y[keep],
        diverged=diverged,
    )
    if not diverged and not settled(trace, cfg):
        trace.diverged = True
        logger.debug(f"Replicate {replicate} did not settle within the horizon")
    return trace


def settled(trace: Trace, cfg: SimConfig) -> bool:
    """
    True when |e| over the last ``SETTLING_WINDOW`` of the horizon stays
    within ``SETTLING_FACTOR`` times the summed setpoint and disturbance
    amplitudes. Unexcited loops always count as settled.
    """
    scale = abs(cfg.setpoint_step.amplitude) + abs(cfg.load_disturbance.amplitude)
    if scale == 0.0:
        return True
    window = trace.t >= cfg.horizon * (1.0 - SETTLING_WINDOW) - TIME_EPS
    if not np.any(window):
        return True
    return float(np.max(np.abs(trace.e[window]))) <= SETTLING_FACTOR * scale


def cost(trace: Trace, w: CostWeights) -> CostBreakdown:
    """
    Weighted ITAE + ISCO by the trapezoidal rule on the sample grid.
    Diverged traces, or a J above the penalty, cost ``PENALTY``.
    """
    itae = float(trapezoid(trace.t * np.abs(trace.e), trace.t))
    isco = float(trapezoid(trace.u**2, trace.t))
    j = w.w1 * itae + w.w2 * isco
    if trace.diverged or not math.isfinite(j) or j > PENALTY:
        return CostBreakdown(itae, isco, PENALTY, penalized=True)
    return CostBreakdown(itae, isco, j)


def performance_indices(trace: Trace) -> dict:
    """IAE, ISE, ITAE, ITSE, ISTES and ISCO of a trace."""
    t, e, u = trace.t, trace.e, trace.u
    return {
        "iae": float(trapezoid(np.abs(e), t)),
        "ise": float(trapezoid(e**2, t)),
        "itae": float(trapezoid(t * np.abs(e), t)),
        "itse": float(trapezoid(t * e**2, t)),
        "istes": float(trapezoid((t * e) ** 2, t)),
        "isco": float(trapezoid(u**2, t)),
    }


def control_excursion(
    trace: Trace, start: float, stop: Optional[float] = None
) -> float:
    """Peak-to-peak applied control signal over [start, stop]."""
    stop = trace.t[-1] if stop is None else stop
    window = (trace.t >= start - TIME_EPS) & (trace.t <= stop + TIME_EPS)
    if not np.any(window):
        return 0.0
    values = trace.u[window]
    return float(values.max() - values.min())


class ReplicateRunner:
    """Picklable single-replicate evaluation for ``parallel_map``."""

    def __init__(self, plant, controller, cfg, w, seed):
        self.plant = plant
        self.controller = controller
        self.cfg = cfg
        self.w = w
        self.seed = seed

    def __call__(self, replicate: int) -> CostBreakdown:
        trace = run_closed_loop(
            self.plant, self.controller, self.cfg, self.seed, replicate
        )
        return cost(trace, self.w)


def summarize(costs: Sequence[CostBreakdown], w: CostWeights) -> ExpectedCost:
    """Reduce per-replicate costs in index order."""
    itae = float(np.mean([c.itae for c in costs]))
    isco = float(np.mean([c.isco for c in costs]))
    js = np.array([c.j for c in costs])
    penalized = any(c.penalized for c in costs)
    if penalized:
        mean = CostBreakdown(itae, isco, float(js.mean()), penalized=True)
    else:
        mean = CostBreakdown(itae, isco, w.w1 * itae + w.w2 * isco)
    std = float(js.std(ddof=1)) if len(costs) > 1 else 0.0
    return ExpectedCost(mean, tuple(costs), std)


def expected_cost(
    plant: DelayedRationalPlant,
    params: ControllerParams,
    cfg: SimConfig,
    w: CostWeights,
    replicates: int,
    master_seed: int,
    jobs: int = 1,
) -> ExpectedCost:
    """
    Average the cost over *replicates* independent network realizations.

    Raises:
        SimulationException: If replicates < 1.
    """
    if replicates < 1:
        raise SimulationException(
            message="At least one replicate is needed",
            error_code="INVALID_REPLICATES",
            metadata={"replicates": replicates},
        )
    controller = fopid_controller(params, band=cfg.band)
    runner = ReplicateRunner(plant, controller, cfg, w, master_seed)
    costs = parallel_map(runner, range(replicates), jobs)
    result = summarize(costs, w)
    logger.debug(
        f"Expected cost of {params.to_dict()}: J={result.mean.j:.6g} "
        f"(std {result.std:.3g}, diverged {result.divergence_fraction:.2f})"
    )
    return result


@dataclass(frozen=True)
class SurfaceCell:
    lam: float
    mu: float
    cost: ExpectedCost

    def row(self) -> tuple:
        m = self.cost.mean
        return (self.lam, self.mu, m.itae, m.isco, m.j, m.penalized)


SURFACE_HEADER = ("lambda", "mu", "itae", "isco", "j", "penalized")


class _CellRunner:
    def __init__(self, plant, gains, cfg, w, replicates, seed):
        self.plant = plant
        self.gains = gains
        self.cfg = cfg
        self.w = w
        self.replicates = replicates
        self.seed = seed

    def __call__(self, orders: Tuple[float, float]) -> SurfaceCell:
        lam, mu = orders
        params = ControllerParams(*self.gains, lam=lam, mu=mu)
        result = expected_cost(
            self.plant, params, self.cfg, self.w, self.replicates, self.seed
        )
        return SurfaceCell(lam, mu, result)


def surface_sweep(
    plant: DelayedRationalPlant,
    fixed_gains: Tuple[float, float, float],
    lambda_grid: Sequence[float],
    mu_grid: Sequence[float],
    cfg: SimConfig,
    w: CostWeights,
    replicates: int,
    seed: int,
    jobs: int = 1,
) -> List[SurfaceCell]:
    """
    Expected cost of the FOPID with fixed (Kp, Ki, Kd) on every (lambda, mu)
    pair, lambda-major.

    Raises:
        SimulationException: If a grid is empty or leaves [0, 2].
    """
    for name, grid in (("lambda_grid", lambda_grid), ("mu_grid", mu_grid)):
        if len(grid) == 0 or any(not 0.0 <= g <= 2.0 for g in grid):
            raise SimulationException(
                message=f"{name} must be non-empty and inside [0, 2]",
                error_code="INVALID_GRID",
                metadata={name: list(grid)},
            )
    cells = [(float(lam), float(mu)) for lam in lambda_grid for mu in mu_grid]
    runner = _CellRunner(plant, tuple(fixed_gains), cfg, w, replicates, seed)
    logger.info(f"Sweeping {len(cells)} (lambda, mu) cells")
    return parallel_map(runner, cells, jobs)
