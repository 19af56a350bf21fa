"""
plants.py

Dead-time-plus-rational process models and their fixed-step integration.

A plant is K * num(s)/den(s) * exp(-L s). The rational part is realized
with ``scipy.signal.tf2ss`` and advanced with classical fourth-order
Runge-Kutta under piecewise-constant inputs; the dead time is a ring buffer
of past input samples on the integrator substep grid.
"""

import math
from collections import deque
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Dict, Tuple, Union

import numpy as np
from darca_exception.exception import DarcaException
from darca_log_facility.logger import DarcaLogger
from scipy import signal

from darca_ncs_tuning.fractional import StateSpaceModel

# Initialize the logger
logger = DarcaLogger(name="plants").get_logger()

DIVERGENCE_LIMIT = 1e6


class PlantException(DarcaException):
    """
    Custom exception for plant definition and integration errors.
    Inherits from DarcaException to provide structured logging,
    metadata handling, and optional chaining of original exceptions.
    """

    def __init__(self, message, error_code=None, metadata=None, cause=None):
        super().__init__(
            message=message,
            error_code=error_code or "PLANT_ERROR",
            metadata=metadata,
            cause=cause,
        )


def _trim(coeffs) -> tuple:
    values = [float(c) for c in coeffs]
    while len(values) > 1 and values[0] == 0.0:
        values.pop(0)
    return tuple(values)


@dataclass(frozen=True)
class DelayedRationalPlant:
    """gain * num(s)/den(s) * exp(-dead_time * s), descending powers of s."""

    gain: float
    dead_time: float
    num: tuple
    den: tuple
    name: str = "custom"

    def __post_init__(self):
        num = _trim(self.num)
        den = tuple(float(c) for c in self.den)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        problems = []
        if not math.isfinite(self.gain):
            problems.append("gain must be finite")
        if not (math.isfinite(self.dead_time) and self.dead_time >= 0.0):
            problems.append("dead_time must be >= 0")
        if not den or den[0] == 0.0:
            problems.append("den leading coefficient must be nonzero")
        elif len(num) > len(den):
            problems.append("plant must be proper (deg num <= deg den)")
        if problems:
            raise PlantException(
                message="; ".join(problems),
                error_code="INVALID_PLANT",
                metadata={
                    "gain": self.gain,
                    "dead_time": self.dead_time,
                    "num": list(num),
                    "den": list(den),
                },
            )

    @property
    def relative_dead_time(self) -> float:
        """L/(L+T) for first-order denominators."""
        if len(self.den) != 2 or self.den[1] == 0.0:
            raise PlantException(
                message="Relative dead time needs a first-order lag",
                error_code="NOT_FIRST_ORDER",
                metadata={"den": list(self.den)},
            )
        t = abs(self.den[0] / self.den[1])
        return self.dead_time / (self.dead_time + t)

    def poles(self) -> np.ndarray:
        return np.roots(self.den)

    def to_dict(self) -> dict:
        return {
            "gain": self.gain,
            "dead_time": self.dead_time,
            "num": list(self.num),
            "den": list(self.den),
        }


def make_fodup(K: float, L: float, T: float) -> DelayedRationalPlant:
    """K e^{-Ls} / (Ts - 1): one unstable pole at 1/T."""
    if K == 0.0 or T <= 0.0:
        raise PlantException(
            message="FODUP needs K != 0 and T > 0",
            error_code="INVALID_PLANT",
            metadata={"K": K, "T": T},
        )
    return DelayedRationalPlant(K, L, (1.0,), (T, -1.0), name="fodup")


def make_sodup(K: float, L: float, T1: float, T2: float) -> DelayedRationalPlant:
    """K e^{-Ls} / ((T1 s - 1)(T2 s + 1))."""
    if T1 <= 0.0 or T2 <= 0.0:
        raise PlantException(
            message="SODUP time constants must be positive",
            error_code="INVALID_PLANT",
            metadata={"T1": T1, "T2": T2},
        )
    den = tuple(np.polymul([T1, -1.0], [T2, 1.0]))
    return DelayedRationalPlant(K, L, (1.0,), den, name="sodup")


def make_foptd(K: float, L: float, T: float) -> DelayedRationalPlant:
    """K e^{-Ls} / (Ts + 1); see ``relative_dead_time`` for tau = L/(L+T)."""
    if T <= 0.0:
        raise PlantException(
            message="FOPTD time constant must be positive",
            error_code="INVALID_PLANT",
            metadata={"T": T},
        )
    plant = DelayedRationalPlant(K, L, (1.0,), (T, 1.0), name="foptd")
    logger.debug(f"FOPTD plant with relative dead time {plant.relative_dead_time:.3f}")
    return plant


def _named(plant: DelayedRationalPlant, name: str) -> DelayedRationalPlant:
    return DelayedRationalPlant(
        plant.gain, plant.dead_time, plant.num, plant.den, name=name
    )


def _lag_full() -> DelayedRationalPlant:
    den = np.polymul(np.polymul([1.0, 1.0], [0.1, 1.0]), [0.01, 1.0])
    den = np.polymul(den, [0.001, 1.0])
    return DelayedRationalPlant(1.0, 0.0, (1.0,), tuple(den), name="lag_full")


def _delay_full() -> DelayedRationalPlant:
    den = np.polymul([0.05, 1.0], [0.05, 1.0])
    return DelayedRationalPlant(1.0, 1.0, (1.0,), tuple(den), name="delay_full")


PLANT_PRESETS: Dict[str, Callable[[], DelayedRationalPlant]] = {
    "p1_fodup": lambda: _named(make_fodup(1.0, 0.2, 1.0), "p1_fodup"),
    "p2_sodup": lambda: _named(make_sodup(1.0, 0.939, 5.0, 2.07), "p2_sodup"),
    "lag_foptd": lambda: _named(make_foptd(1.0, 0.073, 1.03), "lag_foptd"),
    "delay_foptd": lambda: _named(make_foptd(1.0, 1.0, 0.093), "delay_foptd"),
    "lag_full": _lag_full,
    "delay_full": _delay_full,
}


def plant_preset(name: str) -> DelayedRationalPlant:
    """
    Look up a named plant.

    Raises:
        PlantException: If the name is not a known preset.
    """
    try:
        return PLANT_PRESETS[name]()
    except KeyError as e:
        raise PlantException(
            message=f"Unknown plant preset: {name}",
            error_code="UNKNOWN_PLANT_PRESET",
            metadata={"name": name, "known": sorted(PLANT_PRESETS)},
            cause=e,
        ) from e


def plant_from_config(data: Union[str, dict]) -> DelayedRationalPlant:
    """Resolve a preset name, ``{"preset": name}`` or the generic form."""
    if isinstance(data, str):
        return plant_preset(data)
    if "preset" in data:
        return plant_preset(data["preset"])
    try:
        return DelayedRationalPlant(
            gain=float(data.get("gain", 1.0)),
            dead_time=float(data.get("dead_time", 0.0)),
            num=tuple(data.get("num", (1.0,))),
            den=tuple(data["den"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise PlantException(
            message=(
                "Generic plant needs numeric 'den' "
                "(and optional gain, dead_time, num)"
            ),
            error_code="INVALID_PLANT",
            metadata={"keys": sorted(data)},
            cause=e,
        ) from e


def lump_delay(plant: DelayedRationalPlant, delay: float) -> DelayedRationalPlant:
    """
    The same plant with *delay* seconds added to its dead time, as when a
    constant network delay is lumped with the process delay.

    Raises:
        PlantException: If *delay* is negative or not finite.
    """
    if not (math.isfinite(delay) and delay >= 0.0):
        raise PlantException(
            message="Lumped delay must be a finite, non-negative time",
            error_code="INVALID_PLANT",
            metadata={"delay": delay},
        )
    return replace(plant, dead_time=plant.dead_time + delay)


def to_statespace(plant: DelayedRationalPlant) -> StateSpaceModel:
    """Realize the rational part (dead time excluded)."""
    num = np.array(plant.num) * plant.gain
    a, b, c, d = signal.tf2ss(num, np.array(plant.den))
    return StateSpaceModel(
        np.atleast_2d(a).astype(float),
        np.asarray(b, dtype=float).reshape(-1),
        np.asarray(c, dtype=float).reshape(-1),
        float(np.asarray(d).reshape(-1)[0]) if np.size(d) else 0.0,
    )


def rk4_step(
    a: np.ndarray, b: np.ndarray, x: np.ndarray, u: float, h: float
) -> np.ndarray:
    """One classical Runge-Kutta step of x' = A x + B u with u held."""

    def f(state):
        return a @ state + b * u

    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True, eq=False)
class Rk4Propagator:
    """
    One RK4 step of a linear system with held input, as the affine map
    x+ = phi x + gamma u. Columns of phi are RK4 steps from unit states.
    """

    phi: np.ndarray
    gamma: np.ndarray

    @classmethod
    def build(cls, a: np.ndarray, b: np.ndarray, h: float, steps: int = 1):
        n = a.shape[0]
        phi = np.zeros((n, n))
        for i in range(n):
            unit = np.zeros(n)
            unit[i] = 1.0
            phi[:, i] = rk4_step(a, b, unit, 0.0, h)
        gamma = rk4_step(a, b, np.zeros(n), 1.0, h)
        # compose to a multi-step map (input held across all steps)
        phi_total = np.eye(n)
        gamma_total = np.zeros(n)
        for _ in range(steps):
            phi_total = phi @ phi_total
            gamma_total = phi @ gamma_total + gamma
        return cls(phi_total, gamma_total)

    def step(self, x: np.ndarray, u: float) -> np.ndarray:
        return self.phi @ x + self.gamma * u


@lru_cache(maxsize=64)
def _plant_propagator(
    plant: DelayedRationalPlant, h_sub: float
) -> Tuple[StateSpaceModel, Rk4Propagator]:
    model = to_statespace(plant)
    return model, Rk4Propagator.build(model.a, model.b, h_sub)


@dataclass
class PlantState:
    """Owned by one simulation; mutated in place by ``integrate_step``."""

    x: np.ndarray
    delay_line: deque
    h_sub: float
    y: float = 0.0


def delay_samples(dead_time: float, h_sub: float) -> int:
    """Dead time quantized to the nearest whole substep."""
    return int(round(dead_time / h_sub))


def init_plant_state(plant: DelayedRationalPlant, h_sub: float) -> PlantState:
    """Rest state with an all-zero input history."""
    if not h_sub > 0.0:
        raise PlantException(
            message="Substep must be positive",
            error_code="INVALID_PLANT",
            metadata={"h_sub": h_sub},
        )
    model, _ = _plant_propagator(plant, h_sub)
    n_delay = delay_samples(plant.dead_time, h_sub)
    return PlantState(
        x=np.zeros(model.order),
        delay_line=deque([0.0] * n_delay, maxlen=n_delay),
        h_sub=h_sub,
    )


def integrate_step(
    plant: DelayedRationalPlant,
    state: PlantState,
    u_held: float,
    h: float,
    substeps: int,
) -> Tuple[PlantState, float]:
    """
    Advance the plant over [t, t+h] with the input held at *u_held*.

    Each substep pushes *u_held* into the delay line and feeds the rational
    part the sample leaving it.

    Args:
        plant (DelayedRationalPlant): Process definition.
        state (PlantState): Current state, updated in place.
        u_held (float): Input over the whole interval.
        h (float): Interval length in seconds.
        substeps (int): RK4 steps per interval; must give ``state.h_sub``.

    Returns:
        tuple: The updated state and the output at t+h.

    Raises:
        PlantException: ``PLANT_DIVERGED`` when the output leaves
                        [-1e6, 1e6] or stops being finite.
    """
    h_sub = h / substeps
    if not math.isclose(h_sub, state.h_sub, rel_tol=1e-9):
        raise PlantException(
            message="Substep does not match the plant state grid",
            error_code="INVALID_PLANT",
            metadata={"h_sub": h_sub, "state_h_sub": state.h_sub},
        )
    model, prop = _plant_propagator(plant, state.h_sub)
    line = state.delay_line
    x = state.x
    u_delayed = u_held
    for _ in range(substeps):
        if line.maxlen:
            u_delayed = line[0]
            line.append(u_held)
        x = prop.step(x, u_delayed)
    y = float(model.c @ x + model.d * u_delayed)
    state.x = x
    state.y = y
    if not math.isfinite(y) or abs(y) > DIVERGENCE_LIMIT:
        raise PlantException(
            message="Plant output diverged",
            error_code="PLANT_DIVERGED",
            metadata={"y": y, "limit": DIVERGENCE_LIMIT},
        )
    return state, y
