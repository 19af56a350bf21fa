"""
fractional.py

Band-limited rational approximation of fractional differ-integrators and
assembly of PI^lambda D^mu controllers as linear state-space systems.

The approximation of s^gamma over (omega_b, omega_h) is the recursive
filter

    G(s) = K * prod_{k=-N..N} (s + w'_k) / (s + w_k)

with w_k, w'_k spread geometrically over the band and K = omega_h^gamma.
Each filter is realized as a cascade of first-order sections; a controller
is the parallel sum of a proportional gain and two such branches.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from darca_exception.exception import DarcaException
from darca_log_facility.logger import DarcaLogger

# Initialize the logger
logger = DarcaLogger(name="fractional").get_logger()

DEFAULT_OMEGA_B = 1e-2
DEFAULT_OMEGA_H = 1e2
DEFAULT_N_HALF = 2


class FractionalException(DarcaException):
    """
    Custom exception for filter synthesis and controller assembly errors.
    Inherits from DarcaException to provide structured logging,
    metadata handling, and optional chaining of original exceptions.
    """

    def __init__(self, message, error_code=None, metadata=None, cause=None):
        super().__init__(
            message=message,
            error_code=error_code or "FRACTIONAL_ERROR",
            metadata=metadata,
            cause=cause,
        )


@dataclass(frozen=True)
class FilterBand:
    """Frequency band and half-order shared by both controller branches."""

    omega_b: float = DEFAULT_OMEGA_B
    omega_h: float = DEFAULT_OMEGA_H
    n_half: int = DEFAULT_N_HALF

    def __post_init__(self):
        if not (0.0 < self.omega_b < self.omega_h):
            raise FractionalException(
                message="Band edges must satisfy 0 < omega_b < omega_h",
                error_code="INVALID_OUSTALOUP_CONFIG",
                metadata={"omega_b": self.omega_b, "omega_h": self.omega_h},
            )
        if int(self.n_half) != self.n_half or self.n_half < 1:
            raise FractionalException(
                message="n_half must be an integer >= 1",
                error_code="INVALID_OUSTALOUP_CONFIG",
                metadata={"n_half": self.n_half},
            )

    def to_dict(self) -> dict:
        return {
            "omega_b": self.omega_b,
            "omega_h": self.omega_h,
            "n_half": self.n_half,
        }


@dataclass(frozen=True)
class OustaloupConfig:
    gamma: float
    omega_b: float = DEFAULT_OMEGA_B
    omega_h: float = DEFAULT_OMEGA_H
    n_half: int = DEFAULT_N_HALF

    def __post_init__(self):
        # band checks live in FilterBand
        FilterBand(self.omega_b, self.omega_h, self.n_half)
        if not math.isfinite(self.gamma) or abs(self.gamma) > 2.0:
            raise FractionalException(
                message="Order gamma must lie in [-2, 2]",
                error_code="INVALID_OUSTALOUP_CONFIG",
                metadata={"gamma": self.gamma},
            )

    @classmethod
    def from_band(cls, gamma: float, band: FilterBand) -> "OustaloupConfig":
        return cls(gamma, band.omega_b, band.omega_h, band.n_half)


@dataclass(frozen=True)
class RationalFilter:
    """Zero/pole/gain form; zeros and poles are positive frequencies."""

    zeros: tuple
    poles: tuple
    gain: float

    def __post_init__(self):
        if len(self.zeros) != len(self.poles):
            raise FractionalException(
                message="Filter must be biproper (as many zeros as poles)",
                error_code="INVALID_OUSTALOUP_CONFIG",
                metadata={"zeros": len(self.zeros), "poles": len(self.poles)},
            )
        if any(p <= 0.0 for p in self.poles):
            raise FractionalException(
                message="Filter poles must be strictly positive frequencies",
                error_code="INVALID_OUSTALOUP_CONFIG",
                metadata={"poles": list(self.poles)},
            )

    @property
    def order(self) -> int:
        return len(self.poles)


@dataclass(frozen=True)
class ControllerParams:
    """The five tuning knobs of a PI^lambda D^mu controller."""

    kp: float
    ki: float
    kd: float
    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        values = (self.kp, self.ki, self.kd, self.lam, self.mu)
        if not all(math.isfinite(v) for v in values):
            raise FractionalException(
                message="Controller parameters must be finite",
                error_code="INVALID_CONTROLLER_PARAMS",
                metadata=self.to_dict(),
            )
        if abs(self.lam) > 2.0 or abs(self.mu) > 2.0:
            raise FractionalException(
                message="Orders lambda and mu must lie in [-2, 2]",
                error_code="INVALID_CONTROLLER_PARAMS",
                metadata=self.to_dict(),
            )

    def as_vector(self) -> np.ndarray:
        return np.array([self.kp, self.ki, self.kd, self.lam, self.mu])

    @classmethod
    def from_vector(cls, vector) -> "ControllerParams":
        """
        Build params from a 3-vector (PID, orders fixed to 1) or a 5-vector.
        """
        values = [float(v) for v in vector]
        if len(values) == 3:
            return cls(values[0], values[1], values[2], 1.0, 1.0)
        if len(values) == 5:
            return cls(*values)
        raise FractionalException(
            message="Parameter vector must have 3 or 5 entries",
            error_code="INVALID_CONTROLLER_PARAMS",
            metadata={"length": len(values)},
        )

    def to_dict(self) -> dict:
        return {
            "kp": self.kp,
            "ki": self.ki,
            "kd": self.kd,
            "lambda": self.lam,
            "mu": self.mu,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerParams":
        try:
            return cls(
                kp=float(data["kp"]),
                ki=float(data["ki"]),
                kd=float(data["kd"]),
                lam=float(data.get("lambda", 1.0)),
                mu=float(data.get("mu", 1.0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FractionalException(
                message="Controller mapping needs numeric kp, ki and kd",
                error_code="INVALID_CONTROLLER_PARAMS",
                metadata={"keys": sorted(data) if isinstance(data, dict) else None},
                cause=e,
            ) from e


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """x' = A x + B u, y = C x + D u with scalar input and output."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float

    def __post_init__(self):
        n = self.a.shape[0] if self.a.ndim == 2 else -1
        if (
            self.a.shape != (n, n)
            or self.b.shape != (n,)
            or self.c.shape != (n,)
        ):
            raise FractionalException(
                message="Inconsistent state-space dimensions",
                error_code="INVALID_STATE_SPACE",
                metadata={
                    "a": self.a.shape,
                    "b": self.b.shape,
                    "c": self.c.shape,
                },
            )

    @property
    def order(self) -> int:
        return self.a.shape[0]

    @classmethod
    def gain(cls, k: float) -> "StateSpaceModel":
        return cls(np.zeros((0, 0)), np.zeros(0), np.zeros(0), float(k))

    def is_stable(self) -> bool:
        if self.order == 0:
            return True
        return bool(np.all(np.linalg.eigvals(self.a).real < 0.0))

    def transformed(self, t: np.ndarray) -> "StateSpaceModel":
        """Similarity transform x = T z."""
        t_inv = np.linalg.inv(t)
        return StateSpaceModel(
            t_inv @ self.a @ t, t_inv @ self.b, self.c @ t, self.d
        )


def oustaloup_filter(cfg: OustaloupConfig) -> RationalFilter:
    """
    Synthesize the recursive approximation of s^gamma over the band.

    Args:
        cfg (OustaloupConfig): Order, band edges and half-order N.

    Returns:
        RationalFilter: 2N+1 zeros and poles, sorted ascending,
        with gain omega_h^gamma.
    """
    n = cfg.n_half
    ratio = cfg.omega_h / cfg.omega_b
    order = 2 * n + 1
    poles = []
    zeros = []
    for k in range(-n, n + 1):
        poles.append(
            cfg.omega_b * ratio ** ((k + n + 0.5 * (1.0 + cfg.gamma)) / order)
        )
        zeros.append(
            cfg.omega_b * ratio ** ((k + n + 0.5 * (1.0 - cfg.gamma)) / order)
        )
    gain = cfg.omega_h**cfg.gamma
    logger.debug(
        f"Oustaloup filter gamma={cfg.gamma} band=[{cfg.omega_b}, "
        f"{cfg.omega_h}] order={order} gain={gain}"
    )
    return RationalFilter(tuple(zeros), tuple(poles), gain)


def filter_to_statespace(f: RationalFilter) -> StateSpaceModel:
    """
    Realize the filter as a cascade of first-order sections.

    Each section (s + z)/(s + p) = 1 + (z - p)/(s + p) contributes one
    state; the input of section k is the system input plus the residue
    outputs of all earlier sections, so A is lower triangular with the
    negated poles on the diagonal.
    """
    n = f.order
    residues = np.array(f.zeros, dtype=float) - np.array(f.poles, dtype=float)
    a = np.diag(-np.array(f.poles, dtype=float))
    for k in range(1, n):
        a[k, :k] = residues[:k]
    b = np.ones(n)
    c = f.gain * residues
    return StateSpaceModel(a, b, c, float(f.gain))


def zpk_response(f: RationalFilter, omega: float) -> complex:
    """Evaluate the zero/pole/gain product at s = j*omega."""
    s = 1j * omega
    value = complex(f.gain)
    for z, p in zip(f.zeros, f.poles):
        value *= (s + z) / (s + p)
    return value


def freq_response(m: StateSpaceModel, omega: float) -> complex:
    """
    Evaluate C (j omega I - A)^-1 B + D.

    Raises:
        FractionalException: If omega is not positive or the resolvent
                             is singular.
    """
    if not omega > 0.0:
        raise FractionalException(
            message="Frequency must be positive",
            error_code="FREQUENCY_EVALUATION_ERROR",
            metadata={"omega": omega},
        )
    if m.order == 0:
        return complex(m.d)
    resolvent = 1j * omega * np.eye(m.order) - m.a
    try:
        x = np.linalg.solve(resolvent, m.b.astype(complex))
    except np.linalg.LinAlgError as e:
        raise FractionalException(
            message=f"Singular resolvent at omega={omega}",
            error_code="FREQUENCY_EVALUATION_ERROR",
            metadata={"omega": omega},
            cause=e,
        ) from e
    return complex(m.c @ x + m.d)


def parallel(models: list, gains: list) -> StateSpaceModel:
    """Weighted parallel sum sum_i g_i * G_i(s) as one block-diagonal model."""
    order = sum(m.order for m in models)
    a = np.zeros((order, order))
    b = np.zeros(order)
    c = np.zeros(order)
    d = 0.0
    offset = 0
    for m, g in zip(models, gains):
        n = m.order
        a[offset : offset + n, offset : offset + n] = m.a
        b[offset : offset + n] = m.b
        c[offset : offset + n] = g * m.c
        d += g * m.d
        offset += n
    return StateSpaceModel(a, b, c, d)


def _branch(gamma: float, band: FilterBand) -> StateSpaceModel:
    # s^0 = 1, no synthesis needed
    if gamma == 0.0:
        return StateSpaceModel.gain(1.0)
    return filter_to_statespace(
        oustaloup_filter(OustaloupConfig.from_band(gamma, band))
    )


def fopid_controller(
    p: ControllerParams,
    omega_b: float = DEFAULT_OMEGA_B,
    omega_h: float = DEFAULT_OMEGA_H,
    n_half: int = DEFAULT_N_HALF,
    band: Optional[FilterBand] = None,
) -> StateSpaceModel:
    """
    Assemble Kp + Ki * s^-lambda + Kd * s^mu in parallel form.

    Branches with a zero gain are left out; a zero order collapses its
    branch to a pure gain.

    Args:
        p (ControllerParams): Gains and orders.
        omega_b (float): Lower band edge in rad/s.
        omega_h (float): Upper band edge in rad/s.
        n_half (int): Half-order N of each branch filter.
        band (FilterBand, optional): Overrides the three band arguments.

    Returns:
        StateSpaceModel: Realization of order at most 2(2N+1).
    """
    band = band or FilterBand(omega_b, omega_h, n_half)
    models = [StateSpaceModel.gain(1.0)]
    gains = [p.kp]
    if p.ki != 0.0:
        models.append(_branch(-p.lam, band))
        gains.append(p.ki)
    if p.kd != 0.0:
        models.append(_branch(p.mu, band))
        gains.append(p.kd)
    model = parallel(models, gains)
    logger.debug(f"FOPID controller {p.to_dict()} realized with order {model.order}")
    return model
