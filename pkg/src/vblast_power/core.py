"""Shared domain types: system configuration, power allocations, SNR units."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

#: Relative tolerance on the total power constraint ``sum(alpha) == m``.
SUM_RTOL = 1e-9


class ModelError(ValueError):
    """Input outside the validity domain of the system model."""


class InvalidAllocation(ModelError):
    """Power allocation violating the total-power or non-negativity constraint."""


class ConvergenceError(RuntimeError):
    """Iterative solver stopped before meeting its tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class Modulation(str, enum.Enum):
    BPSK = "bpsk-coherent"
    BFSK = "bfsk-noncoherent"


def db_to_linear(value_db):
    out = 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(value):
    out = 10.0 * np.log10(np.asarray(value, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SnrPoint:
    """An SNR value carried in both units."""

    value_linear: float

    @classmethod
    def from_db(cls, value_db: float) -> "SnrPoint":
        return cls(db_to_linear(float(value_db)))

    @property
    def value_db(self) -> float:
        return float(linear_to_db(self.value_linear))


@dataclass(frozen=True)
class SystemConfig:
    """Fixed parameters of one V-BLAST experiment.

    Parameters
    ----------
    m, n : int
        Transmit and receive antenna counts, ``n >= m >= 1``.
    gamma0 : float
        Average per-transmitter SNR in linear scale. The per-receiver noise
        variance is derived as ``1 / gamma0``.
    modulation : Modulation
        Coherent BPSK everywhere; non-coherent BFSK is only meaningful for
        the low-SNR MacLaurin analysis.
    """

    m: int
    n: int
    gamma0: float
    modulation: Modulation = Modulation.BPSK

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ModelError(f"m must be an integer >= 1, got {self.m}")
        if int(self.n) != self.n or self.n < self.m:
            raise ModelError(f"n must be >= m (got m={self.m}, n={self.n})")
        if not (self.gamma0 > 0 and math.isfinite(self.gamma0)):
            raise ModelError(f"gamma0 must be a positive finite number, got {self.gamma0}")
        object.__setattr__(self, "modulation", Modulation(self.modulation))

    @classmethod
    def from_db(cls, m: int, n: int, snr_db: float, modulation=Modulation.BPSK) -> "SystemConfig":
        return cls(m, n, db_to_linear(float(snr_db)), modulation)

    @property
    def sigma0_sq(self) -> float:
        return 1.0 / self.gamma0

    @property
    def snr_db(self) -> float:
        return float(linear_to_db(self.gamma0))

    @property
    def orders(self) -> np.ndarray:
        """Diversity (MRC) order of each detection step, ``n - m + i``."""
        return np.arange(self.n - self.m + 1, self.n + 1)

    def order(self, i: int) -> int:
        return self.n - self.m + i

    def with_gamma0(self, gamma0: float) -> "SystemConfig":
        return replace(self, gamma0=gamma0)

    def require_bpsk(self, operation: str) -> None:
        if self.modulation is not Modulation.BPSK:
            raise ModelError(f"{operation} is only defined for coherent BPSK")


def validate_allocation(alloc, m: int) -> Optional[str]:
    """Check an allocation against the power constraints.

    Returns ``None`` when ``alloc`` has ``m`` non-negative entries summing to
    ``m`` (relative tolerance ``SUM_RTOL``), otherwise a description of every
    violated constraint.
    """
    alpha = np.asarray(alloc.alpha if isinstance(alloc, PowerAllocation) else alloc, dtype=float)
    problems = []
    if alpha.ndim != 1 or alpha.size != m:
        return f"expected {m} coefficients, got shape {alpha.shape}"
    if not np.all(np.isfinite(alpha)):
        return "non-finite coefficient"
    if np.any(alpha < 0):
        k = int(np.argmin(alpha))
        problems.append(f"negative entry alpha[{k + 1}] = {alpha[k]:.6g}")
    total = float(alpha.sum())
    if abs(total - m) > SUM_RTOL * m:
        problems.append(f"sum {total:.12g} != {m} (off by {total - m:.3e})")
    return "; ".join(problems) or None


@dataclass(frozen=True)
class PowerAllocation:
    """Per-transmitter power coefficients obeying ``sum(alpha) == m``."""

    alpha: tuple = field()

    def __post_init__(self):
        alpha = tuple(float(a) for a in np.ravel(self.alpha))
        object.__setattr__(self, "alpha", alpha)
        problem = validate_allocation(alpha, len(alpha))
        if problem:
            raise InvalidAllocation(problem)

    @classmethod
    def normalized(cls, weights: Sequence[float]) -> "PowerAllocation":
        """Rescale non-negative weights so they sum to their count."""
        w = np.asarray(weights, dtype=float)
        return cls(w * (w.size / w.sum()))

    @property
    def m(self) -> int:
        return len(self.alpha)

    def as_array(self) -> np.ndarray:
        return np.array(self.alpha)

    def __len__(self):
        return len(self.alpha)


AllocationLike = Union[PowerAllocation, Sequence[float], np.ndarray]


def uniform_allocation(m: int) -> PowerAllocation:
    if int(m) != m or m < 1:
        raise ModelError(f"m must be an integer >= 1, got {m}")
    return PowerAllocation((1.0,) * int(m))


def as_alpha(alloc: AllocationLike, m: int) -> np.ndarray:
    """Validated coefficient array for ``m`` transmitters."""
    if isinstance(alloc, PowerAllocation):
        if alloc.m != m:
            raise InvalidAllocation(f"allocation has {alloc.m} entries, config has m={m}")
        return alloc.as_array()
    problem = validate_allocation(alloc, m)
    if problem:
        raise InvalidAllocation(problem)
    return np.asarray(alloc, dtype=float)
