"""SNR gain of optimized power allocation over uniform allocation.

The gain ``G`` is the factor by which the uniform system's power has to be
scaled to match the optimized error rate. Scaling the uniform power by
``G`` is the same as scaling ``gamma0`` by ``G``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from . import analytic
from .allocator import Criterion, alloc_coefficients, numerical_allocation
from .core import ConvergenceError, ModelError, Modulation, SystemConfig, linear_to_db
from .simulation import optimize_batch, per_channel_rates, sample_geometries

GAIN_RTOL = 1e-8
_Z95 = 1.959963984540054


class GainStrategy(str, enum.Enum):
    AVERAGE = "average"
    INSTANTANEOUS = "instantaneous"


@dataclass(frozen=True)
class GainResult:
    gain_linear: float
    criterion: Criterion
    strategy: GainStrategy
    gamma0: float
    residual: float
    optimized_rate: float
    half_width: Optional[float] = None
    trials: Optional[int] = None

    @property
    def gain_db(self) -> float:
        return float(linear_to_db(self.gain_linear))

    @property
    def half_width_db(self) -> Optional[float]:
        if self.half_width is None:
            return None
        lo = max(self.gain_linear - self.half_width, 1e-300)
        return 0.5 * float(linear_to_db((self.gain_linear + self.half_width) / lo))


@dataclass(frozen=True)
class GainLimits:
    g0: float
    g_inf: float
    c_mn: float


def uniform_rate(config: SystemConfig, criterion: Criterion, scale: float = 1.0) -> float:
    """Average error rate with every stream at power ``scale``."""
    g = config.gamma0 * scale
    ones = np.ones(config.m)
    if Criterion(criterion) is Criterion.BLER:
        return float(analytic.bler_from_steps(analytic.step_bers(config.orders, ones, g)))
    return float(analytic.tber_value(config.orders, ones, 1.0 / g))


def _invert(curve: Callable[[float], float], target: float, m: int) -> float:
    """Solve ``curve(alpha) == target`` for ``alpha`` in ``[1/2, 4m]``; curve must decrease."""
    lo, hi = math.log(0.5), math.log(4.0 * m)
    f_lo, f_hi = curve(math.exp(lo)) - target, curve(math.exp(hi)) - target
    if not (f_lo >= 0 >= f_hi):
        raise ConvergenceError(
            f"optimized rate {target:.6g} outside the uniform curve over [1/2, {4 * m}]", float(min(f_lo, -f_hi))
        )
    if f_lo == 0:
        return 0.5
    if f_hi == 0:
        return 4.0 * m
    # Working in log(alpha) turns the relative tolerance into an absolute one.
    x = brentq(lambda t: curve(math.exp(t)) - target, lo, hi, xtol=GAIN_RTOL / 4, rtol=4 * np.finfo(float).eps)
    return math.exp(x)


def snr_gain(
    config: SystemConfig,
    criterion: Criterion = Criterion.BLER,
    strategy=GainStrategy.AVERAGE,
    *,
    trials: int = 10_000,
    seed: int = 42,
) -> GainResult:
    """Uniform-power scaling that matches the optimized error rate.

    The instantaneous strategy averages per-channel optimized rates over
    ``trials`` seeded channel draws and compares them with the uniform rate
    averaged over the same draws. Its 95% half-width is a delta-method
    interval on the paired per-channel differences.
    """
    config.require_bpsk("snr_gain")
    criterion = Criterion(criterion)
    strategy = GainStrategy(strategy)
    m = config.m
    if m == 1:
        p = uniform_rate(config, criterion)
        return GainResult(1.0, criterion, strategy, config.gamma0, 0.0, p, 0.0 if strategy is GainStrategy.INSTANTANEOUS else None)

    if strategy is GainStrategy.AVERAGE:
        target = numerical_allocation(config, criterion).objective

        def curve(a):
            return uniform_rate(config, criterion, a)

        g = _invert(curve, target, m)
        return GainResult(g, criterion, strategy, config.gamma0, abs(curve(g) / target - 1.0), target)

    if trials < 2:
        raise ModelError("instantaneous gain needs at least 2 channel draws")
    geo = sample_geometries(config, trials, seed)
    sigma0 = math.sqrt(config.sigma0_sq)
    opt = optimize_batch(geo, config, criterion)[1]
    target = float(opt.mean())
    ones = np.ones(m)

    def rates(a):
        return per_channel_rates(geo, ones, sigma0 / math.sqrt(a), criterion)

    g = _invert(lambda a: float(rates(a).mean()), target, m)
    # Delta method on the paired differences: both curves share the channel draws.
    diff = rates(g) - opt
    h = 1e-4 * g
    slope = float((rates(g + h).mean() - rates(g - h).mean()) / (2 * h))
    hw = _Z95 * float(diff.std(ddof=1)) / math.sqrt(trials) / abs(slope)
    if not np.isfinite(hw) or hw >= g:
        raise ConvergenceError(
            f"Monte Carlo spread exceeds the gain resolution; increase trials (now {trials})", hw
        )
    return GainResult(
        g, criterion, strategy, config.gamma0, abs(float(rates(g).mean()) / target - 1.0), target, hw, trials
    )


def gain_low_snr_limit(config: SystemConfig) -> float:
    """Gain as ``gamma0 -> 0`` from the first-order BLER coefficients."""
    c = analytic.maclaurin_coeffs(config)
    m = config.m
    if config.modulation is Modulation.BPSK:
        return float(m * np.sum(c**2) / np.sum(c) ** 2)
    mag = np.abs(c)
    return float(m * mag.max() / mag.sum())


def tber_high_snr_limit(config: SystemConfig) -> float:
    """High-SNR TBER gain ``m (2 a1 / (m + 1))^(1/L1)`` with ``a1`` the uniform propagation factor."""
    m = config.m
    if m == 1:
        return 1.0
    a1 = analytic.error_propagation_factor(config)
    return float(m * (2.0 * a1 / (m + 1)) ** (1.0 / config.order(1)))


def _c_mn(m: int, n: int, criterion: Criterion) -> float:
    if m == 1:
        return 0.0
    coef = alloc_coefficients(m, n, criterion)
    L1 = n - m + 1
    K1 = analytic.high_snr_coefficient(L1)
    K2 = analytic.high_snr_coefficient(L1 + 1)
    b2 = coef.b[1]
    if Criterion(criterion) is Criterion.BLER:
        return (L1 * K1 * b2 ** (L1 + 2) + K2 * m ** (L1 + 1)) / (m * K1 * b2 ** (L1 + 1))
    return ((m + 1) * L1 * K1 * b2 ** (L1 + 2) + K2 * m ** (L1 + 2)) / (m * (m + 1) * K1 * b2 ** (L1 + 1))


def gain_limits(config: SystemConfig, criterion: Criterion = Criterion.BLER) -> GainLimits:
    criterion = Criterion(criterion)
    g_inf = float(config.m) if criterion is Criterion.BLER else tber_high_snr_limit(config)
    return GainLimits(gain_low_snr_limit(config), g_inf, _c_mn(config.m, config.n, criterion))


def gain_high_snr_approx(config: SystemConfig, criterion: Criterion = Criterion.BLER, gamma0: float = None) -> float:
    """``G_inf / (1 + c_mn / (4 gamma0)^(1/(L1+2)))^(1/L1)``."""
    g0 = config.gamma0 if gamma0 is None else float(gamma0)
    criterion = Criterion(criterion)
    if config.m == 1:
        return 1.0
    lim = gain_limits(config, criterion)
    L1 = config.order(1)
    return lim.g_inf / (1.0 + lim.c_mn / (4.0 * g0) ** (1.0 / (L1 + 2))) ** (1.0 / L1)


@dataclass(frozen=True)
class MonotonicityReport:
    gamma0: Tuple[float, ...]
    gains: Tuple[float, ...]
    criterion: Criterion
    violations: Tuple[int, ...]
    enforced: bool

    @property
    def nondecreasing(self) -> bool:
        return not self.violations


def verify_gain_monotonicity(
    config: SystemConfig,
    criterion: Criterion = Criterion.BLER,
    gammas: Sequence[float] = (1.0, 10.0, 100.0, 1000.0),
    *,
    rtol: float = 1e-6,
) -> MonotonicityReport:
    """Average-strategy gains over a ``gamma0`` grid and the indices where they drop.

    ``enforced`` is true for BLER, where monotonicity is a theorem; for TBER
    the report is an observation.
    """
    criterion = Criterion(criterion)
    gains = [snr_gain(config.with_gamma0(g), criterion).gain_linear for g in gammas]
    bad = tuple(k for k in range(1, len(gains)) if gains[k] < gains[k - 1] * (1 - rtol))
    return MonotonicityReport(tuple(float(g) for g in gammas), tuple(gains), criterion, bad, criterion is Criterion.BLER)


def _equalizing_power(config: SystemConfig, total: float) -> float:
    """Per-stream uniform power matching the BLER optimum at total power ``total``."""
    cfg = config.with_gamma0(config.gamma0 * total / config.m)
    target = numerical_allocation(cfg, Criterion.BLER).objective
    return (total / config.m) * _invert(lambda a: uniform_rate(cfg, Criterion.BLER, a), target, config.m)


def gain_derivative_check(config: SystemConfig, rel_step: float = 1e-4) -> Tuple[float, float]:
    """Finite-difference slope of the equalizing uniform power versus total power.

    Returns ``(finite_difference, -lam / dP_uniform/dalpha)``; the two agree
    when the optimum moves smoothly with the budget.
    """
    m = config.m
    h = rel_step * m
    fd = (_equalizing_power(config, m + h) - _equalizing_power(config, m - h)) / (2 * h)
    sol = numerical_allocation(config, Criterion.BLER)
    a = _equalizing_power(config, float(m))
    snr = a * config.gamma0
    steps = analytic.step_bers(config.orders, np.full(m, a), config.gamma0)
    slopes = np.array([analytic.mrc_ber_bpsk_slope(int(L), snr) for L in config.orders]) * config.gamma0
    # d/da of 1 - prod(1 - P_i) with every P_i moving together.
    d_uniform = float(np.sum(slopes * np.prod(1 - steps) / (1 - steps)))
    return float(fd), float(-sol.lam / d_uniform)


__all__ = [
    "GAIN_RTOL",
    "GainLimits",
    "GainResult",
    "GainStrategy",
    "MonotonicityReport",
    "gain_derivative_check",
    "gain_high_snr_approx",
    "gain_limits",
    "gain_low_snr_limit",
    "snr_gain",
    "tber_high_snr_limit",
    "uniform_rate",
    "verify_gain_monotonicity",
]
