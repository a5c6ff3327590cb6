"""Optimum transmit power allocation for the average BLER and TBER criteria."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import analytic
from .core import (
    ConvergenceError,
    ModelError,
    Modulation,
    PowerAllocation,
    SystemConfig,
    uniform_allocation,
)
from .solvers import ALPHA_FLOOR, minimize_on_simplex, solve_separable


class Criterion(str, enum.Enum):
    BLER = "bler"
    TBER = "tber"


class AllocMethod(str, enum.Enum):
    CLOSED_FORM = "closed-form"
    SIMPLIFIED = "simplified"
    NUMERICAL = "numerical"
    LOW_SNR = "low-snr"


@dataclass(frozen=True)
class AllocCoefficients:
    """High-SNR allocation law ``alpha_i ~ b_i (4 gamma0)^((1-i)/(L_i+1))``.

    ``c`` holds the exponents of the first-order Newton correction.
    """

    criterion: Criterion
    b: Tuple[float, ...]
    c: Tuple[float, ...]


@dataclass(frozen=True)
class AllocationSolution:
    alloc: PowerAllocation
    lam: float
    criterion: Criterion
    method: AllocMethod
    objective: float
    kkt_residual: Optional[float] = None
    fallback: bool = False
    notes: str = field(default="", compare=False)

    @property
    def alpha(self) -> np.ndarray:
        return self.alloc.as_array()


def objective(config: SystemConfig, alpha, criterion: Criterion):
    """Average error rate for raw coefficient arrays (no constraint check)."""
    alpha = np.asarray(alpha, dtype=float)
    if Criterion(criterion) is Criterion.BLER:
        return analytic.bler_from_steps(analytic.step_bers(config.orders, alpha, config.gamma0))
    return analytic.tber_value(config.orders, alpha, config.sigma0_sq)


def _orders_and_leading(m: int, n: int):
    orders = [n - m + i for i in range(1, m + 1)]
    return orders, [analytic.high_snr_coefficient(L) for L in orders]


def _first_step_weight(m: int, n: int, criterion: Criterion) -> float:
    """``a_1^(L_1+1)`` of the stationarity condition ``a_i^(L_i+1) / ((4g)^L_i alpha_i^(L_i+1)) = lam``."""
    orders, lead = _orders_and_leading(m, n)
    w = orders[0] * lead[0]
    if Criterion(criterion) is Criterion.TBER:
        w *= (m + 1) / (2.0 * m)
    return w


def alloc_coefficients(m: int, n: int, criterion: Criterion) -> AllocCoefficients:
    """Coefficients of the closed-form high-SNR allocation.

    The step weights use the exact leading MRC coefficient ``C(2L-1, L)`` of
    each step's diversity order ``L = n - m + i``; for ``n == m`` this is
    ``C(2i-1, i)``.
    """
    if not 1 <= m <= n:
        raise ModelError(f"need n >= m >= 1, got m={m}, n={n}")
    criterion = Criterion(criterion)
    orders, lead = _orders_and_leading(m, n)
    L1, K1 = orders[0], lead[0]
    b, c = [], []
    fact = math.factorial(n + 1) / math.factorial(n - m + 1)
    for i in range(1, m + 1):
        L, K = orders[i - 1], lead[i - 1]
        inner = L * K * m ** (L1 + 1) / (L1 * K1)
        if criterion is Criterion.TBER:
            inner *= (m - i + 2) / (m + 1.0)
        b.append(float(m) if i == 1 else inner ** (1.0 / (L + 1)))
        c.append(fact / (L + 1))
    return AllocCoefficients(criterion, tuple(b), tuple(c))


def lagrange_high_snr(config: SystemConfig, criterion: Criterion = Criterion.BLER) -> float:
    """High-SNR Lagrange multiplier ``a_1^(L1+1) / (m^(L1+1) (4 gamma0)^L1)``."""
    L1 = config.order(1)
    w = _first_step_weight(config.m, config.n, criterion)
    return w / (config.m ** (L1 + 1) * (4.0 * config.gamma0) ** L1)


def _solution(config, alpha, criterion, method, lam, **kw) -> AllocationSolution:
    alloc = PowerAllocation(alpha)
    obj = float(objective(config, alloc.as_array(), criterion))
    return AllocationSolution(alloc, float(lam), Criterion(criterion), method, obj, **kw)


def simplified_allocation(config: SystemConfig, criterion: Criterion = Criterion.BLER) -> AllocationSolution:
    """Leading-order law: every later stream gets ``b_i / (4 gamma0)^((i-1)/(L_i+1))``, stream 1 the rest."""
    config.require_bpsk("simplified_allocation")
    m = config.m
    if m == 1:
        return _solution(config, [1.0], criterion, AllocMethod.SIMPLIFIED, lagrange_high_snr(config, criterion))
    coef = alloc_coefficients(m, config.n, criterion)
    orders = config.orders
    alpha = np.array(
        [coef.b[i] / (4.0 * config.gamma0) ** (i / (orders[i] + 1.0)) for i in range(m)]
    )
    alpha[0] = m - alpha[1:].sum()
    if alpha[0] <= 0:
        raise ModelError(f"SNR too low for simplified form (alpha_1 = {alpha[0]:.4g})")
    alpha[0] = m - math.fsum(alpha[1:])
    return _solution(config, alpha, criterion, AllocMethod.SIMPLIFIED, lagrange_high_snr(config, criterion))


def closed_form_allocation(config: SystemConfig, criterion: Criterion = Criterion.BLER) -> AllocationSolution:
    """First-order Newton solution of the high-SNR stationarity equations.

    Each stream gets ``b_i (4 gamma0)^((1-i)/(L_i+1)) (1 + delta)^c_i`` with
    ``delta = -b_2 / (m c_1 (4 gamma0)^(1/(L_1+2)))``, followed by a rescale
    onto ``sum(alpha) == m``. When ``1 + delta <= 0`` the correction is
    meaningless and the simplified law is returned with ``fallback=True``.
    """
    config.require_bpsk("closed_form_allocation")
    m = config.m
    if m == 1:
        return _solution(config, [1.0], criterion, AllocMethod.CLOSED_FORM, lagrange_high_snr(config, criterion))
    coef = alloc_coefficients(m, config.n, criterion)
    orders = config.orders
    g4 = 4.0 * config.gamma0
    L1 = orders[0]
    delta = -coef.b[1] / (m * coef.c[0] * g4 ** (1.0 / (L1 + 2)))
    if 1.0 + delta <= 0:
        simple = simplified_allocation(config, criterion)
        return AllocationSolution(
            simple.alloc, simple.lam, simple.criterion, simple.method, simple.objective,
            fallback=True, notes=f"Newton correction factor {1 + delta:.3g} <= 0",
        )
    raw = np.array([coef.b[i] * g4 ** (-i / (orders[i] + 1.0)) * (1.0 + delta) ** coef.c[i] for i in range(m)])
    alpha = m * raw / raw.sum()
    w1 = _first_step_weight(m, config.n, criterion)
    lam = (w1 / m ** (L1 + 1)) / g4**L1 * (1.0 + delta) ** (-(L1 + 1) * coef.c[0])
    return _solution(config, alpha, criterion, AllocMethod.CLOSED_FORM, lam)


def _bler_log_rate(config: SystemConfig):
    """``log(-(dP_ei/dalpha_i) / (1 - P_ei))`` for every step, separable in alpha."""
    orders = config.orders
    g0 = config.gamma0

    def log_rate(alpha):
        out = np.empty_like(alpha)
        for i, L in enumerate(orders):
            snr = alpha[..., i] * g0
            p = analytic.mrc_ber_bpsk(int(L), snr)
            out[..., i] = math.log(g0) + analytic.mrc_ber_bpsk_log_slope(int(L), snr) - np.log1p(-p)
        return out

    return log_rate


def numerical_allocation(
    config: SystemConfig,
    criterion: Criterion = Criterion.BLER,
    *,
    tol: float = 1e-6,
    x0=None,
) -> AllocationSolution:
    """Exact optimum of the average BLER or TBER under ``sum(alpha) == m``.

    BLER: the stationarity condition ``-(dP_ei/dalpha_i) / (1 - P_ei) = lam / (1 - P_B)``
    is separable, so it is solved by nested bisection and ``lam`` is
    recovered from the common level. TBER: projected Newton descent from the
    closed-form guess (uniform when that is unavailable); ``lam`` is the mean
    of the negated coordinate gradients.
    """
    config.require_bpsk("numerical_allocation")
    criterion = Criterion(criterion)
    m = config.m
    if m == 1:
        lam = -analytic.mrc_ber_bpsk_slope(config.order(1), config.gamma0) * config.gamma0
        return _solution(config, [1.0], criterion, AllocMethod.NUMERICAL, lam, kkt_residual=0.0)

    if criterion is Criterion.BLER:
        log_rate = _bler_log_rate(config)
        alpha, level = solve_separable(log_rate, (m,), float(m))
        rates = np.exp(log_rate(alpha) - level)
        residual = float(np.max(np.abs(rates - 1.0)))
        p_b = float(objective(config, alpha, criterion))
        lam = math.exp(level) * (1.0 - p_b)
        if residual > tol:
            raise ConvergenceError("BLER stationarity not reached", residual)
        return _solution(config, alpha, criterion, AllocMethod.NUMERICAL, lam, kkt_residual=residual)

    if x0 is None:
        try:
            x0 = closed_form_allocation(config, criterion).alpha
        except ModelError:
            x0 = np.ones(m)
    res = minimize_on_simplex(lambda a, _rows: objective(config, a, criterion), x0, float(m), tol=tol)
    residual = float(res.residual[0])
    if residual > 1e3 * tol:
        raise ConvergenceError("TBER optimizer did not converge", residual)
    return _solution(
        config, res.x[0], criterion, AllocMethod.NUMERICAL, float(res.multiplier[0]), kkt_residual=residual
    )


def low_snr_allocation(config: SystemConfig) -> AllocationSolution:
    """Optimum of the first-order low-SNR BLER expansion.

    Coherent detection gives the interior point ``alpha_i = m a_i^2 / sum a_k^2``;
    non-coherent detection puts all power on the stream(s) with the steepest
    slope, split evenly on ties.
    """
    coeffs = analytic.maclaurin_coeffs(config)
    m = config.m
    if config.modulation is Modulation.BPSK:
        alpha = m * coeffs**2 / np.sum(coeffs**2)
    else:
        mag = np.abs(coeffs)
        winners = np.isclose(mag, mag.max(), rtol=1e-12, atol=0.0)
        alpha = np.where(winners, m / winners.sum(), 0.0)
    return AllocationSolution(
        PowerAllocation(alpha), float("nan"), Criterion.BLER, AllocMethod.LOW_SNR, float("nan")
    )


def monotone_ordering_violations(alpha, rtol: float = 1e-9):
    """Indices ``k`` where ``alpha_k > alpha_{k-1}`` beyond ``rtol``."""
    alpha = np.asarray(alpha)
    return [k + 1 for k in range(1, alpha.size) if alpha[k] > alpha[k - 1] * (1 + rtol)]


__all__ = [
    "ALPHA_FLOOR",
    "AllocCoefficients",
    "AllocMethod",
    "AllocationSolution",
    "Criterion",
    "alloc_coefficients",
    "closed_form_allocation",
    "lagrange_high_snr",
    "low_snr_allocation",
    "monotone_ordering_violations",
    "numerical_allocation",
    "objective",
    "simplified_allocation",
    "uniform_allocation",
]
