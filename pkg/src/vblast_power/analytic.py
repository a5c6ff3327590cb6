"""Closed-form average error rates of the unordered V-BLAST with BPSK.

Step ``i`` (1-based) of the detector sees a diversity order ``L = n - m + i``
after nulling, so its average conditional BER is the ``L``-branch MRC error
rate at SNR ``alpha_i * gamma0``. Error propagation is modelled by treating
earlier wrong decisions as extra noise power ``4 * sum(alpha_k)`` over the
steps that failed.

All rate helpers accept an ``alpha`` array whose last axis runs over the
transmitters; leading axes are broadcast, which the optimizers rely on.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np

from .core import (
    AllocationLike,
    ModelError,
    Modulation,
    SystemConfig,
    as_alpha,
)

#: Largest number of prior steps enumerated for error patterns.
MAX_PATTERN_STEPS = 20
#: Largest ``m`` accepted by the average-TBER recursion.
MAX_TBER_STREAMS = 12

_LOG_2SQRTPI = math.log(2.0 * math.sqrt(math.pi))


def _check_order(order) -> int:
    if int(order) != order or order < 1:
        raise ModelError(f"MRC order must be an integer >= 1, got {order}")
    return int(order)


def high_snr_coefficient(order: int) -> int:
    """Leading-term numerator ``C(2L-1, L)`` of the L-branch MRC BER."""
    return math.comb(2 * order - 1, order)


def mrc_ber_bpsk(order: int, snr):
    """Average BPSK bit error rate of ``order``-branch MRC in Rayleigh fading.

    Evaluates ``[(1-mu)/2]^L * sum_k C(L-1+k, k) [(1+mu)/2]^k`` with
    ``mu = sqrt(snr / (1 + snr))``; ``1 - mu`` is formed without cancellation
    so the result keeps full relative precision at high SNR.
    """
    L = _check_order(order)
    g = np.asarray(snr, dtype=float)
    if np.any(g < 0) or np.any(np.isnan(g)):
        raise ModelError("snr must be >= 0")
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = np.sqrt(g / (1.0 + g))
        mu = np.where(np.isinf(g), 1.0, mu)
        lower = 0.5 / ((1.0 + g) * (1.0 + mu))
        upper = 0.5 * (1.0 + mu)
    acc = np.zeros_like(g)
    for k in range(L - 1, -1, -1):
        acc = acc * upper + math.comb(L - 1 + k, k)
    out = lower**L * acc
    out = np.where(g == 0, 0.5, out)
    return float(out) if out.ndim == 0 else out


def mrc_ber_bpsk_log_slope(order: int, snr):
    """``log(-dP/dsnr)`` for :func:`mrc_ber_bpsk`.

    Uses ``dP/dg = -Gamma(L + 1/2) / (2 sqrt(pi) Gamma(L) sqrt(g) (1+g)^(L+1/2))``,
    obtained by differentiating the Q-function average under the integral.
    """
    L = _check_order(order)
    g = np.asarray(snr, dtype=float)
    with np.errstate(divide="ignore"):
        out = (
            math.lgamma(L + 0.5)
            - math.lgamma(L)
            - _LOG_2SQRTPI
            - 0.5 * np.log(g)
            - (L + 0.5) * np.log1p(g)
        )
    return float(out) if out.ndim == 0 else out


def mrc_ber_bpsk_slope(order: int, snr):
    """Derivative of :func:`mrc_ber_bpsk` with respect to the SNR (negative)."""
    out = -np.exp(mrc_ber_bpsk_log_slope(order, snr))
    return float(out) if np.ndim(out) == 0 else out


def mrc_ber_high_snr(order: int, snr):
    L = _check_order(order)
    g = np.asarray(snr, dtype=float)
    if np.any(g <= 0):
        raise ModelError("high-SNR approximation needs snr > 0")
    out = high_snr_coefficient(L) / (4.0 * g) ** L
    return float(out) if out.ndim == 0 else out


# -- BLER --------------------------------------------------------------------


def step_bers(orders: Sequence[int], alpha, gamma0: float) -> np.ndarray:
    """Average conditional BER of every step, shape of ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty_like(alpha)
    for i, L in enumerate(orders):
        out[..., i] = mrc_ber_bpsk(int(L), alpha[..., i] * gamma0)
    return out


def bler_from_steps(p_steps: np.ndarray) -> np.ndarray:
    return -np.expm1(np.sum(np.log1p(-p_steps), axis=-1))


def avg_step_ber(config: SystemConfig, alloc: AllocationLike, i: int) -> float:
    config.require_bpsk("avg_step_ber")
    if not 1 <= i <= config.m:
        raise ModelError(f"step index must be in 1..{config.m}, got {i}")
    alpha = as_alpha(alloc, config.m)
    return mrc_ber_bpsk(config.order(i), alpha[i - 1] * config.gamma0)


def avg_bler(config: SystemConfig, alloc: AllocationLike) -> float:
    """Average block error rate ``1 - prod(1 - P_ei)``."""
    config.require_bpsk("avg_bler")
    alpha = as_alpha(alloc, config.m)
    return float(bler_from_steps(step_bers(config.orders, alpha, config.gamma0)))


def _leading_terms(config: SystemConfig, alpha: np.ndarray) -> np.ndarray:
    if np.any(alpha <= 0):
        raise ModelError("high-SNR approximation diverges for a zero-power stream")
    orders = config.orders
    coeffs = np.array([high_snr_coefficient(int(L)) for L in orders], dtype=float)
    return coeffs / (4.0 * alpha * config.gamma0) ** orders


def avg_bler_high_snr(config: SystemConfig, alloc: AllocationLike) -> float:
    """Sum of the leading high-SNR terms of the step BERs."""
    config.require_bpsk("avg_bler_high_snr")
    return float(np.sum(_leading_terms(config, as_alpha(alloc, config.m))))


# -- error patterns ----------------------------------------------------------


@dataclass(frozen=True)
class ErrorVector:
    """Demodulation errors ``e_k = s_hat_k - s_k`` over the steps before ``i``.

    For sign-collapsed patterns, ``multiplicity`` counts the signed vectors
    sharing the support.
    """

    entries: Tuple[int, ...]
    multiplicity: int = 1

    def __post_init__(self):
        if any(e not in (0, 2, -2) for e in self.entries):
            raise ModelError(f"error entries must be in {{0, +2, -2}}: {self.entries}")

    @property
    def support(self) -> frozenset:
        return frozenset(k for k, e in enumerate(self.entries) if e != 0)

    def __len__(self):
        return len(self.entries)


def enumerate_error_patterns(i: int, signed: bool = True) -> List[ErrorVector]:
    """All error vectors over the ``i - 1`` steps preceding step ``i``."""
    if i < 1:
        raise ModelError(f"step index must be >= 1, got {i}")
    if i - 1 > MAX_PATTERN_STEPS:
        raise ModelError(f"refusing to enumerate patterns over {i - 1} > {MAX_PATTERN_STEPS} steps")
    if signed:
        return [ErrorVector(e) for e in itertools.product((0, 2, -2), repeat=i - 1)]
    out = []
    for bits in itertools.product((0, 2), repeat=i - 1):
        out.append(ErrorVector(bits, 2 ** sum(1 for b in bits if b)))
    return out


# -- TBER --------------------------------------------------------------------


class Method(str, enum.Enum):
    EXACT = "exact-enumeration"
    HIGH_SNR = "high-snr-approx"


@dataclass(frozen=True)
class StepErrorProfile:
    step: int
    p_cond: float
    p_uncond: float
    multiplier: float


@dataclass(frozen=True)
class RateReport:
    bler: float
    tber: float
    steps: Tuple[StepErrorProfile, ...]
    method: Method = Method.EXACT


def _propagated(orders, alpha, sigma0_sq, start_step, start_masks):
    """Run the error-pattern chain from ``start_step`` on.

    ``start_masks`` maps a bitmask of failed steps to ``(probability, noise)``
    where ``noise`` is the interference power ``4 * sum(alpha_k)`` of the
    failures. Returns the unconditional BER of each visited step.
    """
    states = start_masks
    uncond = []
    for i in range(start_step, len(orders)):
        L = int(orders[i])
        a_i = alpha[..., i]
        nxt = {}
        p_u = 0.0
        for mask, (prob, noise) in states.items():
            with np.errstate(divide="ignore"):
                p_err = mrc_ber_bpsk(L, a_i / (noise + sigma0_sq))
            p_u = p_u + prob * p_err
            ok = prob * (1.0 - p_err)
            if mask in nxt:
                nxt[mask] = (nxt[mask][0] + ok, noise)
            else:
                nxt[mask] = (ok, noise)
            nxt[mask | (1 << i)] = (prob * p_err, noise + 4.0 * a_i)
        states = nxt
        uncond.append(p_u)
    return uncond


def _check_tber_size(m: int):
    if m > MAX_TBER_STREAMS:
        raise ModelError(f"average TBER enumeration limited to m <= {MAX_TBER_STREAMS}, got {m}")


def tber_unconditional(orders, alpha, sigma0_sq: float) -> np.ndarray:
    """Unconditional step BERs, summing over sign-collapsed error supports."""
    alpha = np.asarray(alpha, dtype=float)
    _check_tber_size(len(orders))
    zero = np.zeros(alpha.shape[:-1])
    uncond = _propagated(orders, alpha, sigma0_sq, 0, {0: (zero + 1.0, zero)})
    return np.stack(np.broadcast_arrays(*uncond), axis=-1)


def propagation_multipliers(orders, alpha, sigma0_sq: float) -> np.ndarray:
    """After-effect factor of an error first made at each step.

    ``a_i = 1 + sum_{j > i} P(error at j | first error at i)``; ``a_m = 1``.
    """
    alpha = np.asarray(alpha, dtype=float)
    m = len(orders)
    _check_tber_size(m)
    out = np.ones(alpha.shape)
    for i in range(m - 1):
        start = {1 << i: (np.ones(alpha.shape[:-1]), 4.0 * alpha[..., i])}
        later = _propagated(orders, alpha, sigma0_sq, i + 1, start)
        out[..., i] = 1.0 + sum(later)
    return out


def tber_value(orders, alpha, sigma0_sq: float) -> np.ndarray:
    return np.mean(tber_unconditional(orders, alpha, sigma0_sq), axis=-1)


def tber_grouped_value(orders, alpha, sigma0_sq: float) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    p = step_bers(orders, alpha, 1.0 / sigma0_sq)
    survive = np.cumprod(np.concatenate([np.ones(p.shape[:-1] + (1,)), 1.0 - p[..., :-1]], axis=-1), axis=-1)
    a = propagation_multipliers(orders, alpha, sigma0_sq)
    return np.mean(a * p * survive, axis=-1)


def _rate_report(config, alpha, tber, uncond, mult) -> RateReport:
    p = step_bers(config.orders, alpha, config.gamma0)
    steps = tuple(
        StepErrorProfile(i + 1, float(p[i]), float(uncond[i]), float(mult[i])) for i in range(config.m)
    )
    return RateReport(float(bler_from_steps(p)), float(tber), steps)


def avg_tber(config: SystemConfig, alloc: AllocationLike) -> RateReport:
    """Average total BER as the mean of unconditional step BERs."""
    config.require_bpsk("avg_tber")
    alpha = as_alpha(alloc, config.m)
    uncond = tber_unconditional(config.orders, alpha, config.sigma0_sq)
    mult = propagation_multipliers(config.orders, alpha, config.sigma0_sq)
    return _rate_report(config, alpha, np.mean(uncond), uncond, mult)


def avg_tber_grouped(config: SystemConfig, alloc: AllocationLike) -> RateReport:
    """Average total BER regrouped by the step where the first error occurs."""
    config.require_bpsk("avg_tber_grouped")
    alpha = as_alpha(alloc, config.m)
    tber = tber_grouped_value(config.orders, alpha, config.sigma0_sq)
    uncond = tber_unconditional(config.orders, alpha, config.sigma0_sq)
    mult = propagation_multipliers(config.orders, alpha, config.sigma0_sq)
    return _rate_report(config, alpha, tber, uncond, mult)


def error_propagation_factor(config: SystemConfig, alloc: AllocationLike = None) -> float:
    """SNR-independent propagation factor of a first-step error.

    Conditional BERs after an error drop the noise term, so each one is the
    MRC BER at the signal-to-interference ratio ``alpha_i / (4 sum alpha_k)``.
    Defaults to the uniform allocation.
    """
    if config.m == 1:
        return 1.0
    alpha = np.ones(config.m) if alloc is None else as_alpha(alloc, config.m)
    return float(propagation_multipliers(config.orders, alpha, 0.0)[0])


def avg_tber_high_snr(config: SystemConfig, alloc: AllocationLike) -> float:
    """High-SNR TBER of a near-optimal allocation.

    Every error made after a prior error is counted with probability 1/2, so
    step ``i`` contributes ``(m - i + 2) / (2m)`` times its leading BER term.
    """
    config.require_bpsk("avg_tber_high_snr")
    alpha = as_alpha(alloc, config.m)
    m = config.m
    weights = (m - np.arange(1, m + 1) + 2) / (2.0 * m)
    return float(np.sum(weights * _leading_terms(config, alpha)))


def maclaurin_coeffs(config: SystemConfig) -> np.ndarray:
    """First-order low-SNR slopes of the step BERs.

    For coherent BPSK the slope is taken in ``sqrt(alpha_i gamma0)``; for
    non-coherent BFSK it is taken in ``alpha_i gamma0`` and equals half the
    BPSK value.
    """
    coeffs = []
    for L in config.orders:
        L = int(L)
        a = Fraction(-L, 2) + Fraction(1, 2**L) * sum(
            Fraction(math.comb(L + k - 1, k) * k, 2**k) for k in range(L)
        )
        coeffs.append(a if config.modulation is Modulation.BPSK else a / 2)
    return np.array([float(c) for c in coeffs])
