"""Monte Carlo V-BLAST link simulation and per-channel error-rate formulas.

Channels, symbols and noise are drawn in fixed-size blocks. Every block has
its own generator derived from ``(seed, block_index)``, so estimates do not
depend on how blocks are spread over worker processes.
"""

from __future__ import annotations

import enum
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import erfc, log_ndtr

from .allocator import (
    AllocationSolution,
    AllocMethod,
    Criterion,
    closed_form_allocation,
    numerical_allocation,
)
from .core import (
    AllocationLike,
    ConvergenceError,
    ModelError,
    PowerAllocation,
    SystemConfig,
    as_alpha,
    uniform_allocation,
)
from .solvers import minimize_on_simplex, solve_separable

RANK_RTOL = 1e-10
MAX_INSTANT_TBER_STREAMS = 8
BLOCK_SIZE = 4096
_Z95 = 1.959963984540054


def q_function(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


# ---------------------------------------------------------------- channels


def _rank_ok(h: np.ndarray) -> np.ndarray:
    sv = np.linalg.svd(h, compute_uv=False)
    return sv[..., -1] > RANK_RTOL * sv[..., 0]


def _rank_ok_screened(h: np.ndarray, r_diag: np.ndarray) -> np.ndarray:
    """Rank test that only runs the SVD where the QR diagonal looks small."""
    ok = np.ones(h.shape[0], dtype=bool)
    scale = np.max(np.linalg.norm(h, axis=-2), axis=-1)
    suspect = np.min(np.abs(r_diag), axis=-1) <= 1e-6 * scale
    if suspect.any():
        ok[suspect] = _rank_ok(h[suspect])
    return ok


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One ``n x m`` flat-fading channel matrix; column ``i`` belongs to transmitter ``i``."""

    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=complex)
        if h.ndim != 2 or h.shape[0] < h.shape[1]:
            raise ModelError(f"channel must be n x m with n >= m, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ModelError("channel has non-finite entries")
        if not _rank_ok(h):
            raise ModelError("channel matrix is rank deficient")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.h.shape[0]

    @property
    def m(self) -> int:
        return self.h.shape[1]


def sample_channels(rng: np.random.Generator, n: int, m: int, size: int) -> np.ndarray:
    """``size`` i.i.d. Rayleigh matrices of shape ``(n, m)``, unit average power per entry."""
    h = (rng.standard_normal((size, n, m)) + 1j * rng.standard_normal((size, n, m))) * math.sqrt(0.5)
    bad = ~_rank_ok_screened(h, np.linalg.qr(h, mode="r").diagonal(axis1=-2, axis2=-1))
    while bad.any():  # measure-zero event, kept as a guard
        k = int(bad.sum())
        h[bad] = (rng.standard_normal((k, n, m)) + 1j * rng.standard_normal((k, n, m))) * math.sqrt(0.5)
        bad = ~_rank_ok(h)
    return h


def sample_channel(rng: np.random.Generator, n: int, m: int) -> ChannelRealization:
    return ChannelRealization(sample_channels(rng, n, m, 1)[0])


def _as_channels(h) -> Tuple[np.ndarray, bool]:
    if isinstance(h, ChannelRealization):
        return h.h[None], True
    h = np.asarray(h, dtype=complex)
    if h.ndim == 2:
        return h[None], True
    return h, False


@dataclass(frozen=True, eq=False)
class Geometry:
    """Nulling weights and the resulting projections for a batch of channels.

    ``weights[b, :, i]`` is the unit-norm weight of step ``i + 1``;
    ``cross[b, i, j] = w_i^H h_j``, zero for ``j > i`` and equal to the real
    positive ``norm(P_i h_i)`` on the diagonal.
    """

    weights: np.ndarray
    cross: np.ndarray

    @property
    def gains(self) -> np.ndarray:
        """``norm(P_i h_i)^2``: step SNR per unit power and unit noise."""
        return np.abs(np.diagonal(self.cross, axis1=-2, axis2=-1)) ** 2


def channel_geometry(h) -> Geometry:
    """QR of the column-reversed channel gives all nulling vectors at once.

    Column ``k`` of ``Q`` is ``h_{m-k}`` orthogonalized against the columns
    detected after it, which is exactly ``P_i h_i`` up to scale.
    """
    hb, _ = _as_channels(h)
    q, r = np.linalg.qr(hb[..., ::-1])
    diag = np.diagonal(r, axis1=-2, axis2=-1)[..., ::-1]
    if not np.all(_rank_ok_screened(hb, diag)):
        raise ModelError("channel matrix is rank deficient")
    phase = diag / np.abs(diag)
    w = q[..., ::-1] * phase[..., None, :]
    cross = np.conj(np.swapaxes(w, -1, -2)) @ hb
    m = hb.shape[-1]
    cross = np.where(np.triu(np.ones((m, m), dtype=bool), 1), 0.0, cross)
    return Geometry(w, cross)


def nulling_weights(h, i: int) -> np.ndarray:
    """Unit-norm weight of step ``i`` (1-based): orthogonal to ``h_{i+1..m}``, ``w^H h_i > 0``."""
    hb, single = _as_channels(h)
    m = hb.shape[-1]
    if not 1 <= i <= m:
        raise ModelError(f"step index must be in 1..{m}, got {i}")
    w = channel_geometry(hb).weights[..., i - 1]
    return w[0] if single else w


def step_snrs(h, alloc, sigma0: float) -> np.ndarray:
    """Post-nulling SNR ``alpha_i norm(P_i h_i)^2 / sigma0^2`` of every step."""
    hb, single = _as_channels(h)
    g = channel_geometry(hb).gains * np.asarray(_alpha_of(alloc), dtype=float) / sigma0**2
    return g[0] if single else g


def _alpha_of(alloc):
    if isinstance(alloc, PowerAllocation):
        return alloc.as_array()
    return np.asarray(alloc, dtype=float)


# --------------------------------------------------------------- detection


@dataclass(frozen=True, eq=False)
class DetectionTrace:
    sent: np.ndarray
    detected: np.ndarray
    weights: np.ndarray
    statistics: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        """``detected - sent``: entries in ``{0, +2, -2}``."""
        return self.detected - self.sent


def _decide(stat: np.ndarray) -> np.ndarray:
    return np.where(stat.real < 0, -1.0, 1.0)


def detect(h, alloc: AllocationLike, s, noise, *, genie: bool = False) -> DetectionTrace:
    """Unordered zero-forcing SIC on one received vector ``H diag(sqrt(alpha)) s + noise``.

    With ``genie=True`` the true symbols are cancelled instead of the decisions.
    """
    hb, _ = _as_channels(h)
    hm = hb[0]
    m = hm.shape[1]
    alpha = as_alpha(alloc, m)
    s = np.asarray(s, dtype=float)
    if s.shape != (m,) or not np.all(np.abs(s) == 1):
        raise ModelError("symbols must be a length-m vector of +-1")
    geo = channel_geometry(hm)
    w = geo.weights[0]
    amp = hm * np.sqrt(alpha)
    r = amp @ s + np.asarray(noise, dtype=complex)
    s_hat = np.empty(m)
    stats = np.empty(m, dtype=complex)
    for i in range(m):
        known = s[:i] if genie else s_hat[:i]
        residual = r - amp[:, :i] @ known
        stats[i] = np.vdot(w[:, i], residual)
        s_hat[i] = _decide(stats[i])
    return DetectionTrace(s, s_hat, w, stats)


def _detect_batch(geo: Geometry, alpha, s, noise, genie: bool) -> np.ndarray:
    """Vectorized form of :func:`detect`; returns decisions of shape ``(B, m)``."""
    sa = np.sqrt(alpha)
    y = np.einsum("bni,bn->bi", np.conj(geo.weights), noise)
    a = geo.cross * sa[..., None, :]
    y = y + np.einsum("bij,bj->bi", a, s)
    m = s.shape[-1]
    s_hat = np.empty_like(s)
    for i in range(m):
        known = s[:, :i] if genie else s_hat[:, :i]
        stat = y[:, i] - np.einsum("bj,bj->b", a[:, i, :i], known)
        s_hat[:, i] = _decide(stat)
    return s_hat


# ----------------------------------------------------- per-channel rates


def _broadcast_alpha(alpha, batch: int, m: int) -> np.ndarray:
    alpha = np.asarray(_alpha_of(alpha), dtype=float)
    if alpha.shape[-1] != m:
        raise ModelError(f"allocation has {alpha.shape[-1]} entries, channel has m={m}")
    return np.broadcast_to(alpha, (batch, m))


def _bler_from_gains(gains, alpha, sigma0):
    snr = gains * alpha / sigma0**2
    return -np.expm1(np.sum(log_ndtr(np.sqrt(2.0 * snr)), axis=-1))


def instantaneous_bler(h, alloc, sigma0: float):
    """Block error probability of one channel: ``1 - prod(1 - Q(sqrt(2 gamma_i)))``."""
    hb, single = _as_channels(h)
    geo = channel_geometry(hb)
    alpha = _broadcast_alpha(alloc, hb.shape[0], hb.shape[-1])
    p = _bler_from_gains(geo.gains, alpha, sigma0)
    return float(p[0]) if single else p


def _signed_patterns(k: int) -> np.ndarray:
    """All signed error vectors of length ``k``; the last coordinate varies fastest."""
    return np.array(list(itertools.product((0.0, -2.0, 2.0), repeat=k)), dtype=float).reshape(3**k, k)


def _tber_from_geometry(cross, alpha, sigma0, fast: bool = False):
    """Exact TBER for a batch given ``cross = W^H H`` and allocations ``(B, m)``.

    The decision noise of different steps is independent because the weights
    are orthonormal, so the signed error vector is a Markov chain over steps
    and its distribution can be propagated exactly.
    """
    batch, m = alpha.shape
    if m > MAX_INSTANT_TBER_STREAMS:
        raise ModelError(f"signed error enumeration limited to m <= {MAX_INSTANT_TBER_STREAMS}, got {m}")
    scale = sigma0 / math.sqrt(2.0)
    sa = np.sqrt(alpha)
    amp = (cross * sa[:, None, :]).real
    prob = np.ones((batch, 1))
    ber_sum = np.zeros(batch)
    for i in range(m):
        patterns = _signed_patterns(i)
        a = amp[:, i, i][:, None]
        d = patterns @ amp[:, i, :i].T if i else np.zeros((1, batch))
        d = d.T
        q_minus = q_function((a - d) / scale)
        q_plus = q_function((a + d) / scale)
        if fast:
            # Keep the dominant term only; with no interference both terms are equal and both stay.
            q_minus, q_plus = np.where(d < 0, 0.0, q_minus), np.where(d > 0, 0.0, q_plus)
        p_neg = 0.5 * q_minus
        p_pos = 0.5 * q_plus
        ber_sum += np.sum(prob * (p_neg + p_pos), axis=-1)
        if i < m - 1:
            # Appending e_i as the fastest-varying coordinate keeps the product order.
            prob = np.stack([prob * (1.0 - p_neg - p_pos), prob * p_neg, prob * p_pos], axis=-1)
            prob = prob.reshape(batch, -1)
    return ber_sum / m


def instantaneous_tber(h, alloc, sigma0: float, *, fast: bool = False):
    """Total bit error rate of one channel including error propagation.

    ``fast=True`` keeps only the dominant half of every conditional error
    term (the one with the smaller Q argument).
    """
    hb, single = _as_channels(h)
    geo = channel_geometry(hb)
    alpha = _broadcast_alpha(alloc, hb.shape[0], hb.shape[-1])
    p = _tber_from_geometry(geo.cross, alpha, sigma0, fast=fast)
    return float(p[0]) if single else p


# -------------------------------------------- per-channel optimization


def _bler_log_rate(gains, gamma0):
    def log_rate(alpha):
        snr = np.maximum(gains * alpha * gamma0, 1e-300)
        return (
            np.log(gains * gamma0)
            - snr
            - 0.5 * np.log(np.pi * snr)
            - math.log(2.0)
            - log_ndtr(np.sqrt(2.0 * snr))
        )

    return log_rate


def _optimize_bler(geo: Geometry, config: SystemConfig):
    gains = geo.gains
    log_rate = _bler_log_rate(gains, config.gamma0)
    alpha, level = solve_separable(log_rate, gains.shape, float(config.m))
    sigma0 = math.sqrt(config.sigma0_sq)
    p = _bler_from_gains(gains, alpha, sigma0)
    lam = np.exp(level) * (1.0 - p)
    residual = np.max(np.abs(np.exp(log_rate(alpha) - level[:, None]) - 1.0), axis=-1)
    return alpha, p, lam, residual


def _tber_starts(config: SystemConfig):
    m = config.m
    starts = [np.ones(m)]
    try:
        starts.append(closed_form_allocation(config, Criterion.TBER).alpha)
    except ModelError:
        pass
    skew = np.full(m, 0.01)
    skew[0] = m - 0.01 * (m - 1)
    starts.append(skew)
    return starts


def _optimize_tber(geo: Geometry, config: SystemConfig, tol: float = 1e-6):
    sigma0 = math.sqrt(config.sigma0_sq)
    batch, m = geo.gains.shape

    def fun(x, rows):
        return _tber_from_geometry(geo.cross[rows], x, sigma0)

    best = None
    for start in _tber_starts(config):
        res = minimize_on_simplex(fun, np.tile(start, (batch, 1)), float(m), tol=tol)
        if best is None:
            best = res
            continue
        better = res.fun < best.fun
        for name in ("x", "fun", "grad", "multiplier", "residual"):
            getattr(best, name)[better] = getattr(res, name)[better]
    return best.x, best.fun, best.multiplier, best.residual


def optimize_batch(geo: Geometry, config: SystemConfig, criterion: Criterion, tol: float = 1e-6):
    """Per-channel optimum for a batch: ``(alpha, objective, lam, kkt_residual)``."""
    config.require_bpsk("instantaneous optimization")
    if config.m == 1:
        b = geo.gains.shape[0]
        alpha = np.ones((b, 1))
        sigma0 = math.sqrt(config.sigma0_sq)
        p = (
            _bler_from_gains(geo.gains, alpha, sigma0)
            if Criterion(criterion) is Criterion.BLER
            else _tber_from_geometry(geo.cross, alpha, sigma0)
        )
        return alpha, p, np.full(b, np.nan), np.zeros(b)
    if Criterion(criterion) is Criterion.BLER:
        return _optimize_bler(geo, config)
    return _optimize_tber(geo, config, tol=tol)


def instantaneous_allocation(
    h, config: SystemConfig, criterion: Criterion = Criterion.BLER, *, tol: float = 1e-6
) -> AllocationSolution:
    """Power allocation optimized for a single known channel matrix.

    BLER is convex with separable stationarity conditions and is solved
    exactly. TBER may have several local optima; the best of three starting
    points is returned.
    """
    hb, _ = _as_channels(h)
    if hb.shape[0] != 1 or hb.shape[1:] != (config.n, config.m):
        raise ModelError(f"expected one {config.n} x {config.m} channel, got shape {hb.shape}")
    criterion = Criterion(criterion)
    geo = channel_geometry(hb)
    alpha, p, lam, residual = optimize_batch(geo, config, criterion, tol=tol)
    limit = tol if criterion is Criterion.BLER else 1e3 * tol
    if residual[0] > limit:
        raise ConvergenceError("per-channel optimizer did not converge", float(residual[0]))
    return AllocationSolution(
        PowerAllocation(alpha[0]),
        float(lam[0]),
        criterion,
        AllocMethod.NUMERICAL,
        float(p[0]),
        kkt_residual=float(residual[0]),
        notes="instantaneous",
    )


# ------------------------------------------------------------ Monte Carlo


class Strategy(str, enum.Enum):
    UNIFORM = "uniform"
    AVG_CLOSED_FORM = "avg-closed-form"
    AVG_NUMERICAL = "avg-numerical"
    INSTANTANEOUS = "instantaneous"
    PRESET = "preset"

    @classmethod
    def parse(cls, value) -> "Strategy":
        aliases = {"avg-closed": cls.AVG_CLOSED_FORM, "avg-numeric": cls.AVG_NUMERICAL, "instant": cls.INSTANTANEOUS}
        if isinstance(value, cls):
            return value
        if value in aliases:
            return aliases[value]
        try:
            return cls(value)
        except ValueError:
            raise ModelError(f"unknown strategy {value!r}") from None


@dataclass(frozen=True)
class McEstimate:
    """Event-rate estimate with a 95% normal-approximation half-width.

    For bit error rates ``trials`` counts bits and the half-width uses the
    per-block-vector variance, since errors inside one vector are correlated.
    """

    trials: int
    events: int
    estimate: float
    half_width: float
    seed: int

    @classmethod
    def binomial(cls, trials: int, events: int, seed: int) -> "McEstimate":
        p = events / trials
        return cls(trials, events, p, _Z95 * math.sqrt(p * (1.0 - p) / trials), seed)

    def contains(self, value: float, k: float = 1.0) -> bool:
        return abs(self.estimate - value) <= k * self.half_width


@dataclass(frozen=True)
class RatesEstimate:
    bler: McEstimate
    tber: McEstimate
    step_ber: Tuple[McEstimate, ...]
    strategy: Strategy
    genie: bool = False
    alpha: Optional[Tuple[float, ...]] = field(default=None, compare=False)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))


def _block_counts(args):
    config, strategy, alpha, seed, block, size, genie, criterion = args
    rng = block_rng(seed, block)
    m, n = config.m, config.n
    h = sample_channels(rng, n, m, size)
    s = np.where(rng.random((size, m)) < 0.5, -1.0, 1.0)
    sigma = math.sqrt(config.sigma0_sq / 2.0)
    noise = sigma * (rng.standard_normal((size, n)) + 1j * rng.standard_normal((size, n)))
    geo = channel_geometry(h)
    if strategy is Strategy.INSTANTANEOUS:
        a = optimize_batch(geo, config, criterion)[0]
    else:
        a = np.broadcast_to(alpha, (size, m))
    s_hat = _detect_batch(geo, a, s, noise, genie)
    wrong = s_hat != s
    per_vec = wrong.sum(axis=-1)
    return (
        int(np.count_nonzero(per_vec)),
        int(per_vec.sum()),
        int(np.sum(per_vec.astype(np.int64) ** 2)),
        wrong.sum(axis=0).astype(np.int64),
    )


def strategy_alpha(config: SystemConfig, strategy: Strategy, criterion: Criterion, preset=None):
    if strategy is Strategy.UNIFORM:
        return uniform_allocation(config.m).as_array()
    if strategy is Strategy.PRESET:
        if preset is None:
            raise ModelError("preset strategy needs a preset allocation")
        return as_alpha(preset, config.m)
    if strategy is Strategy.AVG_CLOSED_FORM:
        return closed_form_allocation(config, criterion).alpha
    if strategy is Strategy.AVG_NUMERICAL:
        return numerical_allocation(config, criterion).alpha
    return None


def monte_carlo_rates(
    config: SystemConfig,
    strategy="uniform",
    trials: int = 100_000,
    seed: int = 42,
    *,
    preset: AllocationLike = None,
    criterion: Criterion = Criterion.BLER,
    genie: bool = False,
    workers: int = 1,
    block_size: int = BLOCK_SIZE,
) -> RatesEstimate:
    """Simulate ``trials`` transmitted vectors and count block and bit errors.

    ``criterion`` selects what the optimizing strategies minimize. The result
    is a pure function of the arguments other than ``workers``.
    """
    config.require_bpsk("monte_carlo_rates")
    strategy = Strategy.parse(strategy)
    if int(trials) != trials or trials < 1:
        raise ModelError(f"trials must be a positive integer, got {trials}")
    if strategy is not Strategy.PRESET and preset is not None:
        raise ModelError("preset allocation given for a non-preset strategy")
    criterion = Criterion(criterion)
    alpha = strategy_alpha(config, strategy, criterion, preset)
    trials = int(trials)
    n_blocks = -(-trials // block_size)
    jobs = [
        (config, strategy, alpha, seed, b, min(block_size, trials - b * block_size), genie, criterion)
        for b in range(n_blocks)
    ]
    if workers > 1 and n_blocks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(_block_counts, jobs))
    else:
        counts = [_block_counts(j) for j in jobs]
    blocks = sum(c[0] for c in counts)
    bits = sum(c[1] for c in counts)
    bits_sq = sum(c[2] for c in counts)
    per_step = np.sum([c[3] for c in counts], axis=0)
    m = config.m
    mean_vec = bits / trials
    var_vec = max(bits_sq / trials - mean_vec**2, 0.0) * trials / max(trials - 1, 1)
    tber = McEstimate(trials * m, bits, bits / (trials * m), _Z95 * math.sqrt(var_vec / trials) / m, seed)
    steps = tuple(McEstimate.binomial(trials, int(k), seed) for k in per_step)
    return RatesEstimate(
        McEstimate.binomial(trials, blocks, seed),
        tber,
        steps,
        strategy,
        genie,
        None if alpha is None else tuple(float(a) for a in alpha),
    )


@dataclass(frozen=True)
class ChannelAverage:
    """Sample mean of a per-channel quantity with a 95% half-width."""

    mean: float
    half_width: float
    trials: int

    @classmethod
    def of(cls, values: np.ndarray) -> "ChannelAverage":
        values = np.asarray(values, dtype=float)
        k = values.size
        sd = float(values.std(ddof=1)) if k > 1 else float("inf")
        return cls(float(values.mean()), _Z95 * sd / math.sqrt(k), k)


def sample_geometries(config: SystemConfig, trials: int, seed: int, block_size: int = BLOCK_SIZE):
    """Channel geometries drawn with the same block substreams as the link simulation."""
    out = []
    for b in range(-(-trials // block_size)):
        size = min(block_size, trials - b * block_size)
        out.append(channel_geometry(sample_channels(block_rng(seed, b), config.n, config.m, size)))
    return Geometry(np.concatenate([g.weights for g in out]), np.concatenate([g.cross for g in out]))


def per_channel_rates(geo: Geometry, alpha, sigma0: float, criterion: Criterion) -> np.ndarray:
    batch, m = geo.gains.shape
    alpha = _broadcast_alpha(alpha, batch, m)
    if Criterion(criterion) is Criterion.BLER:
        return _bler_from_gains(geo.gains, alpha, sigma0)
    return _tber_from_geometry(geo.cross, alpha, sigma0)


__all__ = [
    "BLOCK_SIZE",
    "ChannelAverage",
    "ChannelRealization",
    "DetectionTrace",
    "Geometry",
    "McEstimate",
    "RatesEstimate",
    "Strategy",
    "block_rng",
    "channel_geometry",
    "detect",
    "instantaneous_allocation",
    "instantaneous_bler",
    "instantaneous_tber",
    "monte_carlo_rates",
    "nulling_weights",
    "optimize_batch",
    "per_channel_rates",
    "q_function",
    "sample_channel",
    "sample_channels",
    "sample_geometries",
    "step_snrs",
    "strategy_alpha",
]
