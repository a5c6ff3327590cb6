"""Batched solvers for power allocation on the scaled simplex.

Both solvers work on arrays whose last axis indexes transmitters and whose
leading axis indexes independent problems (channel realizations, SNR points),
so a single call can optimize thousands of channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

#: Open-set guard: coefficients never go below this value in the searches.
ALPHA_FLOOR = 1e-12

_MAX_ROOT_ITERS = 200


def root_decreasing(f, lo, hi, *, xtol=1e-14, ftol=0.0, max_iter=_MAX_ROOT_ITERS):
    """Vectorized Illinois root finder for functions decreasing on ``[lo, hi]``.

    Entries with ``f(lo) <= 0`` return ``lo`` and entries with ``f(hi) >= 0``
    return ``hi``, i.e. the root is clipped to the bracket.
    """
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    lo, hi = lo.copy(), hi.copy()
    f_lo, f_hi = f(lo), f(hi)
    at_lo = f_lo <= 0
    at_hi = f_hi >= 0
    x = np.where(at_lo, lo, np.where(at_hi, hi, 0.5 * (lo + hi)))
    done = at_lo | at_hi
    last = np.zeros(x.shape, dtype=np.int8)
    for _ in range(max_iter):
        if done.all():
            break
        with np.errstate(invalid="ignore", divide="ignore"):
            cand = hi - f_hi * (hi - lo) / (f_hi - f_lo)
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        x = np.where(done, x, cand)
        fx = f(x)
        pos = (fx > 0) & ~done
        neg = (fx < 0) & ~done
        # Illinois: halve the stale endpoint value when the same side moves twice.
        f_hi = np.where(pos & (last == 1), 0.5 * f_hi, f_hi)
        f_lo = np.where(neg & (last == -1), 0.5 * f_lo, f_lo)
        lo = np.where(pos, x, lo)
        f_lo = np.where(pos, fx, f_lo)
        hi = np.where(neg, x, hi)
        f_hi = np.where(neg, fx, f_hi)
        last = np.where(pos, 1, np.where(neg, -1, last)).astype(np.int8)
        done |= (fx == 0) | (np.abs(fx) <= ftol) | (hi - lo <= xtol * np.maximum(1.0, np.abs(x)))
    return x


def solve_separable(
    log_rate: Callable[[np.ndarray], np.ndarray],
    shape,
    total: float,
    *,
    lower: float = ALPHA_FLOOR,
):
    """Equalize separable marginal rates under ``sum(alpha) == total``.

    ``log_rate(alpha)[..., i]`` must depend only on ``alpha[..., i]`` and be
    strictly decreasing in it. For a trial level ``t`` every coordinate is
    solved from ``log_rate(alpha_i) == t``; the level is then adjusted until
    the coordinates sum to ``total``. Both searches are bracketed root finds.

    Returns ``(alpha, level)`` where ``level`` is the log of the common rate.
    """
    shape = tuple(shape)
    m = shape[-1]
    lo_a = np.full(shape, np.log(lower))
    hi_a = np.full(shape, np.log(total))

    def alloc_for(level):
        return np.exp(
            root_decreasing(lambda x: log_rate(np.exp(x)) - level[..., None], lo_a, hi_a, xtol=1e-15)
        )

    # Level high enough that every alpha_i <= total/m, and low enough that every alpha_i >= total.
    t_hi = np.max(log_rate(np.full(shape, total / m)), axis=-1) + 1e-9
    t_lo = np.min(log_rate(np.full(shape, total)), axis=-1) - 1e-9
    level = root_decreasing(
        lambda t: alloc_for(t).sum(axis=-1) / total - 1.0, t_lo, t_hi, xtol=1e-15, ftol=1e-14
    )
    alpha = alloc_for(level)
    alpha *= total / alpha.sum(axis=-1, keepdims=True)
    return alpha, level


def project_scaled(y, d, total, lower=ALPHA_FLOOR):
    """Project ``y`` onto ``{x >= lower, sum x == total}`` in the metric ``diag(d)``.

    The minimizer is ``max(lower, y - tau / d)`` for a scalar ``tau`` per row,
    found by bisection and then made exact from the resulting active set.
    """
    tau_lo = np.min(d * (y - total), axis=-1)
    tau_hi = np.max(d * (y - lower), axis=-1)
    for _ in range(200):
        tau = 0.5 * (tau_lo + tau_hi)
        s = np.maximum(lower, y - tau[..., None] / d).sum(axis=-1)
        over = s > total
        tau_lo = np.where(over, tau, tau_lo)
        tau_hi = np.where(over, tau_hi, tau)
        if np.all(tau_hi - tau_lo <= 1e-15 * np.maximum(np.abs(tau_lo), np.abs(tau_hi)) + 1e-300):
            break
    tau = 0.5 * (tau_lo + tau_hi)
    free = (y - tau[..., None] / d) > lower
    n_clip = np.sum(~free, axis=-1)
    inv_d = np.where(free, 1.0 / d, 0.0)
    denom = inv_d.sum(axis=-1)
    exact = (np.where(free, y, 0.0).sum(axis=-1) + n_clip * lower - total) / np.where(denom > 0, denom, 1.0)
    tau = np.where(denom > 0, exact, tau)
    x = np.maximum(lower, y - tau[..., None] / d)
    return x


def project_simplex(y, total, lower=ALPHA_FLOOR):
    y = np.asarray(y, dtype=float)
    return project_scaled(y, np.ones_like(y), total, lower)


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: np.ndarray
    grad: np.ndarray
    multiplier: np.ndarray
    residual: np.ndarray
    iterations: int


def kkt_residual(x, g, lower=ALPHA_FLOOR):
    """Common multiplier estimate and relative KKT violation.

    On the constraint ``sum x == total`` the optimum has ``g_i == -lam`` for
    every coordinate above the floor and ``g_i >= -lam`` on the floor.
    """
    free = x > lower * (1.0 + 1e-6)
    n_free = np.maximum(free.sum(axis=-1), 1)
    lam = -np.where(free, g, 0.0).sum(axis=-1) / n_free
    scale = np.maximum(np.abs(lam), 1e-300)
    viol_free = np.where(free, np.abs(g + lam[..., None]), 0.0)
    viol_bound = np.where(free, 0.0, np.maximum(0.0, -(g + lam[..., None])))
    res = np.max(np.maximum(viol_free, viol_bound), axis=-1) / scale
    return lam, res


def minimize_on_simplex(
    fun: Callable[[np.ndarray], np.ndarray],
    x0,
    total: float,
    *,
    lower: float = ALPHA_FLOOR,
    tol: float = 1e-6,
    max_iter: int = 200,
    step: float = None,
) -> SimplexResult:
    """Projected Newton descent with a finite-difference diagonal Hessian.

    ``fun(x, rows)`` maps a ``(k, m)`` array to ``(k,)`` objective values,
    where ``rows`` are the batch indices the ``k`` rows belong to. Each
    iteration takes central-difference gradients with step ``step`` (default
    ``1e-6 * total``, shrunk near zero so the stencil stays non-negative),
    scales them by the diagonal curvature, projects onto the simplex in that
    metric and backtracks until the Armijo condition holds. Rows stop once
    their relative KKT residual is below ``tol`` or no descent step remains
    above round-off.
    """
    x = project_simplex(np.atleast_2d(np.asarray(x0, dtype=float)), total, lower)
    B, m = x.shape
    h0 = 1e-6 * total if step is None else step
    active = np.ones(B, dtype=bool)
    all_rows = np.arange(B)
    f = fun(x, all_rows)
    it = 0
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        xa = x[idx]
        fa = f[idx]
        h = np.minimum(h0, 0.5 * xa)
        fp = np.empty_like(xa)
        fm = np.empty_like(xa)
        for i in range(m):
            e = np.zeros_like(xa)
            e[:, i] = h[:, i]
            fp[:, i] = fun(xa + e, idx)
            fm[:, i] = fun(xa - e, idx)
        ga = (fp - fm) / (2.0 * h)
        curv = (fp - 2.0 * fa[:, None] + fm) / h**2
        _, res = kkt_residual(xa, ga, lower)
        done = res < tol
        # Curvature floor: never step further than the whole budget along one axis.
        floor = np.max(np.abs(ga), axis=-1, keepdims=True) / total
        d = np.maximum(curv, np.maximum(floor, 1e-300))
        target = project_scaled(xa - ga / d, d, total, lower)
        p = target - xa
        slope = np.sum(ga * p, axis=-1)
        t = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)
        x_new = xa.copy()
        f_new = fa.copy()
        for _ in range(40):
            trial_rows = ~accepted & ~done
            if not trial_rows.any():
                break
            xt = xa[trial_rows] + t[trial_rows, None] * p[trial_rows]
            ft = fun(xt, idx[trial_rows])
            ok = ft <= fa[trial_rows] + 1e-4 * t[trial_rows] * slope[trial_rows]
            ok &= ft < fa[trial_rows]
            rows = np.flatnonzero(trial_rows)
            x_new[rows[ok]] = xt[ok]
            f_new[rows[ok]] = ft[ok]
            accepted[rows[ok]] = True
            t[rows[~ok]] *= 0.5
        stalled = ~accepted & ~done
        x[idx] = x_new
        f[idx] = f_new
        active[idx[done | stalled]] = False
        if not active.any():
            break
    x *= total / x.sum(axis=-1, keepdims=True)
    g = _fd_gradient(fun, x, h0, all_rows)
    lam, res = kkt_residual(x, g, lower)
    return SimplexResult(x, fun(x, all_rows), g, lam, res, it)


def _fd_gradient(fun, x, h0, rows):
    h = np.minimum(h0, 0.5 * x)
    g = np.empty_like(x)
    for i in range(x.shape[-1]):
        e = np.zeros_like(x)
        e[:, i] = h[:, i]
        g[:, i] = (fun(x + e, rows) - fun(x - e, rows)) / (2.0 * h[:, i])
    return g
