"""Sensitivity of optimized error rates to power perturbations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .allocator import AllocationSolution, Criterion, numerical_allocation, objective
from .core import AllocationLike, InvalidAllocation, ModelError, SystemConfig, as_alpha

#: Relative perturbation sizes probed by default.
PERTURBATIONS = (1e-4, 1e-2, 0.1, 0.3, 0.5)

TOTAL = "total"
Parameter = Union[str, int]


def _parameter(param: Parameter, m: int):
    if param == TOTAL:
        return TOTAL
    if isinstance(param, (int, np.integer)) and 1 <= param <= m:
        return int(param)
    raise ModelError(f"parameter must be 'total' or a stream index in 1..{m}, got {param!r}")


def _base_value(sol: AllocationSolution, param) -> float:
    return float(sol.alloc.m) if param == TOTAL else float(sol.alpha[param - 1])


def local_robustness(
    config: SystemConfig,
    criterion: Criterion = Criterion.BLER,
    parameter: Parameter = TOTAL,
    solution: Optional[AllocationSolution] = None,
) -> float:
    """``lam * u / P`` at the optimum, ``u`` being the total power or ``alpha_i``."""
    param = _parameter(parameter, config.m)
    sol = solution or numerical_allocation(config, criterion)
    if not sol.objective > 0:
        raise ModelError("optimized error rate is zero; relative sensitivity undefined")
    return sol.lam * _base_value(sol, param) / sol.objective


def perturbed_rate(config: SystemConfig, criterion: Criterion, parameter: Parameter, delta_u: float,
                   solution: Optional[AllocationSolution] = None) -> float:
    """Error rate after moving ``parameter`` by ``delta_u``.

    The total power is re-optimized under the new budget. A single
    coefficient is moved with all others held fixed, so the budget changes.
    """
    param = _parameter(parameter, config.m)
    sol = solution or numerical_allocation(config, criterion)
    if param == TOTAL:
        budget = config.m + delta_u
        if budget <= 0:
            raise InvalidAllocation(f"total power {budget:.6g} is not positive")
        return numerical_allocation(config.with_gamma0(config.gamma0 * budget / config.m), criterion).objective
    alpha = sol.alpha.copy()
    alpha[param - 1] += delta_u
    if alpha[param - 1] < 0:
        raise InvalidAllocation(f"perturbation drives alpha[{param}] to {alpha[param - 1]:.6g}")
    return float(objective(config, alpha, criterion))


def finite_robustness(
    config: SystemConfig,
    criterion: Criterion = Criterion.BLER,
    parameter: Parameter = TOTAL,
    delta_u: float = 1e-4,
    solution: Optional[AllocationSolution] = None,
) -> float:
    """``|dP / P| / |du / u|`` for a finite perturbation ``delta_u``."""
    if delta_u == 0:
        raise ModelError("perturbation must be non-zero")
    param = _parameter(parameter, config.m)
    sol = solution or numerical_allocation(config, criterion)
    u = _base_value(sol, param)
    p1 = perturbed_rate(config, criterion, param, delta_u, sol)
    return abs((p1 - sol.objective) / sol.objective) / abs(delta_u / u)


@dataclass(frozen=True)
class BoundCheck:
    """Error-rate change versus the supporting-line bound ``-lam * du``."""

    delta_u: float
    delta_p: float
    bound: float
    holds: bool

    @property
    def slack(self) -> float:
        return self.delta_p - self.bound


@dataclass(frozen=True)
class RobustnessReport:
    parameter: Parameter
    u: float
    lam: float
    objective: float
    delta_prime: float
    perturbations: Tuple[float, ...]
    delta: Tuple[float, ...]
    bounds: Tuple[BoundCheck, ...] = ()


def global_bound_check(
    config: SystemConfig,
    criterion: Criterion = Criterion.BLER,
    rel_deltas: Sequence[float] = (-0.5, -0.3, -0.1, 0.0, 0.1, 0.3, 0.5),
    *,
    rtol: float = 1e-9,
) -> Tuple[BoundCheck, ...]:
    """Check ``P(u + du) - P(u) >= -lam du`` for total-power changes ``du = r m``.

    For a gain in power the rate can fall by at most ``lam du``; for a loss
    it rises by at least ``lam |du|``. Both are the same convexity bound.
    """
    sol = numerical_allocation(config, criterion)
    out = []
    for r in rel_deltas:
        du = float(r) * config.m
        p1 = sol.objective if du == 0 else perturbed_rate(config, criterion, TOTAL, du, sol)
        dp = p1 - sol.objective
        bound = -sol.lam * du
        out.append(BoundCheck(du, dp, bound, bool(dp >= bound - rtol * sol.objective)))
    return tuple(out)


def robustness_report(
    config: SystemConfig,
    criterion: Criterion = Criterion.BLER,
    parameter: Parameter = TOTAL,
    rel_perturbations: Sequence[float] = PERTURBATIONS,
) -> RobustnessReport:
    param = _parameter(parameter, config.m)
    sol = numerical_allocation(config, criterion)
    u = _base_value(sol, param)
    deltas = tuple(finite_robustness(config, criterion, param, r * u, sol) for r in rel_perturbations)
    bounds = ()
    if param == TOTAL and Criterion(criterion) is Criterion.BLER:
        bounds = global_bound_check(config, criterion, [s * r for r in rel_perturbations for s in (-1, 1)])
    return RobustnessReport(
        param, u, sol.lam, sol.objective, local_robustness(config, criterion, param, sol),
        tuple(float(r) for r in rel_perturbations), deltas, bounds,
    )


def rate_vs_alpha1(config: SystemConfig, alpha1: Sequence[float], criterion: Criterion = Criterion.TBER) -> np.ndarray:
    """Error rate as the first coefficient sweeps, the rest sharing ``m - alpha1`` equally."""
    a1 = np.asarray(alpha1, dtype=float)
    m = config.m
    if np.any((a1 < 0) | (a1 > m)):
        raise InvalidAllocation(f"alpha_1 must lie in [0, {m}]")
    if m == 1:
        return np.full(a1.shape, float(objective(config, np.ones(1), criterion)))
    rest = np.repeat(((m - a1) / (m - 1))[:, None], m - 1, axis=1)
    return np.asarray(objective(config, np.column_stack([a1, rest]), criterion))


@dataclass(frozen=True)
class PresetPoint:
    gamma0: float
    tber_preset: float
    tber_optimized: float
    bler_preset: float
    bler_optimized: float

    @property
    def tber_ratio(self) -> float:
        return self.tber_preset / self.tber_optimized

    @property
    def bler_ratio(self) -> float:
        return self.bler_preset / self.bler_optimized


def preset_allocation_eval(
    m: int, n: int, gammas: Sequence[float], preset: AllocationLike
) -> Tuple[PresetPoint, ...]:
    """One fixed allocation against the per-SNR optimum of each criterion."""
    alpha = as_alpha(preset, m)
    points = []
    for g in gammas:
        cfg = SystemConfig(m, n, float(g))
        points.append(
            PresetPoint(
                float(g),
                float(objective(cfg, alpha, Criterion.TBER)),
                numerical_allocation(cfg, Criterion.TBER).objective,
                float(objective(cfg, alpha, Criterion.BLER)),
                numerical_allocation(cfg, Criterion.BLER).objective,
            )
        )
    return tuple(points)


__all__ = [
    "BoundCheck",
    "PERTURBATIONS",
    "PresetPoint",
    "RobustnessReport",
    "TOTAL",
    "finite_robustness",
    "global_bound_check",
    "local_robustness",
    "perturbed_rate",
    "preset_allocation_eval",
    "rate_vs_alpha1",
    "robustness_report",
]
