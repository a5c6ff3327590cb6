"""Experiment definitions producing long-format result rows."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .allocator import (
    Criterion,
    closed_form_allocation,
    lagrange_high_snr,
    numerical_allocation,
    objective,
)
from .core import ModelError, SystemConfig, db_to_linear, linear_to_db
from .gain import GainStrategy, gain_high_snr_approx, gain_limits, snr_gain
from .robustness import TOTAL, finite_robustness, local_robustness, preset_allocation_eval, rate_vs_alpha1
from .simulation import Strategy, monte_carlo_rates, strategy_alpha

EXPERIMENTS = (
    "alloc-sweep",
    "rates-sweep",
    "gain-sweep",
    "robustness",
    "preset",
    "fig1",
    "fig2",
    "fig3",
    "fig4",
    "fig5",
    "fig6",
)

DEFAULT_GRID = tuple(float(x) for x in np.arange(0.0, 35.0 + 1e-9, 2.5))
DEFAULT_TRIALS = 100_000
DEFAULT_SEED = 42
FIG3_SNR_DB = (10.0, 20.0, 30.0)
FIG4_PRESET = (2.0, 0.6, 0.4)

_CRIT = r"(bler|tber)"
_STRAT = r"(uniform|avg-closed-form|avg-numerical|instantaneous|preset)"

#: Every series label an experiment may emit matches exactly one of these.
SERIES_GRAMMAR = (
    rf"alpha[1-9][0-9]*:(closed-form|numerical):{_CRIT}",
    rf"lambda:(numerical|high-snr):{_CRIT}",
    rf"{_CRIT}:(analytic|mc):{_STRAT}",
    rf"gain:(average|instantaneous|high-snr-approx|low-snr-limit|high-snr-limit):{_CRIT}",
    rf"delta-prime:(total|alpha[1-9][0-9]*):{_CRIT}",
    rf"delta:total:{_CRIT}",
    rf"{_CRIT}:(preset|optimized|ratio)",
    r"tber-vs-alpha1@-?[0-9]+(\.[0-9]+)?dB",
)
_SERIES_RE = re.compile("|".join(f"(?:{p})" for p in SERIES_GRAMMAR))


def is_known_series(name: str) -> bool:
    return _SERIES_RE.fullmatch(name) is not None


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    series: str
    x: float
    y: float
    ci: Optional[float] = None

    def __post_init__(self):
        if not is_known_series(self.series):
            raise ValueError(f"series label {self.series!r} is not in the vocabulary")
        if not (np.isfinite(self.x) and np.isfinite(self.y)) or (self.ci is not None and not np.isfinite(self.ci)):
            raise ValueError(f"non-finite value in series {self.series!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    m: int = 2
    n: int = 2
    snr_db: Tuple[float, ...] = DEFAULT_GRID
    criterion: Criterion = Criterion.BLER
    strategy: Strategy = Strategy.UNIFORM
    preset: Optional[Tuple[float, ...]] = None
    trials: int = DEFAULT_TRIALS
    seed: int = DEFAULT_SEED
    out: Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ModelError(f"unknown experiment {self.experiment!r}")
        if self.m < 1:
            raise ModelError(f"m must be ≥ 1 (got {self.m})")
        if self.n < self.m:
            raise ModelError(f"n must be ≥ m (got m={self.m}, n={self.n})")
        if not self.snr_db:
            raise ModelError("SNR grid is empty")
        if any(b <= a for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise ModelError("SNR grid must be strictly increasing")
        if self.trials < 1:
            raise ModelError(f"trials must be ≥ 1 (got {self.trials})")
        if self.workers < 1:
            raise ModelError(f"workers must be ≥ 1 (got {self.workers})")
        if self.strategy is Strategy.PRESET and self.preset is None:
            raise ModelError("strategy 'preset' requires --preset")
        if self.preset is not None and len(self.preset) != self.m:
            raise ModelError(f"preset has {len(self.preset)} entries but m = {self.m}")

    def config(self, snr_db: float) -> SystemConfig:
        return SystemConfig.from_db(self.m, self.n, snr_db)


def parse_grid(text: str) -> Tuple[float, ...]:
    """``start:stop:step`` (stop included when on the grid) or a single value."""
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise ModelError(f"bad SNR grid {text!r}; expected start:stop:step or a single value") from None
    if len(values) == 1:
        return (values[0],)
    if len(values) != 3:
        raise ModelError(f"bad SNR grid {text!r}; expected start:stop:step or a single value")
    start, stop, step = values
    if step <= 0 or stop < start:
        raise ModelError(f"bad SNR grid {text!r}; need step > 0 and stop ≥ start")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return tuple(float(round(start + k * step, 12)) for k in range(count))


# ------------------------------------------------------------ experiments

Rows = List[ResultRow]


def _alloc_rows(exp: str, spec: ExperimentSpec, criteria: Sequence[Criterion]) -> Rows:
    rows = []
    for crit in criteria:
        for x in spec.snr_db:
            cfg = spec.config(x)
            num = numerical_allocation(cfg, crit)
            for i, a in enumerate(num.alpha, 1):
                rows.append(ResultRow(exp, f"alpha{i}:numerical:{crit.value}", x, float(a)))
            try:
                cf = closed_form_allocation(cfg, crit)
            except ModelError:
                cf = None
            if cf is not None and not cf.fallback:
                for i, a in enumerate(cf.alpha, 1):
                    rows.append(ResultRow(exp, f"alpha{i}:closed-form:{crit.value}", x, float(a)))
    return rows


def _lambda_rows(exp: str, spec: ExperimentSpec, crit: Criterion) -> Rows:
    rows = []
    for x in spec.snr_db:
        cfg = spec.config(x)
        rows.append(ResultRow(exp, f"lambda:numerical:{crit.value}", x, numerical_allocation(cfg, crit).lam))
        rows.append(ResultRow(exp, f"lambda:high-snr:{crit.value}", x, lagrange_high_snr(cfg, crit)))
    return rows


def _analytic_rate(cfg: SystemConfig, alpha, crit: Criterion) -> float:
    return float(objective(cfg, np.asarray(alpha), crit))


def _rates_rows(exp: str, spec: ExperimentSpec, strategy: Strategy, crit: Criterion, *, mc: bool = True,
                analytic_series: bool = True, which=("bler", "tber")) -> Rows:
    rows = []
    for k, x in enumerate(spec.snr_db):
        cfg = spec.config(x)
        alpha = None
        if strategy is not Strategy.INSTANTANEOUS:
            try:
                alpha = strategy_alpha(cfg, strategy, crit, spec.preset)
            except ModelError:
                continue
        if analytic_series and alpha is not None:
            for name, c in (("bler", Criterion.BLER), ("tber", Criterion.TBER)):
                if name in which:
                    rows.append(ResultRow(exp, f"{name}:analytic:{strategy.value}", x, _analytic_rate(cfg, alpha, c)))
        if mc:
            est = monte_carlo_rates(
                cfg,
                strategy,
                spec.trials,
                spec.seed + k,
                preset=spec.preset if strategy is Strategy.PRESET else None,
                criterion=crit,
                workers=spec.workers,
            )
            for name, e in (("bler", est.bler), ("tber", est.tber)):
                if name in which:
                    rows.append(ResultRow(exp, f"{name}:mc:{strategy.value}", x, e.estimate, e.half_width))
    return rows


def _gain_rows(exp: str, spec: ExperimentSpec, crit: Criterion, *, instantaneous: bool) -> Rows:
    rows = []
    lim = gain_limits(spec.config(spec.snr_db[0]), crit)
    for k, x in enumerate(spec.snr_db):
        cfg = spec.config(x)
        rows.append(ResultRow(exp, f"gain:average:{crit.value}", x, snr_gain(cfg, crit).gain_db))
        rows.append(ResultRow(exp, f"gain:high-snr-approx:{crit.value}", x, float(linear_to_db(gain_high_snr_approx(cfg, crit)))))
        rows.append(ResultRow(exp, f"gain:low-snr-limit:{crit.value}", x, float(linear_to_db(lim.g0))))
        rows.append(ResultRow(exp, f"gain:high-snr-limit:{crit.value}", x, float(linear_to_db(lim.g_inf))))
        if instantaneous:
            g = snr_gain(cfg, crit, GainStrategy.INSTANTANEOUS, trials=spec.trials, seed=spec.seed + k)
            rows.append(ResultRow(exp, f"gain:instantaneous:{crit.value}", x, g.gain_db, g.half_width_db))
    return rows


def _robustness_rows(exp: str, spec: ExperimentSpec, crit: Criterion) -> Rows:
    rows = []
    for x in spec.snr_db:
        cfg = spec.config(x)
        sol = numerical_allocation(cfg, crit)
        rows.append(ResultRow(exp, f"delta-prime:total:{crit.value}", x, local_robustness(cfg, crit, TOTAL, sol)))
        rows.append(ResultRow(exp, f"delta:total:{crit.value}", x, finite_robustness(cfg, crit, TOTAL, 1e-4 * spec.m, sol)))
        for i in range(1, spec.m + 1):
            rows.append(ResultRow(exp, f"delta-prime:alpha{i}:{crit.value}", x, local_robustness(cfg, crit, i, sol)))
        rows.append(ResultRow(exp, f"lambda:numerical:{crit.value}", x, sol.lam))
        rows.append(ResultRow(exp, f"lambda:high-snr:{crit.value}", x, lagrange_high_snr(cfg, crit)))
    return rows


def _preset_rows(exp: str, spec: ExperimentSpec, preset) -> Rows:
    rows = []
    points = preset_allocation_eval(spec.m, spec.n, db_to_linear(np.asarray(spec.snr_db)), preset)
    for x, p in zip(spec.snr_db, points):
        rows += [
            ResultRow(exp, "tber:preset", x, p.tber_preset),
            ResultRow(exp, "tber:optimized", x, p.tber_optimized),
            ResultRow(exp, "tber:ratio", x, p.tber_ratio),
            ResultRow(exp, "bler:preset", x, p.bler_preset),
            ResultRow(exp, "bler:optimized", x, p.bler_optimized),
            ResultRow(exp, "bler:ratio", x, p.bler_ratio),
        ]
    return rows


def _fig3_rows(exp: str, spec: ExperimentSpec) -> Rows:
    rows = []
    grid = np.linspace(0.0, float(spec.m), 81)[1:-1]
    for x in spec.snr_db:
        cfg = spec.config(x)
        for a1, y in zip(grid, rate_vs_alpha1(cfg, grid, Criterion.TBER)):
            rows.append(ResultRow(exp, f"tber-vs-alpha1@{x:g}dB", float(a1), float(y)))
    return rows


def _figure_spec(spec: ExperimentSpec, m: int, n: int, **kw) -> ExperimentSpec:
    return replace(spec, m=m, n=n, **kw)


def run_experiment(spec: ExperimentSpec) -> Rows:
    exp = spec.experiment
    crit = Criterion(spec.criterion)
    if exp == "alloc-sweep":
        return _alloc_rows(exp, spec, [crit]) + _lambda_rows(exp, spec, crit)
    if exp == "rates-sweep":
        return _rates_rows(exp, spec, spec.strategy, crit)
    if exp == "gain-sweep":
        return _gain_rows(exp, spec, crit, instantaneous=spec.strategy is Strategy.INSTANTANEOUS)
    if exp == "robustness":
        return _robustness_rows(exp, spec, crit)
    if exp == "preset":
        preset = spec.preset if spec.preset is not None else (FIG4_PRESET if spec.m == 3 else (1.0,) * spec.m)
        return _preset_rows(exp, spec, preset)
    if exp == "fig1":
        return _alloc_rows(exp, _figure_spec(spec, 3, 3), [Criterion.BLER, Criterion.TBER])
    if exp == "fig2":
        s = _figure_spec(spec, 3, 3)
        rows = []
        for strat in (Strategy.UNIFORM, Strategy.AVG_NUMERICAL, Strategy.AVG_CLOSED_FORM):
            rows += _rates_rows(exp, s, strat, Criterion.TBER, mc=False, which=("tber",))
        rows += _rates_rows(exp, s, Strategy.INSTANTANEOUS, Criterion.TBER, which=("tber",))
        return rows
    if exp == "fig3":
        grid = spec.snr_db if spec.snr_db != DEFAULT_GRID else FIG3_SNR_DB
        return _fig3_rows(exp, _figure_spec(spec, 2, 2, snr_db=grid))
    if exp == "fig4":
        return _preset_rows(exp, _figure_spec(spec, 3, 3, preset=None, strategy=Strategy.UNIFORM), FIG4_PRESET)
    if exp == "fig5":
        return _lambda_rows(exp, _figure_spec(spec, 3, 3), Criterion.BLER)
    if exp == "fig6":
        s = _figure_spec(spec, 2, 2)
        return _gain_rows(exp, s, Criterion.BLER, instantaneous=True) + _gain_rows(
            exp, s, Criterion.TBER, instantaneous=True
        )
    raise ModelError(f"unknown experiment {exp!r}")


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "series", "x", "y", "ci"])
    for r in rows:
        w.writerow([r.experiment, r.series, _fmt(r.x), _fmt(r.y), _fmt(r.ci)])
    return buf.getvalue()


def read_csv(path_or_text: str) -> List[ResultRow]:
    text = path_or_text
    if "\n" not in path_or_text:
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    return [
        ResultRow(r["experiment"], r["series"], float(r["x"]), float(r["y"]), float(r["ci"]) if r["ci"] else None)
        for r in reader
    ]


__all__ = [
    "DEFAULT_GRID",
    "DEFAULT_SEED",
    "DEFAULT_TRIALS",
    "EXPERIMENTS",
    "ExperimentSpec",
    "ResultRow",
    "SERIES_GRAMMAR",
    "is_known_series",
    "parse_grid",
    "read_csv",
    "rows_to_csv",
    "run_experiment",
]
