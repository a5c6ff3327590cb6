"""Command-line entry point: ``vblast-power <command> [flags]``."""

from __future__ import annotations

import argparse
import sys
from typing import Dict, List, Optional

from .allocator import Criterion
from .core import ConvergenceError, ModelError, validate_allocation
from .experiments import (
    DEFAULT_SEED,
    DEFAULT_TRIALS,
    ExperimentSpec,
    parse_grid,
    rows_to_csv,
    run_experiment,
)
from .simulation import Strategy

EXIT_OK, EXIT_SPEC, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

COMMANDS = {
    "alloc": "alloc-sweep",
    "rates": "rates-sweep",
    "gain": "gain-sweep",
    "robustness": "robustness",
    "preset": "preset",
}
FLAG_KEYS = ("m", "n", "snr-db", "criterion", "strategy", "preset", "trials", "seed", "out", "workers")
DEFAULTS = {
    "m": "2",
    "n": "2",
    "snr-db": "0:35:2.5",
    "criterion": "bler",
    "strategy": "uniform",
    "trials": str(DEFAULT_TRIALS),
    "seed": str(DEFAULT_SEED),
    "workers": "1",
}


class SpecError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise SpecError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", help="transmit antennas (default 2)")
    p.add_argument("--n", help="receive antennas, n ≥ m (default 2)")
    p.add_argument("--snr-db", dest="snr_db", help="start:stop:step or a single value, in dB (default 0:35:2.5)")
    p.add_argument("--criterion", help="bler or tber (default bler)")
    p.add_argument("--strategy", help="uniform|avg-closed|avg-numeric|instant|preset (default uniform)")
    p.add_argument("--preset", help="comma-separated power coefficients summing to m")
    p.add_argument("--trials", help=f"Monte Carlo trials (default {DEFAULT_TRIALS})")
    p.add_argument("--seed", help=f"master seed (default {DEFAULT_SEED})")
    p.add_argument("--out", help="output CSV path (default stdout)")
    p.add_argument("--workers", help="worker processes for Monte Carlo (default 1)")
    p.add_argument("--config", help="flat 'key = value' file; keys are long flag names")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vblast-power", description="Power allocation experiments for unordered V-BLAST.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        _add_common(sub.add_parser(name))
    fig = sub.add_parser("fig", help="run one of the six figure pipelines (1-6)")
    fig.add_argument("number", choices=[str(k) for k in range(1, 7)])
    _add_common(fig)
    return parser


def read_config(path: str) -> Dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SpecError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("_", "-")
            if key not in FLAG_KEYS:
                raise SpecError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    return values


def _int(name: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise SpecError(f"--{name} expects an integer, got {text!r}") from None


def parse_spec(argv: Optional[List[str]] = None) -> ExperimentSpec:
    """Flags override config-file values, which override the defaults."""
    args = build_parser().parse_args(argv)
    merged = dict(DEFAULTS)
    if args.config:
        try:
            merged.update(read_config(args.config))
        except OSError as exc:
            raise SpecError(f"cannot read config file: {exc}") from None
    for key in FLAG_KEYS:
        v = getattr(args, key.replace("-", "_"))
        if v is not None:
            merged[key] = v

    experiment = COMMANDS.get(args.command) or f"fig{args.number}"
    try:
        criterion = Criterion(merged["criterion"])
    except ValueError:
        raise SpecError(f"--criterion must be bler or tber, got {merged['criterion']!r}") from None
    try:
        strategy = Strategy.parse(merged["strategy"])
    except ModelError as exc:
        raise SpecError(f"--strategy: {exc}") from None
    preset = None
    if merged.get("preset"):
        try:
            preset = tuple(float(v) for v in merged["preset"].split(","))
        except ValueError:
            raise SpecError(f"--preset expects comma-separated numbers, got {merged['preset']!r}") from None
        if strategy is Strategy.UNIFORM and experiment == "rates-sweep":
            strategy = Strategy.PRESET
    try:
        grid = parse_grid(merged["snr-db"])
        spec = ExperimentSpec(
            experiment,
            m=_int("m", merged["m"]),
            n=_int("n", merged["n"]),
            snr_db=grid,
            criterion=criterion,
            strategy=strategy,
            preset=preset,
            trials=_int("trials", merged["trials"]),
            seed=_int("seed", merged["seed"]),
            out=merged.get("out"),
            workers=_int("workers", merged["workers"]),
        )
    except ModelError as exc:
        raise SpecError(str(exc)) from None
    if preset is not None:
        problem = validate_allocation(preset, spec.m)
        if problem:
            raise SpecError(f"--preset: {problem}")
    return spec


def main(argv: Optional[List[str]] = None) -> int:
    try:
        spec = parse_spec(argv)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    try:
        text = rows_to_csv(run_experiment(spec))
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    if spec.out is None:
        sys.stdout.write(text)
        return EXIT_OK
    try:
        with open(spec.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
