"""Command-line front end: compute, verify, compare, demo.

Exit status is 0 when every check passes (or every bound row is sound), 1 when
something fails, and 2 for an invalid configuration. Output is assembled in
memory and written once at the end, so an invalid run leaves no file behind.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import bounds as B
from .empirical import ZooEntry, compare, default_t_grid, zoo, zoo_entry, zoo_names
from .identities import run_suite, to_jsonl
from .space import EnumerationLimitError, ProductSpace, TabulatedFunction
from .thermo import ThermalState, free_energy, thermal_expectation, thermal_variance


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    space_path: Optional[str] = None
    function: Optional[str] = None
    values_path: Optional[str] = None
    beta: float = 1.0
    t_grid: Optional[list[float]] = None
    seed: int = 42
    trials: int = 20
    samples: int = 0
    output: Optional[str] = None
    format: Optional[str] = None

    def validate(self) -> None:
        if self.subcommand not in ("compute", "verify", "compare", "demo"):
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.format not in (None, "csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.samples < 0:
            raise ConfigError("--samples must be >= 0")
        if self.subcommand == "verify" and self.trials < 1:
            raise ConfigError("--trials must be >= 1")
        if self.subcommand in ("compute", "compare"):
            if self.function and (self.space_path or self.values_path):
                raise ConfigError("give either a builtin function or --space with --values, not both")
            if not self.function and not (self.space_path and self.values_path):
                raise ConfigError("need --function NAME (or --entry) or both --space and --values")
            if self.function and self.function not in zoo_names():
                raise ConfigError(f"unknown builtin {self.function!r}; choose from {', '.join(zoo_names())}")
        if self.t_grid is not None:
            arr = np.asarray(self.t_grid)
            if arr.size == 0 or np.any(arr < 0) or np.any(np.diff(arr) <= 0):
                raise ConfigError("--t must be a non-empty increasing list of non-negative numbers")


def _fmt(x) -> str:
    return f"{x:.12g}"


def _round(x):
    if isinstance(x, float) and np.isfinite(x):
        return float(_fmt(x))
    return x


def _instance(cfg: RunConfig) -> ZooEntry:
    if cfg.function:
        return zoo_entry(cfg.function)
    try:
        space = ProductSpace.load(cfg.space_path)
        with open(cfg.values_path) as fh:
            obj = json.load(fh)
        if "builtin" in obj:
            entry = zoo_entry(obj["builtin"])
            if entry.space != space:
                raise ConfigError(f"builtin {obj['builtin']!r} lives on a different space")
            return entry
        f = TabulatedFunction.from_json(space, obj)
    except (OSError, ValueError, KeyError, EnumerationLimitError) as exc:
        raise ConfigError(str(exc)) from exc
    return ZooEntry("custom", space, f)


def _compute(cfg: RunConfig) -> tuple[str, int]:
    entry = _instance(cfg)
    f = entry.f
    ts = ThermalState(f, cfg.beta)
    h = entry.hypotheses
    vals = {
        "beta": cfg.beta,
        "Z": ts.Z,
        "log_Z": ts.log_Z,
        "E_beta_f": thermal_expectation(ts, f),
        "S": ts.entropy,
        "A": free_energy(ts),
        "var_beta_f": thermal_variance(ts, f),
        "R2_sup": h.R2_sup,
        "Sigma2_sup": h.V,
        "Df_sup": h.Df_sup,
        "W": h.W,
    }
    if cfg.format == "json":
        return json.dumps({k: _round(v) for k, v in vals.items()}) + "\n", 0
    return "quantity,value\n" + "".join(f"{k},{_fmt(v)}\n" for k, v in vals.items()), 0


def _verify(cfg: RunConfig) -> tuple[str, int]:
    reports = run_suite(cfg.seed, cfg.trials)
    ok = all(r.passed for r in reports)
    if cfg.format == "csv":
        lines = ["name,kind,beta,lhs,rhs,slack,tolerance,passed,applicable\n"]
        for r in reports:
            beta = "" if r.beta is None else _fmt(r.beta)
            lines.append(f"{r.name},{r.kind},{beta},{_fmt(r.lhs)},{_fmt(r.rhs)},{_fmt(r.slack)},"
                         f"{_fmt(r.tolerance)},{int(r.passed)},{int(r.applicable)}\n")
        return "".join(lines), 0 if ok else 1
    return to_jsonl(reports), 0 if ok else 1


def _reports_out(reports, fmt) -> str:
    if fmt == "json":
        return "".join(json.dumps({k: _round(v) for k, v in rec.items()}) + "\n"
                       for rep in reports for rec in rep.to_records())
    return "".join(rep.to_csv(header=(i == 0), with_entry=True) for i, rep in enumerate(reports))


def _compare(cfg: RunConfig) -> tuple[str, int]:
    entry = _instance(cfg)
    try:
        report = compare(entry, cfg.t_grid, cfg.samples, cfg.seed)
    except EnumerationLimitError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.format == "json":
        return _reports_out([report], "json"), 0 if report.all_sound else 1
    return report.to_csv(), 0 if report.all_sound else 1


def _demo(cfg: RunConfig) -> tuple[str, int]:
    reports = [compare(e, default_t_grid(e.f), cfg.samples, cfg.seed) for e in zoo()]
    ok = all(r.all_sound for r in reports)
    return _reports_out(reports, cfg.format or "csv"), 0 if ok else 1


_RUNNERS = {"compute": _compute, "verify": _verify, "compare": _compare, "demo": _demo}


def run(cfg: RunConfig) -> int:
    try:
        cfg.validate()
        text, status = _RUNNERS[cfg.subcommand](cfg)
    except (ConfigError, B.InapplicableBound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if cfg.output and cfg.output != "-":
        with open(cfg.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if status:
        print("error: some checks failed or some bounds were unsound", file=sys.stderr)
    return status


def _parse_grid(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad t grid {s!r}") from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="thermoconc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--output", "-o", help="output file (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--seed", type=int, default=42)

    def instance(sp):
        sp.add_argument("--function", "--entry", dest="function", help="builtin zoo function name")
        sp.add_argument("--space", dest="space_path", help="space JSON file")
        sp.add_argument("--values", dest="values_path", help="function JSON file ({'values': [...]})")

    sp = sub.add_parser("compute", help="thermodynamic quantities of one instance")
    instance(sp)
    sp.add_argument("--beta", type=float, default=1.0)
    common(sp)

    sp = sub.add_parser("verify", help="run the identity and inequality suite")
    sp.add_argument("--trials", type=int, default=20)
    common(sp)

    sp = sub.add_parser("compare", help="bounds against tail probabilities")
    instance(sp)
    sp.add_argument("--t", dest="t_grid", type=_parse_grid, help="comma-separated t values")
    sp.add_argument("--samples", type=int, default=0, help="Monte Carlo samples; 0 = exact oracle")
    common(sp)

    sp = sub.add_parser("demo", help="compare every zoo entry on its default grid")
    sp.add_argument("--samples", type=int, default=0)
    common(sp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(**{k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__})
    return run(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
