"""``kansa`` command-line front end.

Configuration is an INI-style file with one section per module::

    [kernel]
    family = gaussian
    alpha = 0.25

    [scheme]
    n = 100
    theta = 1.0

Any key can be overridden on the command line as ``--section.key value``.
Unknown keys are rejected. Exit codes: 0 success, 1 usage/config/input
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import importlib
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from kansa import bench, diagnostics
from kansa.errors import ConfigError, KansaError, NotUnisolventError
from kansa.geometry import (
    Ball,
    Rectangle,
    SiteSet,
    equispaced_grid,
    fill_distance,
    separation_distance,
)
from kansa.interpolation import error_indicator, fit
from kansa.kernel import KernelSpec
from kansa.solver import ParabolicProblem, SchemeConfig, solve

logger = logging.getLogger("kansa")

HALF_PI = math.pi / 2


def _float_list(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _int_list(text):
    return [int(v) for v in text.replace(",", " ").split()]


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section.key -> (parser, default); a default of None means "derive it"
SCHEMA = {
    "kernel.family": (str, "gaussian"),
    "kernel.alpha": (float, None),
    "kernel.beta": (float, None),
    "kernel.nu": (int, 2),
    "kernel.shape_rule": (str, "mean_distance"),
    "domain.shape": (str, "rectangle"),
    "domain.lower": (_float_list, None),
    "domain.upper": (_float_list, None),
    "domain.center": (_float_list, None),
    "domain.radius": (float, None),
    "sites.per_axis": (int, 5),
    "sites.file": (str, None),
    "interp.m": (int, None),
    "scheme.n": (int, 100),
    "scheme.theta": (float, 1.0),
    "scheme.fp_tol": (float, 1e-10),
    "scheme.fp_max_iter": (int, 200),
    "problem.name": (str, "kpz"),
    "problem.T": (float, 1.0),
    "diagnostics.delta": (float, diagnostics.DEFAULT_DELTA),
    "diagnostics.K1": (float, None),
    "diagnostics.K2_resolution": (int, diagnostics.DEFAULT_K2_RESOLUTION),
    "diagnostics.fill_resolution": (int, 200),
    "diagnostics.seminorm_trace": (_bool, True),
    "bench.grids": (_int_list, [3, 4, 5]),
    "bench.h": (float, 1e-2),
    "bench.oracle": (str, "quadrature"),
    "bench.mc_samples": (lambda s: int(float(s)), 10**6),
    "bench.mc_seed": (int, 0),
    "bench.mc_workers": (int, 0),
    "bench.gh_nodes": (int, 64),
    "bench.eval_per_axis": (int, 25),
    "bench.eval_lower": (_float_list, None),
    "bench.eval_upper": (_float_list, None),
    "bench.dump_grid": (_bool, False),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    explicit: set = field(default_factory=set)
    output_dir: Path = Path(".")
    verbosity: int = 0

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key: str, raw) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parser, _ = SCHEMA[key]
        if isinstance(raw, str) and raw.strip().lower() in ("", "none", "auto"):
            value = None
        else:
            try:
                value = parser(raw) if isinstance(raw, str) else raw
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid value {raw!r} for {key}: {exc}") from exc
        self.values[key] = value
        self.explicit.add(key)


def load_config(path=None, overrides=()) -> RunConfig:
    cfg = RunConfig({k: d for k, (_, d) in SCHEMA.items()})
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in parser.sections():
            for key, raw in parser.items(section):
                cfg.set(f"{section}.{key}", raw)
    for key, raw in overrides:
        cfg.set(key, raw)
    return cfg


# ----------------------------------------------------------------- builders

def build_domain(cfg: RunConfig, d: int = 2, fallback=None):
    shape = cfg["domain.shape"].lower()
    if shape == "ball":
        center, radius = cfg["domain.center"], cfg["domain.radius"]
        if center is None or radius is None:
            raise ConfigError("ball domain needs domain.center and domain.radius")
        return Ball(center, radius)
    if shape != "rectangle":
        raise ConfigError(f"domain.shape must be 'rectangle' or 'ball', got {shape!r}")
    lower, upper = cfg["domain.lower"], cfg["domain.upper"]
    if lower is None and upper is None and fallback is not None:
        return fallback
    lower = [-HALF_PI] * d if lower is None else lower
    upper = [HALF_PI] * d if upper is None else upper
    if len(lower) == 1 and d > 1:
        lower = lower * d
    if len(upper) == 1 and d > 1:
        upper = upper * d
    try:
        return Rectangle(lower, upper)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_kernel(cfg: RunConfig, sites: SiteSet | None = None) -> KernelSpec:
    alpha = cfg["kernel.alpha"]
    if alpha is None:
        if sites is not None and sites.N >= 2:
            alpha = bench.shape_parameter(sites, cfg["kernel.shape_rule"])
        else:
            alpha = 1.0
    try:
        return KernelSpec(cfg["kernel.family"], alpha, cfg["kernel.beta"], cfg["kernel.nu"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_problem(cfg: RunConfig) -> ParabolicProblem:
    name, T = cfg["problem.name"], cfg["problem.T"]
    if name == "kpz":
        return bench.kpz_problem(T)
    if name == "heat":
        return bench.heat_problem(T)
    if ":" not in name:
        raise ConfigError(f"problem.name must be 'kpz', 'heat' or 'module:attribute', got {name!r}")
    module, _, attr = name.partition(":")
    try:
        obj = getattr(importlib.import_module(module), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot load problem plug-in {name!r}: {exc}") from exc
    problem = obj if isinstance(obj, ParabolicProblem) else obj(T)
    if not isinstance(problem, ParabolicProblem):
        raise ConfigError(f"plug-in {name!r} did not produce a ParabolicProblem")
    return problem


def build_scheme(cfg: RunConfig) -> SchemeConfig:
    try:
        return SchemeConfig(cfg["scheme.n"], cfg["scheme.theta"], cfg["scheme.fp_tol"],
                            cfg["scheme.fp_max_iter"], cfg["interp.m"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def read_points(path) -> np.ndarray:
    """Site coordinates, one point per row."""
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read sites file {path}: {exc}") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: malformed row {','.join(row)!r}") from None
            if len(rows[-1]) != len(rows[0]):
                raise ConfigError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}")
    if not rows:
        raise ConfigError(f"{path}: no site rows")
    return np.array(rows)


def build_sites(cfg: RunConfig, d: int) -> SiteSet:
    if cfg["sites.file"] is not None:
        points = read_points(cfg["sites.file"])
        if points.shape[1] != d:
            raise ConfigError(f"sites file has dimension {points.shape[1]}, problem needs {d}")
        domain = build_domain(cfg, d, fallback=_bounding_box(points))
        try:
            return SiteSet(points, domain)
        except ValueError as exc:
            raise ConfigError(f"{cfg['sites.file']}: {exc}") from exc
    domain = build_domain(cfg, d)
    if not isinstance(domain, Rectangle):
        raise ConfigError("equispaced sites need a rectangle domain")
    return equispaced_grid(domain, cfg["sites.per_axis"])


def build_bench_config(cfg: RunConfig) -> bench.BenchmarkConfig:
    kwargs = dict(
        grids=tuple(cfg["bench.grids"]), h=cfg["bench.h"], T=cfg["problem.T"],
        eval_per_axis=cfg["bench.eval_per_axis"], oracle=cfg["bench.oracle"],
        mc_samples=cfg["bench.mc_samples"], mc_seed=cfg["bench.mc_seed"],
        mc_workers=cfg["bench.mc_workers"] or os.cpu_count() or 1, gh_nodes=cfg["bench.gh_nodes"],
        theta=cfg["scheme.theta"], shape_rule=cfg["kernel.shape_rule"], alpha=cfg["kernel.alpha"],
        m=cfg["interp.m"] or 0, fp_tol=cfg["scheme.fp_tol"], fp_max_iter=cfg["scheme.fp_max_iter"],
    )
    if cfg["domain.lower"] is not None or cfg["domain.upper"] is not None:
        kwargs["solve_domain"] = build_domain(cfg, 2)
    if cfg["bench.eval_lower"] is not None or cfg["bench.eval_upper"] is not None:
        lo = cfg["bench.eval_lower"] or [-math.pi / 4] * 2
        hi = cfg["bench.eval_upper"] or [math.pi / 4] * 2
        kwargs["eval_domain"] = Rectangle(lo * 2 if len(lo) == 1 else lo, hi * 2 if len(hi) == 1 else hi)
    try:
        return bench.BenchmarkConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ----------------------------------------------------------------- commands

def read_data_file(path) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``x1,...,xd,value``; blank lines and ``#`` comments are skipped."""
    rows, width = [], None
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}: {exc}") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: malformed row {','.join(row)!r}") from None
            if len(vals) < 2 or (width is not None and len(vals) != width):
                raise ConfigError(f"{path}:{lineno}: expected {width or 'at least 2'} columns, got {len(vals)}")
            if not all(math.isfinite(v) for v in vals):
                raise ConfigError(f"{path}:{lineno}: non-finite value")
            width = len(vals)
            rows.append(vals)
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    data = np.array(rows)
    return data[:, :-1], data[:, -1]


def _bounding_box(points: np.ndarray) -> Rectangle:
    lo, hi = points.min(axis=0), points.max(axis=0)
    pad = np.where(hi > lo, 0.0, 0.5)
    return Rectangle(lo - pad, hi + pad)


def _write_report(path: Path, lines) -> str:
    text = "".join(f"{k}: {v}\n" for k, v in lines)
    path.write_text(text)
    return text


def _g(v) -> str:
    return f"{float(v):.12g}"


def cmd_interpolate(cfg: RunConfig, data_file) -> int:
    points, values = read_data_file(data_file)
    d = points.shape[1]
    domain = build_domain(cfg, d, fallback=_bounding_box(points))
    try:
        sites = SiteSet(points, domain)
    except ValueError as exc:
        raise ConfigError(f"{data_file}: {exc}") from exc
    kernel = build_kernel(cfg, sites)
    m = cfg["interp.m"] if cfg["interp.m"] is not None else kernel.cpd_order
    f = fit(kernel, sites, values, m)
    out = cfg.output_dir
    f.dump(out / "interpolant.txt")
    fill = fill_distance(sites, domain, cfg["diagnostics.fill_resolution"])
    seminorm = f.native_seminorm()
    lines = [
        ("N", sites.N),
        ("d", d),
        ("kernel", kernel.family),
        ("alpha", _g(kernel.alpha)),
        ("nu", kernel.nu),
        ("m", m),
        ("fill", _g(fill)),
        ("q_X", _g(separation_distance(sites)) if sites.N >= 2 else "nan"),
        ("native_seminorm", _g(seminorm)),
    ]
    for order in range(min(kernel.nu, 2) + 1):
        lines.append((f"error_indicator_order{order}", _g(error_indicator(f, fill, order))))
    sys.stdout.write(_write_report(out / "report.txt", lines))
    return 0


def _sup_terminal(problem: ParabolicProblem, domain, resolution: int) -> float:
    pts = domain.candidate_grid(max(2, min(resolution, 200 if problem.vectorized else 40)))
    return float(np.max(np.abs(problem.f_batch(pts))))


def _report(cfg, problem, kernel, sites, scheme, solution=None):
    K1 = cfg["diagnostics.K1"]
    if K1 is None:
        K1 = diagnostics.estimate_K1(problem)
    domain = sites.domain
    report = diagnostics.stability_report(
        kernel, sites, h=problem.T / scheme.n, T=problem.T,
        sup_f=_sup_terminal(problem, domain, cfg["diagnostics.fill_resolution"]), K_1=K1,
        tail=scheme.m, delta=cfg["diagnostics.delta"], K2_resolution=cfg["diagnostics.K2_resolution"],
        fill_resolution=cfg["diagnostics.fill_resolution"], domain=domain, solution=solution,
        problem=problem if cfg["diagnostics.seminorm_trace"] else None,
    )
    out = cfg.output_dir
    head = (f"problem: {problem.name}\nkernel: {kernel.family}\nalpha: {_g(kernel.alpha)}\n"
            f"theta: {_g(scheme.theta)}\nsteps: {scheme.n}\n")
    text = head + report.to_text()
    (out / "report.txt").write_text(text)
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(diagnostics.CSV_FIELDS)
        w.writerow(report.csv_row())
    return text


def cmd_solve(cfg: RunConfig) -> int:
    problem = build_problem(cfg)
    sites = build_sites(cfg, problem.d)
    kernel = build_kernel(cfg, sites)
    scheme = build_scheme(cfg)
    sol = solve(problem, scheme, kernel, sites)
    sol.to_csv(cfg.output_dir / "solution.csv")
    sys.stdout.write(_report(cfg, problem, kernel, sites, scheme, sol))
    return 0


def cmd_diagnose(cfg: RunConfig) -> int:
    problem = build_problem(cfg)
    sites = build_sites(cfg, problem.d)
    kernel = build_kernel(cfg, sites)
    scheme = build_scheme(cfg)
    sys.stdout.write(_report(cfg, problem, kernel, sites, scheme))
    return 0


def cmd_bench(cfg: RunConfig, which: str) -> int:
    config = build_bench_config(cfg)
    rows = bench.run_benchmark(config, which)
    out = cfg.output_dir
    bench.write_csv(rows, out / f"bench_{which}.csv")
    if cfg["bench.dump_grid"]:
        for r in rows:
            if r.ok:
                bench.write_grid_dump(r, out / f"grid_{which}_N{r.N}.csv")
    sys.stdout.write((out / f"bench_{which}.csv").read_text())
    return 0 if all(r.ok for r in rows) else 2


# ----------------------------------------------------------------- parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI-style configuration file")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--oracle", choices=("quadrature", "mc"))
    common.add_argument("--mc-seed", type=int)
    common.add_argument("--theta", type=float)
    common.add_argument("--steps", type=int)
    common.add_argument("--grid", help="points per axis (comma list for bench)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="kansa", description="Meshfree collocation for terminal-value parabolic problems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("interpolate", parents=[common], help="fit an interpolant to x1,...,xd,value rows")
    p.add_argument("data_file")
    sub.add_parser("solve", parents=[common], help="run the backward collocation scheme")
    sub.add_parser("diagnose", parents=[common], help="stability diagnostics for a kernel/site set")
    p = sub.add_parser("bench", parents=[common], help="KPZ / heat benchmark table")
    p.add_argument("which", choices=("kpz", "heat"))
    return parser


def _split_overrides(extra) -> list[tuple[str, str]]:
    pairs, i = [], 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(f"unrecognized argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, _, val = key.partition("=")
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for {tok}")
            val = extra[i + 1]
            i += 2
        pairs.append((key, val))
    return pairs


def _flag_overrides(args) -> list[tuple[str, str]]:
    pairs = []
    if args.oracle is not None:
        pairs.append(("bench.oracle", args.oracle))
    if args.mc_seed is not None:
        pairs.append(("bench.mc_seed", str(args.mc_seed)))
    if args.theta is not None:
        pairs.append(("scheme.theta", str(args.theta)))
    if args.steps is not None:
        pairs.append(("scheme.n", str(args.steps)))
        if args.command == "bench":
            pairs.append(("bench.h", repr(1.0 / args.steps)))
    if args.grid is not None:
        pairs.append(("bench.grids" if args.command == "bench" else "sites.per_axis", args.grid))
    return pairs


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args, extra = build_parser().parse_known_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args.config, _split_overrides(extra) + _flag_overrides(args))
        if args.command == "bench" and args.steps is not None and "problem.T" in cfg.explicit:
            cfg.set("bench.h", repr(cfg["problem.T"] / args.steps))
        cfg.output_dir = Path(args.out)
        cfg.verbosity = args.verbose
        try:
            cfg.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {args.out}: {exc}") from exc
        if args.command == "interpolate":
            return cmd_interpolate(cfg, args.data_file)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "diagnose":
            return cmd_diagnose(cfg)
        return cmd_bench(cfg, args.which)
    except (ConfigError, NotUnisolventError) as exc:
        print(f"kansa: error: {exc}", file=sys.stderr)
        return 1
    except (KansaError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"kansa: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
