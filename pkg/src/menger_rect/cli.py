"""Command-line entry point.

Exit codes: 0 on success, 2 when a pipeline stage fails, 3 on a bad
configuration (unknown keys, invalid values, missing input file).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import generators
from .cloud_io import read_cloud, write_cloud
from .curvature import total_curvature
from .graph import GraphError, build_graph, near_graph_diagnostics
from .params import ConfigError, Parameters
from .pipeline import (
    RunConfig,
    StageError,
    _clean,
    _stage,
    prepare,
    run_pipeline,
    write_beta_table,
    write_graph_samples,
    write_svg,
)
from .stopping import build_region, partition

EXIT_OK, EXIT_STAGE, EXIT_CONFIG = 0, 2, 3

RUN_KEYS = {"scales", "seed", "mass_target", "mass_multiplier", "emit_plots", "gamma", "out"}
SOURCE_KEYS = {"input", "generator", "n", "generation", "noise", "radius", "slope_cap"}
PARAM_KEYS = set(Parameters.__dataclass_fields__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for num, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key = value")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in RUN_KEYS | SOURCE_KEYS | PARAM_KEYS:
            raise ConfigError(f"{path}:{num}: unknown key {key!r}")
        out[key] = val
    return out


def _parse_pairs(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--params expects key=val, got {item!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _as_bool(key, val) -> bool:
    if isinstance(val, bool):
        return val
    low = str(val).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean for {key}: {val!r}")


def _num(key, val, kind=float):
    try:
        return kind(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {val!r}") from exc


def build_config(args) -> RunConfig:
    """Merge the config file, then --params, then explicit flags."""
    merged = read_config_file(args.config) if args.config else {}
    merged.update(_parse_pairs(args.params))
    for key in ("input", "seed", "scales", "out"):
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    param_kw = {k: v for k, v in merged.items() if k in PARAM_KEYS}
    unknown = set(merged) - RUN_KEYS - SOURCE_KEYS - PARAM_KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    params = Parameters().with_overrides(**param_kw)
    if "input" in merged:
        if not Path(merged["input"]).is_file():
            raise ConfigError(f"input file not found: {merged['input']}")
        source = {"input": str(merged["input"])}
    elif "generator" in merged:
        source = {"generator": merged["generator"]}
        for key in ("n", "generation"):
            if key in merged:
                source[key] = _num(key, merged[key], int)
        for key in ("noise", "radius", "slope_cap"):
            if key in merged:
                source[key] = _num(key, merged[key])
    else:
        raise ConfigError("no input: pass --input or set generator in the config")
    mass_target = merged.get("mass_target")
    cfg = RunConfig(
        source=source,
        params=params,
        scales=merged.get("scales"),
        out_dir=merged.get("out"),
        emit_plots=_as_bool("emit_plots", merged.get("emit_plots", getattr(args, "plots", False))),
        seed=_num("seed", merged.get("seed", 0), int),
        mass_target=None if mass_target in (None, "", "none") else _num("mass_target", mass_target),
        mass_multiplier=_num("mass_multiplier", merged.get("mass_multiplier", 40.0)),
        gamma=_as_bool("gamma", merged.get("gamma", True)),
    )
    cfg.grid()  # validate the scale spec early
    return cfg


def _emit(obj, out=None):
    text = json.dumps(_clean(obj), sort_keys=True, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    if args.kind not in generators.KINDS:
        raise ConfigError(f"unknown generator {args.kind!r}")
    if args.noise < 0:
        raise ConfigError("noise must be >= 0")
    extra = {}
    if args.radius is not None:
        extra["radius"] = args.radius
    if args.slope_cap is not None:
        extra["slope_cap"] = args.slope_cap
    try:
        mu = generators.generate(args.kind, args.n, args.generation, args.noise, args.seed or 0, **extra)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.out:
        write_cloud(mu, args.out)
        print(json.dumps({"points": len(mu), "dimension": mu.dim, "out": args.out}))
    else:
        sys.stdout.write("\n".join(_csv_lines(mu)) + "\n")
    return EXIT_OK


def _csv_lines(mu):
    yield ",".join([f"x_{j + 1}" for j in range(mu.dim)] + ["mass"])
    for pt, m in zip(mu.points, mu.masses):
        yield ",".join([repr(float(c)) for c in pt] + [repr(float(m))])


def cmd_curvature(args) -> int:
    if not args.input or not Path(args.input).is_file():
        raise ConfigError(f"input file not found: {args.input}")
    timings = {}
    with _stage("load", timings):
        mu = read_cloud(args.input)
    t0 = time.perf_counter()
    with _stage("curvature", timings):
        energy = total_curvature(mu, workers=args.workers)
    runtime_ms = (time.perf_counter() - t0) * 1e3
    _emit({"total": energy.total, "triple_count": energy.triple_count, "runtime_ms": runtime_ms}, args.out)
    return EXIT_OK


def cmd_beta(args) -> int:
    cfg = build_config(args)
    prep = prepare(cfg, {})
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_beta_table(out / "beta_table.csv", prep.sweep)
        print(json.dumps({"rows": int(prep.sweep.beta1.size), "out": str(out / "beta_table.csv")}))
    else:
        write_beta_table(sys.stdout, prep.sweep)
    return EXIT_OK


def _analyze(cfg, timings):
    prep = prepare(cfg, timings)
    with _stage("region", timings):
        region = build_region(prep.measure, prep.base["line"], cfg.params, prep.sweep)
    with _stage("partition", timings):
        labels = partition(prep.measure, region, cfg.params, prep.sweep)
    return prep, region, labels


def cmd_analyze(args) -> int:
    cfg = build_config(args)
    prep, region, labels = _analyze(cfg, {})
    h = region.h
    _emit(
        {
            "labels_histogram": labels.histogram(),
            "mass_fractions": labels.mass_fractions(prep.measure.masses),
            "h": {"min": float(h.min()), "median": float(sorted(h)[len(h) // 2]), "max": float(h.max())},
            "region_size": region.size,
            "coherent": region.is_coherent(),
        },
        Path(cfg.out_dir) / "analyze.json" if cfg.out_dir else None,
    )
    return EXIT_OK


def cmd_build_graph(args) -> int:
    cfg = build_config(args)
    timings = {}
    prep, region, _ = _analyze(cfg, timings)
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    if region.is_empty:
        summary = {"lipschitz_constant": None, "F_tilde_fraction": 0.0, "G_mass": None, "piece_count": 0, "empty_region": True}
        graph = None
    else:
        with _stage("graph", timings):
            graph = build_graph(prep.measure, region, cfg.params)
            diag = near_graph_diagnostics(prep.measure, graph, region, cfg.params)
        summary = {
            "lipschitz_constant": graph.lipschitz_constant,
            "F_tilde_fraction": diag["F_tilde_fraction"],
            "G_mass": diag["G_mass"],
            "piece_count": len(graph.pieces),
            "empty_region": False,
        }
        if out:
            write_graph_samples(out / "graph_samples.csv", graph)
    if out and cfg.emit_plots:
        write_svg(out / "plot.svg", prep.measure, graph)
    _emit(summary, out / "graph.json" if out else None)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = build_config(args)
    report = run_pipeline(cfg)
    print(report.to_json())
    return EXIT_OK


def cmd_carleson(args) -> int:
    cfg = build_config(args)
    report = run_pipeline(cfg)
    _emit(report["carleson"], Path(cfg.out_dir) / "carleson.json" if cfg.out_dir else None)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _common(p, with_input=True):
    if with_input:
        p.add_argument("--input", help="point-cloud CSV or JSON")
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--out", help="output directory (or file for generate/curvature)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scales", help="t_min:t_max:ratio")
    p.add_argument("--params", nargs="*", metavar="KEY=VAL", help="parameter overrides")
    p.add_argument("--plots", action="store_true", help="emit an SVG plot")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="menger-rect", description="Multiscale curvature and rectifiability analysis of point clouds.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic cloud")
    g.add_argument("kind", help=", ".join(generators.KINDS))
    g.add_argument("--n", type=int)
    g.add_argument("--generation", type=int)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--radius", type=float)
    g.add_argument("--slope-cap", dest="slope_cap", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="CSV or JSON path; stdout when omitted")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("curvature", help="total Menger curvature of a cloud")
    c.add_argument("--input", required=False)
    c.add_argument("--out")
    c.add_argument("--workers", type=int, default=1)
    c.set_defaults(func=cmd_curvature)

    for name, func, text in (
        ("beta", cmd_beta, "per (point, scale) beta and density table"),
        ("analyze", cmd_analyze, "stopping region and partition summary"),
        ("build-graph", cmd_build_graph, "Lipschitz graph samples and summary"),
        ("run", cmd_run, "full pipeline with persisted intermediates"),
        ("carleson", cmd_carleson, "beta and gamma Carleson quantities"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except BrokenPipeError:
        return EXIT_OK
    except (GraphError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
