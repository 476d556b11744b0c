"""End-to-end orchestration: normalise, fit the base line, sweep beta and
density, build the stopping region and the graph, then report."""

from __future__ import annotations

import csv
import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import generators
from .beta import gamma_carleson
from .cloud_io import read_cloud, write_csv
from .curvature import carleson_lhs, total_curvature
from .graph import (
    build_graph,
    choose_base_line,
    near_graph_diagnostics,
    piece_coherence,
    second_derivative_constant,
    whitney_report,
)
from .measure import DiscreteMeasure, normalize
from .params import ConfigError, Parameters, ScaleGrid
from .stopping import DistanceFunctions, beta_sweep, build_region, partition

DEFAULT_SCALE_COUNT = 16


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage
        self.cause = exc


@contextmanager
def _stage(name: str, timings: dict):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except ConfigError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - t0


@dataclass
class RunConfig:
    """What to analyse and how.

    ``source`` is either ``{"input": path}`` or a generator spec such as
    ``{"generator": "lipschitz_graph", "n": 500, "noise": 1e-3}``.
    """

    source: dict
    params: Parameters = field(default_factory=Parameters)
    scales: str | None = None
    out_dir: str | None = None
    emit_plots: bool = False
    seed: int = 0
    mass_target: float | None = None
    mass_multiplier: float = 40.0
    gamma: bool = True

    def grid(self) -> ScaleGrid:
        if self.scales:
            return ScaleGrid.parse(self.scales)
        return ScaleGrid.with_count(DEFAULT_SCALE_COUNT)

    def load(self) -> DiscreteMeasure:
        src = dict(self.source)
        if "input" in src:
            return read_cloud(src["input"])
        kind = src.pop("generator", None)
        if kind is None:
            raise ConfigError("source needs 'input' or 'generator'")
        src.setdefault("seed", self.seed)
        return generators.generate(kind, **src)

    def echo(self) -> dict:
        return {
            "source": {k: v for k, v in sorted(self.source.items())},
            "params": self.params.as_dict(),
            "scales": self.grid().spec(),
            "seed": self.seed,
            "mass_target": self.mass_target,
            "mass_multiplier": self.mass_multiplier,
        }


@dataclass
class AnalysisReport:
    data: dict
    runtime: dict
    # in-memory stage products for callers and tests
    measure: DiscreteMeasure = field(repr=False, default=None)
    sweep: object = field(repr=False, default=None)
    region: object = field(repr=False, default=None)
    labels: object = field(repr=False, default=None)
    graph: object = field(repr=False, default=None)
    diagnostics: dict = field(repr=False, default=None)

    def to_json(self, include_runtime: bool = True) -> str:
        body = dict(self.data)
        if include_runtime:
            body["runtime"] = self.runtime
        return json.dumps(_clean(body), sort_keys=True, indent=2)

    def __getitem__(self, key):
        return self.data[key]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _stats(v: np.ndarray) -> dict:
    return {"min": float(v.min()), "median": float(np.median(v)), "max": float(v.max())}


@dataclass
class Prepared:
    measure: DiscreteMeasure
    transform: object
    base: dict
    sweep: object


def prepare(config: RunConfig, timings: dict) -> Prepared:
    """Load, normalise, pick the base line and run the beta/density sweep."""
    grid = config.grid()
    with _stage("load", timings):
        raw = config.load()
    with _stage("normalize", timings):
        mu, transform = normalize(raw, config.mass_target, config.mass_multiplier)
    with _stage("base_line", timings):
        base = choose_base_line(mu, config.params)
    with _stage("beta_sweep", timings):
        sweep = beta_sweep(mu, grid, config.params, base["line"])
    return Prepared(mu, transform, base, sweep)


def run_pipeline(config: RunConfig) -> AnalysisReport:
    timings: dict = {}
    params = config.params
    grid = config.grid()
    out = Path(config.out_dir) if config.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    prep = prepare(config, timings)
    mu, transform, base, sweep = prep.measure, prep.transform, prep.base, prep.sweep
    with _stage("curvature", timings):
        energy = total_curvature(mu)
    with _stage("region", timings):
        region = build_region(mu, base["line"], params, sweep)
    with _stage("partition", timings):
        labels = partition(mu, region, params, sweep)

    graph = diag = None
    graph_block = None
    gamma_block = None
    with _stage("graph", timings):
        if not region.is_empty:
            graph = build_graph(mu, region, params)
            diag = near_graph_diagnostics(mu, graph, region, params)
            dist = DistanceFunctions(region)
            intervals = [pc.interval for pc in graph.pieces]
            graph_block = {
                "lipschitz_constant": graph.lipschitz_constant,
                "lipschitz_over_alpha": graph.lipschitz_constant / params.alpha,
                "piece_count": len(graph.pieces),
                "F_tilde_fraction": diag["F_tilde_fraction"],
                "G_mass": diag["G_mass"],
                "G_fraction": diag["G_fraction"],
                "zero_set_anchors": int(graph.anchors_p.size) if graph.anchors_from_zero else 0,
                "whitney": whitney_report(intervals, dist),
                "piece_coherence": piece_coherence(graph, params.epsilon),
                "second_derivative_constant": second_derivative_constant(graph, params.epsilon),
            }
    with _stage("carleson", timings):
        lhs = carleson_lhs(mu.masses, sweep.beta1, sweep.delta_tilde, params.delta, grid.log_weight)
        c2 = energy.total
        beta_block = {
            "lhs": lhs,
            "c2": c2,
            "ratio": (lhs / c2) if c2 > 0 else (0.0 if lhs == 0 else None),
            "ratio_infinite": bool(c2 == 0 and lhs > 0),
        }
        if graph is not None and config.gamma:
            p, _ = graph.frame.project(mu.points)
            p = np.atleast_1d(p)
            integral = gamma_carleson(graph.sample_grid, graph.values, (float(p.min()), float(p.max())), grid)
            gamma_block = {"integral": integral, "C": integral / params.epsilon**2}

    data = {
        "config": config.echo(),
        "normalization": transform.to_dict(),
        "measure": {"points": len(mu), "dimension": mu.dim, "total_mass": mu.total_mass},
        "curvature": {
            "total": energy.total,
            "triple_count": energy.triple_count,
            "total_original_units": energy.total / transform.curvature_factor(),
        },
        "base_line": {
            "index": base["index"],
            "x0": base["x0"],
            "base": base["line"].base,
            "direction": base["line"].direction,
            "beta1": base["beta1"],
            "within_epsilon": base["within_epsilon"],
        },
        "region": {
            "size": region.size,
            "empty": region.is_empty,
            "coherent": region.is_coherent(),
            "h": _stats(region.h),
        },
        "partition": {
            "histogram": labels.histogram(),
            "mass_fractions": labels.mass_fractions(mu.masses),
            "anomalies": int(labels.anomalies.size),
        },
        "graph": graph_block,
        "F_tilde_fraction": diag["F_tilde_fraction"] if diag else 0.0,
        "carleson": {"beta": beta_block, "gamma": gamma_block},
        "flags": {
            "empty_region": region.is_empty,
            "base_line_above_epsilon": not base["within_epsilon"],
            "non_graph": region.is_empty or (diag is not None and diag["F_tilde_fraction"] < 0.99),
        },
    }
    report = AnalysisReport(data, timings, mu, sweep, region, labels, graph, diag)
    if out:
        with _stage("persist", timings):
            persist(report, out, params, config.emit_plots)
    return report


# ---------------------------------------------------------------------------
# persisted artifacts


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path, header, rows):
    """Write to a path, or to an open text stream."""
    if hasattr(path, "write"):
        _rows_to(path, header, rows)
        return
    with open(path, "w", newline="") as fh:
        _rows_to(fh, header, rows)


def _rows_to(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])


def persist(report: AnalysisReport, out: Path, params: Parameters, plots: bool):
    mu, sweep, region, labels = report.measure, report.sweep, report.region, report.labels
    graph, diag = report.graph, report.diagnostics
    write_csv(mu, out / "cloud_normalized.csv")
    write_beta_table(out / "beta_table.csv", sweep, region)
    n = len(mu)
    per = diag["per_point"] if diag else None
    rows = []
    for i in range(n):
        rows.append(
            [
                i,
                mu.masses[i],
                region.h[i],
                labels.labels[i],
                per["p"][i] if per else math.nan,
                per["d"][i] if per else math.inf,
                per["graph_distance"][i] if per else math.nan,
                per["in_G"][i] if per else False,
                per["in_F_tilde"][i] if per else False,
            ]
        )
    _write_rows(out / "points.csv", ["point_index", "mass", "h", "label", "p", "d", "graph_distance", "in_G", "in_F_tilde"], rows)
    if graph is not None:
        codim = graph.codim
        write_graph_samples(out / "graph_samples.csv", graph)
        _write_rows(
            out / "whitney.csv",
            ["lo", "hi", "depth", "center_index", "scale", "ball_radius"]
            + [f"slope_{c + 1}" for c in range(codim)]
            + [f"intercept_{c + 1}" for c in range(codim)],
            (
                [pc.interval.lo, pc.interval.hi, pc.interval.depth, pc.center_index, float(region.grid.scales[pc.scale_index]), pc.ball.radius]
                + list(pc.affine.slope)
                + list(pc.affine.intercept)
                for pc in graph.pieces
            ),
        )
    (out / "report.json").write_text(report.to_json())
    if plots:
        write_svg(out / "plot.svg", mu, graph)


def write_graph_samples(path: Path, graph) -> None:
    _write_rows(
        path,
        ["p"] + [f"A_{c + 1}" for c in range(graph.codim)],
        ([p] + list(v) for p, v in zip(graph.sample_grid, graph.values)),
    )


def write_beta_table(path, sweep, region=None):
    n, S = sweep.beta1.shape
    rows = []
    for i in range(n):
        for s in range(S):
            rows.append(
                [
                    i,
                    s,
                    float(sweep.grid.scales[s]),
                    sweep.density[i, s],
                    sweep.delta_tilde[i, s],
                    sweep.beta1[i, s],
                    sweep.beta2[i, s],
                    sweep.angle[i, s],
                    sweep.member[i, s],
                    region.mask[i, s] if region is not None else False,
                ]
            )
    _write_rows(
        path,
        ["point_index", "scale_index", "scale", "delta", "delta_tilde", "beta1", "beta2", "line_angle_vs_D0", "in_S_total", "in_S"],
        rows,
    )


def write_svg(path: Path, mu: DiscreteMeasure, graph, size: int = 640) -> None:
    """Scatter of the (planar projection of the) cloud with the graph overlay
    and the Whitney intervals drawn along the base line."""
    pts = mu.points[:, :2] if mu.dim >= 2 else np.column_stack([mu.points[:, 0], np.zeros(len(mu))])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    pad = 0.1 * span
    lo = lo - pad
    scale = size / (span + 2 * pad)

    def xy(p):
        return (p[0] - lo[0]) * scale, size - (p[1] - lo[1]) * scale

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">']
    parts.append('<rect width="100%" height="100%" fill="white"/>')
    for p in pts:
        x, y = xy(p)
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="1.5" fill="#1f77b4"/>')
    if graph is not None and mu.dim == 2:
        frame = graph.frame
        pp, _ = frame.project(mu.points)
        keep = (graph.sample_grid >= pp.min() - pad) & (graph.sample_grid <= pp.max() + pad)
        g = graph.sample_grid[keep]
        curve = frame.lift(g, graph.values[keep])
        path_d = " ".join(f"{'M' if k == 0 else 'L'}{x:.2f},{y:.2f}" for k, (x, y) in enumerate(map(xy, curve)))
        parts.append(f'<path d="{path_d}" stroke="#d62728" stroke-width="1.2" fill="none"/>')
        for pc in graph.pieces:
            a, b = pc.interval.lo, pc.interval.hi
            if b < pp.min() - pad or a > pp.max() + pad:
                continue
            ends = frame.lift(np.array([a, b]), np.zeros((2, graph.codim)))
            (x1, y1), (x2, y2) = xy(ends[0]), xy(ends[1])
            parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="#2ca02c" stroke-width="3" stroke-opacity="0.4"/>')
    parts.append("</svg>")
    path.write_text("\n".join(parts))
