"""Curvature energies of a discrete measure and the beta-Carleson comparison."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import as_point, curvature_sq_arrays
from .measure import DiscreteMeasure
from .params import Parameters, ScaleGrid


@dataclass(frozen=True)
class EnergyBreakdown:
    total: float
    triple_count: int
    per_point: np.ndarray | None = None


def _row_energy(pts, w, i, want_marginals):
    """sum_{i<j<k} w_j w_k c^2(x_i, x_j, x_k) for one leading index,
    plus the column sums needed for per-point marginals."""
    tail = pts[i + 1 :]
    wt = w[i + 1 :]
    c2 = curvature_sq_arrays(pts[i], tail[:, None, :], tail[None, :, :])
    c2 = np.triu(c2, 1) * np.outer(wt, wt)
    row = float(c2.sum())
    if not want_marginals:
        return row, None
    return row, c2.sum(axis=1) + c2.sum(axis=0)


def total_curvature(mu: DiscreteMeasure, per_point: bool = False, workers: int = 1) -> EnergyBreakdown:
    """c^2(mu) = sum over ordered triples of distinct indices of
    m_i m_j m_k c(x_i, x_j, x_k)^2, evaluated as 6 * sum_{i<j<k}.

    Work is split by leading index.  Each leading index contributes one
    partial sum and the partials are merged with ``math.fsum`` in index
    order, so the result does not depend on ``workers``.
    """
    n = len(mu)
    count = n * (n - 1) * (n - 2)
    if n < 3:
        return EnergyBreakdown(0.0, max(count, 0), np.zeros(n) if per_point else None)
    pts, w = mu.points, mu.masses
    rows = list(range(n - 2))

    def job(block):
        return [_row_energy(pts, w, i, per_point) for i in block]

    if workers > 1:
        blocks = [rows[b::workers] for b in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(job, blocks))
        results = [None] * len(rows)
        for b, out in enumerate(done):
            for pos, val in zip(blocks[b], out):
                results[pos] = val
    else:
        results = job(rows)
    total = 6.0 * math.fsum(w[i] * r for i, (r, _) in enumerate(results))
    marg = None
    if per_point:
        # each unordered triple is shared equally by its three vertices
        acc = np.zeros(n)
        for i, (r, cols) in enumerate(results):
            acc[i] += w[i] * r
            acc[i + 1 :] += w[i] * cols
        marg = 6.0 * acc / 3.0
    return EnergyBreakdown(total, count, marg)


def local_curvature(mu: DiscreteMeasure, x, t: float, k1: float) -> float:
    """Triple sum over B(x, k1 t)^3 restricted to triples whose pairwise
    distances are all at least t / k1."""
    if not t > 0:
        raise ValueError(f"scale must be positive, got {t}")
    if not k1 > 1:
        raise ValueError(f"k1 must exceed 1, got {k1}")
    idx = mu.ball_indices(as_point(x), k1 * t)
    if idx.size < 3:
        return 0.0
    pts, w = mu.points[idx], mu.masses[idx]
    sep = t / k1
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    far = dist >= sep
    parts = []
    m = len(idx)
    for i in range(m - 2):
        tail = pts[i + 1 :]
        ok = far[i, i + 1 :]
        mask = np.triu(np.outer(ok, ok) & far[i + 1 :, i + 1 :], 1)
        if not mask.any():
            continue
        c2 = curvature_sq_arrays(pts[i], tail[:, None, :], tail[None, :, :])
        wt = w[i + 1 :]
        parts.append(w[i] * float((c2 * mask * np.outer(wt, wt)).sum()))
    return 6.0 * math.fsum(parts)


@dataclass(frozen=True)
class CarlesonResult:
    lhs: float
    c2: float
    ratio: float
    infinite: bool

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "c2": self.c2,
            "ratio": None if self.infinite else self.ratio,
            "ratio_infinite": self.infinite,
        }


def carleson_lhs(masses: np.ndarray, beta1: np.ndarray, delta_tilde: np.ndarray, delta: float, log_weight: float) -> float:
    """sum_i sum_s m_i beta1(i, s)^2 1{delta_tilde(i, s) >= delta} log(ratio)."""
    on = delta_tilde >= delta
    terms = (masses[:, None] * np.where(on, beta1 * beta1, 0.0)).ravel()
    return math.fsum(terms) * log_weight


def carleson_ratio(mu: DiscreteMeasure, grid: ScaleGrid, params: Parameters, sweep=None) -> CarlesonResult:
    """Empirical comparison of the beta_1 square function with c^2(mu).

    ``sweep`` may carry precomputed beta1 / delta_tilde tables for this grid.
    """
    from .stopping import beta_sweep

    if sweep is None:
        sweep = beta_sweep(mu, grid, params)
    lhs = carleson_lhs(mu.masses, sweep.beta1, sweep.delta_tilde, params.delta, grid.log_weight)
    c2 = total_curvature(mu).total
    if c2 > 0:
        return CarlesonResult(lhs, c2, lhs / c2, False)
    if lhs == 0:
        return CarlesonResult(lhs, c2, 0.0, False)
    return CarlesonResult(lhs, c2, math.inf, True)
