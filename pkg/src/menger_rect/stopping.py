"""Stopping-time region: the good set S_total, the stopping function h, the
coherent region S, the partition Z / F1 / F2 / F3 and the distance
functions d and D."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beta import WindowCache, WindowFit, degenerate_line
from .geometry import BaseFrame, Line, angle_to_direction, as_point
from .measure import DiscreteMeasure
from .params import Parameters, ScaleGrid

LABELS = ("Z", "F1", "F2", "F3")
_REL = 1e-12


# ---------------------------------------------------------------------------
# per-(point, scale) tables


@dataclass
class BetaSweep:
    """Density, beta and best-line tables over support points x grid scales."""

    grid: ScaleGrid
    density: np.ndarray
    delta_tilde: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    angle: np.ndarray  # best L1 line vs D0 (nan without a base line)
    member: np.ndarray  # S_total membership (False without a base line)
    fits: list[WindowFit] = field(repr=False)
    fit_index: np.ndarray = field(repr=False)  # (N, S) -> position in ``fits``
    witness_kind: np.ndarray = field(repr=False)  # 0 none, 1 best line, 2 constrained refit

    def best_line(self, i: int, s: int) -> Line:
        return self.fits[self.fit_index[i, s]].l1_line

    def witness(self, i: int, s: int) -> Line | None:
        kind = self.witness_kind[i, s]
        fit = self.fits[self.fit_index[i, s]]
        if kind == 1:
            return fit.l1_line
        if kind == 2:
            return fit.constrained_line
        return None


def _membership(fit: WindowFit, t: float, dens: float, ref, params: Parameters):
    """(member, witness kind, angle of best line) for one window fit."""
    b1 = fit.l1_sum / (t * t)
    ang = math.nan if ref is None else angle_to_direction(fit.l1_line.direction, ref)
    if ref is None:
        return False, 0, ang
    thr = 2.0 * params.epsilon
    if not (dens >= 0.5 * params.delta and b1 < thr):
        return False, 0, ang
    if ang <= params.alpha:
        return True, 1, ang
    if fit.constrained_line is not None and fit.constrained_sum / (t * t) <= thr:
        return True, 2, ang
    return False, 0, ang


def beta_sweep(
    mu: DiscreteMeasure,
    grid: ScaleGrid,
    params: Parameters,
    base: Line | None = None,
    cache: WindowCache | None = None,
) -> BetaSweep:
    """Evaluate delta, delta_tilde, beta_1, beta_2 and (given a base line)
    S_total membership at every support point and grid scale."""
    n, S = len(mu), len(grid)
    ref = None if base is None else base.direction
    if cache is None:
        cache = WindowCache(mu, ref, params.alpha if ref is not None else None)
    density = np.zeros((n, S))
    dtilde = np.zeros((n, S))
    beta1 = np.zeros((n, S))
    beta2 = np.zeros((n, S))
    angle = np.full((n, S), math.nan)
    member = np.zeros((n, S), dtype=bool)
    kind = np.zeros((n, S), dtype=np.int8)
    fit_index = np.zeros((n, S), dtype=np.int64)
    fits: list[WindowFit] = []
    seen: dict[int, int] = {}
    pts = mu.points
    for s, t in enumerate(grid.scales):
        t = float(t)
        density[:, s] = mu.ball_masses(pts, t) / t
        for i, near in enumerate(mu.balls_indices(pts, params.k0 * t)):
            dtilde[i, s] = density[near, s].max()
        for i, idx in enumerate(mu.balls_indices(pts, params.k * t)):
            fit = cache.fit(idx)
            pos = seen.get(id(fit))
            if pos is None:
                pos = seen[id(fit)] = len(fits)
                fits.append(fit)
            fit_index[i, s] = pos
            beta1[i, s] = fit.l1_sum / (t * t)
            beta2[i, s] = math.sqrt(fit.l2_sq / t**3)
            member[i, s], kind[i, s], angle[i, s] = _membership(fit, t, density[i, s], ref, params)
    return BetaSweep(grid, density, dtilde, beta1, beta2, angle, member, fits, fit_index, kind)


def in_s_total(mu: DiscreteMeasure, x, t: float, base: Line, params: Parameters) -> dict:
    """Membership of (x, t) in S_total with its witness line.

    The witness is the unconstrained best L1 line when it is within alpha of
    the base line, else the best line among directions within alpha.
    """
    if not 0 < t < 5 + 1e-12:
        raise ValueError("t must lie in (0, 5)")
    x = as_point(x)
    dens = mu.density(x, t)
    idx = mu.ball_indices(x, params.k * t)
    if idx.size == 0:
        return {"member": False, "witness": None, "beta1": 0.0, "density": dens}
    fit = WindowCache(mu, base.direction, params.alpha).fit(idx)
    ok, kind, _ = _membership(fit, t, dens, base.direction, params)
    witness = None
    if ok:
        witness = fit.l1_line if kind == 1 else fit.constrained_line
    return {"member": ok, "witness": witness, "beta1": fit.l1_sum / (t * t), "density": dens}


# ---------------------------------------------------------------------------
# stopping function and region


def ladder_reach(ratio: float) -> int:
    """Rungs between a failing scale tau and the largest t with tau in
    [t / (4 ratio), ratio t / 3], i.e. the sup in h on the ratio ladder."""
    return int(math.floor(math.log(4.0 * ratio) / math.log(ratio) + 1e-9))


def extended_scale(grid: ScaleGrid, s: float) -> float:
    """Rung ``t_max * ratio**-s``; negative ``s`` extends the ladder upwards."""
    if 0 <= s < len(grid):
        return float(grid.scales[int(s)])
    return grid.t_max * grid.ratio ** (-s)


def compute_h(mu: DiscreteMeasure, sweep: BetaSweep, params: Parameters) -> np.ndarray:
    """h(x) = largest ladder rung t such that some (y, tau) outside S_total
    has tau in the (one-ratio widened) range [t/4, t/3] and x in B(y, tau/3).

    For a failing rung tau the largest admissible t is ``ladder_reach``
    rungs above it, which may exceed the top of the grid.  Points never
    caught get the scale floor.
    """
    grid = sweep.grid
    floor = params.floor_for(grid)
    reach = ladder_reach(grid.ratio)
    h = np.full(len(mu), floor)
    # coarsest failing rung wins; scan from the top
    done = np.zeros(len(mu), dtype=bool)
    for s, tau in enumerate(grid.scales):
        bad = np.nonzero(~sweep.member[:, s])[0]
        if bad.size == 0:
            continue
        t_val = extended_scale(grid, s - reach)
        for near in mu.balls_indices(mu.points[bad], float(tau) / 3.0):
            fresh = near[~done[near]]
            if fresh.size:
                h[fresh] = np.maximum(h[fresh], t_val)
                done[fresh] = True
        if done.all():
            break
    return h


@dataclass(frozen=True)
class StoppingRegion:
    """Coherent region S as a boolean table over (support index, scale index)."""

    grid: ScaleGrid
    base: Line
    mask: np.ndarray
    h: np.ndarray
    floor: float
    points: np.ndarray
    lines: dict = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    @property
    def is_empty(self) -> bool:
        return not self.mask.any()

    def pairs(self) -> list[tuple[int, int]]:
        ii, ss = np.nonzero(self.mask)
        return list(zip(ii.tolist(), ss.tolist()))

    def finest_scale(self) -> np.ndarray:
        """Per point the smallest scale in S (inf for points without pairs)."""
        out = np.full(self.mask.shape[0], math.inf)
        for i in range(self.mask.shape[0]):
            ss = np.nonzero(self.mask[i])[0]
            if ss.size:
                out[i] = float(self.grid.scales[ss.max()])
        return out

    def is_coherent(self) -> bool:
        # scale index grows as t shrinks: membership must be a prefix
        m = self.mask
        return bool(np.all(m[:, 1:] <= m[:, :-1]))

    def zero_set(self) -> np.ndarray:
        return self.h <= self.floor * (1 + _REL)


def build_region(mu: DiscreteMeasure, base: Line, params: Parameters, sweep: BetaSweep) -> StoppingRegion:
    """S = {(x, t) in S_total : t >= h(x)} with the witness lines."""
    h = compute_h(mu, sweep, params)
    scales = sweep.grid.scales
    mask = sweep.member & (scales[None, :] >= h[:, None] * (1 - _REL))
    lines = {(i, s): sweep.witness(i, s) for i, s in zip(*map(np.ndarray.tolist, np.nonzero(mask)))}
    region = StoppingRegion(sweep.grid, base, mask, h, params.floor_for(sweep.grid), mu.points, lines)
    if not region.is_coherent():
        raise AssertionError("stopping region lost coherence")
    return region


# ---------------------------------------------------------------------------
# partition


@dataclass(frozen=True)
class PartitionLabels:
    labels: np.ndarray  # strings from LABELS, or "anomaly"
    witness: list  # per point (y, scale index) behind the label, or None

    @property
    def anomalies(self) -> np.ndarray:
        return np.nonzero(self.labels == "anomaly")[0]

    def histogram(self) -> dict:
        return {lab: int((self.labels == lab).sum()) for lab in LABELS + ("anomaly",)}

    def mass_fractions(self, masses: np.ndarray) -> dict:
        tot = math.fsum(masses)
        return {
            lab: math.fsum(masses[self.labels == lab]) / tot for lab in LABELS + ("anomaly",)
        }


def partition(mu: DiscreteMeasure, region: StoppingRegion, params: Parameters, sweep: BetaSweep) -> PartitionLabels:
    """Label each support point by the first clause that holds, in the
    order Z, F1, F2, F3.

    Witnesses (y, tau) range over grid rungs tau in [h/5, h/2] widened by one
    ratio, and support points y with x in B(y, tau/2).  F1 asks
    delta(y, tau) <= delta, F2 beta_1(y, tau) >= epsilon and F3 an angle of
    at least 3 alpha / 4 between the best line at (y, tau) and D0.
    """
    grid = sweep.grid
    rho = grid.ratio
    n = len(mu)
    labels = np.empty(n, dtype=object)
    witness: list = [None] * n
    zero = region.zero_set()
    labels[zero] = "Z"
    scales = grid.scales
    for x in np.nonzero(~zero)[0]:
        hx = region.h[x]
        lo, hi = hx / (5 * rho) * (1 - _REL), hx * rho / 2 * (1 + _REL)
        rungs = np.nonzero((scales >= lo) & (scales <= hi))[0]
        cands = {"F1": None, "F2": None, "F3": None}
        for s in rungs:
            tau = float(scales[s])
            ys = mu.ball_indices(mu.points[x], tau / 2.0)
            if ys.size == 0:
                continue
            f1 = ys[sweep.density[ys, s] <= params.delta]
            if f1.size and cands["F1"] is None:
                cands["F1"] = (int(f1[0]), int(s))
                break
            f2 = ys[sweep.beta1[ys, s] >= params.epsilon]
            if f2.size and cands["F2"] is None:
                cands["F2"] = (int(f2[0]), int(s))
            f3 = ys[sweep.angle[ys, s] >= 0.75 * params.alpha]
            if f3.size and cands["F3"] is None:
                cands["F3"] = (int(f3[0]), int(s))
        for lab in ("F1", "F2", "F3"):
            if cands[lab] is not None:
                labels[x] = lab
                witness[x] = cands[lab]
                break
        else:
            labels[x] = "anomaly"
    return PartitionLabels(labels.astype(str), witness)


# ---------------------------------------------------------------------------
# distance functions


class DistanceFunctions:
    """d(x) = min over (X, t) in S of |X - x| + t and
    D(p) = min over (X, t) in S of |pi(X) - p| + t.

    Coherence makes the finest scale of each centre the only one that
    matters, so both minima run over one term per centre.
    """

    def __init__(self, region: StoppingRegion):
        if region.is_empty:
            raise ValueError("stopping region is empty: d and D are undefined")
        finest = region.finest_scale()
        keep = np.isfinite(finest)
        self.centers = region.points[keep]
        self.tmin = finest[keep]
        self.frame = BaseFrame(region.base)
        self.proj, _ = self.frame.project(self.centers)
        self.proj = np.atleast_1d(self.proj)

    def d(self, x) -> np.ndarray | float:
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        out = np.empty(len(arr))
        for a in range(0, len(arr), 512):
            chunk = arr[a : a + 512]
            dist = np.linalg.norm(chunk[:, None, :] - self.centers[None, :, :], axis=2)
            out[a : a + 512] = (dist + self.tmin[None, :]).min(axis=1)
        return float(out[0]) if single else out

    def D(self, p) -> np.ndarray | float:
        arr = np.asarray(p, dtype=float)
        single = arr.ndim == 0
        arr = np.atleast_1d(arr)
        out = np.empty(len(arr))
        for a in range(0, len(arr), 4096):
            chunk = arr[a : a + 4096]
            out[a : a + 4096] = (np.abs(chunk[:, None] - self.proj[None, :]) + self.tmin[None, :]).min(axis=1)
        return float(out[0]) if single else out


def dist_d(region: StoppingRegion, x):
    return DistanceFunctions(region).d(x)


def dist_D(region: StoppingRegion, p):
    return DistanceFunctions(region).D(p)
