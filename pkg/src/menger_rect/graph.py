"""Lipschitz graph extraction: base line, Whitney intervals on it, one ball
and affine piece per interval, a smooth partition of unity gluing the
pieces, and the diagnostics measuring how much mass lies near the graph."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beta import AffineMap1D, fit_window
from .geometry import Ball, BaseFrame, Line
from .measure import DiscreteMeasure
from .params import Parameters
from .stopping import DistanceFunctions, StoppingRegion

WHITNEY_RATIO = 20.0
BALL_CONSTANT = 120.0
# D below this multiple of the scale floor marks the zero-set band
ZERO_BAND = 2.0
DOMAIN_RADIUS = 10.0
AFFINE_ZERO = 1e-15


class GraphError(ValueError):
    """Raised when the graph cannot be assembled from the given stages."""


def choose_base_line(mu: DiscreteMeasure, params: Parameters) -> dict:
    """x0 = support point of largest delta(x, 1) (lowest index on ties) and
    D0 = best L1 line at (x0, 1); the achieved beta_1 is reported."""
    dens = mu.ball_masses(mu.points, 1.0)
    i0 = int(np.argmax(dens))
    idx = mu.ball_indices(mu.points[i0], params.k)
    fit = fit_window(mu.points[idx], mu.masses[idx])
    beta = fit.l1_sum
    return {
        "index": i0,
        "x0": mu.points[i0].copy(),
        "line": fit.l1_line,
        "beta1": beta,
        "within_epsilon": beta <= params.epsilon,
    }


# ---------------------------------------------------------------------------
# Whitney intervals


@dataclass(frozen=True)
class WhitneyInterval:
    depth: int  # side length 2**-depth
    index: int  # interval is [index, index + 1] * 2**-depth

    @property
    def length(self) -> float:
        return math.ldexp(1.0, -self.depth)

    @property
    def lo(self) -> float:
        return self.index * self.length

    @property
    def hi(self) -> float:
        return (self.index + 1) * self.length

    @property
    def center(self) -> float:
        return (self.index + 0.5) * self.length

    @property
    def half_length(self) -> float:
        return 0.5 * self.length

    def dilate(self, factor: float) -> tuple[float, float]:
        r = factor * self.half_length
        return self.center - r, self.center + r

    def children(self):
        return (WhitneyInterval(self.depth + 1, 2 * self.index), WhitneyInterval(self.depth + 1, 2 * self.index + 1))


def inf_on_interval(dist: DistanceFunctions, lo: float, hi: float) -> float:
    """Exact min of D over [lo, hi]: each cone is minimised at its nearest point."""
    gap = np.maximum(0.0, np.maximum(lo - dist.proj, dist.proj - hi))
    return float((gap + dist.tmin).min())


def whitney_intervals(dist: DistanceFunctions, domain: tuple[float, float], floor: float, top_depth: int = -5) -> list[WhitneyInterval]:
    """Maximal dyadic intervals R meeting ``domain`` with
    diam R <= inf_R D / 20, by top-down subdivision.

    Intervals on which D stays below ZERO_BAND * floor are dropped: they sit
    on the projection of the zero set at the working resolution.
    """
    a, b = domain
    size = math.ldexp(1.0, -top_depth)
    todo = [WhitneyInterval(top_depth, k) for k in range(math.floor(a / size), math.ceil(b / size))]
    out = []
    min_len = floor / (4 * WHITNEY_RATIO)
    while todo:
        R = todo.pop()
        if R.hi <= a or R.lo >= b:
            continue
        low = inf_on_interval(dist, R.lo, R.hi)
        if R.length <= low / WHITNEY_RATIO:
            out.append(R)
            continue
        # D is 1-Lipschitz, so D(center) + half length bounds its sup on R
        if dist.D(R.center) + R.half_length < ZERO_BAND * floor or R.length < min_len:
            continue
        todo.extend(R.children())
    out.sort(key=lambda R: R.lo)
    return out


def whitney_report(intervals: list[WhitneyInterval], dist: DistanceFunctions, probes: int = 1001) -> dict:
    """Disjointness, neighbour comparability, overlap count and the bounds
    10 diam R <= D(p) <= 60 diam R for p in 10R (max certified through the
    1-Lipschitz property between probes)."""
    if not intervals:
        return {"count": 0, "disjoint": True, "max_neighbor_ratio": 0.0, "max_overlap": 0, "bounds_ok": True, "worst_lower": math.inf, "worst_upper": 0.0}
    lo = np.array([R.lo for R in intervals])
    hi = np.array([R.hi for R in intervals])
    length = hi - lo
    disjoint = bool(np.all(lo[1:] >= hi[:-1]))
    c = 0.5 * (lo + hi)
    l10, h10 = c - 5 * length, c + 5 * length
    meet = (l10[:, None] <= h10[None, :]) & (l10[None, :] <= h10[:, None])
    ratio = np.where(meet, length[:, None] / length[None, :], 1.0)
    worst_lower, worst_upper, ok = math.inf, 0.0, disjoint
    for i in range(len(intervals)):
        low = inf_on_interval(dist, l10[i], h10[i])
        pp = np.linspace(l10[i], h10[i], probes)
        top = float(np.max(dist.D(pp))) + 0.5 * (pp[1] - pp[0])
        worst_lower = min(worst_lower, low / length[i])
        worst_upper = max(worst_upper, top / length[i])
        if not (low >= 10 * length[i] * (1 - 1e-12) and top <= 60 * length[i] * (1 + 1e-12)):
            ok = False
    return {
        "count": len(intervals),
        "disjoint": disjoint,
        "max_neighbor_ratio": float(ratio.max()),
        "max_overlap": int(meet.sum(axis=1).max()),
        "bounds_ok": bool(ok),
        "worst_lower": worst_lower,
        "worst_upper": worst_upper,
    }


# ---------------------------------------------------------------------------
# balls and pieces


def select_ball(region: StoppingRegion, dist: DistanceFunctions, R: WhitneyInterval, C: float = BALL_CONSTANT) -> tuple[int, int, Ball]:
    """A ball B(X, t) with (X, t) in S, diam R <= 2t <= C diam R and the
    projected centre within C diam R of R.

    X realises D at the centre of R; t is its finest scale in S, lifted up
    the ladder (coherence) until 2t >= diam R.
    """
    p = R.center
    centers = np.nonzero(np.isfinite(region.finest_scale()))[0]
    if centers.size == 0:
        raise GraphError("stopping region is empty")
    vals = np.abs(dist.proj - p) + dist.tmin
    j = int(np.argmin(vals))
    X = int(centers[j])
    scales = region.grid.scales
    ok = np.nonzero(region.mask[X] & (2 * scales >= R.length * (1 - 1e-12)))[0]
    if ok.size == 0:
        raise GraphError(f"no scale of S at point {X} reaches diam R = {R.length}")
    s = int(ok.max())
    t = float(scales[s])
    ball = Ball(region.points[X], t)
    gap = max(0.0, R.lo - dist.proj[j], dist.proj[j] - R.hi)
    if not (R.length * (1 - 1e-12) <= 2 * t <= C * R.length * (1 + 1e-12) and gap <= C * R.length):
        raise GraphError(
            f"ball at point {X}, t={t} violates the size/position bounds for interval [{R.lo}, {R.hi}]"
        )
    return X, s, ball


def affine_from_line(line: Line, frame: BaseFrame, cap: float) -> AffineMap1D:
    """Affine map D0 -> D0-perp whose graph is ``line``."""
    u = line.direction
    along = float(u @ frame.line.direction)
    if abs(along) < 1e-15:
        raise GraphError("piece line is orthogonal to the base line")
    slope = (frame.perp_basis @ u) / along
    p0, q0 = frame.project(line.base)
    intercept = q0 - slope * p0
    # coefficients at rounding level of the unit-size frame are exact zeros
    # (a piece line equal to D0 gives A_i = 0)
    slope = np.where(np.abs(slope) < AFFINE_ZERO, 0.0, slope)
    intercept = np.where(np.abs(intercept) < AFFINE_ZERO * DOMAIN_RADIUS, 0.0, intercept)
    amap = AffineMap1D(slope, intercept)
    amap.check_cap(cap)
    return amap


# ---------------------------------------------------------------------------
# partition of unity


def smoothstep5(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6 * u - 15) + 10)


@dataclass(frozen=True)
class PartitionOfUnity:
    """Bumps equal to 1 on 2R_i and 0 off 3R_i (quintic smoothstep ramps)."""

    centers: np.ndarray
    half: np.ndarray

    @classmethod
    def from_intervals(cls, intervals: list[WhitneyInterval]) -> "PartitionOfUnity":
        return cls(
            np.array([R.center for R in intervals], dtype=float),
            np.array([R.half_length for R in intervals], dtype=float),
        )

    def __len__(self):
        return self.centers.size

    def support(self, i: int) -> tuple[float, float]:
        return self.centers[i] - 3 * self.half[i], self.centers[i] + 3 * self.half[i]

    def bump(self, i: int, p: np.ndarray) -> np.ndarray:
        """phi~_i(p); the ramp variable is (3 r - |p - c|) / r."""
        r = self.half[i]
        return smoothstep5((3 * r - np.abs(p - self.centers[i])) / r)

    def bump_derivatives(self, i: int, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        r = self.half[i]
        x = p - self.centers[i]
        u = np.clip((3 * r - np.abs(x)) / r, 0.0, 1.0)
        ds = 30 * u * u * (u - 1) ** 2
        d2s = 60 * u * (2 * u * u - 3 * u + 1)
        sgn = -np.sign(x) / r
        return ds * sgn, d2s / (r * r)

    def tilde_matrix(self, p: np.ndarray) -> np.ndarray:
        return np.array([self.bump(i, p) for i in range(len(self))]).reshape(len(self), -1)

    def weights(self, p: np.ndarray) -> np.ndarray:
        """Normalised phi_i(p); columns with no bump are left at zero."""
        m = self.tilde_matrix(np.atleast_1d(np.asarray(p, dtype=float)))
        s = m.sum(axis=0)
        return np.divide(m, s, out=np.zeros_like(m), where=s > 0)


# ---------------------------------------------------------------------------
# the graph


@dataclass(frozen=True)
class Piece:
    interval: WhitneyInterval
    affine: AffineMap1D
    ball: Ball
    center_index: int
    scale_index: int
    line: Line


@dataclass
class LipschitzGraph:
    base: Line
    frame: BaseFrame
    domain: tuple[float, float]
    pieces: list[Piece]
    bumps: PartitionOfUnity
    anchors_p: np.ndarray  # fallback interpolation nodes (zero-set projections)
    anchors_q: np.ndarray
    anchors_from_zero: bool
    sample_grid: np.ndarray = field(default=None)
    values: np.ndarray = field(default=None)
    lipschitz_constant: float = math.nan

    @property
    def codim(self) -> int:
        return self.frame.perp_basis.shape[0]

    def _fallback(self, p: np.ndarray) -> np.ndarray:
        out = np.zeros((p.size, self.codim))
        if self.anchors_p.size:
            for c in range(self.codim):
                out[:, c] = np.interp(p, self.anchors_p, self.anchors_q[:, c])
        return out

    def glued(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(sum_i phi~_i(p) A_i(p), sum_i phi~_i(p)); only bumps whose
        support holds p contribute."""
        acc = np.zeros((p.size, self.codim))
        tot = np.zeros(p.size)
        for i, piece in enumerate(self.pieces):
            lo, hi = self.bumps.support(i)
            on = np.nonzero((p > lo) & (p < hi))[0]
            if on.size == 0:
                continue
            w = self.bumps.bump(i, p[on])
            acc[on] += w[:, None] * piece.affine(p[on])
            tot[on] += w
        return acc, tot

    def evaluate_raw(self, p) -> np.ndarray:
        """A on the domain: the normalised glued pieces where the bumps sum
        to at least 1, blended with the zero-set interpolant elsewhere."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        acc, tot = self.glued(p)
        out = np.empty_like(acc)
        full = tot >= 1.0
        out[full] = acc[full] / tot[full][:, None]
        part = ~full
        if part.any():
            out[part] = acc[part] + (1.0 - tot[part])[:, None] * self._fallback(p[part])
        return out

    def evaluate(self, p) -> np.ndarray:
        """A with constant extension past the domain, tapering linearly to 0
        at the certified slope."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        a, b = self.domain
        inside = np.clip(p, a, b)
        vals = self.evaluate_raw(inside)
        out_side = (p < a) | (p > b)
        if out_side.any():
            slope = self.lipschitz_constant if self.lipschitz_constant > 0 else 1.0
            dist = np.maximum(a - p, p - b)[out_side]
            norm = np.linalg.norm(vals[out_side], axis=1)
            keep = np.clip(1.0 - slope * dist / np.where(norm > 0, norm, 1.0), 0.0, 1.0)
            vals[out_side] *= keep[:, None]
        return vals

    def point_on_graph(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return self.frame.lift(p, self.evaluate(p))


def certified_lipschitz(grid: np.ndarray, values: np.ndarray) -> float:
    """max |A(p) - A(q)| / |p - q| over sample pairs; for the piecewise
    linear interpolant of the samples, adjacent pairs realise the max."""
    dp = np.diff(grid)
    dv = np.linalg.norm(np.diff(values, axis=0), axis=1)
    good = dp > 0
    if not good.any():
        return 0.0
    return float((dv[good] / dp[good]).max())


def _zero_set_anchors(mu: DiscreteMeasure, zero: np.ndarray, frame: BaseFrame):
    idx = np.nonzero(zero)[0]
    if idx.size == 0:
        return np.empty(0), np.empty((0, frame.perp_basis.shape[0]))
    p, q = frame.project(mu.points[idx])
    order = np.lexsort((idx, p))
    p, q, idx = p[order], q[order], idx[order]
    dp = np.diff(p)
    dq = np.linalg.norm(np.diff(q, axis=0), axis=1)
    clash = np.nonzero((dp <= 1e-12 * max(1.0, float(np.abs(p).max()))) & (dq > 1e-12))[0]
    if clash.size:
        a, b = int(idx[clash[0]]), int(idx[clash[0] + 1])
        raise GraphError(f"projection onto D0 is not injective on the zero set: points {a} and {b}")
    keep = np.concatenate([[True], dp > 0])
    return p[keep], q[keep]


def build_graph(
    mu: DiscreteMeasure,
    region: StoppingRegion,
    params: Parameters,
    resolution: float | None = None,
) -> LipschitzGraph:
    """Glue the affine pieces of the Whitney intervals into A : U0 -> D0-perp
    and interpolate the zero set; sample A and certify its Lipschitz constant."""
    if region.is_empty:
        raise GraphError("stopping region is empty")
    dist = DistanceFunctions(region)
    frame = BaseFrame(region.base)
    off = float(np.linalg.norm(frame.origin))
    if off >= DOMAIN_RADIUS:
        raise GraphError("base line misses B(0, 10)")
    half = math.sqrt(DOMAIN_RADIUS**2 - off * off)
    domain = (-half, half)
    intervals = whitney_intervals(dist, domain, region.floor)
    cap = math.tan(params.alpha) * (1 + 1e-9)
    pieces = []
    for R in intervals:
        X, s, ball = select_ball(region, dist, R)
        line = region.lines[(X, s)]
        pieces.append(Piece(R, affine_from_line(line, frame, cap), ball, X, s, line))
    bumps = PartitionOfUnity.from_intervals(intervals)
    zero = region.zero_set()
    ap, aq = _zero_set_anchors(mu, zero, frame)
    graph = LipschitzGraph(region.base, frame, domain, pieces, bumps, ap, aq, bool(ap.size))
    if resolution is None:
        resolution = min(region.floor / 8.0, (domain[1] - domain[0]) / 4096)
    n = int(math.ceil((domain[1] - domain[0]) / resolution)) + 1
    grid = np.linspace(domain[0], domain[1], n)
    grid = np.union1d(grid, ap[(ap >= domain[0]) & (ap <= domain[1])])
    if not graph.anchors_from_zero:
        # no zero set: bridge uncovered gaps between fully covered samples
        acc, tot = graph.glued(grid)
        full = tot >= 1.0
        if full.any():
            graph.anchors_p = grid[full]
            graph.anchors_q = acc[full] / tot[full][:, None]
    values = graph.evaluate_raw(grid)
    graph.sample_grid = grid
    graph.values = values
    graph.lipschitz_constant = certified_lipschitz(grid, values)
    return graph


# ---------------------------------------------------------------------------
# diagnostics


def near_graph_diagnostics(mu: DiscreteMeasure, graph: LipschitzGraph, region: StoppingRegion, params: Parameters) -> dict:
    """The exceptional set G, the good part F~ and per-point distances.

    G: non-zero-set points x such that no interval i has pi(x) in 3R_i and
    x in K B_i (this includes points projecting outside every 3R_i, i.e.
    onto the zero set at resolution).  F~: points outside G within
    sqrt(eps) d(x) of the graph point over pi(x), together with the zero set.
    """
    dist = DistanceFunctions(region)
    p, q = graph.frame.project(mu.points)
    p = np.atleast_1d(p)
    q = np.atleast_2d(q)
    on_graph = graph.evaluate(p)
    gap = np.linalg.norm(q - on_graph, axis=1)
    dx = dist.d(mu.points)
    zero = region.zero_set()
    near_piece = np.zeros(len(mu), dtype=bool)
    for i, piece in enumerate(graph.pieces):
        lo, hi = graph.bumps.support(i)
        inside = (p >= lo) & (p <= hi)
        if inside.any():
            far = np.linalg.norm(mu.points - piece.ball.center, axis=1)
            near_piece |= inside & (far <= params.K * piece.ball.radius)
    in_G = ~zero & ~near_piece
    good = zero | (~in_G & (gap <= math.sqrt(params.epsilon) * dx))
    tot = mu.total_mass
    return {
        "G_mass": math.fsum(mu.masses[in_G]),
        "G_fraction": math.fsum(mu.masses[in_G]) / tot,
        "F_tilde_fraction": math.fsum(mu.masses[good]) / tot,
        "per_point": {
            "p": p,
            "graph_distance": gap,
            "d": dx,
            "in_G": in_G,
            "in_F_tilde": good,
            "zero": zero,
        },
    }


def piece_coherence(graph: LipschitzGraph, epsilon: float) -> dict:
    """Achieved constants of |A_i - A_j| <= C eps diam R_j on 100R_j and
    |slope_i - slope_j| <= C eps over neighbouring pairs (10R_i meets 10R_j)."""
    worst_val, worst_slope, pairs = 0.0, 0.0, 0
    pcs = graph.pieces
    for i, a in enumerate(pcs):
        la, ha = a.interval.dilate(10)
        for j, b in enumerate(pcs):
            if i == j:
                continue
            lb, hb = b.interval.dilate(10)
            if la > hb or lb > ha:
                continue
            pairs += 1
            ends = np.array(b.interval.dilate(100))
            diff = np.linalg.norm(a.affine(ends) - b.affine(ends), axis=1).max()
            worst_val = max(worst_val, float(diff) / (epsilon * b.interval.length))
            worst_slope = max(worst_slope, float(np.linalg.norm(a.affine.slope - b.affine.slope)) / epsilon)
    return {"pairs": pairs, "value_constant": worst_val, "slope_constant": worst_slope}


def second_derivative_constant(graph: LipschitzGraph, epsilon: float) -> float:
    """max over intervals j and samples in 2R_j of |A''| diam R_j / eps
    (second differences on the sample grid)."""
    g, v = graph.sample_grid, graph.values
    if g.size < 3:
        return 0.0
    h1 = np.diff(g)
    slopes = np.diff(v, axis=0) / h1[:, None]
    d2 = 2 * np.diff(slopes, axis=0) / (h1[1:] + h1[:-1])[:, None]
    mid = g[1:-1]
    mag = np.linalg.norm(d2, axis=1)
    worst = 0.0
    for piece in graph.pieces:
        lo, hi = piece.interval.dilate(2)
        on = (mid > lo) & (mid < hi)
        if on.any():
            worst = max(worst, float(mag[on].max()) * piece.interval.length / epsilon)
    return worst
