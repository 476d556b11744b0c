"""Jones-type beta numbers, best-line searches, separated mass balls, line
closeness and gamma numbers of functions on the base line."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .geometry import Ball, Line, angle_between_lines, angle_to_direction, angles_to_direction, as_point, line_distances
from .measure import DiscreteMeasure, NotFound

IRLS_TOL = 1e-10
IRLS_MAX_ITER = 100


@dataclass(frozen=True)
class BetaResult:
    value: float
    line: Line
    kind: Literal["L1", "L2"]
    center: np.ndarray
    scale: float
    k: float


@dataclass(frozen=True)
class AffineMap1D:
    """``p -> intercept + slope * p`` from the base-line coordinate into the
    orthogonal complement (expressed in the complement's orthonormal basis)."""

    slope: np.ndarray
    intercept: np.ndarray

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return self.intercept + np.multiply.outer(p, self.slope)

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.slope))

    def check_cap(self, cap: float):
        if self.lipschitz > cap * (1 + 1e-12):
            raise ValueError(f"affine piece slope {self.lipschitz} exceeds cap {cap}")


# ---------------------------------------------------------------------------
# objectives and elementary fits


def l1_objective(pts, w, base, direction) -> float:
    return float(w @ line_distances(pts, base, direction))


def l2_objective(pts, w, base, direction) -> float:
    d = line_distances(pts, base, direction)
    return float(w @ (d * d))


def _lex_sign(v: np.ndarray) -> np.ndarray:
    for c in v:
        if abs(c) > 1e-15:
            return v if c > 0 else -v
    return v


def _pca_raw(pts: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    wsum = w.sum()
    centroid = (w @ pts) / wsum
    d = pts - centroid
    cov = (d * w[:, None]).T @ d
    vals, vecs = np.linalg.eigh(cov)
    top = vals[-1]
    tol = 1e-12 * max(abs(top), 1e-300)
    span = vecs[:, vals >= top - tol]
    if span.shape[1] == 1:
        return centroid, _lex_sign(span[:, 0])
    for e in np.eye(pts.shape[1]):
        v = span @ (span.T @ e)
        nv = np.linalg.norm(v)
        if nv > 1e-12:
            return centroid, v / nv
    return centroid, span[:, 0]


def weighted_pca_line(pts: np.ndarray, w: np.ndarray) -> Line:
    """Exact weighted least-squares line: centroid plus top principal axis.

    Ties in the top eigenvalue go to the lexicographically largest unit
    vector of the top eigenspace.
    """
    return Line(*_pca_raw(pts, w))


def irls_l1_line(pts, w, start: Line, tol=IRLS_TOL, max_iter=IRLS_MAX_ITER) -> tuple[Line, float]:
    """Iteratively reweighted PCA for the weighted sum of orthogonal distances,
    stopped when the objective moves by less than ``tol`` relative to the
    starting objective.  Returns the best iterate and its objective."""
    base, direction = start.base, start.direction
    d = line_distances(pts, base, direction)
    best_obj = obj = float(w @ d)
    best = (base, direction)
    obj0 = max(best_obj, 1e-300)
    span = np.ptp(pts, axis=0).max() if len(pts) else 1.0
    floor = 1e-12 * max(span, 1e-300)
    for _ in range(max_iter):
        base, direction = _pca_raw(pts, w / np.maximum(d, floor))
        d = line_distances(pts, base, direction)
        new = float(w @ d)
        if new < best_obj:
            best, best_obj = (base, direction), new
        if abs(obj - new) <= tol * obj0:
            break
        obj = new
    if best[0] is start.base:
        return start, best_obj
    return Line(*best), best_obj


def _offset_for_direction(pts, w, direction) -> np.ndarray:
    """Base point minimising sum w * dist for lines with a fixed direction."""
    along = pts @ direction
    perp = pts - np.outer(along, direction)
    if pts.shape[1] == 2:
        normal = np.array([-direction[1], direction[0]])
        c = weighted_median(perp @ normal, w)
        return c * normal
    # weighted geometric median of the projected points (Weiszfeld)
    y = (w @ perp) / w.sum()
    for _ in range(200):
        dist = np.linalg.norm(perp - y, axis=1)
        if np.any(dist < 1e-14):
            break
        ww = w / dist
        y_new = (ww @ perp) / ww.sum()
        if np.linalg.norm(y_new - y) < 1e-14 * (1 + np.linalg.norm(y)):
            y = y_new
            break
        y = y_new
    return y


def weighted_median(values: np.ndarray, w: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    cw = np.cumsum(w[order])
    q = int(np.searchsorted(cw, 0.5 * cw[-1]))
    return float(values[order][min(q, len(values) - 1)])


# ---------------------------------------------------------------------------
# pair-line enumeration


def _pair_sweep_2d(pts: np.ndarray, w: np.ndarray):
    """L1 objective of every line through an anchor point and a partner point.

    For anchor i the objective of the line at angle theta is
    sum_j w_j r_ij |sin(theta - phi_ij)|; sorting phi makes every partner
    angle an O(1) prefix-sum evaluation.  Returns ``(obj, partner, angle)``
    of shape (m, m); invalid entries (coincident points) hold ``inf``.
    """
    m = len(pts)
    vx = pts[None, :, 0] - pts[:, None, 0]
    vy = pts[None, :, 1] - pts[:, None, 1]
    # fold directions into the upper half plane: angles mod pi
    flip = (vy < 0) | ((vy == 0) & (vx < 0))
    vx = np.where(flip, -vx, vx)
    vy = np.where(flip, -vy, vy)
    r = np.hypot(vx, vy)
    valid = r > 0
    phi = np.arctan2(vy, vx)
    order = np.argsort(phi, axis=1)
    flat = (order + (np.arange(m) * m)[:, None]).ravel()
    sx = vx.ravel()[flat].reshape(m, m)
    sy = vy.ravel()[flat].reshape(m, m)
    sw = np.broadcast_to(w, (m, m)).ravel()[flat].reshape(m, m)
    a_le = np.cumsum(sw * sx, axis=1)
    b_le = np.cumsum(sw * sy, axis=1)
    sr = r.ravel()[flat].reshape(m, m)
    ok = sr > 0
    sr = np.where(ok, sr, 1.0)
    # sin(theta) (A_le - A_gt) - cos(theta) (B_le - B_gt) with theta the partner angle
    obj = (sy * (2 * a_le - a_le[:, -1:]) - sx * (2 * b_le - b_le[:, -1:])) / sr
    obj = np.where(ok, np.abs(obj), np.inf)
    ph = phi.ravel()[flat].reshape(m, m)
    return obj, order, ph


def _angle_dist(theta, theta0):
    d = np.mod(theta - theta0 + np.pi / 2, np.pi) - np.pi / 2
    return np.abs(d)


def _best_from_sweep(pts, w, obj, order, mask=None, n_check=6) -> tuple[Line | None, float]:
    if mask is not None:
        obj = np.where(mask, obj, np.inf)
    flat = obj.ravel()
    finite = np.isfinite(flat)
    if not finite.any():
        return None, math.inf
    n_check = min(n_check, int(finite.sum()))
    cand = np.argpartition(flat, n_check - 1)[:n_check]
    m = obj.shape[1]
    best, best_obj = None, math.inf
    for c in sorted(cand.tolist(), key=lambda c: (flat[c], c)):
        i, q = divmod(c, m)
        j = order[i, q]
        line = Line.through(pts[i], pts[j])
        val = l1_objective(pts, w, line.base, line.direction)
        if val < best_obj:
            best, best_obj = line, val
    return best, best_obj


def _pair_lines_nd(pts, w, ref=None, alpha=None, chunk=4096) -> tuple[Line | None, float]:
    m = len(pts)
    ii, jj = np.triu_indices(m, 1)
    dirs = pts[jj] - pts[ii]
    nrm = np.linalg.norm(dirs, axis=1)
    keep = nrm > 0
    ii, jj, dirs, nrm = ii[keep], jj[keep], dirs[keep], nrm[keep]
    dirs = dirs / nrm[:, None]
    if ref is not None:
        ang = angles_to_direction(dirs, ref)
        keep = ang <= alpha
        ii, jj, dirs = ii[keep], jj[keep], dirs[keep]
    best, best_obj = None, math.inf
    for s in range(0, len(ii), chunk):
        bi = ii[s : s + chunk]
        bd = dirs[s : s + chunk]
        rel = pts[None, :, :] - pts[bi][:, None, :]
        along = np.einsum("pmd,pd->pm", rel, bd)
        perp = rel - along[..., None] * bd[:, None, :]
        vals = np.sqrt(np.einsum("pmd,pmd->pm", perp, perp)) @ w
        k = int(np.argmin(vals))
        if vals[k] < best_obj:
            best_obj = float(vals[k])
            best = Line(pts[bi[k]], bd[k])
    return best, best_obj


# ---------------------------------------------------------------------------
# window fits


@dataclass(frozen=True)
class WindowFit:
    """Best lines for one window's content (independent of centre and scale)."""

    l2_line: Line
    l2_sq: float  # sum w d^2 of the L2 line
    l1_line: Line
    l1_sum: float  # sum w d of the L1 line
    l2_line_l1_sum: float  # sum w d of the L2 line
    constrained_line: Line | None = None
    constrained_sum: float = math.inf


def _distinct_count(pts) -> int:
    return len(np.unique(pts, axis=0))


def fit_window(
    pts: np.ndarray,
    w: np.ndarray,
    ref_direction: np.ndarray | None = None,
    alpha: float | None = None,
) -> WindowFit:
    """L2 and L1 best lines of a weighted window, plus (given a reference
    direction) the best L1 line within angle ``alpha`` of it."""
    if _distinct_count(pts) < 2:
        raise ValueError("fewer than two distinct points: no line determined")
    l2 = weighted_pca_line(pts, w)
    l2_l1 = l1_objective(pts, w, l2.base, l2.direction)
    l2_sq = l2_objective(pts, w, l2.base, l2.direction)
    best, best_obj = irls_l1_line(pts, w, l2)
    if l2_l1 <= best_obj:
        best, best_obj = l2, l2_l1
    planar = pts.shape[1] == 2
    if planar:
        obj, order, ph = _pair_sweep_2d(pts, w)
        cand, cand_obj = _best_from_sweep(pts, w, obj, order)
    else:
        cand, cand_obj = _pair_lines_nd(pts, w)
    if cand is not None and cand_obj < best_obj:
        best, best_obj = cand, cand_obj
    fit = WindowFit(l2, l2_sq, best, best_obj, l2_l1)
    if ref_direction is None:
        return fit
    ref = ref_direction / np.linalg.norm(ref_direction)
    c_line, c_obj = None, math.inf
    if angle_to_direction(best.direction, ref) <= alpha:
        c_line, c_obj = best, best_obj
    else:
        if planar:
            theta0 = math.atan2(ref[1], ref[0])
            partner_angle = ph
            mask = _angle_dist(partner_angle, theta0) <= alpha
            cand, cand_obj = _best_from_sweep(pts, w, obj, order, mask=mask)
            boundary = [theta0 - alpha, theta0 + alpha]
            dirs = [np.array([math.cos(a), math.sin(a)]) for a in boundary]
        else:
            cand, cand_obj = _pair_lines_nd(pts, w, ref=ref, alpha=alpha)
            dirs = [_rotate_towards(best.direction, ref, alpha)]
        if cand is not None:
            c_line, c_obj = cand, cand_obj
        for u in dirs:
            base = _offset_for_direction(pts, w, u)
            val = l1_objective(pts, w, base, u)
            if val < c_obj:
                c_line, c_obj = Line(base, u), val
    return WindowFit(l2, l2_sq, best, best_obj, l2_l1, c_line, c_obj)


def _rotate_towards(u: np.ndarray, ref: np.ndarray, alpha: float) -> np.ndarray:
    """Unit vector at angle ``alpha`` from ``ref`` in the plane of ``u`` and ``ref``."""
    if u @ ref < 0:
        u = -u
    v = u - (u @ ref) * ref
    nv = np.linalg.norm(v)
    if nv < 1e-15:
        return ref.copy()
    v /= nv
    return math.cos(alpha) * ref + math.sin(alpha) * v


def degenerate_line(point: np.ndarray, ref_direction: np.ndarray | None) -> Line:
    """Line through a lone atom, parallel to the reference (or first axis)."""
    if ref_direction is None:
        ref_direction = np.eye(point.size)[0]
    return Line(point, ref_direction)


class WindowCache:
    """Memoises :func:`fit_window` by window content."""

    def __init__(self, mu: DiscreteMeasure, ref_direction=None, alpha=None):
        self.mu = mu
        self.ref = None if ref_direction is None else np.asarray(ref_direction, float)
        self.alpha = alpha
        self._cache: dict[bytes, WindowFit] = {}

    def __len__(self):
        return len(self._cache)

    def fit(self, idx: np.ndarray) -> WindowFit:
        key = idx.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        pts = self.mu.points[idx]
        w = self.mu.masses[idx]
        if idx.size == 0:
            raise ValueError("empty window")
        if _distinct_count(pts) < 2:
            line = degenerate_line(pts[0], self.ref)
            fit = WindowFit(line, 0.0, line, 0.0, 0.0, line, 0.0)
        else:
            fit = fit_window(pts, w, self.ref, self.alpha)
        self._cache[key] = fit
        return fit


# ---------------------------------------------------------------------------
# public beta operations


def _check_scale(t, k=1.0):
    if not t > 0:
        raise ValueError(f"scale must be positive, got {t}")
    if not k >= 1:
        raise ValueError(f"window factor k must be >= 1, got {k}")


def beta_for_line(mu: DiscreteMeasure, x, t: float, line: Line, k: float, power: int = 1) -> float:
    """beta_1^D(x, t) (power 1) or beta_2^D(x, t) (power 2) over B(x, k t)."""
    _check_scale(t, k)
    idx = mu.ball_indices(x, k * t)
    if idx.size == 0:
        return 0.0
    d = line.distances(mu.points[idx])
    w = mu.masses[idx]
    if power == 1:
        return float(w @ d) / (t * t)
    if power == 2:
        return math.sqrt(float(w @ (d * d)) / t**3)
    raise ValueError("power must be 1 or 2")


def _window(mu, x, t, k):
    _check_scale(t, k)
    x = as_point(x)
    idx = mu.ball_indices(x, k * t)
    if idx.size == 0 or _distinct_count(mu.points[idx]) < 2:
        raise ValueError("fewer than two distinct points in the window: no line determined")
    return x, idx


def best_line_l2(mu: DiscreteMeasure, x, t: float, k: float) -> BetaResult:
    x, idx = _window(mu, x, t, k)
    pts, w = mu.points[idx], mu.masses[idx]
    line = weighted_pca_line(pts, w)
    value = math.sqrt(l2_objective(pts, w, line.base, line.direction) / t**3)
    return BetaResult(value, line, "L2", x, t, k)


def best_line_l1(mu: DiscreteMeasure, x, t: float, k: float) -> BetaResult:
    """Smallest beta_1^D over the L2 line, the IRLS fixed point and every
    line through two window points (exact in the plane, an upper bound on
    the infimum in higher dimensions)."""
    x, idx = _window(mu, x, t, k)
    fit = fit_window(mu.points[idx], mu.masses[idx])
    return BetaResult(fit.l1_sum / (t * t), fit.l1_line, "L1", x, t, k)


def find_separated_mass_balls(
    mu: DiscreteMeasure,
    ball: Ball,
    count: int = 2,
    delta: float | None = None,
    schedule=(4, 8, 16, 32, 64, 128, 256, 512, 1024),
):
    """``count`` balls of radius diam B / (2 C1), centred on the support in B,
    with centres at least 12 diam B / (2 C1) apart and each carrying
    mu(B cap B_i) >= diam B / (2 C1'), where C1' = C1^(n+1).

    C1 runs through ``schedule``; returns the list of balls for the first C1
    that works, else :data:`NotFound`.  ``delta`` is accepted for interface
    symmetry; the density hypothesis is the caller's responsibility.
    """
    if count not in (2, 3):
        raise ValueError("count must be 2 or 3")
    inside = mu.ball_indices(ball.center, ball.radius)
    if inside.size < count:
        return NotFound
    n = mu.dim
    diam = ball.diam
    centers = mu.points[inside]
    for c1 in schedule:
        r = diam / (2 * c1)
        sep = 12 * r
        thr = diam / (2 * float(c1) ** (n + 1))
        masses = np.array(
            [
                math.fsum(mu.masses[np.intersect1d(j, inside, assume_unique=True)])
                for j in mu.balls_indices(centers, r)
            ]
        )
        good = np.nonzero(masses >= thr)[0]
        if good.size < count:
            continue
        pick = _separated_subset(centers[good], masses[good], sep, count)
        if pick is not None:
            return [Ball(centers[good[p]], r) for p in pick]
    return NotFound


def _separated_subset(pts, masses, sep, count):
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    far = d >= sep
    order = np.argsort(-masses, kind="stable")
    for first in order:
        chosen = [first]
        for j in order:
            if all(far[j, c] for c in chosen):
                chosen.append(j)
                if len(chosen) == count:
                    return sorted(int(c) for c in chosen)
    return None


def line_closeness_check(d1: Line, d2: Line, x, t: float, window: float, samples: int = 201) -> dict:
    """max over w on either line with |w - x| <= window of
    d(w, other) / (t + |w - x|), plus the angle between the lines."""
    if not t > 0:
        raise ValueError("t must be positive")
    x = as_point(x)

    def one_side(a: Line, b: Line) -> float:
        s0 = float((x - a.base) @ a.direction)
        foot = a.base + s0 * a.direction
        h = float(np.linalg.norm(x - foot))
        pts = [foot]
        if window > h:
            half = math.sqrt(window * window - h * h)
            s = np.linspace(s0 - half, s0 + half, samples)
            pts = list(a.point_at(s)) + pts
        pts = np.array(pts)
        dist = b.distances(pts)
        scale = t + np.linalg.norm(pts - x, axis=1)
        return float(np.max(dist / scale))

    return {
        "max_scaled_dist": max(one_side(d1, d2), one_side(d2, d1)),
        "angle": angle_between_lines(d1, d2),
    }


# ---------------------------------------------------------------------------
# gamma numbers of a sampled function on the base line


def _window_nodes(grid_u, values, p, t, max_nodes=None):
    grid_u = np.asarray(grid_u, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    a, b = p - t, p + t
    slack = 1e-9 * max(1.0, abs(a), abs(b))
    if a < grid_u[0] - slack or b > grid_u[-1] + slack:
        raise ValueError(f"window [{a}, {b}] leaves the sampled domain")
    a, b = max(a, grid_u[0]), min(b, grid_u[-1])
    inner = (grid_u > a) & (grid_u < b)
    if max_nodes is not None and inner.sum() + 2 > max_nodes:
        u = np.linspace(a, b, max_nodes)
    else:
        u = np.concatenate([[a], grid_u[inner], [b]])
    vals = np.column_stack([np.interp(u, grid_u, values[:, c]) for c in range(values.shape[1])])
    wts = np.zeros_like(u)
    du = np.diff(u)
    wts[:-1] += du / 2
    wts[1:] += du / 2
    return u, vals, wts


def l1_affine_fit(u: np.ndarray, vals: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Minimise sum_j w_j |vals_j - a - b u_j| over affine (a, b).

    Least-squares start and IRLS refinement as for lines; for scalar values
    the candidate set also holds, for every anchor sample, the weighted
    median slope through it, which contains the exact optimum.  For vector
    values the candidates are the affine maps through every pair of samples.
    """
    if vals.ndim == 1:
        vals = vals[:, None]
    X = np.column_stack([np.ones_like(u), u])
    keep = w > 0
    u, vals, w, X = u[keep], vals[keep], w[keep], X[keep]

    def objective(coef):
        res = vals - X @ coef
        return float(w @ np.linalg.norm(res, axis=1))

    def wls(ww):
        sw = np.sqrt(ww)[:, None]
        coef, *_ = np.linalg.lstsq(X * sw, vals * sw, rcond=None)
        return coef

    coef = wls(w)
    best, best_obj = coef, objective(coef)
    if best_obj == 0.0:
        return best[0], best[1], 0.0
    obj0, prev = best_obj, best_obj
    # residual floor relative to the data magnitude (span is 0 for constants)
    span = max(float(np.ptp(vals)), float(np.abs(vals).max()))
    for _ in range(IRLS_MAX_ITER):
        res = np.linalg.norm(vals - X @ coef, axis=1)
        coef = wls(w / np.maximum(res, 1e-12 * span))
        val = objective(coef)
        if val < best_obj:
            best, best_obj = coef, val
        if abs(prev - val) <= IRLS_TOL * obj0:
            break
        prev = val
    m = len(u)
    if vals.shape[1] == 1:
        v = vals[:, 0]
        du = u[None, :] - u[:, None]
        dv = v[None, :] - v[:, None]
        ok = du != 0
        slopes = np.where(ok, dv / np.where(ok, du, 1.0), 0.0)
        sw = np.where(ok, w[None, :] * np.abs(du), 0.0)
        order = np.argsort(slopes, axis=1, kind="stable")
        s_sorted = np.take_along_axis(slopes, order, axis=1)
        cw = np.cumsum(np.take_along_axis(sw, order, axis=1), axis=1)
        q = np.argmax(cw >= 0.5 * cw[:, -1:], axis=1)
        med = s_sorted[np.arange(m), q]
        # objective of the line through anchor i with slope med_i
        res = np.abs(dv - med[:, None] * du)
        objs = res @ w
        i = int(np.argmin(objs))
        coef_c = np.array([[v[i] - med[i] * u[i]], [med[i]]])
        val = objective(coef_c)
        if val < best_obj:
            best, best_obj = coef_c, val
    elif m <= 400:
        ii, jj = np.triu_indices(m, 1)
        ok = u[jj] != u[ii]
        ii, jj = ii[ok], jj[ok]
        slope = (vals[jj] - vals[ii]) / (u[jj] - u[ii])[:, None]
        icpt = vals[ii] - slope * u[ii][:, None]
        for s in range(0, len(ii), 2048):
            pred = icpt[s : s + 2048, None, :] + slope[s : s + 2048, None, :] * u[None, :, None]
            objs = np.linalg.norm(vals[None] - pred, axis=2) @ w
            k = int(np.argmin(objs))
            if objs[k] < best_obj:
                best_obj = float(objs[k])
                best = np.vstack([icpt[s + k], slope[s + k]])
    return best[0], best[1], best_obj


def gamma(grid_u, values, p: float, t: float, max_nodes: int | None = None) -> float:
    """(1/t^2) min_a integral over [p - t, p + t] of |A - a| (trapezoid rule).

    ``max_nodes`` caps the quadrature nodes by uniform resampling of the
    piecewise-linear sample interpolant.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    u, vals, w = _window_nodes(grid_u, values, p, t, max_nodes)
    *_, obj = l1_affine_fit(u, vals, w)
    return obj / (t * t)


def gamma_tilde(grid_u, values, p: float, t: float, max_nodes: int | None = None) -> float:
    """(1/t^2) min over lines M of integral of d(u + A(u), M) du."""
    if not t > 0:
        raise ValueError("t must be positive")
    u, vals, w = _window_nodes(grid_u, values, p, t, max_nodes)
    pts = np.column_stack([u, vals])
    keep = w > 0
    fit = fit_window(pts[keep], w[keep])
    return fit.l1_sum / (t * t)


def gamma_carleson(
    grid_u,
    values,
    U0: tuple[float, float],
    grid,
    n_p: int = 200,
    t_cap: float = 2.0,
    max_nodes: int | None = 129,
) -> float:
    """Quadrature of gamma(p, t)^2 dp dt/t over U0 x (grid rungs below t_cap):
    midpoint rule in p, one log-ratio per rung in t."""
    a, b = U0
    if not b > a:
        raise ValueError("U0 must be a non-degenerate interval")
    dp = (b - a) / n_p
    ps = a + dp * (np.arange(n_p) + 0.5)
    total = []
    for t in grid.scales:
        if t >= t_cap:
            continue
        for p in ps:
            g = gamma(grid_u, values, p, t, max_nodes=max_nodes)
            total.append(g * g)
    return math.fsum(total) * dp * grid.log_weight
