"""Weighted point clouds: ball masses, densities, normalisation and the
uniform-piece search."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.spatial.distance import pdist, squareform

from .geometry import Ball, as_point

# relative slack when asking the kd-tree for a closed ball; results are re-filtered exactly
_TREE_SLACK = 1e-9


class _NotFoundType:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __bool__(self):
        return False

    def __repr__(self):
        return "NotFound"


NotFound = _NotFoundType()


class DiscreteMeasure:
    """Finite weighted point set ``sum_i m_i delta_{x_i}`` in R^n."""

    def __init__(self, points, masses=None):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("points must be a non-empty (N, n) array")
        if masses is None:
            m = np.ones(pts.shape[0])
        else:
            m = np.array(masses, dtype=float).reshape(-1)
        if m.shape[0] != pts.shape[0]:
            raise ValueError("points and masses differ in length")
        if not np.all(np.isfinite(pts)):
            raise ValueError("coordinates must be finite")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise ValueError("masses must be positive and finite")
        pts.setflags(write=False)
        m.setflags(write=False)
        self.points = pts
        self.masses = m
        self.total_mass = math.fsum(m)

    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        return f"DiscreteMeasure(N={len(self)}, dim={self.dim}, mass={self.total_mass:.6g})"

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.masses, other.masses
        )

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    @cached_property
    def diameter(self) -> float:
        return support_diameter(self.points)

    def restrict(self, idx) -> "DiscreteMeasure":
        idx = np.asarray(idx, dtype=int)
        return DiscreteMeasure(self.points[idx], self.masses[idx])

    def scaled(self, coord_factor: float = 1.0, mass_factor: float = 1.0) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points * coord_factor, self.masses * mass_factor)

    def ball_indices(self, center, radius: float) -> np.ndarray:
        """Sorted indices of support points in the closed ball."""
        c = as_point(center)
        if c.size != self.dim:
            raise ValueError("dimension mismatch")
        cand = self.tree.query_ball_point(c, radius * (1 + _TREE_SLACK) + 1e-300)
        if not cand:
            return np.empty(0, dtype=int)
        cand = np.asarray(cand, dtype=int)
        d = np.linalg.norm(self.points[cand] - c, axis=1)
        return np.sort(cand[d <= radius])

    def balls_indices(self, centers: np.ndarray, radius: float) -> list[np.ndarray]:
        """:meth:`ball_indices` for many centers at one radius."""
        centers = np.atleast_2d(centers)
        lists = self.tree.query_ball_point(centers, radius * (1 + _TREE_SLACK) + 1e-300)
        out = []
        for c, cand in zip(centers, lists):
            cand = np.asarray(cand, dtype=int)
            if cand.size:
                d = np.linalg.norm(self.points[cand] - c, axis=1)
                cand = np.sort(cand[d <= radius])
            out.append(cand)
        return out

    def ball_mass(self, ball: Ball) -> float:
        idx = self.ball_indices(ball.center, ball.radius)
        return math.fsum(self.masses[idx])

    def ball_masses(self, centers: np.ndarray, radius: float) -> np.ndarray:
        return np.array(
            [math.fsum(self.masses[i]) for i in self.balls_indices(centers, radius)]
        )

    def density(self, x, t: float) -> float:
        """delta(x, t) = mu(B(x, t)) / t."""
        if not t > 0:
            raise ValueError(f"scale must be positive, got {t}")
        return self.ball_mass(Ball(x, t)) / t

    def sup_density(self, x, t: float, k0: float) -> float:
        """Supremum of delta(y, t) over y in {x} and the support within k0 t of x."""
        if not t > 0:
            raise ValueError(f"scale must be positive, got {t}")
        x = as_point(x)
        near = self.ball_indices(x, k0 * t)
        cands = np.vstack([x[None, :], self.points[near]])
        return float(self.ball_masses(cands, t).max() / t)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dim,
            "points": self.points.tolist(),
            "masses": self.masses.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        pts = np.asarray(data["points"], dtype=float)
        dim = int(data.get("dimension", pts.shape[1] if pts.ndim == 2 else 1))
        pts = pts.reshape(-1, dim)
        return cls(pts, data.get("masses"))


def support_diameter(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    pts = np.unique(points, axis=0)
    if len(pts) < 2:
        return 0.0
    if len(pts) > 2000 and pts.shape[1] in (2, 3):
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass
    return float(pdist(pts).max())


@dataclass(frozen=True)
class Similarity:
    """``x -> (x - shift) * scale`` on coordinates, ``m -> m * mass_factor``."""

    shift: np.ndarray
    scale: float
    mass_factor: float

    def forward(self, pts) -> np.ndarray:
        return (np.asarray(pts, dtype=float) - self.shift) * self.scale

    def inverse(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=float) / self.scale + self.shift

    def curvature_factor(self) -> float:
        """c^2(normalised) / c^2(original): masses enter cubed, lengths as 1/L^2."""
        return self.mass_factor**3 / self.scale**2

    def to_dict(self) -> dict:
        return {
            "shift": self.shift.tolist(),
            "scale": self.scale,
            "mass_factor": self.mass_factor,
        }


def normalize(
    mu: DiscreteMeasure,
    target_mass: float | None = None,
    mass_multiplier: float = 40.0,
) -> tuple[DiscreteMeasure, Similarity]:
    """Rescale to support diameter 1 inside B(0, 2).

    The support is centred on the midpoint of a diameter-realising pair, which
    keeps it inside B(0, sqrt(3)/2).  Masses are rescaled to ``target_mass``,
    or by default like a length measure (``mass / diam``) times
    ``mass_multiplier``.
    """
    pts = mu.points
    uniq = np.unique(pts, axis=0)
    if len(uniq) < 2:
        raise ValueError("cannot normalise: all points coincide (zero diameter)")
    cand = uniq
    if len(uniq) > 2000 and uniq.shape[1] in (2, 3):
        try:
            cand = uniq[ConvexHull(uniq).vertices]
        except QhullError:
            pass
    dmat = squareform(pdist(cand))
    i, j = np.unravel_index(int(np.argmax(dmat)), dmat.shape)
    diam = float(dmat[i, j])
    mid = 0.5 * (cand[i] + cand[j])
    scale = 1.0 / diam
    if target_mass is None:
        target_mass = mass_multiplier * mu.total_mass / diam
    if not target_mass > 0:
        raise ValueError("target mass must be positive")
    mass_factor = target_mass / mu.total_mass
    tr = Similarity(mid, scale, mass_factor)
    if abs(scale - 1.0) <= 1e-12 and np.all(np.abs(mid) <= 1e-12) and abs(mass_factor - 1) <= 1e-12:
        return mu, Similarity(np.zeros(mu.dim), 1.0, 1.0)
    return DiscreteMeasure(tr.forward(pts), mu.masses * mass_factor), tr


def _upper_density_ok(pts: np.ndarray, w: np.ndarray, t_floor: float, cap: float) -> bool:
    """mass(B(x, t)) <= cap * t for every support point x and every t >= t_floor."""
    if t_floor <= 0:
        return False
    for a in range(len(pts)):
        d = np.linalg.norm(pts - pts[a], axis=1)
        order = np.argsort(d, kind="stable")
        ds = d[order]
        cum = np.cumsum(w[order])
        # closed balls: the mass at radius r includes every point at distance <= r
        last = np.searchsorted(ds, ds, side="right") - 1
        at_r = cum[last]
        keep = ds >= t_floor
        if np.any(at_r[keep] > cap * ds[keep] * (1 + 1e-12)):
            return False
        below = np.searchsorted(ds, t_floor, side="right")
        if below and cum[below - 1] > cap * t_floor * (1 + 1e-12):
            return False
    return True


def check_uniform_piece(
    mu: DiscreteMeasure, idx, eta: float, t_floor: float | None = None
) -> dict:
    """Direct recomputation of the three uniform-piece conditions."""
    from .curvature import total_curvature

    idx = np.asarray(idx, dtype=int)
    sub = mu.restrict(idx)
    diam = sub.diameter
    c2 = total_curvature(sub).total
    if t_floor is None:
        t_floor = min_spacing(mu.points)
    distinct = len(np.unique(sub.points, axis=0))
    upper = distinct >= 2 and _upper_density_ok(sub.points, sub.masses, t_floor, 3.0)
    return {
        "curvature": c2 <= eta * diam,
        "mass": sub.total_mass > diam / 40.0,
        "upper_density": bool(upper),
        "c2": c2,
        "diam": diam,
        "mass_value": sub.total_mass,
    }


def min_spacing(points: np.ndarray) -> float:
    uniq = np.unique(points, axis=0)
    if len(uniq) < 2:
        return 0.0
    d, _ = cKDTree(uniq).query(uniq, k=2)
    return float(d[:, 1].min())


def find_uniform_piece(
    mu: DiscreteMeasure,
    eta: float,
    radii=None,
    t_floor: float | None = None,
):
    """Greedy search for a ball piece F with c^2(F) <= eta diam F,
    mass(F) > diam F / 40 and mass(F cap B(x, t)) <= 3t.

    Candidates are the whole support, then balls centred at support points
    (index order) for each radius, largest radius first.  ``t > 0`` in the
    upper-density condition is read at the resolution ``t_floor`` (default:
    the minimal spacing of the support), since an atom has infinite density
    as t -> 0.  Returns sorted support indices or :data:`NotFound`.
    """
    from .curvature import total_curvature

    if not eta > 0:
        raise ValueError("eta must be positive")
    if t_floor is None:
        t_floor = min_spacing(mu.points)
    if radii is None:
        diam = mu.diameter
        radii = []
        if diam > 0 and t_floor > 0:
            r = diam
            while r >= t_floor:
                radii.append(r)
                r /= math.sqrt(2.0)
    seen = set()
    candidates = [np.arange(len(mu))]
    for r in radii:
        candidates.extend(mu.balls_indices(mu.points, r))
    for idx in candidates:
        key = idx.tobytes()
        if key in seen or idx.size == 0:
            continue
        seen.add(key)
        # cheap conditions first, the triple sum last
        sub = mu.restrict(idx)
        diam = sub.diameter
        if not sub.total_mass > diam / 40.0:
            continue
        if len(np.unique(sub.points, axis=0)) < 2:
            continue
        if not _upper_density_ok(sub.points, sub.masses, t_floor, 3.0):
            continue
        if total_curvature(sub).total <= eta * diam:
            return idx
    return NotFound
