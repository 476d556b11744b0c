"""Exact low-level geometry: lines, balls, Menger curvature, projections."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

# Area/(product of sides) below this is treated as an exact zero.
COLLINEAR_TOL = 1e-15


def as_point(x) -> np.ndarray:
    p = np.asarray(x, dtype=float).reshape(-1)
    if p.size == 0 or not np.all(np.isfinite(p)):
        raise ValueError(f"point must be a non-empty finite vector, got {x!r}")
    return p


@dataclass(frozen=True)
class Line:
    """Affine line ``base + s * direction`` with a unit direction."""

    base: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        base = as_point(self.base)
        direction = as_point(self.direction)
        if base.shape != direction.shape:
            raise ValueError("base and direction must have the same dimension")
        norm = np.linalg.norm(direction)
        if norm == 0:
            raise ValueError("direction must be non-zero")
        if abs(norm - 1.0) > 1e-12:
            direction = direction / norm
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "direction", direction)

    @classmethod
    def through(cls, a, b) -> "Line":
        a, b = as_point(a), as_point(b)
        return cls(a, b - a)

    @property
    def dim(self) -> int:
        return self.base.size

    def distances(self, pts: np.ndarray) -> np.ndarray:
        """Distances from each row of ``pts`` to the line."""
        return line_distances(pts, self.base, self.direction)

    def point_at(self, s) -> np.ndarray:
        return self.base + np.multiply.outer(s, self.direction)

    def __eq__(self, other):
        if not isinstance(other, Line):
            return NotImplemented
        return np.array_equal(self.base, other.base) and np.array_equal(
            self.direction, other.direction
        )

    def __hash__(self):
        return hash((self.base.tobytes(), self.direction.tobytes()))


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def diam(self) -> float:
        return 2.0 * self.radius

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)


def line_distances(pts, base, direction) -> np.ndarray:
    d = np.atleast_2d(np.asarray(pts, dtype=float)) - base
    along = d @ direction
    perp = d - np.outer(along, direction)
    return np.sqrt(np.einsum("ij,ij->i", perp, perp))


def _wedge_norm_sq(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Squared norm of u ^ v, i.e. (2 * triangle area)^2, summed over
    coordinate planes (Lagrange identity form, stable for thin triangles)."""
    n = u.shape[-1]
    if n == 1:
        return np.zeros(u.shape[:-1])
    if n == 2:
        cross = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
        return cross * cross
    total = np.zeros(np.broadcast_shapes(u.shape, v.shape)[:-1])
    for a, b in itertools.combinations(range(n), 2):
        w = u[..., a] * v[..., b] - u[..., b] * v[..., a]
        total += w * w
    return total


def curvature_sq_arrays(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Vectorised c(x, y, z)^2 over broadcast arrays of points (last axis = coords).

    Degenerate triples (coincident or collinear points) give 0.
    """
    u = y - x
    v = z - x
    w = z - y
    a2 = np.einsum("...i,...i->...", u, u)
    b2 = np.einsum("...i,...i->...", v, v)
    c2 = np.einsum("...i,...i->...", w, w)
    area2x4 = _wedge_norm_sq(u, v)  # (2 * Area)^2
    denom = a2 * b2 * c2
    longest = np.maximum(np.maximum(a2, b2), c2)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 4.0 * area2x4 / denom
        # scale-free flatness: 2 Area / longest side^2
        flat = (denom == 0) | (area2x4 <= (COLLINEAR_TOL * longest) ** 2)
    out = np.where(flat, 0.0, out)
    return out


def menger_curvature(x, y, z) -> float:
    """Inverse circumradius 4 Area / (|x-y| |x-z| |y-z|); 0 for degenerate triples."""
    x, y, z = as_point(x), as_point(y), as_point(z)
    if not (x.size == y.size == z.size):
        raise ValueError("points must share a dimension")
    if x.size == 1:
        return 0.0
    # canonical vertex order makes the result bit-identical under permutations
    x, y, z = sorted((x, y, z), key=tuple)
    a = math.dist(x, y)
    b = math.dist(x, z)
    c = math.dist(y, z)
    if a == 0 or b == 0 or c == 0:
        return 0.0
    twice_area = math.sqrt(float(_wedge_norm_sq(y - x, z - x)))
    if twice_area <= COLLINEAR_TOL * max(a, b, c) ** 2:
        return 0.0
    return 2.0 * twice_area / (a * b * c)


def menger_curvature_sq_complex(z1, z2, z3) -> float:
    """c^2 of a planar triple as the sum over the six orderings of
    1 / ((z_s1 - z_s3) conj(z_s2 - z_s3)), in complex arithmetic.

    Without the conjugate the six terms cancel identically (partial
    fractions), so the conjugate on the second factor is required.
    """
    zs = []
    for p in (z1, z2, z3):
        p = as_point(p)
        if p.size != 2:
            raise ValueError("complex form needs planar points")
        zs.append(complex(p[0], p[1]))
    if zs[0] == zs[1] or zs[0] == zs[2] or zs[1] == zs[2]:
        raise ValueError("permutation sum undefined for coincident points")
    total = 0j
    for a, b, c in itertools.permutations(zs):
        total += 1.0 / ((a - c) * (b - c).conjugate())
    return max(total.real, 0.0)


def point_line_distance(x, line: Line) -> float:
    x = as_point(x)
    if x.size != line.dim:
        raise ValueError("dimension mismatch")
    return float(line.distances(x[None, :])[0])


def project_onto_line(x, line: Line) -> np.ndarray:
    x = as_point(x)
    if x.size != line.dim:
        raise ValueError("dimension mismatch")
    s = float((x - line.base) @ line.direction)
    return line.base + s * line.direction


def angle_between_lines(d1: Line, d2: Line) -> float:
    if d1.dim != d2.dim:
        raise ValueError("dimension mismatch")
    return angle_to_direction(d1.direction, d2.direction)


def angle_to_direction(direction: np.ndarray, ref: np.ndarray) -> float:
    """Unsigned angle in [0, pi/2] between two unit directions; atan2 keeps
    full precision near 0 where acos loses half the digits."""
    c = float(direction @ ref)
    s = math.sqrt(float(_wedge_norm_sq(direction, ref)))
    return math.atan2(s, abs(c))


def angles_to_direction(directions: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Row-wise :func:`angle_to_direction`."""
    c = np.abs(directions @ ref)
    s = np.sqrt(_wedge_norm_sq(directions, ref[None, :]))
    return np.arctan2(s, c)


def orthonormal_complement(u: np.ndarray) -> np.ndarray:
    """Rows form an orthonormal basis of the hyperplane orthogonal to ``u``.

    In the plane the basis vector is ``u`` rotated by +90 degrees.
    """
    u = u / np.linalg.norm(u)
    n = u.size
    if n == 2:
        return np.array([[-u[1], u[0]]])
    basis = []
    for e in np.eye(n):
        v = e - (e @ u) * u
        for b in basis:
            v = v - (v @ b) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            basis.append(v / nv)
        if len(basis) == n - 1:
            break
    return np.array(basis)


@dataclass(frozen=True)
class BaseFrame:
    """Coordinates adapted to a base line D0: ``pi`` along it, ``pi_perp``
    in an orthonormal basis of its orthogonal complement.

    The origin of the ``pi`` coordinate is the orthogonal projection of the
    ambient origin onto the line.
    """

    line: Line
    origin: np.ndarray = field(init=False)
    perp_basis: np.ndarray = field(init=False)

    def __post_init__(self):
        e = self.line.direction
        b = self.line.base
        origin = b - (b @ e) * e
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "perp_basis", orthonormal_complement(e))

    @property
    def dim(self) -> int:
        return self.line.dim

    def project(self, pts) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(p, p_perp)`` for a point or an array of points."""
        arr = np.asarray(pts, dtype=float)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr) - self.origin
        p = arr @ self.line.direction
        q = arr @ self.perp_basis.T
        if single:
            return float(p[0]), q[0]
        return p, q

    def lift(self, p, q) -> np.ndarray:
        """Inverse of :meth:`project`."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return (
            self.origin
            + np.multiply.outer(p, self.line.direction)
            + q @ self.perp_basis
        )


def project_onto_base(x, frame: BaseFrame) -> tuple[float, np.ndarray]:
    return frame.project(as_point(x))
