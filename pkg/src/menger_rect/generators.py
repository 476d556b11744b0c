"""Seeded synthetic point clouds used as fixtures and contrast cases."""

from __future__ import annotations

import math

import numpy as np

from .measure import DiscreteMeasure

KINDS = ("segment", "circle", "lipschitz_graph", "cantor4")


def segment(n: int, length: float = 1.0) -> DiscreteMeasure:
    """n equally spaced points on [0, length] x {0}, total mass 1."""
    if n < 3:
        raise ValueError("segment needs n >= 3")
    u = np.linspace(0.0, length, n)
    return DiscreteMeasure(np.column_stack([u, np.zeros(n)]), np.full(n, 1.0 / n))


def circle(n: int, radius: float = 1.0, noise: float = 0.0, seed: int = 0) -> DiscreteMeasure:
    """n equally spaced unit-mass points on the circle of the given radius,
    optionally with radial noise uniform in [-noise, noise]."""
    if n < 3:
        raise ValueError("circle needs n >= 3")
    if not radius > 0 or noise < 0:
        raise ValueError("radius must be positive and noise nonnegative")
    theta = 2 * np.pi * np.arange(n) / n
    r = np.full(n, float(radius))
    if noise > 0:
        r = r + np.random.default_rng(seed).uniform(-noise, noise, n)
    return DiscreteMeasure(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))


def random_lipschitz_function(rng: np.random.Generator, slope_cap: float, modes: int = 6, band=(8.0, 16.0)):
    """Random trigonometric sum on [0, 1] rescaled so its slope never
    exceeds ``slope_cap``; returns (f, f')."""
    freq = rng.uniform(*band, modes)
    phase = rng.uniform(0, 2 * np.pi, modes)
    amp = rng.uniform(0.5, 1.0, modes) / freq

    def raw(u):
        return np.sin(2 * np.pi * np.multiply.outer(u, freq) + phase) @ amp

    def raw_d(u):
        return (2 * np.pi * freq * np.cos(2 * np.pi * np.multiply.outer(u, freq) + phase)) @ amp

    fine = np.linspace(0.0, 1.0, 20001)
    # sampled max plus the worst drift of f' between samples
    curv = float(np.sum(amp * (2 * np.pi * freq) ** 2))
    top = float(np.abs(raw_d(fine)).max()) + curv * (fine[1] - fine[0]) / 2
    scale = slope_cap / top if top > 0 else 0.0
    return (lambda u: scale * raw(u)), (lambda u: scale * raw_d(u))


def lipschitz_graph(n: int, slope_cap: float = 0.05, noise: float = 1e-3, seed: int = 0) -> DiscreteMeasure:
    """n points (u, f(u)) at equally spaced u in [0, 1] on a seeded random
    function with |f'| <= slope_cap, displaced along the graph normal by
    noise uniform in [-noise, noise]; total mass 1."""
    if n < 3:
        raise ValueError("lipschitz_graph needs n >= 3")
    if slope_cap < 0 or noise < 0:
        raise ValueError("slope cap and noise must be nonnegative")
    rng = np.random.default_rng(seed)
    f, df = random_lipschitz_function(rng, slope_cap)
    u = np.linspace(0.0, 1.0, n)
    pts = np.column_stack([u, f(u)])
    if noise > 0:
        slope = df(u)
        normal = np.column_stack([-slope, np.ones(n)]) / np.sqrt(1 + slope**2)[:, None]
        pts = pts + rng.uniform(-noise, noise, n)[:, None] * normal
    return DiscreteMeasure(pts, np.full(n, 1.0 / n))


def cantor4(generation: int) -> DiscreteMeasure:
    """Centres of the 4**g squares of the g-th four-corner Cantor iterate of
    [0, 1]^2 (ratio 1/4, corner squares kept), each of mass 4**-g."""
    if generation < 1:
        raise ValueError("generation must be >= 1")
    corners = np.array([[0.0, 0.0], [0.75, 0.0], [0.0, 0.75], [0.75, 0.75]])
    origins = np.zeros((1, 2))
    side = 1.0
    for _ in range(generation):
        origins = (origins[:, None, :] + side * corners[None, :, :]).reshape(-1, 2)
        side /= 4.0
    pts = origins + side / 2.0
    n = len(pts)
    return DiscreteMeasure(pts, np.full(n, 1.0 / n))


def generate(kind: str, n: int | None = None, generation: int | None = None, noise: float = 0.0, seed: int = 0, **extra) -> DiscreteMeasure:
    if kind == "segment":
        return segment(n if n is not None else 100)
    if kind == "circle":
        return circle(n if n is not None else 200, extra.get("radius", 1.0), noise, seed)
    if kind == "lipschitz_graph":
        return lipschitz_graph(n if n is not None else 500, extra.get("slope_cap", 0.05), noise, seed)
    if kind == "cantor4":
        return cantor4(generation if generation is not None else 4)
    raise ValueError(f"unknown generator {kind!r}; expected one of {', '.join(KINDS)}")
