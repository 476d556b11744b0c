import math

import numpy as np
import pytest

from menger_rect.generators import circle, lipschitz_graph, segment
from menger_rect.geometry import Ball, BaseFrame, Line, angle_to_direction
from menger_rect.graph import (
    BALL_CONSTANT,
    GraphError,
    PartitionOfUnity,
    WhitneyInterval,
    affine_from_line,
    build_graph,
    certified_lipschitz,
    choose_base_line,
    near_graph_diagnostics,
    piece_coherence,
    second_derivative_constant,
    select_ball,
    smoothstep5,
    whitney_intervals,
    whitney_report,
)
from menger_rect.measure import DiscreteMeasure, normalize
from menger_rect.params import Parameters, ScaleGrid
from menger_rect.stopping import DistanceFunctions, beta_sweep, build_region

P = Parameters()
E1 = Line(np.zeros(2), np.array([1.0, 0.0]))


class ConeDistance:
    """Stand-in for D built from cones |p - proj_j| + tmin_j."""

    def __init__(self, proj, tmin):
        self.proj = np.asarray(proj, float)
        self.tmin = np.asarray(tmin, float)

    def D(self, p):
        arr = np.atleast_1d(np.asarray(p, float))
        out = (np.abs(arr[:, None] - self.proj[None]) + self.tmin[None]).min(axis=1)
        return float(out[0]) if np.ndim(p) == 0 else out


def _region(mu, grid, base):
    sweep = beta_sweep(mu, grid, P, base)
    return build_region(mu, base, P, sweep)


@pytest.fixture(scope="module")
def noisy_graph():
    mu, _ = normalize(lipschitz_graph(300, slope_cap=0.05, noise=1e-3, seed=5))
    grid = ScaleGrid.with_count(14)
    base = choose_base_line(mu, P)["line"]
    region = _region(mu, grid, base)
    return mu, region, build_graph(mu, region, P)


def test_base_line_on_segment():
    mu, _ = normalize(segment(100))
    out = choose_base_line(mu, P)
    assert out["beta1"] == pytest.approx(0.0, abs=1e-12)
    assert angle_to_direction(out["line"].direction, np.array([1.0, 0.0])) < 1e-12
    assert out["within_epsilon"]


def test_base_line_on_noisy_graph_is_bounded_by_noise_and_amplitude():
    raw = lipschitz_graph(400, slope_cap=0.05, noise=1e-3, seed=2)
    mu, tr = normalize(raw)
    out = choose_base_line(mu, P)
    # the u-axis is a candidate: mean distance <= max |A| + noise (normalised units)
    amp = float(np.abs(raw.points[:, 1]).max()) * tr.scale
    mass = mu.ball_mass(Ball(out["x0"], P.k))
    assert out["beta1"] <= mass * amp + 1e-12


def test_base_line_on_circle_is_flagged():
    mu, _ = normalize(circle(200))
    out = choose_base_line(mu, P)
    assert out["beta1"] > P.epsilon
    assert not out["within_epsilon"]


def test_base_line_tie_break_lowest_index():
    mu = DiscreteMeasure([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]], [1.0, 1.0, 1.0])
    assert choose_base_line(mu, P)["index"] == 0


def test_whitney_constant_distance_gives_1_over_32():
    dist = ConeDistance(np.linspace(-1, 2, 30001), np.ones(30001))
    out = whitney_intervals(dist, (0.0, 1.0), 1e-3)
    assert out
    assert {R.length for R in out} == {1 / 32}
    assert out[0].lo <= 0.0 and out[-1].hi >= 1.0


def test_whitney_zero_distance_gives_nothing():
    floor = 1e-3
    dist = ConeDistance(np.linspace(-1, 2, 30001), np.full(30001, floor))
    assert whitney_intervals(dist, (0.0, 1.0), floor) == []


def test_whitney_abs_distance_bounds():
    dist = ConeDistance([0.0], [0.0])
    out = whitney_intervals(dist, (-1.0, 1.0), 1e-4)
    lo = np.array([R.lo for R in out])
    hi = np.array([R.hi for R in out])
    assert np.all(lo[1:] >= hi[:-1])
    for R in out:
        a, b = R.dilate(10)
        pp = np.linspace(a, b, 2001)
        vals = np.abs(pp)
        assert vals.min() >= 10 * R.length
        assert vals.max() <= 60 * R.length
        # sizes grow in proportion to the distance from 0
        mid = abs(R.center)
        assert mid / 60 <= R.length <= mid / 10
    assert whitney_report(out, dist)["bounds_ok"]


def test_whitney_interval_geometry():
    R = WhitneyInterval(3, -2)
    assert (R.lo, R.hi, R.length) == (-0.25, -0.125, 0.125)
    assert R.dilate(2) == (-0.3125, -0.0625)
    kids = R.children()
    assert kids[0].lo == R.lo and kids[1].hi == R.hi


def test_smoothstep_endpoints_and_monotone():
    u = np.linspace(-0.5, 1.5, 201)
    s = smoothstep5(u)
    assert s[0] == 0.0 and s[-1] == 1.0
    assert np.all(np.diff(s) >= 0)


def test_partition_single_interval_and_symmetric_pair():
    one = PartitionOfUnity.from_intervals([WhitneyInterval(0, 0)])
    p = np.linspace(-0.5, 1.5, 51)  # 2R
    np.testing.assert_allclose(one.weights(p)[0], 1.0)
    assert one.bump(0, np.array([2.0]))[0] == 0.0  # off 3R
    two = PartitionOfUnity.from_intervals([WhitneyInterval(0, 0), WhitneyInterval(0, 1)])
    w = two.weights(np.array([1.0]))
    np.testing.assert_allclose(w[:, 0], [0.5, 0.5])


def test_partition_sums_to_one_on_covered_set(noisy_graph):
    mu, region, graph = noisy_graph
    bumps = graph.bumps
    a = min(pc.interval.lo for pc in graph.pieces)
    b = max(pc.interval.hi for pc in graph.pieces)
    p = np.random.default_rng(0).uniform(a, b, 10_000)
    covered = np.zeros(p.size, dtype=bool)
    for pc in graph.pieces:
        covered |= (p >= pc.interval.lo) & (p <= pc.interval.hi)
    w = bumps.weights(p[covered])
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-12)
    assert np.all(w >= 0)


def test_select_ball_on_segment():
    mu, _ = normalize(segment(200))
    grid = ScaleGrid.with_count(12)
    base = choose_base_line(mu, P)["line"]
    region = _region(mu, grid, base)
    dist = DistanceFunctions(region)
    frame = BaseFrame(base)
    for R in whitney_intervals(dist, (-10, 10), region.floor)[::7]:
        X, s, ball = select_ball(region, dist, R)
        assert region.mask[X, s]
        assert R.length <= 2 * ball.radius * (1 + 1e-12) <= BALL_CONSTANT * R.length * (1 + 1e-12)
        p, _ = frame.project(ball.center)
        assert max(0.0, R.lo - float(p), float(p) - R.hi) <= BALL_CONSTANT * R.length


def test_affine_from_line_cap_and_orthogonal():
    frame = BaseFrame(E1)
    steep = Line(np.zeros(2), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        affine_from_line(steep, frame, math.tan(0.2))
    with pytest.raises(GraphError):
        affine_from_line(Line(np.zeros(2), np.array([0.0, 1.0])), frame, 10.0)
    amap = affine_from_line(Line(np.array([0.0, 0.3]), np.array([1.0, 0.1])), frame, 1.0)
    np.testing.assert_allclose(amap(np.array([0.0, 1.0]))[:, 0], [0.3, 0.4])


def test_graph_for_cloud_on_base_line():
    u = np.linspace(-0.5, 0.5, 150)
    mu = DiscreteMeasure(np.column_stack([u, 0 * u]), np.full(150, 40 / 150))
    region = _region(mu, ScaleGrid.with_count(10), E1)
    graph = build_graph(mu, region, P)
    assert np.all(graph.values == 0.0)
    assert graph.lipschitz_constant == 0.0
    diag = near_graph_diagnostics(mu, graph, region, P)
    assert diag["F_tilde_fraction"] == 1.0 and diag["G_mass"] == 0.0


def test_graph_for_tilted_line_has_slope_tan_theta():
    th = 0.12
    u = np.linspace(-0.5, 0.5, 150)
    mu = DiscreteMeasure(np.column_stack([u * math.cos(th), u * math.sin(th)]), np.full(150, 40 / 150))
    region = _region(mu, ScaleGrid.with_count(10), E1)
    graph = build_graph(mu, region, P)
    p = np.linspace(-0.45 * math.cos(th), 0.45 * math.cos(th), 101)
    np.testing.assert_allclose(graph.evaluate(p)[:, 0], math.tan(th) * p, atol=1e-6)
    for pc in graph.pieces:
        assert pc.affine.slope[0] == pytest.approx(math.tan(th), abs=1e-6)


def test_noisy_graph_lipschitz_and_second_derivative(noisy_graph):
    # achieved constants recorded on this fixture: both are 0 at desk scale,
    # where every piece coincides with D0
    mu, region, graph = noisy_graph
    assert graph.lipschitz_constant <= 10 * P.alpha
    assert second_derivative_constant(graph, P.epsilon) <= 100.0
    coh = piece_coherence(graph, P.epsilon)
    assert coh["pairs"] > 0


def test_certified_lipschitz_is_adjacent_max():
    g = np.array([0.0, 1.0, 1.5, 3.0])
    v = np.array([[0.0], [0.2], [0.5], [0.5]])
    assert certified_lipschitz(g, v) == pytest.approx(0.6)


def test_graph_extension_tapers_outside_domain(noisy_graph):
    mu, region, graph = noisy_graph
    a, b = graph.domain
    far = graph.evaluate(np.array([a - 100.0, b + 100.0]))
    assert np.all(far == 0.0)


def test_diagnostics_per_point_table(noisy_graph):
    mu, region, graph = noisy_graph
    diag = near_graph_diagnostics(mu, graph, region, P)
    per = diag["per_point"]
    good = per["in_F_tilde"]
    assert diag["F_tilde_fraction"] == pytest.approx(math.fsum(mu.masses[good]) / mu.total_mass)
    assert not np.any(good & per["in_G"] & ~per["zero"])
    assert np.all(per["graph_distance"][good & ~per["zero"]] <= math.sqrt(P.epsilon) * per["d"][good & ~per["zero"]] + 1e-15)


def test_build_graph_rejects_empty_region():
    mu, _ = normalize(circle(50))
    grid = ScaleGrid.with_count(6)
    region = _region(mu, grid, E1)
    assert region.is_empty
    with pytest.raises(GraphError):
        build_graph(mu, region, P)


def test_whitney_neighbours_comparable_and_overlap_bounded():
    dist = ConeDistance([-0.3, 0.0, 0.41], [0.0, 0.002, 0.0])
    out = whitney_intervals(dist, (-1.0, 1.0), 1e-4)
    worst_ratio, worst_count = 1.0, 0
    for R in out:
        a, b = R.dilate(10)
        near = [S for S in out if S.dilate(10)[0] < b and S.dilate(10)[1] > a]
        worst_ratio = max(worst_ratio, max(max(S.length / R.length, R.length / S.length) for S in near))
        worst_count = max(worst_count, sum(1 for S in out if S.dilate(3)[0] < R.center < S.dilate(3)[1]))
    # achieved on this and simpler cones: ratio 2, overlap 4
    assert worst_ratio <= 2
    assert worst_count <= 4


def test_zero_set_points_lie_on_graph():
    # a kinked polyline: the fallback interpolant must pass through the kink
    u = np.linspace(-0.5, 0.5, 120)
    mu = DiscreteMeasure(np.column_stack([u, 1e-3 * np.maximum(u - 0.2, 0.0)]), np.full(120, 40 / 120))
    region = _region(mu, ScaleGrid.with_count(10), E1)
    graph = build_graph(mu, region, P)
    diag = near_graph_diagnostics(mu, graph, region, P)
    zero = diag["per_point"]["zero"]
    assert zero.any()
    assert diag["per_point"]["graph_distance"][zero].max() <= 1e-12


def test_modifying_far_piece_leaves_value_bit_identical(noisy_graph):
    mu, region, graph = noisy_graph
    i = len(graph.pieces) // 2
    lo, hi = graph.bumps.support(i)
    a, b = graph.domain
    p = np.linspace(a, b, 997)
    p = p[(p <= lo) | (p >= hi)]
    before = graph.evaluate_raw(p)
    old = graph.pieces[i]
    shifted = type(old.affine)(old.affine.slope + 1.0, old.affine.intercept + 1.0)
    graph.pieces[i] = type(old)(old.interval, shifted, old.ball, old.center_index, old.scale_index, old.line)
    try:
        after = graph.evaluate_raw(p)
    finally:
        graph.pieces[i] = old
    assert np.array_equal(before, after)


def test_whitney_covers_when_distance_is_far_above_floor():
    # every cone sits at 3.5 while the floor is 0.3: nothing is zero set
    dist = ConeDistance(np.linspace(-0.5, 0.5, 11), np.full(11, 3.5))
    out = whitney_intervals(dist, (-1.0, 1.0), 0.3)
    assert out[0].lo <= -1.0 and out[-1].hi >= 1.0
    assert all(a.hi == b.lo for a, b in zip(out, out[1:]))
