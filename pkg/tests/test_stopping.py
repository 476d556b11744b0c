import math

import numpy as np
import pytest

from menger_rect.generators import lipschitz_graph, segment
from menger_rect.geometry import Line, angle_to_direction
from menger_rect.graph import choose_base_line
from menger_rect.measure import DiscreteMeasure, normalize
from menger_rect.params import Parameters, ScaleGrid
from menger_rect.stopping import (
    DistanceFunctions,
    beta_sweep,
    build_region,
    compute_h,
    dist_D,
    dist_d,
    extended_scale,
    in_s_total,
    ladder_reach,
    partition,
)

P = Parameters()
E1 = Line(np.zeros(2), np.array([1.0, 0.0]))


def _pipeline(mu, grid, base=None):
    if base is None:
        base = choose_base_line(mu, P)["line"]
    sweep = beta_sweep(mu, grid, P, base)
    region = build_region(mu, base, P, sweep)
    return sweep, region, partition(mu, region, P, sweep)


def _segment_cloud(n=200, length=1.0):
    u = np.linspace(-length / 2, length / 2, n)
    return DiscreteMeasure(np.column_stack([u, np.zeros(n)]), np.full(n, 40.0 * length / n))


@pytest.fixture(scope="module")
def halo_case():
    n = 200
    u = np.linspace(-0.5, 0.5, n)
    seg = np.column_stack([u, np.zeros(n)])
    halo = np.array([[-0.2, 0.3], [0.2, -0.3], [0.0, 0.35]])
    mu = DiscreteMeasure(np.vstack([seg, halo]), np.r_[np.full(n, 40.0 / n), np.full(3, 4e-3)])
    grid = ScaleGrid.with_count(12)
    return mu, grid, *_pipeline(mu, grid)


@pytest.fixture(scope="module")
def graph_case():
    mu, _ = normalize(lipschitz_graph(150, seed=3))
    grid = ScaleGrid.with_count(12)
    return mu, grid, *_pipeline(mu, grid)


def test_ladder_reach_for_default_ratio():
    # 4 * sqrt(2) = sqrt(2) ** 5
    assert ladder_reach(math.sqrt(2)) == 5
    assert ladder_reach(2.0) == 3


def test_extended_scale_beyond_grid():
    grid = ScaleGrid.with_count(4)
    assert extended_scale(grid, 0) == 5.0
    assert extended_scale(grid, -2) == pytest.approx(10.0)


def test_in_s_total_dense_aligned_window():
    mu = _segment_cloud()
    out = in_s_total(mu, (0.0, 0.0), 0.05, E1, P)
    assert out["member"]
    assert angle_to_direction(out["witness"].direction, E1.direction) < 1e-12


def test_in_s_total_empty_window():
    mu = _segment_cloud()
    out = in_s_total(mu, (0.0, 3.0), 0.05, E1, P)
    assert not out["member"] and out["witness"] is None


def test_in_s_total_perpendicular_window():
    mu = _segment_cloud()
    e2 = Line(np.zeros(2), np.array([0.0, 1.0]))
    out = in_s_total(mu, (0.0, 0.0), 0.05, e2, P)
    assert out["density"] >= P.delta / 2 and out["beta1"] < 2 * P.epsilon
    assert not out["member"]


def test_in_s_total_matches_sweep_membership(graph_case):
    mu, grid, sweep, region, _ = graph_case
    base = region.base
    rng = np.random.default_rng(0)
    for _ in range(30):
        i = int(rng.integers(len(mu)))
        s = int(rng.integers(len(grid)))
        out = in_s_total(mu, mu.points[i], float(grid.scales[s]), base, P)
        assert out["member"] == bool(sweep.member[i, s])


def test_segment_on_base_line_is_all_zero_set():
    mu = _segment_cloud()
    grid = ScaleGrid.with_count(10)
    sweep, region, labels = _pipeline(mu, grid, E1)
    assert np.all(region.h == P.floor_for(grid))
    assert set(labels.labels) == {"Z"}
    # S holds every pair with adequate density
    assert np.array_equal(region.mask, sweep.density >= P.delta / 2)


def _oracle_h(mu, grid, base):
    """Largest extended-ladder t with some failing (y, tau), tau >= t / (4 rho)
    and x in B(y, tau / 3), evaluated pair by pair with in_s_total."""
    rho = grid.ratio
    floor = P.floor_for(grid)
    n = len(mu)
    h = np.full(n, floor)
    fails = []
    for s, tau in enumerate(grid.scales):
        for y in range(n):
            if not in_s_total(mu, mu.points[y], float(tau), base, P)["member"]:
                fails.append((y, float(tau)))
    for x in range(n):
        for y, tau in fails:
            if np.linalg.norm(mu.points[x] - mu.points[y]) <= tau / 3:
                j = math.ceil(math.log(grid.t_max / (4 * rho * tau)) / math.log(rho) - 1e-9)
                h[x] = max(h[x], grid.t_max * rho ** (-j))
    return h


def test_h_jumps_for_far_atom():
    n = 40
    u = np.linspace(-0.5, 0.5, n)
    pts = np.vstack([np.column_stack([u, np.zeros(n)]), [[0.45, 0.6]]])
    mu = DiscreteMeasure(pts, np.r_[np.full(n, 40.0 / n), [1.0]])
    grid = ScaleGrid.with_count(8)
    sweep = beta_sweep(mu, grid, P, E1)
    h = compute_h(mu, sweep, P)
    want = _oracle_h(mu, grid, E1)
    np.testing.assert_allclose(h, want, rtol=1e-12)
    assert h[-1] > P.floor_for(grid)


def test_h_matches_oracle_on_graph_cloud(graph_case):
    mu, grid, sweep, region, _ = graph_case
    sub = np.arange(0, len(mu), 3)
    small = DiscreteMeasure(mu.points[sub], mu.masses[sub])
    g = ScaleGrid.with_count(8)
    sw = beta_sweep(small, g, P, region.base)
    np.testing.assert_allclose(compute_h(small, sw, P), _oracle_h(small, g, region.base), rtol=1e-12)


def _all_regions(halo_case, graph_case):
    return [(c[0], c[1], c[2], c[3], c[4]) for c in (halo_case, graph_case)]


def test_region_coherence_and_witness_angles(halo_case, graph_case):
    for mu, grid, sweep, region, _ in _all_regions(halo_case, graph_case):
        assert region.is_coherent()
        for (i, s), line in region.lines.items():
            assert angle_to_direction(line.direction, region.base.direction) <= P.alpha + 1e-12


def test_minimal_balls_belong_to_region(halo_case, graph_case):
    for mu, grid, sweep, region, _ in _all_regions(halo_case, graph_case):
        for i, hx in enumerate(region.h):
            if hx <= grid.t_max * (1 + 1e-12):
                s = grid.index_at_least(hx)
                assert grid.scales[s] == pytest.approx(hx)
                assert region.mask[i, s]


def test_two_offset_clusters_minimal_balls():
    u = np.linspace(0, 0.3, 50)
    pts = np.vstack([np.column_stack([u, 0 * u]), np.column_stack([u + 0.7, 0 * u + 0.08])])
    mu, _ = normalize(DiscreteMeasure(pts, np.ones(100)))
    grid = ScaleGrid.with_count(12)
    sweep, region, labels = _pipeline(mu, grid)
    assert len(set(np.round(region.h, 9))) >= 1
    for i, hx in enumerate(region.h):
        if hx <= grid.t_max:
            assert region.mask[i, grid.index_at_least(hx)]
    assert labels.anomalies.size == 0


def test_halo_points_are_f1_with_valid_witness(halo_case):
    mu, grid, sweep, region, labels = halo_case
    rho = grid.ratio
    for x in range(len(mu) - 3, len(mu)):
        assert labels.labels[x] == "F1"
        y, s = labels.witness[x]
        tau = float(grid.scales[s])
        hx = region.h[x]
        assert hx / (5 * rho) * (1 - 1e-12) <= tau <= hx * rho / 2 * (1 + 1e-12)
        assert np.linalg.norm(mu.points[x] - mu.points[y]) <= tau / 2
        assert mu.density(mu.points[y], tau) <= P.delta


def test_steep_spur_is_never_zero_set():
    n = 300
    u = np.linspace(-0.5, 0.5, n)
    main = np.column_stack([u, np.zeros(n)])
    v = np.linspace(0.02, 0.2, 40)
    spur = np.column_stack([0.1 + 0 * v, v])
    mu = DiscreteMeasure(np.vstack([main, spur]), np.full(n + 40, 40.0 / n))
    grid = ScaleGrid.with_count(14)
    sweep, region, labels = _pipeline(mu, grid, E1)
    spur_labels = set(labels.labels[n:])
    assert "Z" not in spur_labels
    assert spur_labels <= {"F1", "F2", "F3"}
    for x in range(n, n + 40):
        y, s = labels.witness[x]
        lab = labels.labels[x]
        tau = float(grid.scales[s])
        if lab == "F3":
            assert sweep.angle[y, s] >= 0.75 * P.alpha
        if lab == "F2":
            assert sweep.beta1[y, s] >= P.epsilon
        assert np.linalg.norm(mu.points[x] - mu.points[y]) <= tau / 2


def test_partition_exhaustive_on_fixtures(halo_case, graph_case):
    for mu, grid, sweep, region, labels in _all_regions(halo_case, graph_case):
        assert labels.anomalies.size == 0
        hist = labels.histogram()
        assert sum(hist.values()) == len(mu)
        assert math.fsum(labels.mass_fractions(mu.masses).values()) == pytest.approx(1.0)


def test_zero_set_equals_small_d(halo_case, graph_case):
    for mu, grid, sweep, region, labels in _all_regions(halo_case, graph_case):
        if region.is_empty:
            continue
        d = DistanceFunctions(region).d(mu.points)
        floor = P.floor_for(grid)
        np.testing.assert_array_equal(region.zero_set(), d <= floor * (1 + 1e-9))


def test_d_below_h_and_h_lower_envelope(halo_case, graph_case):
    # h(x) >= d(x) and d is 1-Lipschitz, so h(x) >= d(y) - |x - y| for all pairs
    for mu, grid, sweep, region, labels in _all_regions(halo_case, graph_case):
        if region.is_empty:
            continue
        d = DistanceFunctions(region).d(mu.points)
        ok = region.h <= grid.t_max
        assert np.all(d[ok] <= region.h[ok] * (1 + 1e-12))
        gaps = np.linalg.norm(mu.points[:, None] - mu.points[None], axis=2)
        lower = (d[None, :] - gaps)[ok]
        assert np.all(region.h[ok][:, None] >= lower - 1e-12)


def test_distance_examples():
    mu = _segment_cloud(50)
    grid = ScaleGrid.with_count(8)
    _, region, _ = _pipeline(mu, grid, E1)
    x = 7
    assert dist_d(region, mu.points[x]) == pytest.approx(P.floor_for(grid))
    # single pair region
    mask = np.zeros_like(region.mask)
    mask[x, 0] = True
    single = type(region)(region.grid, region.base, mask, region.h, region.floor, region.points, {})
    probe = np.array([0.3, 0.4])
    assert dist_d(single, probe) == pytest.approx(np.linalg.norm(mu.points[x] - probe) + 5.0)
    assert dist_D(single, 0.25) == pytest.approx(abs(0.25 - float(mu.points[x] @ E1.direction)) + 5.0)


def test_distance_functions_are_1_lipschitz(graph_case):
    mu, grid, sweep, region, _ = graph_case
    dist = DistanceFunctions(region)
    rng = np.random.default_rng(9)
    a = rng.uniform(-1.5, 1.5, size=(10_000, 2))
    b = a + rng.normal(scale=0.3, size=(10_000, 2))
    assert np.all(np.abs(dist.d(a) - dist.d(b)) <= np.linalg.norm(a - b, axis=1) + 1e-12)
    p = rng.uniform(-3, 3, 10_000)
    q = rng.uniform(-3, 3, 10_000)
    assert np.all(np.abs(dist.D(p) - dist.D(q)) <= np.abs(p - q) + 1e-12)


def test_distance_on_empty_region_raises():
    mu = _segment_cloud(20)
    grid = ScaleGrid.with_count(4)
    _, region, _ = _pipeline(mu, grid, E1)
    empty = type(region)(region.grid, region.base, np.zeros_like(region.mask), region.h, region.floor, region.points, {})
    with pytest.raises(ValueError):
        DistanceFunctions(empty)
