import csv
import json
import math

import numpy as np
import pytest

from menger_rect import generators
from menger_rect.beta import gamma_carleson
from menger_rect.cloud_io import read_cloud, read_csv, write_cloud
from menger_rect.curvature import carleson_lhs, total_curvature
from menger_rect.graph import certified_lipschitz
from menger_rect.params import ConfigError, Parameters, ScaleGrid
from menger_rect.pipeline import RunConfig, StageError, run_pipeline


def _table(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) if k != "label" else r[k] for r in rows], dtype=object if k == "label" else float) for k in rows[0]}


@pytest.fixture(scope="module")
def graph_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = RunConfig(
        source={"generator": "lipschitz_graph", "n": 160, "noise": 1e-3},
        scales=ScaleGrid.with_count(12).spec(),
        out_dir=str(out),
        emit_plots=True,
        seed=3,
    )
    return cfg, run_pipeline(cfg), out


def test_generators_cantor_points_and_masses():
    for g in (1, 2, 3):
        mu = generators.cantor4(g)
        assert len(mu) == 4**g
        assert np.all((mu.points >= 0) & (mu.points <= 1))
        np.testing.assert_array_equal(mu.masses, np.full(4**g, 4.0**-g))


def test_generator_curvature_examples():
    assert total_curvature(generators.segment(3)).total == 0.0
    assert total_curvature(generators.circle(4, 1.0)).total == pytest.approx(24.0, rel=1e-12)


def test_generators_are_seed_reproducible():
    a = generators.lipschitz_graph(200, 0.05, 1e-3, seed=9)
    b = generators.lipschitz_graph(200, 0.05, 1e-3, seed=9)
    c = generators.lipschitz_graph(200, 0.05, 1e-3, seed=10)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)
    a = generators.circle(50, 2.0, 0.01, seed=1)
    assert np.array_equal(a.points, generators.circle(50, 2.0, 0.01, seed=1).points)


def test_lipschitz_generator_respects_slope_cap():
    rng = np.random.default_rng(4)
    f, df = generators.random_lipschitz_function(rng, 0.05)
    u = np.linspace(0, 1, 50001)
    assert np.abs(np.diff(f(u)) / np.diff(u)).max() <= 0.05 + 1e-9


@pytest.mark.parametrize("bad", [dict(kind="segment", n=2), dict(kind="cantor4", generation=0), dict(kind="blob")])
def test_generator_rejects_bad_sizes(bad):
    with pytest.raises(ValueError):
        generators.generate(**bad)


@pytest.mark.parametrize("suffix", [".csv", ".json"])
def test_cloud_round_trip(tmp_path, suffix):
    mu = generators.lipschitz_graph(77, seed=2)
    path = tmp_path / f"cloud{suffix}"
    write_cloud(mu, path)
    back = read_cloud(path)
    assert np.array_equal(back.points, mu.points)
    assert np.array_equal(back.masses, mu.masses)


def test_segment_report():
    cfg = RunConfig(source={"generator": "segment", "n": 120}, scales=ScaleGrid.with_count(10).spec())
    rep = run_pipeline(cfg)
    assert rep["F_tilde_fraction"] == 1.0
    assert rep["graph"]["lipschitz_constant"] == 0.0
    assert rep["carleson"]["beta"]["lhs"] == 0.0
    assert rep["curvature"]["total"] == 0.0
    assert not rep["flags"]["non_graph"]


def test_cantor_report_flags_non_graph():
    cfg = RunConfig(source={"generator": "cantor4", "generation": 3}, scales=ScaleGrid.with_count(10).spec())
    rep = run_pipeline(cfg)
    assert rep["flags"]["non_graph"]
    assert rep["F_tilde_fraction"] <= 0.9
    fr = rep["partition"]["mass_fractions"]
    assert fr["F1"] + fr["F2"] + fr["F3"] >= 0.5


def test_report_is_reproducible(graph_run):
    cfg, rep, _ = graph_run
    again = run_pipeline(RunConfig(**{**cfg.__dict__, "out_dir": None}))
    assert again.to_json(include_runtime=False) == rep.to_json(include_runtime=False)


def test_persisted_files(graph_run):
    _, _, out = graph_run
    for name in ("cloud_normalized.csv", "beta_table.csv", "points.csv", "graph_samples.csv", "whitney.csv", "report.json", "plot.svg"):
        assert (out / name).is_file(), name
    assert (out / "plot.svg").read_text().startswith("<svg")
    data = json.loads((out / "report.json").read_text())
    assert "runtime" in data and "prepare" not in data


def test_report_numbers_recompute_from_csvs(graph_run):
    cfg, rep, out = graph_run
    data = json.loads((out / "report.json").read_text())
    params = Parameters().with_overrides(**data["config"]["params"])
    assert params == cfg.params
    grid = ScaleGrid.parse(data["config"]["scales"])
    mu = read_csv(out / "cloud_normalized.csv")
    pts = _table(out / "points.csv")
    beta = _table(out / "beta_table.csv")
    samples = _table(out / "graph_samples.csv")
    mass = pts["mass"]
    total = math.fsum(mass)

    assert total_curvature(mu).total == pytest.approx(data["curvature"]["total"], rel=1e-12)
    assert math.fsum(mass[pts["in_F_tilde"] == 1]) / total == pytest.approx(data["F_tilde_fraction"], rel=1e-12)
    assert math.fsum(mass[pts["in_G"] == 1]) == pytest.approx(data["graph"]["G_mass"], rel=1e-12, abs=1e-15)
    for lab, frac in data["partition"]["mass_fractions"].items():
        assert math.fsum(mass[pts["label"] == lab]) / total == pytest.approx(frac, rel=1e-12, abs=1e-15)
        assert int((pts["label"] == lab).sum()) == data["partition"]["histogram"][lab]
    assert int(beta["in_S"].sum()) == data["region"]["size"]
    assert pts["h"].min() == data["region"]["h"]["min"]

    n, S = len(mass), grid.scales.size
    b1 = beta["beta1"].reshape(n, S)
    dt = beta["delta_tilde"].reshape(n, S)
    lhs = carleson_lhs(mass, b1, dt, params.delta, grid.log_weight)
    assert lhs == pytest.approx(data["carleson"]["beta"]["lhs"], rel=1e-12, abs=1e-300)

    values = np.column_stack([samples[k] for k in samples if k.startswith("A_")])
    assert certified_lipschitz(samples["p"], values) == pytest.approx(data["graph"]["lipschitz_constant"], rel=1e-12, abs=1e-300)
    U0 = (float(pts["p"].min()), float(pts["p"].max()))
    integral = gamma_carleson(samples["p"], values, U0, grid)
    assert integral == pytest.approx(data["carleson"]["gamma"]["integral"], rel=1e-9, abs=1e-300)


def test_stage_errors_name_the_stage(tmp_path):
    bad = tmp_path / "cloud.csv"
    bad.write_text("x_1,x_2,mass\n0,0,1\n1,nan,1\n")
    with pytest.raises((StageError, ConfigError)) as info:
        run_pipeline(RunConfig(source={"input": str(bad)}))
    if isinstance(info.value, StageError):
        assert info.value.stage == "load"
