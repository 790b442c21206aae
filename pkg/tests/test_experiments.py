import csv
import json

import numpy as np
import pytest

from climclust.clustering import kmedoids_restarts
from climclust.data import PlantedSpec, SyntheticSpec, center_global, generate_planted, generate_synthetic
from climclust.distances import L2, MLPC, DistanceSpec, distance_matrix
from climclust.errors import ConfigError, DataError
from climclust.evaluation import adjusted_rand_index, fidelity, within_index
from climclust.experiments import (
    TABLE1,
    TABLE2,
    cmd_cluster_report,
    cmd_compare_pipelines,
    cmd_group_experiment,
    group_members,
    named_pipeline,
    read_representatives,
    reference_spec,
    write_cluster_report,
    write_comparison,
    write_group_report,
)


def _scenarios(**kw):
    base = dict(n_locations=5, n_scenarios=8, T=128, rng_seed=3)
    base.update(kw)
    return generate_synthetic(SyntheticSpec(**base))


@pytest.fixture(scope="module")
def planted():
    return generate_planted(PlantedSpec(n_series=30, n_groups=3, T=256, noise_std=0.2, rng_seed=5))


# ---------------------------------------------------------------------------
# names


def test_named_pipelines_cover_tables():
    for name in set(TABLE1) | set(TABLE2):
        assert named_pipeline(name).name == name
    assert named_pipeline("HaarL3").rep_params == {"level": 3}
    assert named_pipeline("MLPC", k_max=12).distance.k_max == 12
    with pytest.raises(ConfigError):
        named_pipeline("wavelet")
    with pytest.raises(ConfigError):
        reference_spec("cosine")


def test_series_distance_needs_series_features():
    from climclust.experiments import PipelineSpec
    with pytest.raises(ConfigError):
        PipelineSpec("bad", "fourier_energy", DistanceSpec(MLPC, k_max=2))


# ---------------------------------------------------------------------------
# group experiment


def test_group_members_balanced_and_disjoint():
    ds = _scenarios()
    ref = ds.index_of(0, 0)
    a, b = group_members(ds, ref, seed=1)
    assert a.size == b.size == 4
    assert np.all(ds.location_ids[a] == 0) and np.all(ds.scenario_ids[a] != 0)
    assert np.all(ds.scenario_ids[b] == 0) and np.all(ds.location_ids[b] != 0)
    a2, b2 = group_members(ds, ref, seed=1)
    assert np.array_equal(a, a2) and np.array_equal(b, b2)


def test_group_members_need_both_groups():
    ds = _scenarios(n_locations=1)
    with pytest.raises(DataError):
        group_members(ds, 0, seed=0)


def test_offsets_only_mean_separates_locations():
    ds = _scenarios(scenario_shape_amplitude=0.0, noise_std=0.0)
    rep = cmd_group_experiment(ds, (0, 0), distances=("Mean", "L2"))
    for name in ("Mean", "L2"):
        r = rep.results[name]
        np.testing.assert_allclose(r.distance_a, 0.0, atol=1e-9)
        assert np.all(r.distance_b > 0.01)


def test_shapes_only_mlpc_separates_scenarios():
    ds = _scenarios(location_mean_spread=0.0, noise_std=0.0)
    rep = cmd_group_experiment(ds, (2, 1), distances=("MLPC", "DTW", "L2"), k_max=8)
    for name in ("MLPC", "DTW", "L2"):
        r = rep.results[name]
        np.testing.assert_allclose(r.distance_b, 0.0, atol=1e-9)
        assert np.all(r.distance_a > 1e-3)


def test_group_report_files(tmp_path):
    ds = _scenarios()
    rep = cmd_group_experiment(ds, (0, 0), distances=("Mean", "MLPC"), k_max=8, bins=7)
    write_group_report(rep, tmp_path)
    with (tmp_path / "histogram_MLPC.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 7
    r = rep.results["MLPC"]
    assert sum(int(x["count_A"]) for x in rows) == r.distance_a.size
    assert sum(int(x["count_B"]) for x in rows) == r.distance_b.size
    payload = json.loads((tmp_path / "group_report.json").read_text())
    assert payload["reference"] == {"scenario": 0, "location": 0, "index": 0}
    assert [d["name"] for d in payload["distances"]] == ["Mean", "MLPC"]
    assert payload["distances"][1]["mean_a"] == pytest.approx(r.mean_a)


# ---------------------------------------------------------------------------
# comparison


def test_single_pipeline_matches_manual_composition():
    ds = _scenarios()
    pipe = named_pipeline("L2", k=4, n_runs=3, seed=2)
    cmp = cmd_compare_pipelines(ds, [pipe], {"L2": reference_spec("L2")})
    (report,) = cmp.reports
    D = distance_matrix(center_global(ds).values, DistanceSpec(L2))
    best, _ = kmedoids_restarts(D, 4, n_runs=3, seed=2)
    assert cmp.outcomes[0].best.same_as(best)
    assert report.F == 1.0 and report.D_JS == 0.0
    assert report.W == within_index(D, best)
    assert report.I == 1.0 - report.W


def test_mean_pipeline_has_lower_fidelity():
    ds = _scenarios(location_mean_spread=0.5)
    pipes = [named_pipeline(n, k=4, n_runs=2) for n in ("L2", "mean")]
    cmp = cmd_compare_pipelines(ds, pipes, {"L2": reference_spec("L2")})
    by_name = {r.pipeline: r for r in cmp.reports}
    assert by_name["mean"].F < by_name["L2"].F == 1.0
    assert [r.pipeline for r in cmp.ranking("L2")][0] in {"L2", "mean"}
    D = cmp.references["L2"]
    F, _ = fidelity(D, cmp.outcomes[1].feature_distances, by_name["mean"].perplexity)
    assert F == by_name["mean"].F


def test_failures_are_isolated():
    ds = _scenarios()
    pipes = [named_pipeline("L2", k=3, n_runs=2), named_pipeline("mean", k=1000)]
    cmp = cmd_compare_pipelines(ds, pipes, {"L2": reference_spec("L2")})
    assert len(cmp.reports) == 1 and cmp.reports[0].pipeline == "L2"
    assert cmp.failures[0]["pipeline"] == "mean"
    assert "ConfigError" in cmp.failures[0]["error"]


def test_parallel_comparison_identical():
    ds = _scenarios()
    pipes = [named_pipeline(n, k=4, n_runs=2, k_max=8) for n in ("mean", "L2", "Haar95", "MLPC")]
    refs = {"L2": reference_spec("L2"), "MLPC": reference_spec("MLPC", k_max=8)}
    a = cmd_compare_pipelines(ds, pipes, refs, n_jobs=1)
    b = cmd_compare_pipelines(ds, pipes, refs, n_jobs=3)
    assert [r.to_dict() for r in a.reports] == [r.to_dict() for r in b.reports]


def test_comparison_files(tmp_path):
    ds = _scenarios()
    pipes = [named_pipeline(n, k=3, n_runs=2) for n in ("mean", "L2", "PCA95")]
    cmp = cmd_compare_pipelines(ds, pipes, {"L2": reference_spec("L2")})
    write_comparison(cmp, tmp_path)
    with (tmp_path / "ranking_L2.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    I = [float(r["I"]) for r in rows]
    assert I == sorted(I, reverse=True) and [int(r["rank"]) for r in rows] == [1, 2, 3]
    payload = json.loads((tmp_path / "index_reports.json").read_text())
    assert len(payload["reports"]) == 3 and payload["failures"] == []
    for name in ("mean", "L2", "PCA95"):
        assert (tmp_path / "pipelines" / name / "clustering.json").exists()
        runs = json.loads((tmp_path / "pipelines" / name / "runs.json").read_text())["runs"]
        assert len(runs) == 2


# ---------------------------------------------------------------------------
# cluster report


def test_cluster_report_recovers_planted_groups(planted):
    ds, labels = planted
    rep = cmd_cluster_report(ds, named_pipeline("MLPC", k=3, n_runs=3, k_max=16))
    assert adjusted_rand_index(rep.outcome.best.labels, labels) == 1.0
    assert len(rep.representatives) == 3
    for r in rep.representatives:
        assert np.all(np.abs(r.member_lags) <= 16)


def test_cluster_report_single_cluster(planted):
    ds, _ = planted
    rep = cmd_cluster_report(ds, named_pipeline("L2", k=1, n_runs=1))
    (only,) = rep.representatives
    assert sorted(only.members.tolist()) == list(range(ds.n_records))


def test_cluster_report_files_round_trip(planted, tmp_path):
    ds, _ = planted
    rep = cmd_cluster_report(ds, named_pipeline("MLPC", k=3, n_runs=2, k_max=16))
    write_cluster_report(rep, tmp_path)
    back = read_representatives(tmp_path)
    assert sorted(back) == [0, 1, 2]
    for r in rep.representatives:
        np.testing.assert_array_equal(back[r.cluster_id], r.series)
    lags = json.loads((tmp_path / "representatives_lags.json").read_text())
    assert lags["k_max"] == 16
    assert sum(len(c["members"]) for c in lags["clusters"]) == ds.n_records
    assert len(list((tmp_path / "clusters").glob("cluster_*.csv"))) == 3
