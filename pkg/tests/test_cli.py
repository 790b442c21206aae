import json
import subprocess
import sys

import jsonschema
import pytest
from referencing import Registry, Resource

from climclust import cli
from climclust.data import load_csv
from climclust.schemas import SCHEMA_NAMES, load_schema, schema_for

FAST = ["--small", "--k", "3", "--n-runs", "2", "--k-max", "16"]


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _registry():
    return Registry().with_resources(
        (f"{name}.schema.json", Resource.from_contents(load_schema(name))) for name in SCHEMA_NAMES
    )


def _validate_tree(root):
    registry = _registry()
    checked = 0
    for path in sorted(root.rglob("*.json")):
        name = schema_for(path)
        assert name is not None, f"no schema for {path.name}"
        validator = jsonschema.Draft202012Validator(load_schema(name), registry=registry)
        validator.validate(json.loads(path.read_text()))
        checked += 1
    return checked


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    out = {}
    out["generate"] = base / "gen"
    assert _run("generate", "--out", out["generate"], "--small") == 0
    out["group"] = base / "group"
    assert _run("group-experiment", "--out", out["group"], *FAST, "--distances", "Mean,L2,MLPC,DTW") == 0
    out["compare"] = base / "compare"
    assert _run("compare", "--out", out["compare"], *FAST, "--pipelines", "mean,L2,Haar95,MLPC",
                "--references", "L2,MLPC") == 0
    out["cluster"] = base / "cluster"
    assert _run("cluster", "--out", out["cluster"], *FAST, "--input", out["generate"] / "data.csv",
                "--labels", out["generate"] / "labels.csv") == 0
    for key in ("group", "compare", "cluster"):
        assert _run("report", "--from", out[key]) == 0
    return out


def test_every_schema_is_valid():
    for name in SCHEMA_NAMES:
        jsonschema.Draft202012Validator.check_schema(load_schema(name))


def test_emitted_json_matches_schemas(runs):
    total = sum(_validate_tree(d) for d in runs.values())
    assert total >= 15


def test_generate_outputs(runs):
    ds = load_csv(runs["generate"] / "data.csv")
    assert (ds.n_records, ds.length) == (60, 512)
    manifest = json.loads((runs["generate"] / "manifest.json").read_text())
    assert manifest["command"] == "generate"
    assert {o["path"] for o in manifest["outputs"]} == {"data.csv", "labels.csv"}


def test_cluster_recovers_labels(runs):
    summary = json.loads((runs["cluster"] / "cluster_summary.json").read_text())
    assert summary["ari_vs_labels"] is not None and summary["k"] == 3
    assert sum(summary["sizes"]) == 60


def test_report_figures(runs):
    assert len(list((runs["group"] / "figures").glob("histogram_*.png"))) == 4
    assert {p.name for p in (runs["compare"] / "figures").glob("*.png")} == {"ranking_L2.png", "ranking_MLPC.png"}
    assert len(list((runs["cluster"] / "figures").glob("cluster_*.png"))) == 3
    for key in ("group", "compare", "cluster"):
        assert (runs[key] / "figures" / "manifest.json").exists()


def _snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_reruns_are_byte_identical(tmp_path):
    args = ["compare", *FAST, "--pipelines", "mean,MLPC", "--references", "L2"]
    assert _run(*args, "--out", tmp_path / "a") == 0
    assert _run(*args, "--out", tmp_path / "b") == 0
    _run("report", "--from", tmp_path / "a")
    _run("report", "--from", tmp_path / "b")
    a, b = _snapshot(tmp_path / "a"), _snapshot(tmp_path / "b")
    # the report manifest records its source directory
    a.pop("figures/manifest.json"), b.pop("figures/manifest.json")
    assert a == b and "figures/ranking_L2.png" in a


def test_n_jobs_does_not_change_results(tmp_path):
    args = ["compare", *FAST, "--pipelines", "L2,MLPC,DTW", "--references", "MLPC"]
    assert _run(*args, "--out", tmp_path / "a", "--n-jobs", "1") == 0
    assert _run(*args, "--out", tmp_path / "b", "--n-jobs", "3") == 0
    a, b = _snapshot(tmp_path / "a"), _snapshot(tmp_path / "b")
    a.pop("manifest.json"), b.pop("manifest.json")
    assert a == b


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nk = 4\nn_runs = 2\nsmall = true\npipelines = mean\nreferences = L2\n")
    assert _run("compare", "--config", cfg, "--out", tmp_path / "a") == 0
    report = json.loads((tmp_path / "a" / "index_reports.json").read_text())["reports"][0]
    assert (report["k"], report["n_runs"]) == (4, 2)
    assert _run("compare", "--config", cfg, "--k", "2", "--out", tmp_path / "b") == 0
    report = json.loads((tmp_path / "b" / "index_reports.json").read_text())["reports"][0]
    assert (report["k"], report["n_runs"]) == (2, 2)
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest["config"]["k"] == 2


def test_read_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert _run("compare", "--config", cfg, "--out", tmp_path / "o") == 2


def test_exit_codes(tmp_path, capsys):
    # invalid configuration
    assert _run("cluster", *FAST, "--pipeline", "wavelet", "--out", tmp_path / "a") == 2
    assert _run("report", "--from", tmp_path / "missing") == 2
    # unreadable data
    bad = tmp_path / "bad.csv"
    bad.write_text("scenario_id,location_id,t0,t1\n0,0,1.0\n")
    assert _run("cluster", "--input", bad, "--out", tmp_path / "b") == 3
    err = capsys.readouterr().err
    assert "error" in err.lower()


def test_argparse_rejects_unknown_verb():
    with pytest.raises(SystemExit) as exc:
        cli.main(["explode"])
    assert exc.value.code == 2


@pytest.mark.parametrize("command", [[sys.executable, "-m", "climclust"], ["climclust"]])
def test_console_entry_points(command):
    proc = subprocess.run([*command, "--version"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "climclust" in proc.stdout
