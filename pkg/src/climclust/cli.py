"""Command line front end.

Verbs: ``generate``, ``group-experiment``, ``compare``, ``cluster`` and
``report``. Settings come from built-in defaults, then an optional flat
``key = value`` config file, then command line flags (flags win). Every run
writes a ``manifest.json`` with versions, seeds, the resolved config and the
SHA-256 of every input and output, and no timestamps, so reruns with the
same inputs are byte-identical.

Exit codes: 0 success, 2 configuration error, 3 numeric or data error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import asdict, fields
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import GREEDY_PP, INIT_METHODS
from .data import LONG, WIDE, PlantedSpec, SyntheticSpec, generate_planted, generate_synthetic, load_csv, write_csv
from .distances import DEFAULT_K_MAX
from .errors import ClimclustError, ConfigError
from .evaluation import DEFAULT_PERPLEXITY, adjusted_rand_index, consensus_index, within_index
from .experiments import (
    REFERENCES,
    TABLE1,
    TABLE2,
    cmd_cluster_report,
    cmd_compare_pipelines,
    cmd_group_experiment,
    named_pipeline,
    reference_spec,
    write_cluster_report,
    write_comparison,
    write_group_report,
)
from .transforms import write_representation

log = logging.getLogger("climclust")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

SCENARIOS = "scenarios"
PLANTED = "planted"

# desk-scale planted data; the scenario generator keeps its own defaults
DESK_PLANTED = {"n_series": 200, "T": 2160}
SMALL_PROFILE = {
    PLANTED: {"n_series": 60, "T": 512},
    SCENARIOS: {"n_scenarios": 6, "n_locations": 10, "T": 512},
}

_GENERATOR_KEYS = {f.name for f in fields(SyntheticSpec)} | {f.name for f in fields(PlantedSpec)}
_GENERATOR_KEYS.discard("rng_seed")


def _csv_list(text: str) -> list[str]:
    return [s.strip() for s in str(text).split(",") if s.strip()]


def _reference(text: str) -> tuple[int, int]:
    parts = _csv_list(text)
    if len(parts) != 2:
        raise ConfigError(f"reference must be 'scenario,location', got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError(f"reference must hold two integers, got {text!r}") from None


def _flag(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _optional_int(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return int(text)


# key -> (parser, default); shared by the config file and the flags
OPTIONS = {
    "input": (str, None),
    "layout": (str, WIDE),
    "generator": (str, None),
    "small": (_flag, False),
    "data_seed": (int, None),
    "seed": (int, 0),
    "k": (int, 15),
    "n_runs": (int, 5),
    "perplexity": (float, DEFAULT_PERPLEXITY),
    "k_max": (int, DEFAULT_K_MAX),
    "dtw_band": (_optional_int, None),
    "energy": (float, 0.95),
    "n_jobs": (int, 1),
    "init": (str, GREEDY_PP),
    "reference": (_reference, (0, 0)),
    "distances": (_csv_list, list(TABLE1)),
    "bins": (int, 30),
    "pipelines": (_csv_list, list(TABLE2)),
    "references": (_csv_list, list(REFERENCES)),
    "pipeline": (str, "MLPC"),
    "labels": (str, None),
    "align_k_max": (_optional_int, None),
    "run_dir": (str, None),
}


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    out = {}
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        if key not in OPTIONS and key not in _GENERATOR_KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags into one typed dict."""
    raw = {}
    if args.config:
        raw.update(read_config(args.config))
    for key in list(OPTIONS) + sorted(_GENERATOR_KEYS):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    cfg = {}
    for key, (parse, default) in OPTIONS.items():
        if key in raw:
            try:
                cfg[key] = parse(raw[key]) if isinstance(raw[key], str) else raw[key]
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw[key]!r}") from None
        else:
            cfg[key] = default
    cfg["generator_overrides"] = {k: raw[k] for k in sorted(_GENERATOR_KEYS) if k in raw}
    if cfg["layout"] not in (WIDE, LONG):
        raise ConfigError(f"layout must be {WIDE} or {LONG}")
    if cfg["init"] not in INIT_METHODS:
        raise ConfigError(f"init must be one of {', '.join(INIT_METHODS)}")
    if cfg["n_jobs"] < 1:
        raise ConfigError("n_jobs must be >= 1")
    return cfg


# ---------------------------------------------------------------------------
# data


def generator_spec(cfg: dict, default_generator: str):
    kind = cfg["generator"] or default_generator
    params = {}
    if kind == PLANTED:
        cls = PlantedSpec
        params.update(DESK_PLANTED)
    elif kind == SCENARIOS:
        cls = SyntheticSpec
    else:
        raise ConfigError(f"generator must be {SCENARIOS} or {PLANTED}, got {kind!r}")
    if cfg["small"]:
        params.update(SMALL_PROFILE[kind])
    known = {f.name for f in fields(cls)}
    for key, value in cfg["generator_overrides"].items():
        if key not in known:
            raise ConfigError(f"{key} does not apply to the {kind} generator")
        params[key] = value
    if cfg["data_seed"] is not None:
        params["rng_seed"] = cfg["data_seed"]
    return kind, cls.from_mapping(params)


def load_data(cfg: dict, default_generator: str):
    """Return ``(dataset, labels or None, provenance)``."""
    if cfg["input"]:
        ds = load_csv(cfg["input"], cfg["layout"])
        labels = read_labels(cfg["labels"], ds) if cfg["labels"] else None
        return ds, labels, {"source": "file"}
    kind, spec = generator_spec(cfg, default_generator)
    if kind == PLANTED:
        ds, labels = generate_planted(spec)
    else:
        ds, labels = generate_synthetic(spec), None
    if cfg["labels"]:
        labels = read_labels(cfg["labels"], ds)
    return ds, labels, {"source": "generator", "generator": kind, "spec": asdict(spec)}


def write_labels(ds, labels, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "location", "label"])
        for s, l, g in zip(ds.scenario_ids, ds.location_ids, labels):
            w.writerow([int(s), int(l), int(g)])


def read_labels(path, ds) -> np.ndarray:
    labels = np.full(ds.n_records, -1, dtype=np.int64)
    try:
        with Path(path).open(encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                labels[ds.index_of(int(row["scenario"]), int(row["location"]))] = int(row["label"])
    except OSError as exc:
        raise ConfigError(f"cannot read labels {path}: {exc}") from None
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed labels file ({exc})") from None
    if np.any(labels < 0):
        raise ConfigError(f"{path}: labels missing for some records")
    return labels


# ---------------------------------------------------------------------------
# manifest


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "numba", "matplotlib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "absent"
    return out


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def write_manifest(out: Path, command: str, cfg: dict, seeds: dict, written, extra=None) -> Path:
    inputs = []
    for key in ("config_path", "input", "labels", "run_dir"):
        p = cfg.get(key)
        if p and Path(p).is_file():
            inputs.append({"path": str(p), "sha256": _sha256(p)})
    outputs = [
        {"path": Path(p).relative_to(out).as_posix(), "sha256": _sha256(p)}
        for p in sorted(set(map(Path, written)))
    ]
    config = {k: _jsonable(v) for k, v in sorted(cfg.items()) if k != "config_path"}
    if extra:
        config.update(_jsonable(extra))
    manifest = {
        "tool": "climclust",
        "version": __version__,
        "command": command,
        "versions": _versions(),
        "seeds": {k: int(v) for k, v in seeds.items()},
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _seeds(cfg, provenance) -> dict:
    seeds = {"seed": cfg["seed"]}
    if provenance.get("source") == "generator":
        seeds["data_seed"] = provenance["spec"]["rng_seed"]
    return seeds


def _out_dir(cfg, args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def _pipeline(cfg, name):
    return named_pipeline(
        name,
        k=cfg["k"],
        n_runs=cfg["n_runs"],
        seed=cfg["seed"],
        perplexity=cfg["perplexity"],
        k_max=cfg["k_max"],
        dtw_band=cfg["dtw_band"],
        energy=cfg["energy"],
        init=cfg["init"],
    )


# ---------------------------------------------------------------------------
# verbs


def run_generate(cfg, args) -> int:
    out = _out_dir(cfg, args)
    ds, labels, prov = load_data(cfg, PLANTED)
    data_path = out / "data.csv"
    write_csv(ds, data_path, cfg["layout"])
    written = [data_path]
    if labels is not None:
        write_labels(ds, labels, out / "labels.csv")
        written.append(out / "labels.csv")
    write_manifest(out, "generate", cfg, _seeds(cfg, prov), written, {"data": prov})
    print(f"wrote {ds.n_records} series of length {ds.length} to {data_path}")
    return EXIT_OK


def run_group_experiment(cfg, args) -> int:
    out = _out_dir(cfg, args)
    ds, _, prov = load_data(cfg, SCENARIOS)
    report = cmd_group_experiment(
        ds,
        cfg["reference"],
        cfg["distances"],
        seed=cfg["seed"],
        bins=cfg["bins"],
        k_max=cfg["k_max"],
        dtw_band=cfg["dtw_band"],
        energy=cfg["energy"],
    )
    written = write_group_report(report, out)
    write_manifest(out, "group-experiment", cfg, _seeds(cfg, prov), written, {"data": prov})
    print(f"reference {report.reference}, {report.group_a.size} records per group")
    print(f"{'distance':<10} {'mean A':>12} {'mean B':>12} {'A/B':>8}")
    for r in report.results.values():
        print(f"{r.name:<10} {r.mean_a:>12.5g} {r.mean_b:>12.5g} {r.ratio:>8.3g}")
    return EXIT_OK


def run_compare(cfg, args) -> int:
    out = _out_dir(cfg, args)
    ds, _, prov = load_data(cfg, PLANTED)
    pipelines = [_pipeline(cfg, name) for name in cfg["pipelines"]]
    references = {name: reference_spec(name, cfg["k_max"], cfg["dtw_band"]) for name in cfg["references"]}
    cmp = cmd_compare_pipelines(ds, pipelines, references, n_jobs=cfg["n_jobs"])
    written = write_comparison(cmp, out)
    write_manifest(out, "compare", cfg, _seeds(cfg, prov), written, {"data": prov})
    for name in references:
        print(f"reference {name}")
        for rank, r in enumerate(cmp.ranking(name), start=1):
            cons = "-" if r.consensus is None else f"{r.consensus:.3f}"
            print(f"  {rank:>2} {r.pipeline:<10} I={r.I:.4f} F={r.F:.4f} W={r.W:.4f} consensus={cons}")
    for f in cmp.failures:
        print(f"failed: {f['pipeline']}: {f['error']}", file=sys.stderr)
    return EXIT_DATA if cmp.failures and not cmp.reports else EXIT_OK


def run_cluster(cfg, args) -> int:
    out = _out_dir(cfg, args)
    ds, labels, prov = load_data(cfg, PLANTED)
    spec = _pipeline(cfg, cfg["pipeline"])
    report = cmd_cluster_report(ds, spec, k_max=cfg["align_k_max"])
    written = write_cluster_report(report, out)
    outcome = report.outcome
    pipe_path = out / "pipeline.json"
    pipe_path.write_text(json.dumps({**spec.to_dict(), "error": None}, indent=2) + "\n", encoding="utf-8")
    write_representation(outcome.representation, out / "representation.csv", out / "representation.json")
    ari = None if labels is None else adjusted_rand_index(labels, outcome.best.labels)
    summary = {
        "pipeline": spec.name,
        "k": spec.k,
        "sizes": [int(v) for v in np.bincount(outcome.best.labels, minlength=spec.k)],
        "objective": outcome.best.objective,
        "W": within_index(outcome.feature_distances, outcome.best),
        "consensus": consensus_index(outcome.runs) if len(outcome.runs) > 1 else None,
        "ari_vs_labels": ari,
    }
    sum_path = out / "cluster_summary.json"
    sum_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    written += [pipe_path, out / "representation.csv", out / "representation.json", sum_path]
    write_manifest(out, "cluster", cfg, _seeds(cfg, prov), written, {"data": prov})
    print(f"{spec.name}: k={spec.k} W={summary['W']:.4f} sizes={summary['sizes']}")
    if ari is not None:
        print(f"adjusted Rand index against labels: {ari:.4f}")
    return EXIT_OK


def run_report(cfg, args) -> int:
    from .plotting import render_report

    run_dir = cfg["run_dir"]
    if not run_dir:
        raise ConfigError("report needs --from DIR")
    out = Path(args.out) if args.out else Path(run_dir) / "figures"
    out.mkdir(parents=True, exist_ok=True)
    written = render_report(run_dir, out)
    write_manifest(out, "report", cfg, {"seed": cfg["seed"]}, written)
    for p in written:
        print(p)
    return EXIT_OK


VERBS = {
    "generate": run_generate,
    "group-experiment": run_group_experiment,
    "compare": run_compare,
    "cluster": run_cluster,
    "report": run_report,
}


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p, needs_out=True):
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--out", required=needs_out, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_data(p):
    g = p.add_argument_group("data")
    g.add_argument("--input", help="dataset CSV; without it data are generated")
    g.add_argument("--layout", choices=(WIDE, LONG), help=f"CSV layout (default {WIDE})")
    g.add_argument("--labels", help="CSV of scenario,location,label ground truth")
    g.add_argument("--generator", choices=(SCENARIOS, PLANTED), help="synthetic generator")
    g.add_argument("--small", action="store_const", const=True, help="60 series of length 512")
    g.add_argument("--data-seed", type=int, help="generator seed")
    g.add_argument("--T", type=int, dest="T", help="series length of generated data")
    g.add_argument("--n-series", type=int, help="planted generator: number of series")
    g.add_argument("--n-groups", type=int, help="planted generator: number of shape groups")
    g.add_argument("--n-scenarios", type=int, help="scenario generator: scenarios")
    g.add_argument("--n-locations", type=int, help="scenario generator: locations")
    g.add_argument("--noise-std", type=float, help="generator noise level")


def _add_model(p):
    g = p.add_argument_group("model")
    g.add_argument("--seed", type=int, help="seed of K-Medoids restarts and subsampling (default 0)")
    g.add_argument("--k", type=int, help="number of clusters (default 15)")
    g.add_argument("--n-runs", type=int, help="K-Medoids restarts (default 5)")
    g.add_argument("--init", choices=INIT_METHODS, help=f"medoid initialization (default {GREEDY_PP})")
    g.add_argument("--perplexity", type=float, help=f"affinity perplexity (default {DEFAULT_PERPLEXITY:g})")
    g.add_argument("--k-max", type=int, help=f"MLPC maximum lag (default {DEFAULT_K_MAX})")
    g.add_argument("--dtw-band", type=int, help="DTW band (default ceil(0.1 T))")
    g.add_argument("--energy", type=float, help="retained energy of reduced pipelines (default 0.95)")
    g.add_argument("--n-jobs", type=int, help="worker threads (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="climclust",
        description="Shape-based clustering experiments on scenario time series.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    _add_common(p)
    _add_data(p)

    p = sub.add_parser("group-experiment", help="same-location vs same-scenario distance study")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    p.add_argument("--reference", help="reference record 'scenario,location' (default 0,0)")
    p.add_argument("--distances", help=f"comma list (default {','.join(TABLE1)})")
    p.add_argument("--bins", type=int, help="histogram bins (default 30)")

    p = sub.add_parser("compare", help="rank pipelines by the combined index")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    p.add_argument("--pipelines", help=f"comma list (default {','.join(TABLE2)})")
    p.add_argument("--references", help=f"comma list (default {','.join(REFERENCES)})")

    p = sub.add_parser("cluster", help="cluster and emit lag-aligned representatives")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    p.add_argument("--pipeline", help="pipeline name (default MLPC)")
    p.add_argument("--align-k-max", type=int, help="maximum alignment lag of representatives")

    p = sub.add_parser("report", help="render PNG figures from a run directory")
    _add_common(p, needs_out=False)
    p.add_argument("--from", dest="run_dir", help="directory written by another verb")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve(args)
        cfg["config_path"] = args.config
        return VERBS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ClimclustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
