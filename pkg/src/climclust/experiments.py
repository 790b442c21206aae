"""Experiment drivers: the same-location / same-scenario distance study,
the pipeline comparison with index ranking, and cluster reports with
lag-aligned representatives."""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import transforms as tr
from .clustering import (
    GREEDY_PP,
    ClusteringResult,
    align,
    extract_representative,
    kmedoids_restarts,
    write_clustering,
)
from .data import RAW, ZSCORED, Dataset, center_global, zscore
from .distances import (
    DEFAULT_K_MAX,
    DTW,
    DTW_BANDED,
    L2,
    MLPC,
    DistanceMatrix,
    DistanceSpec,
    cross_distances,
    distance_matrix,
)
from .errors import ClimclustError, ConfigError, DataError
from .evaluation import (
    DEFAULT_PERPLEXITY,
    IndexReport,
    combined_index,
    consensus_index,
    effective_perplexity,
    fidelity,
    within_index,
)

log = logging.getLogger(__name__)

TABLE1 = ("L2", "Haar95", "MLPC", "DTW", "Mean")
TABLE2 = ("mean", "L2", "Fourier95", "Haar95", "PCA95", "MLPC", "DTW")
REFERENCES = ("MLPC", "L2", "DTW")
SERIES_REPRESENTATIONS = (tr.IDENTITY, tr.ZSCORE)


@dataclass(frozen=True)
class PipelineSpec:
    """Representation + distance + K-Medoids settings of one model."""

    name: str
    representation: str
    distance: DistanceSpec
    rep_params: dict = field(default_factory=dict)
    k: int = 15
    n_runs: int = 5
    seed: int = 0
    perplexity: float = DEFAULT_PERPLEXITY
    init: str = GREEDY_PP

    def __post_init__(self):
        if self.representation not in tr.KINDS:
            raise ConfigError(f"unknown representation {self.representation!r}")
        if self.distance.kind in (MLPC, DTW, DTW_BANDED) and self.representation not in SERIES_REPRESENTATIONS:
            raise ConfigError(
                f"{self.name}: {self.distance.kind} needs series-like features, "
                f"not {self.representation!r}"
            )
        if self.k < 1 or self.n_runs < 1:
            raise ConfigError(f"{self.name}: k and n_runs must be >= 1")

    def describe(self) -> dict:
        return {"kind": self.representation, "params": dict(self.rep_params)}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "representation": self.describe(),
            "distance": self.distance.to_dict(),
            "k": self.k,
            "n_runs": self.n_runs,
            "seed": self.seed,
            "perplexity": self.perplexity,
            "init": self.init,
        }


def named_pipeline(
    name: str,
    *,
    k: int = 15,
    n_runs: int = 5,
    seed: int = 0,
    perplexity: float = DEFAULT_PERPLEXITY,
    k_max: int = DEFAULT_K_MAX,
    dtw_band: int | None = None,
    energy: float = 0.95,
    init: str = GREEDY_PP,
) -> PipelineSpec:
    """Build one of the standard models by name.

    Names: ``mean``, ``L2``, ``Fourier95``, ``Haar95``, ``PCA95``, ``MLPC``,
    ``DTW``, ``DTWfull`` and ``HaarL<level>``. The ``95`` suffix follows
    ``energy``.
    """
    kw = dict(k=k, n_runs=n_runs, seed=seed, perplexity=perplexity, init=init)
    key = name.lower()
    l2 = DistanceSpec(L2)
    if key == "mean":
        return PipelineSpec(name, tr.MEAN, l2, **kw)
    if key == "l2":
        return PipelineSpec(name, tr.IDENTITY, l2, **kw)
    if key.startswith("fourier"):
        return PipelineSpec(name, tr.FOURIER_ENERGY, l2, {"energy": energy}, **kw)
    if key.startswith("pca"):
        return PipelineSpec(name, tr.PCA, l2, {"energy": energy}, **kw)
    m = re.fullmatch(r"haarl(\d+)", key)
    if m:
        return PipelineSpec(name, tr.HAAR_LEVEL, l2, {"level": int(m.group(1))}, **kw)
    if key.startswith("haar"):
        return PipelineSpec(name, tr.HAAR_ENERGY, l2, {"energy": energy}, **kw)
    if key == "mlpc":
        return PipelineSpec(name, tr.ZSCORE, DistanceSpec(MLPC, k_max=k_max), **kw)
    if key == "dtw":
        return PipelineSpec(name, tr.ZSCORE, DistanceSpec(DTW_BANDED, band=dtw_band), **kw)
    if key == "dtwfull":
        return PipelineSpec(name, tr.ZSCORE, DistanceSpec(DTW), **kw)
    raise ConfigError(f"unknown pipeline name {name!r}")


def reference_spec(name: str, k_max: int = DEFAULT_K_MAX, dtw_band: int | None = None) -> DistanceSpec:
    key = name.lower()
    if key == "l2":
        return DistanceSpec(L2)
    if key == "mlpc":
        return DistanceSpec(MLPC, k_max=k_max)
    if key == "dtw":
        return DistanceSpec(DTW_BANDED, band=dtw_band)
    if key == "dtwfull":
        return DistanceSpec(DTW)
    raise ConfigError(f"unknown reference distance {name!r}")


# ---------------------------------------------------------------------------
# preprocessing shared by all drivers


class PreparedData:
    """Globally centered and z-scored views of one dataset, computed once."""

    def __init__(self, ds: Dataset):
        if ds.preprocessing_tag == RAW:
            ds = center_global(ds)
        self.centered = ds
        self._zscored = None

    @property
    def zscored(self) -> Dataset:
        if self._zscored is None:
            self._zscored = self.centered if self.centered.preprocessing_tag == ZSCORED else zscore(self.centered)
        return self._zscored

    def for_distance(self, spec: DistanceSpec) -> Dataset:
        """MLPC and DTW work on z-scored series, L2 on centered ones."""
        return self.centered if spec.kind == L2 else self.zscored

    def represent(self, pipeline: PipelineSpec) -> tr.Representation:
        return tr.transform(self.centered, pipeline.representation, **pipeline.rep_params)


# ---------------------------------------------------------------------------
# same-location vs same-scenario distances


@dataclass
class GroupDistances:
    name: str
    distance_a: np.ndarray
    distance_b: np.ndarray
    bin_edges: np.ndarray
    counts_a: np.ndarray
    counts_b: np.ndarray

    @property
    def mean_a(self) -> float:
        return float(np.mean(self.distance_a))

    @property
    def mean_b(self) -> float:
        return float(np.mean(self.distance_b))

    @property
    def ratio(self) -> float:
        """``mean(A) / mean(B)``."""
        return self.mean_a / self.mean_b if self.mean_b > 0 else math.inf

    @property
    def overlap(self) -> float:
        pa = self.counts_a / self.counts_a.sum()
        pb = self.counts_b / self.counts_b.sum()
        return float(np.minimum(pa, pb).sum())

    def summary(self) -> dict:
        return {
            "name": self.name,
            "n": int(self.distance_a.size),
            "mean_a": self.mean_a,
            "mean_b": self.mean_b,
            "std_a": float(np.std(self.distance_a)),
            "std_b": float(np.std(self.distance_b)),
            "median_a": float(np.median(self.distance_a)),
            "median_b": float(np.median(self.distance_b)),
            "ratio_a_over_b": self.ratio if math.isfinite(self.ratio) else None,
            "overlap": self.overlap,
        }


@dataclass
class GroupComparisonReport:
    reference_index: int
    reference: tuple
    group_a: np.ndarray
    group_b: np.ndarray
    seed: int
    results: dict

    def to_dict(self) -> dict:
        return {
            "reference": {"scenario": int(self.reference[0]), "location": int(self.reference[1]),
                          "index": int(self.reference_index)},
            "group_a": [int(i) for i in self.group_a],
            "group_b": [int(i) for i in self.group_b],
            "seed": int(self.seed),
            "distances": [r.summary() for r in self.results.values()],
        }


def _histogram(a, b, bins):
    pooled = np.concatenate([a, b])
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    ca, _ = np.histogram(a, edges)
    cb, _ = np.histogram(b, edges)
    return edges, ca, cb


def group_members(ds: Dataset, ref: int, seed: int):
    """Indices of group A (same location) and B (same scenario), the larger
    one subsampled without replacement to the size of the smaller."""
    s, l = ds.scenario_ids[ref], ds.location_ids[ref]
    a = np.flatnonzero((ds.location_ids == l) & (ds.scenario_ids != s))
    b = np.flatnonzero((ds.scenario_ids == s) & (ds.location_ids != l))
    if a.size == 0 or b.size == 0:
        raise DataError("both comparison groups need at least one record")
    rng = np.random.default_rng(seed)
    m = min(a.size, b.size)
    if a.size > m:
        a = np.sort(rng.choice(a, size=m, replace=False))
    if b.size > m:
        b = np.sort(rng.choice(b, size=m, replace=False))
    return a, b


def cmd_group_experiment(
    ds: Dataset,
    reference: tuple[int, int],
    distances=TABLE1,
    seed: int = 0,
    bins: int = 30,
    k_max: int = DEFAULT_K_MAX,
    dtw_band: int | None = None,
    energy: float = 0.95,
) -> GroupComparisonReport:
    """Distances from one reference series to group A (its location, other
    scenarios) and group B (its scenario, other locations), for each named
    transform + distance pair."""
    prepared = PreparedData(ds)
    base = prepared.centered
    ref = base.index_of(*reference)
    a, b = group_members(base, ref, seed)
    results = {}
    for name in distances:
        pipe = named_pipeline(name, k_max=k_max, dtw_band=dtw_band, energy=energy)
        feats = prepared.represent(pipe).features
        d = cross_distances(feats[ref], feats[np.concatenate([a, b])], pipe.distance)[0]
        da, db = d[: a.size], d[a.size :]
        edges, ca, cb = _histogram(da, db, bins)
        results[name] = GroupDistances(name, da, db, edges, ca, cb)
    return GroupComparisonReport(ref, tuple(int(v) for v in reference), a, b, seed, results)


def write_group_report(report: GroupComparisonReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, r in report.results.items():
        p = out / f"histogram_{name}.csv"
        with p.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "count_A", "count_B"])
            for left, ca, cb in zip(r.bin_edges[:-1], r.counts_a, r.counts_b):
                w.writerow([format(float(left), ".17g"), int(ca), int(cb)])
        written.append(p)
        p = out / f"distances_{name}.csv"
        with p.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "record_index", "distance"])
            for g, idx, vals in (("A", report.group_a, r.distance_a), ("B", report.group_b, r.distance_b)):
                for i, v in zip(idx, vals):
                    w.writerow([g, int(i), format(float(v), ".17g")])
        written.append(p)
    p = out / "group_report.json"
    p.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    written.append(p)
    return written


# ---------------------------------------------------------------------------
# pipeline comparison


@dataclass
class PipelineOutcome:
    spec: PipelineSpec
    representation: tr.Representation | None = None
    feature_distances: DistanceMatrix | None = None
    best: ClusteringResult | None = None
    runs: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    error: str | None = None


def _cluster_pipeline(prepared: PreparedData, spec: PipelineSpec, n_jobs: int = 1) -> PipelineOutcome:
    rep = prepared.represent(spec)
    spec.distance.validate(rep.n_features)
    dm = distance_matrix(rep.features, spec.distance, n_jobs=n_jobs)
    best, runs = kmedoids_restarts(dm, spec.k, spec.n_runs, spec.seed, init_method=spec.init)
    return PipelineOutcome(spec, rep, dm, best, runs)


def evaluate_pipeline(
    outcome: PipelineOutcome,
    reference: DistanceMatrix,
    reference_name: str,
) -> IndexReport:
    spec = outcome.spec
    dm = outcome.feature_distances
    perplexity = effective_perplexity(dm.n, spec.perplexity)
    F, d_js = fidelity(reference, dm, perplexity)
    W = within_index(dm, outcome.best)
    Ws = [within_index(dm, r) for r in outcome.runs]
    cons = consensus_index(outcome.runs) if len(outcome.runs) >= 2 else None
    return IndexReport(
        pipeline=spec.name,
        W=W,
        D_JS=d_js,
        F=F,
        I=combined_index(F, W),
        consensus=cons,
        reference_distance={"name": reference_name, **reference.spec.to_dict()},
        feature_distance=spec.distance.to_dict(),
        representation={**outcome.representation.sidecar(), "kept": None},
        W_mean=float(np.mean(Ws)),
        I_mean=combined_index(F, float(np.mean(Ws))),
        k=spec.k,
        n_runs=spec.n_runs,
        seed=spec.seed,
        seeds=[r.rng_seed for r in outcome.runs],
        perplexity=perplexity,
        objective=outcome.best.objective,
        n_features=outcome.representation.n_features,
    )


def reference_matrix(prepared: PreparedData, spec: DistanceSpec, n_jobs: int = 1) -> DistanceMatrix:
    return distance_matrix(prepared.for_distance(spec).values, spec, n_jobs=n_jobs)


@dataclass
class Comparison:
    outcomes: list
    references: dict

    @property
    def reports(self) -> list[IndexReport]:
        return [r for o in self.outcomes for r in o.reports]

    @property
    def failures(self) -> list[dict]:
        return [{"pipeline": o.spec.name, "error": o.error} for o in self.outcomes if o.error]

    def ranking(self, reference_name: str) -> list[IndexReport]:
        rows = [r for r in self.reports if r.reference_distance["name"] == reference_name]
        return sorted(rows, key=lambda r: (-r.I, r.pipeline))


def cmd_compare_pipelines(
    ds: Dataset,
    pipelines,
    references: dict | None = None,
    n_jobs: int = 1,
) -> Comparison:
    """Cluster with every pipeline and score it against each reference.

    ``references`` maps a display name to a :class:`DistanceSpec`; reference
    matrices are computed on the untransformed data (z-scored for MLPC and
    DTW, globally centered for L2). A failing pipeline is recorded and the
    others still run.
    """
    prepared = PreparedData(ds)
    if references is None:
        references = {name: reference_spec(name) for name in REFERENCES}
    ref_mats = {name: reference_matrix(prepared, spec, n_jobs) for name, spec in references.items()}

    def run(spec):
        try:
            outcome = _cluster_pipeline(prepared, spec)
        except ClimclustError as exc:
            log.warning("pipeline %s failed: %s", spec.name, exc)
            return PipelineOutcome(spec, error=f"{type(exc).__name__}: {exc}")
        for name, mat in ref_mats.items():
            try:
                outcome.reports.append(evaluate_pipeline(outcome, mat, name))
            except ClimclustError as exc:
                log.warning("pipeline %s vs %s failed: %s", spec.name, name, exc)
                outcome.error = f"{type(exc).__name__}: {exc}"
        return outcome

    pipelines = list(pipelines)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(run, pipelines))
    else:
        outcomes = [run(p) for p in pipelines]
    return Comparison(outcomes, ref_mats)


def write_comparison(cmp: Comparison, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for o in cmp.outcomes:
        pdir = out / "pipelines" / o.spec.name
        pdir.mkdir(parents=True, exist_ok=True)
        p = pdir / "pipeline.json"
        p.write_text(json.dumps({**o.spec.to_dict(), "error": o.error}, indent=2) + "\n", encoding="utf-8")
        written.append(p)
        if o.best is None:
            continue
        write_clustering(o.best, pdir / "clustering.json")
        written.append(pdir / "clustering.json")
        runs = {"runs": [r.to_dict() for r in o.runs]}
        (pdir / "runs.json").write_text(json.dumps(runs, indent=2) + "\n", encoding="utf-8")
        written.append(pdir / "runs.json")
    payload = {"reports": [r.to_dict() for r in cmp.reports], "failures": cmp.failures}
    p = out / "index_reports.json"
    p.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    written.append(p)
    for name in cmp.references:
        p = out / f"ranking_{name}.csv"
        with p.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "pipeline", "I", "F", "D_JS", "W", "W_mean", "consensus", "n_features"])
            for rank, r in enumerate(cmp.ranking(name), start=1):
                w.writerow([
                    rank, r.pipeline, _f(r.I), _f(r.F), _f(r.D_JS), _f(r.W), _f(r.W_mean),
                    "" if r.consensus is None else _f(r.consensus), r.n_features,
                ])
        written.append(p)
    return written


def _f(x):
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# cluster report


@dataclass
class ClusterReport:
    outcome: PipelineOutcome
    representatives: list
    series: np.ndarray
    k_max: int


def default_align_k_max(spec: PipelineSpec, t: int) -> int:
    if spec.distance.kind == MLPC:
        return spec.distance.k_max
    return min(DEFAULT_K_MAX, max(0, t // 4))


def cmd_cluster_report(ds: Dataset, pipeline: PipelineSpec, k_max: int | None = None) -> ClusterReport:
    """Cluster with ``pipeline`` and build a lag-aligned representative per
    cluster from the series the pipeline compares (z-scored for MLPC/DTW,
    centered otherwise)."""
    prepared = PreparedData(ds)
    outcome = _cluster_pipeline(prepared, pipeline)
    series = prepared.for_distance(pipeline.distance).values
    if k_max is None:
        k_max = default_align_k_max(pipeline, series.shape[1])
    reps = []
    for c, medoid in enumerate(outcome.best.medoids):
        members = np.flatnonzero(outcome.best.labels == c)
        reps.append(extract_representative(series, members, k_max, medoid=int(medoid), cluster_id=c))
    return ClusterReport(outcome, reps, series, k_max)


def write_cluster_report(report: ClusterReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    (out / "clusters").mkdir(parents=True, exist_ok=True)
    written = []
    write_clustering(report.outcome.best, out / "clustering.json")
    written.append(out / "clustering.json")
    p = out / "representatives.csv"
    with p.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster_id", "t", "value"])
        for rep in report.representatives:
            for t, v in enumerate(rep.series):
                w.writerow([rep.cluster_id, t, _f(v)])
    written.append(p)
    lags = {
        "k_max": int(report.k_max),
        "clusters": [
            {
                "cluster_id": int(rep.cluster_id),
                "medoid": int(report.outcome.best.medoids[rep.cluster_id]),
                "members": [int(m) for m in rep.members],
                "lags": [int(l) for l in rep.member_lags],
                "n_iterations": int(rep.n_iterations),
            }
            for rep in report.representatives
        ],
    }
    p = out / "representatives_lags.json"
    p.write_text(json.dumps(lags, indent=2) + "\n", encoding="utf-8")
    written.append(p)
    for rep in report.representatives:
        aligned = align(report.series[rep.members], rep.member_lags)
        p = out / "clusters" / f"cluster_{rep.cluster_id:03d}.csv"
        with p.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "representative"] + [f"m{int(m)}" for m in rep.members])
            for t in range(aligned.shape[1]):
                w.writerow([t, _f(rep.series[t])] + [_f(v) for v in aligned[:, t]])
        written.append(p)
    return written


def read_representatives(out_dir) -> dict:
    """Parse ``representatives.csv`` back into ``{cluster_id: series}``."""
    rows: dict[int, list] = {}
    with (Path(out_dir) / "representatives.csv").open(encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(int(rec["cluster_id"]), []).append((int(rec["t"]), float(rec["value"])))
    return {c: np.array([v for _, v in sorted(vals)]) for c, vals in rows.items()}
