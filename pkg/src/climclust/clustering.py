"""K-Medoids on a precomputed distance matrix, and lag-aligned cluster
representatives."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distances import _OK, DistanceMatrix, _best_lag
from .errors import ConfigError, DataError, ZeroVarianceError

MAX_ITER = 300
MAX_ALIGN_ITER = 20


@dataclass(frozen=True, eq=False)
class ClusteringResult:
    labels: np.ndarray
    medoids: np.ndarray
    objective: float
    n_iterations: int
    rng_seed: int
    history: tuple = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return int(self.medoids.size)

    def to_dict(self) -> dict:
        return {
            "labels": [int(v) for v in self.labels],
            "medoids": [int(v) for v in self.medoids],
            "objective": float(self.objective),
            "seed": int(self.rng_seed),
            "n_iterations": int(self.n_iterations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusteringResult":
        return cls(
            np.asarray(d["labels"], dtype=np.int64),
            np.asarray(d["medoids"], dtype=np.int64),
            float(d["objective"]),
            int(d["n_iterations"]),
            int(d["seed"]),
        )

    def same_as(self, other: "ClusteringResult") -> bool:
        return (
            np.array_equal(self.labels, other.labels)
            and np.array_equal(self.medoids, other.medoids)
            and self.objective == other.objective
        )


def _matrix(D):
    values = D.values if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise DataError("distance matrix must be square")
    return values


def _assign(values, medoids):
    # argmin returns the first minimum: ties go to the lowest cluster id
    labels = np.argmin(values[:, medoids], axis=1)
    labels[medoids] = np.arange(medoids.size)
    return labels


def _objective(values, labels, medoids):
    return float(values[np.arange(values.shape[0]), medoids[labels]].sum())


def _update(values, labels, medoids):
    new = medoids.copy()
    for c in range(medoids.size):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            continue
        cost = values[np.ix_(members, members)].sum(axis=1)
        best = int(np.argmin(cost))
        # the current medoid keeps its place unless someone is strictly better
        current = np.flatnonzero(members == medoids[c])
        if current.size and cost[current[0]] <= cost[best]:
            continue
        new[c] = members[best]
    return new


def _repair_empty(values, labels, medoids):
    """Give each empty cluster the point farthest from its current medoid."""
    for c in range(medoids.size):
        if np.any(labels == c):
            continue
        own = values[np.arange(values.shape[0]), medoids[labels]]
        own[medoids] = -np.inf
        far = int(np.argmax(own))
        medoids[c] = far
        labels[far] = c
    return labels, medoids


UNIFORM = "uniform"
GREEDY_PP = "greedy++"
INIT_METHODS = (GREEDY_PP, UNIFORM)


def initial_medoids(values: np.ndarray, k: int, seed: int, method: str = GREEDY_PP) -> np.ndarray:
    """Draw ``k`` distinct data points as starting medoids.

    ``"uniform"`` samples without replacement. ``"greedy++"`` is k-means++
    seeding on the distance matrix: each new medoid is drawn with
    probability proportional to the squared distance to the nearest chosen
    one, keeping the best of ``2 + ln k`` candidates.
    """
    n = values.shape[0]
    rng = np.random.default_rng(seed)
    if method == UNIFORM:
        return rng.choice(n, size=k, replace=False).astype(np.int64)
    if method != GREEDY_PP:
        raise ConfigError(f"unknown initialization {method!r}")
    n_trials = 2 + int(math.log(k))
    chosen = [int(rng.integers(n))]
    closest = values[:, chosen[0]].copy()
    for _ in range(k - 1):
        pot = closest**2
        total = pot.sum()
        if total <= 0:
            # every remaining point coincides with a chosen medoid
            free = np.setdiff1d(np.arange(n), chosen)
            pick = int(rng.choice(free))
            chosen.append(pick)
            closest = np.minimum(closest, values[:, pick])
            continue
        candidates = rng.choice(n, size=n_trials, p=pot / total)
        best = None
        for c in candidates:
            cand = np.minimum(closest, values[:, c])
            score = float((cand**2).sum())
            if best is None or score < best[0]:
                best = (score, int(c), cand)
        chosen.append(best[1])
        closest = best[2]
    return np.asarray(chosen, dtype=np.int64)


def kmedoids(
    D,
    k: int,
    seed: int = 0,
    max_iter: int = MAX_ITER,
    init=None,
    init_method: str = GREEDY_PP,
) -> ClusteringResult:
    """Alternating (Voronoi-iteration) K-Medoids.

    Assign every point to its nearest medoid, move each medoid to the member
    with the smallest total distance to its cluster, and repeat until the
    assignment no longer changes. The objective is the sum of distances of
    points to their medoid and never increases.

    Parameters
    ----------
    D : DistanceMatrix or array (N, N)
    k : int
        Number of clusters, ``1 <= k <= N``.
    seed : int
        Seed for the initial medoids.
    init : array of k indices, optional
        Explicit initial medoids; overrides ``seed`` for initialization.
    init_method : {"greedy++", "uniform"}
        How initial medoids are drawn, see :func:`initial_medoids`.
    """
    values = _matrix(D)
    n = values.shape[0]
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ConfigError(f"k must be a positive integer, got {k!r}")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of points {n}")
    if init is None:
        medoids = initial_medoids(values, k, seed, init_method)
    else:
        medoids = np.asarray(init, dtype=np.int64).copy()
    if medoids.size != k or np.unique(medoids).size != k:
        raise ConfigError("initial medoids must be k distinct indices")
    labels = _assign(values, medoids)
    labels, medoids = _repair_empty(values, labels, medoids)
    history = [_objective(values, labels, medoids)]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        medoids = _update(values, labels, medoids)
        new_labels = _assign(values, medoids)
        new_labels, medoids = _repair_empty(values, new_labels, medoids)
        history.append(_objective(values, new_labels, medoids))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return ClusteringResult(
        labels=labels.astype(np.int64),
        medoids=medoids,
        objective=history[-1],
        n_iterations=n_iter,
        rng_seed=int(seed),
        history=tuple(history),
    )


def kmedoids_restarts(D, k: int, n_runs: int = 5, seed: int = 0, n_jobs: int = 1, init_method: str = GREEDY_PP):
    """Run :func:`kmedoids` with seeds ``seed + r`` for ``r < n_runs``.

    Returns ``(best, runs)``; ``best`` has the lowest objective, the lowest
    run index winning ties.
    """
    if not isinstance(n_runs, (int, np.integer)) or n_runs < 1:
        raise ConfigError(f"n_runs must be >= 1, got {n_runs!r}")
    values = _matrix(D)
    seeds = [int(seed) + r for r in range(n_runs)]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            runs = list(pool.map(lambda s: kmedoids(values, k, s, init_method=init_method), seeds))
    else:
        runs = [kmedoids(values, k, s, init_method=init_method) for s in seeds]
    best = min(range(n_runs), key=lambda r: (runs[r].objective, r))
    return runs[best], runs


def best_partition_bruteforce(D, k: int):
    """Exhaustive optimum of the K-Medoids objective (small ``N`` only)."""
    from itertools import combinations

    values = _matrix(D)
    best = None
    for combo in combinations(range(values.shape[0]), k):
        med = np.array(combo)
        cost = values[:, med].min(axis=1).sum()
        if best is None or cost < best[0]:
            best = (cost, med)
    return best


# ---------------------------------------------------------------------------
# representatives


@dataclass(frozen=True, eq=False)
class Representative:
    """Barycenter of a cluster after lag alignment.

    ``series`` has length ``T``; positions not covered by every aligned
    member are NaN. ``member_lags[m]`` is the shift applied to member
    ``members[m]``: aligned value at ``t`` is ``x[t + lag]``.
    """

    cluster_id: int
    series: np.ndarray
    members: np.ndarray
    member_lags: np.ndarray
    n_iterations: int = 0

    @property
    def support(self) -> slice:
        ok = np.flatnonzero(np.isfinite(self.series))
        return slice(int(ok[0]), int(ok[-1]) + 1)


def align(values: np.ndarray, lags: np.ndarray) -> np.ndarray:
    """Shift each row by its lag (``out[t] = x[t + lag]``), NaN outside."""
    n, t = values.shape
    out = np.full((n, t), np.nan)
    for i, lag in enumerate(lags):
        lo, hi = max(0, -lag), min(t, t - lag)
        out[i, lo:hi] = values[i, lo + lag : hi + lag]
    return out


def _overlap_mean(aligned):
    covered = np.all(np.isfinite(aligned), axis=0)
    bary = np.full(aligned.shape[1], np.nan)
    bary[covered] = aligned[:, covered].mean(axis=0)
    return bary


def extract_representative(
    ds_values,
    members,
    k_max: int,
    medoid: int | None = None,
    cluster_id: int = 0,
    max_iter: int = MAX_ALIGN_ITER,
) -> Representative:
    """Lag-aligned barycenter of ``members``.

    Starting from the medoid's series, each member is shifted by the lag in
    ``[-k_max, k_max]`` that maximizes its overlap correlation with the
    current barycenter; the barycenter is then the pointwise mean of the
    aligned members on the positions they all cover. Repeats until the lags
    stop changing.
    """
    values = np.asarray(getattr(ds_values, "values", ds_values), dtype=float)
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise DataError("cannot build a representative of an empty cluster")
    t = values.shape[1]
    if not 0 <= k_max < t:
        raise ConfigError(f"k_max must lie in [0, {t - 1}]")
    if medoid is None:
        medoid = int(members[0])
    elif medoid not in set(members.tolist()):
        raise DataError("medoid must belong to the cluster")
    sub = values[members]
    std = sub.std(axis=1)
    flat = np.flatnonzero(std <= 8 * np.finfo(float).eps * np.max(np.abs(sub), axis=1))
    if flat.size:
        raise ZeroVarianceError(f"member {int(members[flat[0]])} is constant", record=int(members[flat[0]]))

    bary = values[medoid].copy()
    lags = np.zeros(members.size, dtype=np.int64)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        sl = np.flatnonzero(np.isfinite(bary))
        a, b = int(sl[0]), int(sl[-1]) + 1
        ref = np.ascontiguousarray(bary[a:b])
        new = np.empty_like(lags)
        for m, row in enumerate(sub):
            new[m], _ = _best_shift(ref, row, a, k_max)
        aligned = align(sub, new)
        bary = _overlap_mean(aligned)
        if not np.any(np.isfinite(bary)):
            raise DataError("aligned members share no common support")
        converged = np.array_equal(new, lags)
        lags = new
        if converged:
            break
    return Representative(cluster_id, bary, members, lags, n_iter)


def _best_shift(ref, row, offset, k_max):
    # ref is the barycenter restricted to [offset, offset + len(ref)); a shift
    # s pairs row[t + s] with barycenter[t]
    r, lag, st, bad = _best_lag(ref, np.ascontiguousarray(row), offset - k_max, offset + k_max)
    if st != _OK:
        raise ZeroVarianceError(f"constant overlap segment at lag {bad - offset}", lag=int(bad - offset))
    return int(lag - offset), float(r)


def write_clustering(result: ClusteringResult, path) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8")


def read_clustering(path) -> ClusteringResult:
    return ClusteringResult.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
