"""Pipeline quality indices.

Fidelity compares the neighbourhood structure of the original data with
that of the feature space: both distance matrices are turned into Gaussian
affinity distributions with perplexity-matched bandwidths, and the
symmetrized Kullback-Leibler divergence between them is squashed into
``(0, 1]`` by ``F = 2 / (1 + exp(D))``. The within index ``W`` is the
K-Medoids objective in squared form, normalized by the mean squared
pairwise distance. ``I = F * (1 - W)`` trades the two off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusteringResult
from .distances import DistanceMatrix
from .errors import BisectionError, ConfigError, DataError, DegenerateDataError

DEFAULT_PERPLEXITY = 30.0
PROB_FLOOR = 1e-12
PERPLEXITY_TOL = 1e-4
MAX_BISECTION = 64


@dataclass(frozen=True, eq=False)
class AffinityModel:
    """Symmetric joint probabilities over ordered pairs ``i != j``."""

    matrix: np.ndarray
    perplexity: float
    bandwidths: np.ndarray
    conditional_perplexities: np.ndarray = field(repr=False, default=None)


def effective_perplexity(n: int, perplexity: float = DEFAULT_PERPLEXITY) -> float:
    """Clamp the target to ``(N - 1) / 3`` for small datasets, never below
    the smallest admissible value just above 1."""
    return float(max(min(perplexity, (n - 1) / 3.0), min(2.0, n - 1.0)))


def _values(D):
    v = D.values if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=float)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise DataError("distance matrix must be square")
    return v


def _row_entropy(sq, beta):
    """Conditional distribution ``exp(-beta * sq)`` (normalized), its
    entropy in bits. ``sq`` is shifted so its minimum is 0."""
    logits = -beta * sq
    p = np.exp(logits)
    s = p.sum()
    p /= s
    # H = -sum p log p, with log p = logits - log s
    h_nat = math.log(s) - float(np.dot(p, logits))
    return p, h_nat / math.log(2.0)


def _solve_row(sq, target, i):
    """Bisection on ``log(beta)`` for one row of squared distances.

    ``sq`` holds the squared distances to the other points, already divided
    by the row's scale so that the search interval is scale free.
    """
    n_other = sq.size
    h_target = math.log2(target)
    if np.all(sq == sq[0]):
        # uniform for every bandwidth: valid only if the target matches
        p = np.full(n_other, 1.0 / n_other)
        if abs(n_other - target) > PERPLEXITY_TOL:
            raise BisectionError(
                f"point {i}: all distances are equal; perplexity is fixed at {n_other}, "
                f"target {target}"
            )
        return p, 1.0, float(n_other)
    shifted = sq - sq.min()
    lo, hi = -60.0, 60.0
    p, h = _row_entropy(shifted, 1.0)
    perp = 2.0**h
    for _ in range(MAX_BISECTION):
        mid = 0.5 * (lo + hi)
        p, h = _row_entropy(shifted, math.exp(mid))
        perp = 2.0**h
        if abs(perp - target) <= PERPLEXITY_TOL:
            return p, math.exp(mid), perp
        if h > h_target:
            lo = mid  # too flat: sharpen
        else:
            hi = mid
    raise BisectionError(
        f"point {i}: bandwidth search reached perplexity {perp:.6g}, target {target:.6g}"
    )


def affinities(D, perplexity: float = DEFAULT_PERPLEXITY) -> AffinityModel:
    """Gaussian affinities with perplexity-calibrated bandwidths.

    ``p_{j|i}`` is proportional to ``exp(-d_ij^2 / (2 sigma_i^2))``; each
    ``sigma_i`` is found by bisection so the conditional perplexity
    (``2**entropy`` in bits) matches ``perplexity``. The joint matrix is
    ``(p_{j|i} + p_{i|j}) / (2N)``, floored at ``PROB_FLOOR`` off the
    diagonal and renormalized.
    """
    d = _values(D)
    n = d.shape[0]
    if n < 3:
        raise DataError("affinities need at least 3 points")
    if not 1 < perplexity < n:
        raise ConfigError(f"perplexity must lie in (1, {n}), got {perplexity}")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise DataError("distances must be finite and non-negative")
    cond = np.zeros((n, n))
    sigma = np.empty(n)
    perps = np.empty(n)
    for i in range(n):
        others = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        sq = d[i, others] ** 2
        scale = float(np.mean(sq))
        if scale <= 0:
            raise BisectionError(f"point {i}: all distances are zero")
        p, beta, perp = _solve_row(sq / scale, perplexity, i)
        cond[i, others] = p
        # exp(-beta * sq / scale) = exp(-sq / (2 sigma^2))
        sigma[i] = math.sqrt(scale / (2.0 * beta))
        perps[i] = perp
    joint = (cond + cond.T) / (2.0 * n)
    off = ~np.eye(n, dtype=bool)
    joint[off] = np.maximum(joint[off], PROB_FLOOR)
    joint[off] /= joint[off].sum()
    np.fill_diagonal(joint, 0.0)
    return AffinityModel(joint, float(perplexity), sigma, perps)


def _kl(p, q):
    return float(np.sum(p * (np.log(p) - np.log(q))))


def js_divergence(P: AffinityModel, Q: AffinityModel) -> float:
    """``KL(P||Q)/2 + KL(Q||P)/2`` over off-diagonal entries, natural log."""
    a = P.matrix if isinstance(P, AffinityModel) else np.asarray(P)
    b = Q.matrix if isinstance(Q, AffinityModel) else np.asarray(Q)
    if a.shape != b.shape:
        raise DataError(f"affinity matrices differ in size: {a.shape} vs {b.shape}")
    off = ~np.eye(a.shape[0], dtype=bool)
    p, q = a[off], b[off]
    if np.any(p <= 0) or np.any(q <= 0):
        raise DataError("affinities must be strictly positive off the diagonal")
    return 0.5 * _kl(p, q) + 0.5 * _kl(q, p)


def fidelity_from_divergence(d_js: float) -> float:
    return 2.0 / (1.0 + math.exp(d_js))


def fidelity(D_orig, D_feat, perplexity: float = DEFAULT_PERPLEXITY) -> tuple[float, float]:
    """Return ``(F, D_JS)`` between original and feature-space distances."""
    a, b = _values(D_orig), _values(D_feat)
    if a.shape != b.shape:
        raise DataError("distance matrices cover different numbers of records")
    P = affinities(a, perplexity)
    Q = P if b is a or np.array_equal(a, b) else affinities(b, perplexity)
    d_js = js_divergence(P, Q)
    return fidelity_from_divergence(d_js), d_js


def within_index(D, clustering: ClusteringResult) -> float:
    """Mean squared distance to the assigned medoid over the mean squared
    distance between distinct points."""
    d = _values(D)
    n = d.shape[0]
    labels = np.asarray(clustering.labels)
    medoids = np.asarray(clustering.medoids)
    if labels.size != n:
        raise DataError(f"clustering covers {labels.size} points, matrix {n}")
    sq = d**2
    denom = (sq.sum() - np.trace(sq)) / (n * (n - 1))
    if denom <= 0:
        raise DegenerateDataError("all pairwise distances are zero")
    num = sq[np.arange(n), medoids[labels]].sum() / n
    return float(num / denom)


def combined_index(F: float, W: float) -> float:
    """``F * (1 - W)``; negative when ``W > 1``."""
    return F * (1.0 - W)


def adjusted_rand_index(a, b) -> float:
    """Adjusted Rand index of two labelings (contingency-table form)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DataError("labelings differ in length")
    n = a.size
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def pairs(x):
        x = np.asarray(x, dtype=np.float64)
        return float(np.sum(x * (x - 1) / 2))

    index = pairs(table)
    sum_a = pairs(table.sum(axis=1))
    sum_b = pairs(table.sum(axis=0))
    total = n * (n - 1) / 2
    expected = sum_a * sum_b / total if total else 0.0
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        # both labelings trivial (one cluster or all singletons)
        return 1.0
    return (index - expected) / (maximum - expected)


def consensus_index(runs) -> float:
    """Mean adjusted Rand index over all unordered pairs of runs."""
    labelings = [np.asarray(r.labels if isinstance(r, ClusteringResult) else r) for r in runs]
    if len(labelings) < 2:
        raise ConfigError("consensus needs at least 2 runs")
    n = labelings[0].size
    if any(l.size != n for l in labelings):
        raise DataError("runs cover different numbers of records")
    scores = [
        adjusted_rand_index(labelings[i], labelings[j])
        for i in range(len(labelings))
        for j in range(i + 1, len(labelings))
    ]
    return float(np.mean(scores))


@dataclass
class IndexReport:
    """Indices of one representation + distance pipeline against one
    reference distance."""

    pipeline: str
    W: float
    D_JS: float
    F: float
    I: float
    consensus: float | None
    reference_distance: dict
    feature_distance: dict
    representation: dict
    W_mean: float | None = None
    I_mean: float | None = None
    k: int | None = None
    n_runs: int | None = None
    seed: int | None = None
    seeds: list = field(default_factory=list)
    perplexity: float | None = None
    objective: float | None = None
    n_features: int | None = None

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "W": self.W,
            "D_JS": self.D_JS,
            "F": self.F,
            "I": self.I,
            "consensus": self.consensus,
            "W_mean": self.W_mean,
            "I_mean": self.I_mean,
            "reference_distance": self.reference_distance,
            "feature_distance": self.feature_distance,
            "representation": self.representation,
            "k": self.k,
            "n_runs": self.n_runs,
            "seed": self.seed,
            "seeds": list(self.seeds),
            "perplexity": self.perplexity,
            "objective": self.objective,
            "n_features": self.n_features,
        }
