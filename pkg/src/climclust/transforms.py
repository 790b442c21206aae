"""Feature-space representations of a dataset.

Every transform maps the ``N x T`` data matrix to an ``N x p`` feature
matrix that lives in one space shared by all records, so any row-wise
distance can be applied downstream. Energy-thresholded variants pick one
global set of coefficient positions for the whole dataset.

The Haar and Fourier maps are linear isometries, so the L2 distance between
full feature vectors equals the L2 distance between the series.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, zscore as _zscore_dataset
from .errors import ConfigError, DataError, DegenerateDataError

MEAN = "mean"
HAAR_LEVEL = "haar_level"
HAAR_ENERGY = "haar_energy"
FOURIER_ENERGY = "fourier_energy"
PCA = "pca"
IDENTITY = "identity"
ZSCORE = "zscore"
KINDS = (MEAN, HAAR_LEVEL, HAAR_ENERGY, FOURIER_ENERGY, PCA, IDENTITY, ZSCORE)

# relative slack on energy targets; absorbs round-off so that alpha = 1
# keeps every position carrying energy and nothing else
_ENERGY_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Representation:
    """Features of ``N`` records in a common ``p``-dimensional space.

    ``kept`` lists the coefficient positions (Haar, Fourier) or component
    indices (PCA) behind each feature column. ``offset`` is added back by
    :func:`reconstruct` (PCA column means).
    """

    kind: str
    features: np.ndarray
    params: dict = field(default_factory=dict)
    kept: np.ndarray | None = None
    length: int | None = None
    basis: np.ndarray | None = None
    offset: np.ndarray | None = None
    explained_variance: np.ndarray | None = None

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def sidecar(self) -> dict:
        meta = {
            "kind": self.kind,
            "params": self.params,
            "n_records": int(self.features.shape[0]),
            "n_features": int(self.n_features),
            "length": self.length,
            "kept": None if self.kept is None else [int(k) for k in self.kept],
        }
        if self.explained_variance is not None:
            meta["explained_variance"] = [float(v) for v in self.explained_variance]
        return meta


def _check_alpha(alpha):
    if not (isinstance(alpha, (int, float)) and 0 < alpha <= 1):
        raise ConfigError(f"energy fraction must lie in (0, 1], got {alpha!r}")
    return float(alpha)


def select_by_energy(energy: np.ndarray, alpha: float) -> np.ndarray:
    """Smallest set of positions whose energy share reaches ``alpha``.

    Positions are ranked by decreasing energy, ties going to the lower
    index. The result is sorted by position.
    """
    energy = np.asarray(energy, dtype=float)
    total = energy.sum()
    if total <= 0:
        raise DegenerateDataError("all coefficients are zero; nothing to select")
    order = np.lexsort((np.arange(energy.size), -energy))
    cum = np.cumsum(energy[order])
    need = alpha * total * (1 - _ENERGY_RTOL)
    n_keep = int(np.searchsorted(cum, need, side="left")) + 1
    n_keep = min(n_keep, energy.size)
    return np.sort(order[:n_keep])


# ---------------------------------------------------------------------------
# mean / identity / zscore


def transform_mean(ds: Dataset) -> Representation:
    return Representation(MEAN, ds.values.mean(axis=1, keepdims=True), length=ds.length)


def transform_identity(ds: Dataset) -> Representation:
    return Representation(IDENTITY, np.array(ds.values), length=ds.length)


def transform_zscore(ds: Dataset) -> Representation:
    return Representation(ZSCORE, np.array(_zscore_dataset(ds).values), length=ds.length)


# ---------------------------------------------------------------------------
# Haar


def haar_forward(x: np.ndarray) -> np.ndarray:
    """Orthonormal Haar transform along the last axis (length a power of 2).

    Output ordering is coarse to fine: ``[a, d_0, d_1 (2), d_2 (4), ...]``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n & (n - 1):
        raise ValueError("length must be a power of two")
    out = np.empty_like(x)
    cur = x
    hi = n
    while hi > 1:
        even, odd = cur[..., 0::2], cur[..., 1::2]
        out[..., hi // 2 : hi] = (even - odd) / math.sqrt(2.0)
        cur = (even + odd) / math.sqrt(2.0)
        hi //= 2
    out[..., 0:1] = cur
    return out


def haar_inverse(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    n = c.shape[-1]
    cur = c[..., 0:1]
    lo = 1
    while lo < n:
        d = c[..., lo : 2 * lo]
        nxt = np.empty(c.shape[:-1] + (2 * lo,))
        nxt[..., 0::2] = (cur + d) / math.sqrt(2.0)
        nxt[..., 1::2] = (cur - d) / math.sqrt(2.0)
        cur = nxt
        lo *= 2
    return cur


def padded_length(t: int) -> int:
    return 1 << max(0, math.ceil(math.log2(t)))


def haar_coefficients(values: np.ndarray) -> np.ndarray:
    """Haar coefficients with the record mean stored in position 0.

    Each series is split into its mean and its centered part; the centered
    part is zero-padded to a power of two and transformed. Its approximation
    coefficient is then exactly zero, so position 0 is reused for
    ``sqrt(T) * mean``, which keeps the map an isometry.
    """
    values = np.asarray(values, dtype=float)
    t = values.shape[-1]
    p2 = padded_length(t)
    mean = values.mean(axis=-1, keepdims=True)
    padded = np.zeros(values.shape[:-1] + (p2,))
    padded[..., :t] = values - mean
    coef = haar_forward(padded)
    coef[..., 0] = math.sqrt(t) * mean[..., 0]
    return coef


def haar_level_positions(level: int, t: int) -> np.ndarray:
    """Positions kept at resolution ``level``: the mean plus detail levels
    ``0 .. level-1``, i.e. the first ``2**level`` coefficients."""
    max_level = math.ceil(math.log2(t)) if t > 1 else 0
    if not (isinstance(level, (int, np.integer)) and 0 <= level <= max_level):
        raise ConfigError(f"Haar level must lie in [0, {max_level}], got {level!r}")
    return np.arange(min(1 << int(level), padded_length(t)))


def transform_haar(ds: Dataset, level: int | None = None, energy: float | None = None) -> Representation:
    """Haar representation, truncated by resolution level or by energy.

    Exactly one of ``level`` and ``energy`` must be given.
    """
    if (level is None) == (energy is None):
        raise ConfigError("give exactly one of level= or energy=")
    coef = haar_coefficients(ds.values)
    if level is not None:
        kept = haar_level_positions(level, ds.length)
        kind, params = HAAR_LEVEL, {"level": int(level)}
    else:
        alpha = _check_alpha(energy)
        kept = select_by_energy(np.sum(coef**2, axis=0), alpha)
        kind, params = HAAR_ENERGY, {"energy": alpha}
    params["padded_length"] = int(coef.shape[1])
    return Representation(kind, coef[:, kept], params, kept=kept, length=ds.length)


# ---------------------------------------------------------------------------
# Fourier


def fourier_coefficients(values: np.ndarray) -> np.ndarray:
    """Orthonormal real DFT coefficients.

    Layout: ``[DC, cos_1, sin_1, cos_2, sin_2, ..., (Nyquist)]``; the
    Nyquist term exists only for even ``T``. Total length is ``T``.
    """
    values = np.asarray(values, dtype=float)
    t = values.shape[-1]
    spec = np.fft.rfft(values, axis=-1)
    out = np.empty(values.shape[:-1] + (t,))
    out[..., 0] = spec[..., 0].real / math.sqrt(t)
    n_pairs = (t - 1) // 2
    scale = math.sqrt(2.0 / t)
    out[..., 1 : 2 * n_pairs + 1 : 2] = spec[..., 1 : n_pairs + 1].real * scale
    out[..., 2 : 2 * n_pairs + 2 : 2] = -spec[..., 1 : n_pairs + 1].imag * scale
    if t % 2 == 0:
        out[..., t - 1] = spec[..., t // 2].real / math.sqrt(t)
    return out


def fourier_inverse(coef: np.ndarray) -> np.ndarray:
    coef = np.asarray(coef, dtype=float)
    t = coef.shape[-1]
    spec = np.zeros(coef.shape[:-1] + (t // 2 + 1,), dtype=complex)
    spec[..., 0] = coef[..., 0] * math.sqrt(t)
    n_pairs = (t - 1) // 2
    scale = math.sqrt(t / 2.0)
    spec[..., 1 : n_pairs + 1] = (coef[..., 1 : 2 * n_pairs + 1 : 2] - 1j * coef[..., 2 : 2 * n_pairs + 2 : 2]) * scale
    if t % 2 == 0:
        spec[..., t // 2] = coef[..., t - 1] * math.sqrt(t)
    return np.fft.irfft(spec, n=t, axis=-1)


def _frequency_of_position(t: int) -> np.ndarray:
    pos = np.arange(t)
    freq = (pos + 1) // 2
    if t % 2 == 0:
        freq[t - 1] = t // 2
    return freq


def transform_fourier(ds: Dataset, energy: float = 0.95) -> Representation:
    """Fourier representation keeping the fewest frequencies (cos/sin pairs
    together) that carry a fraction ``energy`` of the dataset's energy."""
    alpha = _check_alpha(energy)
    coef = fourier_coefficients(ds.values)
    freq = _frequency_of_position(ds.length)
    pos_energy = np.sum(coef**2, axis=0)
    freq_energy = np.bincount(freq, weights=pos_energy)
    kept_freq = select_by_energy(freq_energy, alpha)
    kept = np.flatnonzero(np.isin(freq, kept_freq))
    params = {"energy": alpha, "frequencies": [int(f) for f in kept_freq]}
    return Representation(FOURIER_ENERGY, coef[:, kept], params, kept=kept, length=ds.length)


# ---------------------------------------------------------------------------
# PCA


def pca_decomposition(values: np.ndarray):
    """Principal axes of the column-centered data.

    Returns ``(column_means, variances, directions, scores)`` with variances
    in decreasing order (population convention, divide by ``N``) and
    directions as rows. Uses the ``N x N`` Gram matrix when ``N < T``.
    """
    x = np.asarray(values, dtype=float)
    n, t = x.shape
    mu = x.mean(axis=0)
    xc = x - mu
    if n < t:
        gram = xc @ xc.T
        evals, evecs = np.linalg.eigh(gram)
        evals, evecs = evals[::-1], evecs[:, ::-1]
        tol = max(evals[0], 0.0) * n * np.finfo(float).eps * 10
        pos = evals > tol
        sv = np.sqrt(evals[pos])
        directions = (xc.T @ evecs[:, pos] / sv).T
        variances = evals[pos] / n
    else:
        cov = xc.T @ xc
        evals, evecs = np.linalg.eigh(cov)
        evals, evecs = evals[::-1], evecs[:, ::-1]
        tol = max(evals[0], 0.0) * t * np.finfo(float).eps * 10
        pos = evals > tol
        directions = evecs[:, pos].T
        variances = evals[pos] / n
    # deterministic orientation: largest-magnitude loading positive
    if directions.size:
        flip = np.sign(directions[np.arange(directions.shape[0]), np.argmax(np.abs(directions), axis=1)])
        directions = directions * flip[:, None]
    scores = xc @ directions.T
    return mu, variances, directions, scores


def transform_pca(ds: Dataset, energy: float = 0.95) -> Representation:
    """PCA scores on the fewest components explaining a fraction ``energy``
    of the total variance."""
    alpha = _check_alpha(energy)
    mu, variances, directions, scores = pca_decomposition(ds.values)
    if variances.size == 0 or variances.sum() <= 0:
        raise DegenerateDataError("zero total variance; PCA is undefined")
    ratio = variances / variances.sum()
    cum = np.cumsum(ratio)
    p = int(np.searchsorted(cum, alpha * (1 - _ENERGY_RTOL), side="left")) + 1
    p = min(p, variances.size)
    return Representation(
        PCA,
        scores[:, :p],
        {"energy": alpha, "n_components": p},
        kept=np.arange(p),
        length=ds.length,
        basis=directions[:p],
        offset=mu,
        explained_variance=variances,
    )


# ---------------------------------------------------------------------------
# dispatch, reconstruction, persistence


def transform(ds: Dataset, kind: str, **params) -> Representation:
    """Apply the representation ``kind`` with its parameters."""
    if kind == MEAN:
        return transform_mean(ds)
    if kind == IDENTITY:
        return transform_identity(ds)
    if kind == ZSCORE:
        return transform_zscore(ds)
    if kind == HAAR_LEVEL:
        return transform_haar(ds, level=params["level"])
    if kind == HAAR_ENERGY:
        return transform_haar(ds, energy=params.get("energy", 0.95))
    if kind == FOURIER_ENERGY:
        return transform_fourier(ds, params.get("energy", 0.95))
    if kind == PCA:
        return transform_pca(ds, params.get("energy", 0.95))
    raise ConfigError(f"unknown representation kind {kind!r}")


def basis_matrix(rep: Representation) -> np.ndarray:
    """``p x T`` matrix whose rows are the atoms behind each feature."""
    if rep.basis is not None:
        return rep.basis
    if rep.kind in (HAAR_LEVEL, HAAR_ENERGY):
        atoms = haar_coefficients(np.eye(rep.length))
    elif rep.kind == FOURIER_ENERGY:
        atoms = fourier_coefficients(np.eye(rep.length))
    else:
        raise DataError(f"representation {rep.kind!r} has no basis; cannot reconstruct")
    return atoms[:, rep.kept].T


def reconstruct(rep: Representation) -> np.ndarray:
    """Map features back to series using only the kept coefficients.

    The result is the orthogonal projection of the data onto the span of
    the kept atoms (plus the column means for PCA).
    """
    recon = rep.features @ basis_matrix(rep)
    if rep.offset is not None:
        recon = recon + rep.offset
    return recon


def write_representation(rep: Representation, csv_path, sidecar_path=None) -> None:
    """CSV of ``record_index, f0..f{p-1}`` plus a JSON sidecar."""
    csv_path = Path(csv_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["record_index"] + [f"f{j}" for j in range(rep.n_features)]) + "\n")
        for i, row in enumerate(rep.features):
            fh.write(",".join([str(i)] + [format(float(v), ".17g") for v in row]) + "\n")
    sidecar_path.write_text(json.dumps(rep.sidecar(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_representation(csv_path, sidecar_path=None) -> Representation:
    csv_path = Path(csv_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    kept = None if meta.get("kept") is None else np.asarray(meta["kept"], dtype=np.int64)
    ev = meta.get("explained_variance")
    return Representation(
        meta["kind"],
        data[:, 1:],
        meta["params"],
        kept=kept,
        length=meta.get("length"),
        explained_variance=None if ev is None else np.asarray(ev),
    )
