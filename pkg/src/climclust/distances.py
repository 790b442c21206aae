"""Pairwise dissimilarities between series and distance-matrix assembly.

Kernels are compiled with numba and release the GIL; :func:`distance_matrix`
spreads rows over a thread pool. Every pair is computed by the same compiled
kernel and written to its own slot, so results do not depend on the number
of workers.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import ConfigError, DataError, PairError, ZeroVarianceError

L2 = "l2"
MLPC = "mlpc"
DTW = "dtw"
DTW_BANDED = "dtw_banded"
KINDS = (L2, MLPC, DTW, DTW_BANDED)

SQUARED = "squared"
ABSOLUTE = "absolute"

OVERLAP = "overlap"
SBD = "sbd"

DEFAULT_K_MAX = 240

_KIND_CODES = {L2: 1, MLPC: 2, DTW: 3, DTW_BANDED: 4}
_MAGIC = b"CCDM"

# kernel status codes
_OK = 0
_CONSTANT = 1


@dataclass(frozen=True)
class DistanceSpec:
    """Which dissimilarity to compute and its parameters.

    ``band`` of ``None`` for ``dtw_banded`` means ``ceil(0.1 * T)``.
    ``normalization`` selects the MLPC variant: ``"overlap"`` re-standardizes
    both segments at every lag, ``"sbd"`` uses the zero-padded normalized
    cross-correlation of the full z-normalized series.
    """

    kind: str = L2
    k_max: int = DEFAULT_K_MAX
    band: int | None = None
    cost: str = SQUARED
    normalization: str = OVERLAP

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown distance kind {self.kind!r}")
        if self.k_max < 0:
            raise ConfigError("k_max must be >= 0")
        if self.band is not None and self.band < 0:
            raise ConfigError("band must be >= 0")
        if self.cost not in (SQUARED, ABSOLUTE):
            raise ConfigError(f"unknown DTW cost {self.cost!r}")
        if self.normalization not in (OVERLAP, SBD):
            raise ConfigError(f"unknown MLPC normalization {self.normalization!r}")

    def band_for(self, t: int) -> int:
        if self.kind == DTW:
            return -1
        if self.kind == DTW_BANDED:
            return math.ceil(0.1 * t) if self.band is None else int(self.band)
        raise ConfigError(f"{self.kind} has no band")

    def validate(self, t: int) -> None:
        """Check the spec against row length ``t``."""
        if self.kind == MLPC:
            if self.k_max >= t:
                raise ConfigError(f"k_max={self.k_max} must be < series length {t}")
            if t - self.k_max < 3:
                raise ConfigError(f"overlap T - k_max = {t - self.k_max} is below 3")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == MLPC:
            d["k_max"] = self.k_max
            d["normalization"] = self.normalization
        if self.kind in (DTW, DTW_BANDED):
            d["cost"] = self.cost
        if self.kind == DTW_BANDED:
            d["band"] = self.band
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DistanceSpec":
        return cls(**d)


# ---------------------------------------------------------------------------
# compiled kernels

_jit = numba.njit(cache=True, nogil=True)


@_jit
def _l2_kernel(z, w):
    s = 0.0
    for t in range(z.shape[0]):
        d = z[t] - w[t]
        s += d * d
    return math.sqrt(s)


@_jit
def _lag_corr(ref, x, lag):
    """Pearson correlation of ``x[u + lag]`` against ``ref[u]`` over the
    overlap. Returns ``(r, status)``."""
    n_ref = ref.shape[0]
    n_x = x.shape[0]
    u0 = max(0, -lag)
    u1 = min(n_ref, n_x - lag)
    m = u1 - u0
    if m < 2:
        return 0.0, _CONSTANT
    ma = 0.0
    mb = 0.0
    for u in range(u0, u1):
        ma += x[u + lag]
        mb += ref[u]
    ma /= m
    mb /= m
    sab = 0.0
    saa = 0.0
    sbb = 0.0
    qa = 0.0
    qb = 0.0
    for u in range(u0, u1):
        a = x[u + lag]
        b = ref[u]
        da = a - ma
        db = b - mb
        sab += da * db
        saa += da * da
        sbb += db * db
        qa += a * a
        qb += b * b
    if saa <= 1e-24 * qa or sbb <= 1e-24 * qb:
        return 0.0, _CONSTANT
    r = sab / math.sqrt(saa * sbb)
    if r > 1.0:
        r = 1.0
    elif r < -1.0:
        r = -1.0
    return r, _OK


@_jit
def _best_lag(ref, x, lag_lo, lag_hi):
    """Lag in ``[lag_lo, lag_hi]`` maximizing the overlap correlation of
    ``x`` shifted against ``ref``; the lowest lag wins ties.

    Returns ``(best_r, best_lag, status, failing_lag)``.
    """
    best = -2.0
    best_lag = lag_lo
    for lag in range(lag_lo, lag_hi + 1):
        r, st = _lag_corr(ref, x, lag)
        if st != _OK:
            return 0.0, 0, st, lag
        if r > best:
            best = r
            best_lag = lag
    return best, best_lag, _OK, 0


@_jit
def _mlpc_kernel(z, w, k_max):
    # corr_k pairs z[t + k] with w[t]
    best, _, st, bad = _best_lag(w, z, -k_max, k_max)
    return 1.0 - best, st, bad


@_jit
def _sbd_kernel(z, w, k_max):
    n = z.shape[0]
    mz = 0.0
    mw = 0.0
    for t in range(n):
        mz += z[t]
        mw += w[t]
    mz /= n
    mw /= n
    sz = 0.0
    sw = 0.0
    qz = 0.0
    qw = 0.0
    for t in range(n):
        sz += (z[t] - mz) ** 2
        sw += (w[t] - mw) ** 2
        qz += z[t] * z[t]
        qw += w[t] * w[t]
    if sz <= 1e-24 * qz:
        return 0.0, _CONSTANT, 0
    if sw <= 1e-24 * qw:
        return 0.0, _CONSTANT, 0
    norm = math.sqrt(sz * sw)
    best = -2.0
    for k in range(-k_max, k_max + 1):
        t0 = max(0, -k)
        t1 = min(n, n - k)
        s = 0.0
        for t in range(t0, t1):
            s += (z[t + k] - mz) * (w[t] - mw)
        r = s / norm
        if r > best:
            best = r
    if best > 1.0:
        best = 1.0
    return 1.0 - best, _OK, 0


@_jit
def _dtw_kernel(z, w, band, squared):
    """Three-step DTW; ``band < 0`` means unconstrained."""
    n = z.shape[0]
    m = w.shape[0]
    inf = np.inf
    prev = np.full(m + 1, inf)
    cur = np.full(m + 1, inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        if band < 0:
            jlo = 1
            jhi = m
        else:
            jlo = max(1, i - band)
            jhi = min(m, i + band)
        cur[jlo - 1] = inf
        zi = z[i - 1]
        for j in range(jlo, jhi + 1):
            d = zi - w[j - 1]
            c = d * d if squared else abs(d)
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = c + best
        if band >= 0 and jhi < m:
            cur[jhi + 1] = inf
        prev, cur = cur, prev
    total = prev[m]
    if squared:
        return math.sqrt(total)
    return total


@_jit
def _pair(x, y, code, k_max, band, squared):
    if code == 1:
        return _l2_kernel(x, y), _OK, 0
    if code == 2:
        return _mlpc_kernel(x, y, k_max)
    if code == 5:
        return _sbd_kernel(x, y, k_max)
    return _dtw_kernel(x, y, band, squared), _OK, 0


@_jit
def _fill_rows(X, rows, code, k_max, band, squared, out, status, bad_lag):
    n = X.shape[0]
    for r in range(rows.shape[0]):
        i = rows[r]
        for j in range(i + 1, n):
            d, st, bad = _pair(X[i], X[j], code, k_max, band, squared)
            out[i, j] = d
            status[i, j] = st
            bad_lag[i, j] = bad


@_jit
def _fill_cross(X, Y, code, k_max, band, squared, out, status, bad_lag):
    for i in range(X.shape[0]):
        for j in range(Y.shape[0]):
            d, st, bad = _pair(X[i], Y[j], code, k_max, band, squared)
            out[i, j] = d
            status[i, j] = st
            bad_lag[i, j] = bad


def _as_series(z, name):
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise DataError(f"{name} must be one-dimensional")
    return z


def _kernel_args(spec: DistanceSpec, t: int):
    if spec.kind == L2:
        return 1, 0, 0
    if spec.kind == MLPC:
        spec.validate(t)
        return (2 if spec.normalization == OVERLAP else 5), spec.k_max, 0
    return 3, 0, spec.band_for(t)


# ---------------------------------------------------------------------------
# public single-pair API


def dist_l2(z, w) -> float:
    z, w = _as_series(z, "z"), _as_series(w, "w")
    if z.shape != w.shape:
        raise DataError(f"length mismatch: {z.size} vs {w.size}")
    return float(_l2_kernel(z, w))


def dist_mlpc(z, w, k_max: int = DEFAULT_K_MAX, normalization: str = OVERLAP) -> float:
    """One minus the largest Pearson correlation over lags ``|k| <= k_max``.

    At lag ``k`` the overlapping segments ``z[t + k]`` and ``w[t]`` are each
    standardized on the overlap. The result lies in ``[0, 2]``.
    """
    z, w = _as_series(z, "z"), _as_series(w, "w")
    if z.shape != w.shape:
        raise DataError(f"length mismatch: {z.size} vs {w.size}")
    spec = DistanceSpec(MLPC, k_max=k_max, normalization=normalization)
    spec.validate(z.size)
    if normalization == OVERLAP:
        d, st, bad = _mlpc_kernel(z, w, int(k_max))
    else:
        d, st, bad = _sbd_kernel(z, w, int(k_max))
    if st != _OK:
        raise ZeroVarianceError(f"constant overlap segment at lag {bad}", lag=int(bad))
    return float(d)


def dist_dtw(z, w, cost: str = SQUARED, band: int | None = None) -> float:
    """Dynamic time warping with steps (1,0), (0,1), (1,1).

    With squared cost the square root of the optimal path cost is returned,
    so the value shares units with the L2 distance and never exceeds it for
    equal lengths. ``band`` restricts the path to ``|i - j| <= band``.
    """
    z, w = _as_series(z, "z"), _as_series(w, "w")
    if z.size == 0 or w.size == 0:
        raise DataError("DTW needs non-empty series")
    if cost not in (SQUARED, ABSOLUTE):
        raise ConfigError(f"unknown DTW cost {cost!r}")
    if band is None:
        b = -1
    else:
        if band < 0:
            raise ConfigError("band must be >= 0")
        if abs(z.size - w.size) > band:
            raise ConfigError(
                f"band {band} is narrower than the length difference {abs(z.size - w.size)}"
            )
        b = int(band)
    return float(_dtw_kernel(z, w, b, cost == SQUARED))


def pair_distance(z, w, spec: DistanceSpec) -> float:
    if spec.kind == L2:
        return dist_l2(z, w)
    if spec.kind == MLPC:
        return dist_mlpc(z, w, spec.k_max, spec.normalization)
    band = None if spec.kind == DTW else spec.band_for(len(z))
    return dist_dtw(z, w, spec.cost, band)


# ---------------------------------------------------------------------------
# matrices


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    spec: DistanceSpec
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _raise_first_failure(status, bad_lag, offset_j=0):
    hits = np.argwhere(status != _OK)
    if hits.size:
        i, j = (int(v) for v in hits[0])
        raise PairError(f"constant overlap segment at lag {int(bad_lag[i, j])}", i, j + offset_j)


def distance_matrix(X, spec: DistanceSpec, n_jobs: int = 1) -> DistanceMatrix:
    """All pairwise distances between the rows of ``X``.

    ``n_jobs`` threads share the rows (interleaved for load balance); the
    output is bit-identical for any ``n_jobs``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("X must be two-dimensional")
    n, t = X.shape
    code, k_max, band = _kernel_args(spec, t)
    squared = spec.cost == SQUARED
    out = np.zeros((n, n))
    status = np.zeros((n, n), dtype=np.int8)
    bad_lag = np.zeros((n, n), dtype=np.int64)
    n_jobs = max(1, int(n_jobs))
    if n_jobs == 1:
        _fill_rows(X, np.arange(n, dtype=np.int64), code, k_max, band, squared, out, status, bad_lag)
    else:
        chunks = [np.arange(w, n, n_jobs, dtype=np.int64) for w in range(n_jobs)]
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(
                lambda rows: _fill_rows(X, rows, code, k_max, band, squared, out, status, bad_lag),
                chunks,
            ))
    _raise_first_failure(status, bad_lag)
    iu = np.triu_indices(n, 1)
    out[(iu[1], iu[0])] = out[iu]
    return DistanceMatrix(spec, out)


def cross_distances(X, Y, spec: DistanceSpec) -> np.ndarray:
    """Distances between every row of ``X`` and every row of ``Y``."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    Y = np.ascontiguousarray(np.atleast_2d(Y), dtype=np.float64)
    if X.shape[1] != Y.shape[1]:
        raise DataError("row lengths differ")
    code, k_max, band = _kernel_args(spec, X.shape[1])
    out = np.zeros((X.shape[0], Y.shape[0]))
    status = np.zeros(out.shape, dtype=np.int8)
    bad_lag = np.zeros(out.shape, dtype=np.int64)
    _fill_cross(X, Y, code, k_max, band, spec.cost == SQUARED, out, status, bad_lag)
    _raise_first_failure(status, bad_lag)
    return out


def best_lag(ref, x, k_max: int) -> tuple[int, float]:
    """Shift ``k`` in ``[-k_max, k_max]`` maximizing corr(``x[u + k]``, ``ref[u]``)."""
    ref, x = _as_series(ref, "ref"), _as_series(x, "x")
    r, lag, st, bad = _best_lag(ref, x, -int(k_max), int(k_max))
    if st != _OK:
        raise ZeroVarianceError(f"constant overlap segment at lag {bad}", lag=int(bad))
    return int(lag), float(r)


# ---------------------------------------------------------------------------
# persistence
#
# CSV: N header-less rows of N values, 17 significant digits.
# Binary: 16-byte little-endian header
#   bytes 0-3   magic b"CCDM"
#   bytes 4-11  N as uint64
#   bytes 12-15 kind code as uint32 (1 l2, 2 mlpc, 3 dtw, 4 dtw_banded)
# followed by the strict lower triangle as float64, row-major
# (row 1: d10; row 2: d20 d21; ...), N(N-1)/2 values.


def write_distance_csv(dm: DistanceMatrix, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for row in dm.values:
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")


def read_distance_csv(path, spec: DistanceSpec) -> DistanceMatrix:
    values = np.loadtxt(path, delimiter=",", ndmin=2)
    return DistanceMatrix(spec, values)


def write_distance_binary(dm: DistanceMatrix, path) -> None:
    n = dm.n
    lower = dm.values[np.tril_indices(n, -1)]
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QI", n, _KIND_CODES[dm.spec.kind]))
        fh.write(lower.astype("<f8").tobytes())


def read_distance_binary(path) -> tuple[int, str, np.ndarray]:
    """Return ``(N, kind, full_matrix)``."""
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise DataError("not a distance-matrix file (bad magic)")
    n, code = struct.unpack("<QI", raw[4:16])
    kinds = {v: k for k, v in _KIND_CODES.items()}
    if code not in kinds:
        raise DataError(f"unknown kind code {code}")
    lower = np.frombuffer(raw[16:], dtype="<f8")
    if lower.size != n * (n - 1) // 2:
        raise DataError("truncated distance-matrix file")
    full = np.zeros((n, n))
    full[np.tril_indices(n, -1)] = lower
    full = full + full.T
    return n, kinds[code], full
