"""Time-series datasets: container, CSV ingestion, preprocessing and
synthetic scenario generation.

A :class:`Dataset` holds ``N`` series of common length ``T`` as one
read-only ``N x T`` float array, plus the identity of each record
(scenario, location) and optional coordinates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DatasetTooSmallError,
    ParseError,
    RaggedRowError,
    ZeroVarianceError,
)

RAW = "raw"
GLOBAL_CENTERED = "global_centered"
ZSCORED = "zscored"
PREPROCESSING_TAGS = (RAW, GLOBAL_CENTERED, ZSCORED)

WIDE = "wide"
LONG = "long"


@dataclass(frozen=True)
class TimeSeriesRecord:
    scenario_id: int
    location_id: int
    values: np.ndarray
    lat: float = math.nan
    lon: float = math.nan


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """``N`` equal-length series with their identities.

    Parameters
    ----------
    values : array (N, T)
        Samples, one series per row.
    scenario_ids, location_ids : array (N,)
        Record identity; the pair must be unique.
    lat, lon : array (N,), optional
        Coordinates in decimal degrees, NaN when unknown.
    global_mean : float, optional
        Mean over all samples of the raw data. Computed when omitted.
    preprocessing_tag : {"raw", "global_centered", "zscored"}
    """

    values: np.ndarray
    scenario_ids: np.ndarray
    location_ids: np.ndarray
    lat: np.ndarray | None = None
    lon: np.ndarray | None = None
    global_mean: float | None = None
    preprocessing_tag: str = RAW

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise DataError("values must be a 2-D array (records x samples)")
        n, t = values.shape
        if n < 2:
            raise DatasetTooSmallError(f"a dataset needs at least 2 records, got {n}")
        if t < 2:
            raise DataError(f"series length must exceed 1, got {t}")
        if not np.all(np.isfinite(values)):
            bad = int(np.argwhere(~np.isfinite(values))[0, 0])
            raise DataError(f"record {bad} contains non-finite values")
        if self.preprocessing_tag not in PREPROCESSING_TAGS:
            raise DataError(f"unknown preprocessing tag {self.preprocessing_tag!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        for name in ("scenario_ids", "location_ids"):
            ids = _readonly(getattr(self, name), dtype=np.int64)
            if ids.shape != (n,):
                raise DataError(f"{name} must have one entry per record")
            if np.any(ids < 0):
                raise DataError(f"{name} must be non-negative")
            object.__setattr__(self, name, ids)
        for name in ("lat", "lon"):
            coord = getattr(self, name)
            coord = np.full(n, np.nan) if coord is None else coord
            coord = _readonly(coord)
            if coord.shape != (n,):
                raise DataError(f"{name} must have one entry per record")
            object.__setattr__(self, name, coord)
        keys = set(zip(self.scenario_ids.tolist(), self.location_ids.tolist()))
        if len(keys) != n:
            raise DataError("duplicate (scenario, location) records")
        if self.global_mean is None:
            object.__setattr__(self, "global_mean", float(values.mean()))

    @property
    def n_records(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.n_records

    def __getitem__(self, i) -> TimeSeriesRecord:
        return TimeSeriesRecord(
            int(self.scenario_ids[i]),
            int(self.location_ids[i]),
            self.values[i],
            float(self.lat[i]),
            float(self.lon[i]),
        )

    @property
    def records(self) -> list[TimeSeriesRecord]:
        return [self[i] for i in range(self.n_records)]

    def __iter__(self) -> Iterator[TimeSeriesRecord]:
        return iter(self.records)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.preprocessing_tag == other.preprocessing_tag
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.scenario_ids, other.scenario_ids)
            and np.array_equal(self.location_ids, other.location_ids)
            and np.array_equal(self.lat, other.lat, equal_nan=True)
            and np.array_equal(self.lon, other.lon, equal_nan=True)
        )

    __hash__ = None

    def index_of(self, scenario_id: int, location_id: int) -> int:
        hit = np.flatnonzero(
            (self.scenario_ids == scenario_id) & (self.location_ids == location_id)
        )
        if hit.size == 0:
            raise DataError(f"no record for scenario {scenario_id}, location {location_id}")
        return int(hit[0])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            values=self.values[idx],
            scenario_ids=self.scenario_ids[idx],
            location_ids=self.location_ids[idx],
            lat=self.lat[idx],
            lon=self.lon[idx],
        )

    def with_values(self, values, tag: str, global_mean: float | None = None) -> "Dataset":
        return replace(
            self,
            values=values,
            preprocessing_tag=tag,
            global_mean=self.global_mean if global_mean is None else global_mean,
        )


# ---------------------------------------------------------------------------
# CSV


def _parse_float(text, row, column):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"non-numeric value {text!r}", row=row, column=column) from None


def _parse_int(text, row, column):
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"non-integer identifier {text!r}", row=row, column=column) from None


def _check_values(values, row):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        col = int(np.argwhere(~np.isfinite(arr))[0, 0])
        raise ParseError("missing or non-finite sample", row=row, column=col)
    return arr


def _load_wide(reader):
    header = next(reader, None)
    if header is None:
        raise DatasetTooSmallError("empty file")
    header = [h.strip() for h in header]
    if header[:4] != ["scenario", "location", "lat", "lon"]:
        raise ParseError("wide header must start with scenario,location,lat,lon", row=1)
    t_declared = len(header) - 4
    sids, lids, lats, lons, rows = [], [], [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) - 4 != t_declared:
            raise RaggedRowError(
                f"expected {t_declared} samples, found {len(row) - 4}", row=lineno
            )
        sids.append(_parse_int(row[0], lineno, "scenario"))
        lids.append(_parse_int(row[1], lineno, "location"))
        lats.append(_parse_float(row[2], lineno, "lat"))
        lons.append(_parse_float(row[3], lineno, "lon"))
        vals = [_parse_float(c, lineno, f"v{k}") for k, c in enumerate(row[4:])]
        rows.append(_check_values(vals, lineno))
    if len(rows) < 2:
        raise DatasetTooSmallError(f"a dataset needs at least 2 records, got {len(rows)}")
    return Dataset(np.vstack(rows), sids, lids, lats, lons)


def _load_long(reader):
    header = next(reader, None)
    if header is None:
        raise DatasetTooSmallError("empty file")
    header = [h.strip() for h in header]
    if header[:4] != ["scenario", "location", "t", "value"]:
        raise ParseError("long header must start with scenario,location,t,value", row=1)
    has_coords = header[4:6] == ["lat", "lon"]
    series: dict[tuple[int, int], dict[int, float]] = {}
    coords: dict[tuple[int, int], tuple[float, float]] = {}
    first_line: dict[tuple[int, int], int] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise RaggedRowError(f"expected {len(header)} columns", row=lineno)
        key = (_parse_int(row[0], lineno, "scenario"), _parse_int(row[1], lineno, "location"))
        t = _parse_int(row[2], lineno, "t")
        v = _parse_float(row[3], lineno, "value")
        if not math.isfinite(v):
            raise ParseError("missing or non-finite sample", row=lineno, column="value")
        samples = series.setdefault(key, {})
        first_line.setdefault(key, lineno)
        if t in samples:
            raise ParseError(f"duplicate time index {t} for {key}", row=lineno)
        samples[t] = v
        if has_coords:
            coords[key] = (
                _parse_float(row[4], lineno, "lat"),
                _parse_float(row[5], lineno, "lon"),
            )
    if len(series) < 2:
        raise DatasetTooSmallError(f"a dataset needs at least 2 records, got {len(series)}")
    keys = sorted(series)
    t_len = len(series[keys[0]])
    rows = []
    for key in keys:
        samples = series[key]
        if len(samples) != t_len or set(samples) != set(range(t_len)):
            raise RaggedRowError(
                f"series {key} has time indices inconsistent with length {t_len}",
                row=first_line[key],
            )
        rows.append([samples[t] for t in range(t_len)])
    lat = [coords[k][0] for k in keys] if has_coords else None
    lon = [coords[k][1] for k in keys] if has_coords else None
    return Dataset(
        np.array(rows, dtype=float),
        [k[0] for k in keys],
        [k[1] for k in keys],
        lat,
        lon,
    )


def load_csv(path, layout: str = WIDE) -> Dataset:
    """Read a dataset from CSV.

    Wide files carry one record per row (``scenario,location,lat,lon,v0..``)
    and keep file order; long files carry one sample per row
    (``scenario,location,t,value``, optionally followed by ``lat,lon``) and
    are returned sorted by ``(scenario, location)``.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if layout == WIDE:
            return _load_wide(reader)
        if layout == LONG:
            return _load_long(reader)
    raise ConfigError(f"unknown CSV layout {layout!r}")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(ds: Dataset, path, layout: str = WIDE) -> None:
    """Write ``ds`` so that :func:`load_csv` reads it back bit-exactly."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if layout == WIDE:
            w.writerow(["scenario", "location", "lat", "lon"] + [f"v{t}" for t in range(ds.length)])
            for i in range(ds.n_records):
                w.writerow(
                    [int(ds.scenario_ids[i]), int(ds.location_ids[i]), _fmt(ds.lat[i]), _fmt(ds.lon[i])]
                    + [_fmt(v) for v in ds.values[i]]
                )
        elif layout == LONG:
            has_coords = not (np.all(np.isnan(ds.lat)) and np.all(np.isnan(ds.lon)))
            head = ["scenario", "location", "t", "value"] + (["lat", "lon"] if has_coords else [])
            w.writerow(head)
            for i in range(ds.n_records):
                s, l = int(ds.scenario_ids[i]), int(ds.location_ids[i])
                tail = [_fmt(ds.lat[i]), _fmt(ds.lon[i])] if has_coords else []
                for t, v in enumerate(ds.values[i]):
                    w.writerow([s, l, t, _fmt(v)] + tail)
        else:
            raise ConfigError(f"unknown CSV layout {layout!r}")


# ---------------------------------------------------------------------------
# preprocessing


def center_global(ds: Dataset) -> Dataset:
    """Subtract the mean over all samples of all records."""
    if ds.preprocessing_tag != RAW:
        raise DataError(f"center_global expects raw data, got {ds.preprocessing_tag!r}")
    mean = float(ds.values.mean())
    return ds.with_values(ds.values - mean, GLOBAL_CENTERED, global_mean=mean)


def _zero_variance(std, x):
    scale = np.max(np.abs(x), axis=-1)
    return std <= 8 * np.finfo(float).eps * scale


def zscore(ds: Dataset) -> Dataset:
    """Standardize every record to mean 0 and population std 1."""
    mean = ds.values.mean(axis=1, keepdims=True)
    std = ds.values.std(axis=1, keepdims=True)
    bad = np.flatnonzero(_zero_variance(std[:, 0], ds.values))
    if bad.size:
        i = int(bad[0])
        raise ZeroVarianceError(
            f"record {i} (scenario {ds.scenario_ids[i]}, location {ds.location_ids[i]}) is constant",
            record=i,
        )
    return ds.with_values((ds.values - mean) / std, ZSCORED)


# ---------------------------------------------------------------------------
# synthetic data


def _coerce_spec(cls, mapping: Mapping[str, object]):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in mapping.items():
        name = key.replace("-", "_")
        if name not in known:
            raise ConfigError(f"unknown {cls.__name__} key {key!r}")
        default = known[name].default
        try:
            kwargs[name] = type(default)(raw) if not isinstance(raw, type(default)) else raw
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from None
    return cls(**kwargs)


def _draw_shapes(rng, n, n_harmonics, max_cycles):
    freqs = rng.integers(1, max_cycles + 1, size=(n, n_harmonics))
    amps = rng.uniform(0.5, 1.5, size=(n, n_harmonics))
    phases = rng.uniform(0.0, 2 * np.pi, size=(n, n_harmonics))
    return freqs, amps, phases


def _eval_shape(params, t, t_len, diurnal_period, diurnal_weight):
    """Random low-frequency sinusoids plus a day-night harmonic with a
    fixed phase, evaluated at (possibly shifted) times ``t``."""
    freqs, amps, phases = params
    g = np.sum(amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t[None, :] / t_len + phases[:, None]), axis=0)
    if diurnal_period > 0:
        g = g + diurnal_weight * np.sin(2 * np.pi * t / diurnal_period)
    return g


def _normalize_rms(shapes):
    rms = np.sqrt(np.mean(shapes**2, axis=1, keepdims=True))
    return shapes / rms


def _grid_coords(n_locations):
    n_cols = max(1, math.ceil(math.sqrt(n_locations)))
    idx = np.arange(n_locations)
    return 42.0 + 0.1 * (idx // n_cols), -5.0 + 0.1 * (idx % n_cols)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the scenario-by-location generator.

    Record ``(l, s)`` is ``m_l + a * g_s(t) + noise`` where ``m_l`` is a
    per-location offset and ``g_s`` a per-scenario unit-RMS shape shared by
    every location of scenario ``s``.
    """

    n_locations: int = 10
    n_scenarios: int = 60
    T: int = 512
    location_mean_spread: float = 5.0
    scenario_shape_amplitude: float = 1.0
    noise_std: float = 0.3
    rng_seed: int = 7
    n_harmonics: int = 4
    max_cycles: int = 8
    diurnal_period: int = 24
    diurnal_weight: float = 0.5

    def __post_init__(self):
        if self.n_locations < 1 or self.n_scenarios < 1:
            raise ConfigError("n_locations and n_scenarios must be >= 1")
        if self.n_locations * self.n_scenarios < 2:
            raise ConfigError("the generator must produce at least 2 records")
        if self.T < 2:
            raise ConfigError("T must exceed 1")
        for name in ("location_mean_spread", "scenario_shape_amplitude", "noise_std", "diurnal_weight"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must be a 64-bit unsigned integer")
        if self.n_harmonics < 1 or self.max_cycles < 1 or self.diurnal_period < 0:
            raise ConfigError("invalid shape parameters")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object]) -> "SyntheticSpec":
        return _coerce_spec(cls, mapping)


def synthetic_components(spec: SyntheticSpec):
    """Return ``(location_means, scenario_shapes, noise)`` of the generator.

    ``noise`` has shape ``(n_scenarios, n_locations, T)``.
    """
    rng = np.random.default_rng(spec.rng_seed)
    means = rng.normal(0.0, 1.0, size=spec.n_locations) * spec.location_mean_spread
    freqs, amps, phases = _draw_shapes(rng, spec.n_scenarios, spec.n_harmonics, spec.max_cycles)
    t = np.arange(spec.T, dtype=float)
    shapes = np.vstack([
        _eval_shape((freqs[s], amps[s], phases[s]), t, spec.T, spec.diurnal_period, spec.diurnal_weight)
        for s in range(spec.n_scenarios)
    ])
    shapes = _normalize_rms(shapes)
    noise = rng.normal(0.0, 1.0, size=(spec.n_scenarios, spec.n_locations, spec.T)) * spec.noise_std
    return means, shapes, noise


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Scenario x location dataset, ordered by ``(scenario, location)``."""
    means, shapes, noise = synthetic_components(spec)
    a = spec.scenario_shape_amplitude
    values = means[None, :, None] + a * shapes[:, None, :] + noise
    n_s, n_l = spec.n_scenarios, spec.n_locations
    lat, lon = _grid_coords(n_l)
    return Dataset(
        values.reshape(n_s * n_l, spec.T),
        np.repeat(np.arange(n_s), n_l),
        np.tile(np.arange(n_l), n_s),
        np.tile(lat, n_s),
        np.tile(lon, n_s),
    )


@dataclass(frozen=True)
class PlantedSpec:
    """Single-location dataset with known shape groups.

    Every series is its group's prototype shifted by a random lag, scaled,
    offset and perturbed by white noise.
    """

    n_series: int = 200
    n_groups: int = 15
    T: int = 512
    max_lag: int = 8
    scale_jitter: float = 0.2
    offset_std: float = 0.5
    noise_std: float = 0.5
    rng_seed: int = 0
    n_harmonics: int = 4
    max_cycles: int = 8
    diurnal_period: int = 24
    diurnal_weight: float = 0.5

    def __post_init__(self):
        if self.n_series < 2 or not 1 <= self.n_groups <= self.n_series:
            raise ConfigError("need n_series >= 2 and 1 <= n_groups <= n_series")
        if self.T < 2 or not 0 <= self.max_lag < self.T:
            raise ConfigError("need T > 1 and 0 <= max_lag < T")
        if not 0 <= self.scale_jitter < 1:
            raise ConfigError("scale_jitter must lie in [0, 1)")
        for name in ("offset_std", "noise_std", "diurnal_weight"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object]) -> "PlantedSpec":
        return _coerce_spec(cls, mapping)


def generate_planted(spec: PlantedSpec) -> tuple[Dataset, np.ndarray]:
    """Return the dataset and its ground-truth group labels."""
    rng = np.random.default_rng(spec.rng_seed)
    labels = np.arange(spec.n_series) % spec.n_groups
    freqs, amps, phases = _draw_shapes(rng, spec.n_groups, spec.n_harmonics, spec.max_cycles)
    lags = rng.integers(-spec.max_lag, spec.max_lag + 1, size=spec.n_series)
    scales = rng.uniform(1 - spec.scale_jitter, 1 + spec.scale_jitter, size=spec.n_series)
    offsets = rng.normal(0.0, 1.0, size=spec.n_series) * spec.offset_std
    noise = rng.normal(0.0, 1.0, size=(spec.n_series, spec.T)) * spec.noise_std

    t = np.arange(spec.T, dtype=float)
    groups = [(freqs[g], amps[g], phases[g]) for g in range(spec.n_groups)]
    rms = [
        np.sqrt(np.mean(_eval_shape(p, t, spec.T, spec.diurnal_period, spec.diurnal_weight) ** 2))
        for p in groups
    ]
    values = np.empty((spec.n_series, spec.T))
    for i in range(spec.n_series):
        g = labels[i]
        shape = _eval_shape(groups[g], t - lags[i], spec.T, spec.diurnal_period, spec.diurnal_weight)
        values[i] = scales[i] * shape / rms[g] + offsets[i] + noise[i]
    ds = Dataset(values, np.arange(spec.n_series), np.zeros(spec.n_series, dtype=np.int64))
    return ds, labels
