"""Static figures rendered from the CSV tables the experiments write.

Figures are built on :class:`matplotlib.figure.Figure` directly (no pyplot
state) and saved as PNG without the software tag, so reruns on the same
installation produce identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .errors import ConfigError

COLOR_A = "#d95f02"  # same location, other scenarios
COLOR_B = "#1b9e77"  # same scenario, other locations
COLOR_REP = "#7570b3"
DPI = 100


def _read_table(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty table")
    return rows[0], rows[1:]


def _column(header, rows, name, cast=float):
    j = header.index(name)
    return np.array([cast(r[j]) if r[j] != "" else np.nan for r in rows])


def save_figure(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=DPI, format="png", metadata={"Software": None})
    return path


def plot_histogram(table, path, title: str = "") -> Path:
    """Side-by-side distance histograms of the two comparison groups."""
    header, rows = _read_table(table)
    left = _column(header, rows, "bin_left")
    ca = _column(header, rows, "count_A")
    cb = _column(header, rows, "count_B")
    width = float(left[1] - left[0]) if left.size > 1 else 1.0

    fig = Figure(figsize=(6.0, 3.5))
    ax = fig.add_subplot()
    ax.bar(left, ca, width=width, align="edge", color=COLOR_A, alpha=0.6, label="same location")
    ax.bar(left, cb, width=width, align="edge", color=COLOR_B, alpha=0.6, label="same scenario")
    ax.set_xlabel("distance to reference")
    ax.set_ylabel("count")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    return save_figure(fig, path)


def plot_ranking(table, path, title: str = "") -> Path:
    """Horizontal bars of the combined index, best pipeline on top."""
    header, rows = _read_table(table)
    names = [r[header.index("pipeline")] for r in rows]
    score = _column(header, rows, "I")
    fidelity = _column(header, rows, "F")

    fig = Figure(figsize=(6.0, 0.4 * max(len(names), 3) + 1.0))
    ax = fig.add_subplot()
    y = np.arange(len(names))[::-1]
    ax.barh(y, fidelity, color="0.85", label="F")
    ax.barh(y, score, height=0.5, color=COLOR_REP, label="I")
    ax.set_yticks(y, names)
    ax.set_xlim(min(0.0, float(np.nanmin(score))), 1.0)
    ax.set_xlabel("index")
    ax.set_title(title)
    ax.legend(frameon=False, loc="lower right")
    fig.tight_layout()
    return save_figure(fig, path)


def plot_cluster(table, path, title: str = "") -> Path:
    """Aligned members in gray and the representative in color."""
    header, rows = _read_table(table)
    t = _column(header, rows, "t", int)
    rep = _column(header, rows, "representative")
    members = [h for h in header if h.startswith("m")]

    fig = Figure(figsize=(6.0, 3.0))
    ax = fig.add_subplot()
    for name in members:
        ax.plot(t, _column(header, rows, name), color="0.6", linewidth=0.4, alpha=0.6)
    ax.plot(t, rep, color=COLOR_REP, linewidth=1.5)
    ax.set_xlabel("time step")
    ax.set_title(f"{title} ({len(members)} series)" if title else f"{len(members)} series")
    fig.tight_layout()
    return save_figure(fig, path)


def render_report(run_dir, out_dir=None) -> list[Path]:
    """Render every figure the tables under ``run_dir`` support.

    Looks for ``histogram_*.csv`` (group experiment), ``ranking_*.csv``
    (pipeline comparison) and ``clusters/cluster_*.csv`` (cluster report).
    Figures go to ``out_dir``, by default ``run_dir/figures``.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"{run_dir} is not a directory")
    out = Path(out_dir) if out_dir is not None else run_dir / "figures"
    written = []
    for p in sorted(run_dir.glob("histogram_*.csv")):
        name = p.stem.removeprefix("histogram_")
        written.append(plot_histogram(p, out / f"histogram_{name}.png", name))
    for p in sorted(run_dir.glob("ranking_*.csv")):
        name = p.stem.removeprefix("ranking_")
        written.append(plot_ranking(p, out / f"ranking_{name}.png", f"reference {name}"))
    for p in sorted((run_dir / "clusters").glob("cluster_*.csv")):
        written.append(plot_cluster(p, out / f"{p.stem}.png", p.stem.replace("_", " ")))
    if not written:
        raise ConfigError(f"{run_dir} holds no tables to plot")
    return written
