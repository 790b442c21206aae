"""JSON schemas for every JSON file the command line tool writes."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import PurePath

SCHEMA_NAMES = (
    "cluster_summary",
    "clustering",
    "distance_spec",
    "group_report",
    "index_reports",
    "manifest",
    "pipeline",
    "representation",
    "representatives_lags",
    "runs",
)

# emitted file name -> schema name
_BY_FILENAME = {
    "cluster_summary.json": "cluster_summary",
    "clustering.json": "clustering",
    "group_report.json": "group_report",
    "index_reports.json": "index_reports",
    "manifest.json": "manifest",
    "pipeline.json": "pipeline",
    "representation.json": "representation",
    "representatives_lags.json": "representatives_lags",
    "runs.json": "runs",
}


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files(__name__).joinpath(f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def schema_for(path) -> str | None:
    """Schema name for an emitted file, ``None`` if it is not JSON output."""
    return _BY_FILENAME.get(PurePath(path).name)
