"""Loaders for the chainforge export schemas (the only coupling point)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

ALLUVIAL_SCHEMA_VERSION = "chainforge-alluvial/1"
METRICS_SCHEMA_VERSION = "chainforge-metrics/1"


class SchemaError(Exception):
    pass


def load_alluvial(path: str | Path) -> dict:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    found = payload.get("schema_version")
    if found != ALLUVIAL_SCHEMA_VERSION:
        raise SchemaError(f"alluvial schema mismatch: expected "
                          f"{ALLUVIAL_SCHEMA_VERSION!r}, found {found!r}")
    for key in ("levels", "nodes", "flows"):
        if key not in payload:
            raise SchemaError(f"alluvial export lacks {key!r}")
    return payload


def load_trends(path: str | Path) -> tuple[list[str], list[dict]]:
    """Returns (categories, rows); rows keep month, volume, counts, pcts."""
    with Path(path).open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or "month" not in reader.fieldnames \
                or "volume" not in reader.fieldnames:
            raise SchemaError("trends CSV lacks month/volume columns")
        categories = [name[4:] for name in reader.fieldnames
                      if name.startswith("pct_")]
        if not categories:
            raise SchemaError("trends CSV has no pct_<category> columns")
        rows = []
        for record in reader:
            rows.append({
                "month": record["month"],
                "volume": int(record["volume"]),
                "pct": {c: float(record[f"pct_{c}"]) for c in categories},
                "count": {c: int(record[f"n_{c}"]) for c in categories
                          if f"n_{c}" in record},
            })
    return categories, rows


def load_metrics(path: str | Path, task: str = "product") -> dict:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    found = payload.get("schema_version")
    if found != METRICS_SCHEMA_VERSION:
        raise SchemaError(f"metrics schema mismatch: expected "
                          f"{METRICS_SCHEMA_VERSION!r}, found {found!r}")
    if task not in payload:
        raise SchemaError(f"metrics export has no task {task!r}; available: "
                          f"{sorted(k for k in payload if k != 'schema_version')}")
    report = payload[task]
    if "confusion" not in report or "class_names" not in report:
        raise SchemaError("metrics report lacks confusion/class_names")
    return report
