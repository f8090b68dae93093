"""Small shared helpers: deterministic JSON, hashing, month bucketing."""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any


def stable_json_dumps(obj: Any) -> str:
    """Serialize with sorted keys and repr-exact floats; byte-stable across runs."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False)


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(stable_json_dumps(obj) + "\n", encoding="utf-8")


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def month_key(epoch_seconds: int) -> str:
    """UTC calendar month bucket, e.g. 1262304000 -> '2010-01'."""
    dt = datetime.fromtimestamp(epoch_seconds, tz=timezone.utc)
    return f"{dt.year:04d}-{dt.month:02d}"


def month_range(start_epoch: int, end_epoch: int) -> list[str]:
    """Every calendar month key from start to end inclusive (UTC)."""
    start = datetime.fromtimestamp(start_epoch, tz=timezone.utc)
    end = datetime.fromtimestamp(end_epoch, tz=timezone.utc)
    months = []
    year, month = start.year, start.month
    while (year, month) <= (end.year, end.month):
        months.append(f"{year:04d}-{month:02d}")
        month += 1
        if month == 13:
            month = 1
            year += 1
    return months
