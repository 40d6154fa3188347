"""JSON reports with provenance and CSV tables with a schema row."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__


def to_jsonable(obj):
    """Recursively convert numpy and dataclass values; non-finite floats become strings."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    return obj


def canonical_json(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def provenance(config: dict, timestamp: str | None = None) -> dict:
    return {
        "tool": "squidline",
        "version": __version__,
        "config_hash": config_hash(config),
        "timestamp": timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def write_report(path: Path, command: str, config: dict, results: dict, timestamp: str | None = None) -> Path:
    body = {"command": command, "config": config, "results": results, "provenance": provenance(config, timestamp)}
    path.write_text(json.dumps(to_jsonable(body), sort_keys=True, indent=2) + "\n")
    return path


@dataclasses.dataclass(frozen=True)
class Column:
    name: str
    unit: str = ""
    description: str = ""

    def schema(self) -> str:
        unit = f" [{self.unit}]" if self.unit else ""
        return f"{self.name}{unit}: {self.description}" if self.description else f"{self.name}{unit}"


def write_csv(path: Path, columns: Sequence[Column], rows: Iterable[Sequence]) -> Path:
    """First row documents every column, second row holds the column names."""
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        # commas would split the schema line into several cells
        w.writerow(["# schema: " + " | ".join(c.schema().replace(",", ";") for c in columns)])
        w.writerow([c.name for c in columns])
        for r in rows:
            w.writerow([_cell(x) for x in r])
    return path


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[1], rows[2:]
