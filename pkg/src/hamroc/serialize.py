"""JSON and CSV writers with a fixed float format.

Every file the toolkit emits serializes floats with 17 significant digits
('%.17g'), which round-trips IEEE doubles exactly and keeps reruns
byte-identical. Field order in JSON documents is insertion order, never
re-sorted, so schemas stay stable.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FLOAT_FORMAT = "%.17g"


def format_float(x: float) -> str:
    return FLOAT_FORMAT % float(x)


def dumps_json(obj, indent: int = 2) -> str:
    """Serialize to JSON with 17-significant-digit floats and stable key order."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj, indent: int = 2) -> None:
    Path(path).write_text(dumps_json(obj, indent))


def read_json(path):
    return json.loads(Path(path).read_text())


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    close_pad = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}"
            for k, v in obj.items()
        )
        return "{\n" + items + "\n" + close_pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(np.asarray(obj).tolist()) if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, bool)) or v is None for v in seq):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in seq) + "]"
        items = ",\n".join(f"{pad}{_encode(v, indent, level + 1)}" for v in seq)
        return "[\n" + items + "\n" + close_pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            raise ValueError(f"cannot serialize non-finite float {x!r}")
        return format_float(x)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_csv(path, header: list[str], rows) -> None:
    """Write a CSV of float rows under a fixed header, one sample per row."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(x) for x in np.asarray(row, dtype=float)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a CSV written by write_csv; returns (header, data array)."""
    text = Path(path).read_text().strip().split("\n")
    header = text[0].split(",")
    data = np.array(
        [[float(x) for x in line.split(",")] for line in text[1:]], dtype=float
    )
    if data.size == 0:
        data = np.zeros((0, len(header)))
    return header, data


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(obj) -> str:
    """Stable hash of a config document (canonical JSON, sorted keys)."""
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_canon)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _canon(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"cannot hash {type(obj).__name__}")
