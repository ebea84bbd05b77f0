"""CSV and JSON helpers shared by the data products.

CSV files are UTF-8 with ``# key=value`` metadata lines, one header row and
numbers written with 17 significant digits.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

__all__ = ["write_csv", "read_csv", "write_json", "format_number"]


def format_number(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _meta_value(v) -> str:
    if isinstance(v, float):
        return format_number(v)
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def write_csv(path, columns, rows, header: dict | None = None) -> None:
    rows = np.asarray(rows, dtype=float).reshape(-1, len(columns))
    lines = [f"# {k}={_meta_value(v)}" for k, v in (header or {}).items()]
    lines.append(",".join(columns))
    lines.extend(",".join(format_number(x) for x in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_meta(v: str):
    v = v.strip()
    if v == "None":
        return None
    try:
        return float(v)
    except ValueError:
        pass
    try:
        return json.loads(v)
    except ValueError:
        return v


def read_csv(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return ``(metadata, columns)``; metadata values are parsed as float or JSON where possible."""
    meta: dict = {}
    names = None
    data = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].partition("=")
            if sep:
                meta[key.strip()] = _parse_meta(val)
            continue
        fields = [f.strip() for f in line.split(",")]
        if names is None:
            names = fields
            continue
        if len(fields) != len(names):
            raise ValueError(f"{path}:{lineno}: expected {len(names)} fields, got {len(fields)}")
        try:
            data.append([float(f) for f in fields])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if names is None:
        raise ValueError(f"{path}: no header row")
    arr = np.array(data, dtype=float).reshape(-1, len(names))
    return meta, {name: arr[:, i] for i, name in enumerate(names)}


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n",
                          encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o)}")
