"""Readers for the simulation CLI's file formats.

Three formats are consumed, all plain text:

- trajectory/ODE CSV: one header row, float columns;
- JSON-lines records and fits (one object per line);
- key-value manifests/metadata (``key=value`` per line).

Every reader validates the fields it needs and raises :class:`SchemaError`
naming the offending file and field. Nothing in this module computes any
science; it only parses what the simulation side already wrote.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class SchemaError(ValueError):
    """An input file does not match the documented schema."""


def read_csv(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read file ({exc})")
    if not lines:
        raise SchemaError(f"{path}: empty file, expected a CSV header row")
    header = [h.strip() for h in lines[0].split(",")]
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise SchemaError(
                f"{path}:{lineno}: expected {len(header)} columns, got {len(parts)}"
            )
        try:
            rows.append([float(x) if x != "" else np.nan for x in parts])
        except ValueError:
            raise SchemaError(f"{path}:{lineno}: non-numeric value in data row")
    data = np.array(rows) if rows else np.empty((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}


def require_columns(table: dict, path, columns) -> None:
    for col in columns:
        if col not in table:
            raise SchemaError(f"{path}: missing required column '{col}'")


def read_jsonl(path) -> list[dict]:
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc.msg})")
        if not isinstance(obj, dict):
            raise SchemaError(f"{path}:{lineno}: expected a JSON object per line")
        out.append(obj)
    return out


def require_keys(obj: dict, path, keys, lineno=None) -> None:
    where = f"{path}:{lineno}" if lineno else str(path)
    for key in keys:
        if key not in obj:
            raise SchemaError(f"{where}: missing required field '{key}'")


def read_theory_csv(path) -> dict[str, np.ndarray | list]:
    """Region-classification grid: numeric columns plus string labels."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file, expected a CSV header row")
    header = [h.strip() for h in lines[0].split(",")]
    for col in ("ell", "delta", "mu", "loss", "region"):
        if col not in header:
            raise SchemaError(f"{path}: missing required column '{col}'")
    idx = {name: header.index(name) for name in header}
    deltas, mus, regions, losses = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise SchemaError(
                f"{path}:{lineno}: expected {len(header)} columns, got {len(parts)}"
            )
        try:
            deltas.append(float(parts[idx["delta"]]))
            mus.append(float(parts[idx["mu"]]))
        except ValueError:
            raise SchemaError(f"{path}:{lineno}: non-numeric delta/mu value")
        regions.append(parts[idx["region"]].strip())
        losses.append(parts[idx["loss"]].strip())
    return {
        "delta": np.array(deltas),
        "mu": np.array(mus),
        "region": regions,
        "loss": losses,
    }
