"""Delimited tables, manifests and fit/sweep record files."""

from __future__ import annotations

import datetime as _dt
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__

DELIM = "\t"


def fmt(value) -> str:
    """Shortest decimal that round-trips to the same float."""
    if value is None:
        return "nan"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_table(path, header: Sequence[str], columns: Sequence[Iterable]) -> Path:
    path = Path(path)
    cols = [list(c) for c in columns]
    lines = [DELIM.join(header)]
    lines += [DELIM.join(fmt(v) for v in row) for row in zip(*cols)]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table(path):
    """Header and float columns of a delimited table written by :func:`write_table`."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        return [], np.empty((0, 0))
    header = lines[0].split(DELIM)
    rows = [ln.split(DELIM) for ln in lines[1:]]
    return header, np.array(rows, dtype=np.float64).reshape(len(rows), len(header))


def _is_number(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


def read_wealths(path) -> np.ndarray:
    """Wealth samples from a pooled-wealth table, a rank table, or a plain
    whitespace/comma separated list of numbers.

    With a header the ``wealth`` column is used (else the last one).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from None
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        return np.empty(0)
    first = lines[0].replace(",", " ").split()
    if not all(_is_number(tok) for tok in first):
        header = lines[0].split(DELIM) if DELIM in lines[0] else first
        col = header.index("wealth") if "wealth" in header else len(header) - 1
        rows = [ln.split(DELIM) if DELIM in ln else ln.replace(",", " ").split() for ln in lines[1:]]
        try:
            return np.array([float(r[col]) for r in rows], dtype=np.float64)
        except (ValueError, IndexError):
            raise ValueError(f"{path}: malformed row under header {header}") from None
    try:
        return np.array([float(tok) for ln in lines for tok in ln.replace(",", " ").split()])
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_record(path, record: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n")
    return path


def write_manifest(path, command: str, config: dict, output_paths: Sequence, extra=None) -> Path:
    record = {
        "command": command,
        "config": config,
        "artifact_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "output_paths": [str(p) for p in output_paths],
    }
    if extra:
        record.update(extra)
    return write_record(path, record)
