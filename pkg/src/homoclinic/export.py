"""Atomic CSV/JSON/NPZ writers for run outputs."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FLOAT_FMT = "%.17g"


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def format_cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % float(x)
    if isinstance(x, (list, tuple)):
        return ";".join(format_cell(v) for v in x)
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_cell(x) for x in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_spectrum(path, sd) -> None:
    cls = sd.classification()
    write_csv(path, ["index", "eigenvalue", "classification"],
              ((i + 1, float(lam), cls[i]) for i, lam in enumerate(sd.eigenvalues)))


FOUNTAIN_COLUMNS = ["k", "eta", "rho", "r", "a_lower", "b_upper", "d_lower", "f3_pass"]


def write_fountain(path, fr) -> None:
    write_csv(path, FOUNTAIN_COLUMNS, ([row[c] for c in FOUNTAIN_COLUMNS] for row in fr.rows()))


def write_solution(path, grid, u, dim: int) -> None:
    U = np.asarray(u, dtype=float).reshape(-1, dim)
    header = ["t"] + [f"u_{i + 1}" for i in range(dim)]
    write_csv(path, header, ([float(t), *map(float, U[i])] for i, t in enumerate(grid.nodes)))


def _json_safe(x):
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.ndarray):
        return _json_safe(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")


def write_npz(path, **arrays) -> None:
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write_bytes(path, buf.getvalue())
