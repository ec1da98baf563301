"""File formats: atomic writes, fixed-precision CSV, and the matrix container.

Binary matrix container layout (all little-endian):

    8 bytes   magic  b"MUSMAT01"
    8 bytes   uint64 rows
    8 bytes   uint64 cols
    rows*cols float64, row-major

The text fallback starts with a "# MUSMAT rows cols" line followed by one
whitespace-separated row per line.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"MUSMAT01"
_HEADER = struct.Struct("<8sQQ")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def write_columns(path: str | Path, x: Sequence, y: Sequence) -> Path:
    """Two-column whitespace-separated plot data."""
    text = "".join(f"{fmt(a)} {fmt(b)}\n" for a, b in zip(x, y))
    return atomic_write_text(path, text)


def write_json(path: str | Path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def matrix_bytes(A: np.ndarray) -> bytes:
    A = np.ascontiguousarray(A, dtype="<f8")
    if A.ndim != 2:
        raise ValueError("matrix container stores 2-D arrays only")
    return _HEADER.pack(MAGIC, A.shape[0], A.shape[1]) + A.tobytes(order="C")


def write_matrix(path: str | Path, A: np.ndarray, text: bool = False) -> Path:
    if text:
        A = np.asarray(A, dtype=float)
        lines = [f"# MUSMAT {A.shape[0]} {A.shape[1]}"]
        lines += [" ".join(fmt(v) for v in row) for row in A]
        return atomic_write_text(path, "\n".join(lines) + "\n")
    return atomic_write_bytes(path, matrix_bytes(A))


def read_matrix(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw.startswith(MAGIC):
        magic, rows, cols = _HEADER.unpack_from(raw)
        data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if data.size != rows * cols:
            raise ValueError(f"{path}: expected {rows * cols} entries, found {data.size}")
        return data.reshape(rows, cols).astype(float)
    text = raw.decode("utf-8").splitlines()
    head = text[0].split()
    if head[:2] != ["#", "MUSMAT"]:
        raise ValueError(f"{path}: not a matrix container")
    rows, cols = int(head[2]), int(head[3])
    A = np.array([[float(v) for v in ln.split()] for ln in text[1:] if ln.strip()], dtype=float)
    return A.reshape(rows, cols)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
