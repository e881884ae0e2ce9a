"""Binary and CSV readers/writers for weights (SRW1) and matrices (SRF1)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, StreamrevIOError

SRW1_MAGIC = b"SRW1"
SRF1_MAGIC = b"SRF1"


def _read(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise StreamrevIOError(path, exc.strerror or str(exc)) from exc


def _write(path, payload):
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise StreamrevIOError(path, exc.strerror or str(exc)) from exc


def save_tensors(path, tensors: dict) -> None:
    parts = [SRW1_MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    _write(path, b"".join(parts))


def load_tensors(path) -> dict:
    raw = _read(path)
    if raw[:4] != SRW1_MAGIC:
        raise FormatError(f"{path}: missing SRW1 header")
    try:
        (count,) = struct.unpack_from("<I", raw, 4)
        pos = 8
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            name = raw[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", raw, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * size > len(raw):
                raise FormatError(f"{path}: tensor {name!r} truncated")
            tensors[name] = np.frombuffer(raw, dtype="<f4", count=size, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * size
    except struct.error as exc:
        raise FormatError(f"{path}: truncated SRW1 file") from exc
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes")
    return tensors


def save_matrix(path, matrix, format: str = "srf") -> None:
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise FormatError("matrix must be two-dimensional")
    if format == "csv":
        lines = [",".join(repr(float(v)) for v in row) for row in matrix]
        _write(path, ("\n".join(lines) + "\n").encode())
        return
    header = SRF1_MAGIC + struct.pack("<II", *matrix.shape)
    _write(path, header + matrix.astype("<f4").tobytes())


def load_matrix(path) -> np.ndarray:
    """Read an SRF1 or CSV matrix, rows = frames."""
    raw = _read(path)
    if raw[:4] == SRF1_MAGIC:
        if len(raw) < 12:
            raise FormatError(f"{path}: truncated SRF1 header")
        rows, cols = struct.unpack_from("<II", raw, 4)
        if len(raw) != 12 + 4 * rows * cols:
            raise FormatError(f"{path}: SRF1 header says {rows}x{cols}, payload is {len(raw) - 12} bytes")
        return np.frombuffer(raw, dtype="<f4", offset=12).reshape(rows, cols).astype(np.float32)
    try:
        text = raw.decode("utf-8")
        rows = [[float(v) for v in line.split(",")] for line in text.splitlines() if line.strip()]
        matrix = np.array(rows, dtype=np.float32)
    except (UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"{path}: neither SRF1 nor numeric CSV") from exc
    if matrix.ndim != 2:
        raise FormatError(f"{path}: ragged CSV rows")
    return matrix
