"""Attention mask families for causal, chunked and revision-style encoders.

A mask over ``T`` frames is stored as its per-row context end ``e(q)``:
query frame ``q`` may attend key frame ``k`` iff ``k <= e(q)``.  Every
constructor here produces rows that are prefixes ``{0..e(q)}`` with
``e(q) >= q``, so the end vector is a lossless encoding and keeps memory
linear in ``T``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument, StreamrevIOError

SRM1_MAGIC = b"SRM1"


class MaskKind(enum.Enum):
    CAUSAL = "causal"
    CHUNK = "chunk"
    REVISION = "revision"


@dataclass(frozen=True)
class AttentionMask:
    ends: np.ndarray

    def __post_init__(self):
        ends = np.asarray(self.ends, dtype=np.int64)
        if ends.ndim != 1 or ends.size == 0:
            raise InvalidArgument("mask needs at least one frame")
        T = ends.size
        if np.any(ends < np.arange(T)) or np.any(ends >= T):
            raise InvalidArgument("every row must satisfy q <= e(q) < T")
        ends.setflags(write=False)
        object.__setattr__(self, "ends", ends)

    @property
    def T(self) -> int:
        return int(self.ends.size)

    def allowed(self, q: int, k: int) -> bool:
        return 0 <= k <= self.ends[q]

    def dense(self) -> np.ndarray:
        """Boolean ``T x T`` matrix, ``[q, k]`` true when q may attend k."""
        cols = np.arange(self.T)
        return cols[None, :] <= self.ends[:, None]

    def lookahead(self) -> np.ndarray:
        """Future frames visible to each query, ``e(q) - q``."""
        return self.ends - np.arange(self.T)

    def __eq__(self, other):
        if not isinstance(other, AttentionMask):
            return NotImplemented
        return np.array_equal(self.ends, other.ends)

    def __hash__(self):
        return hash(self.ends.tobytes())


@dataclass(frozen=True)
class MaskSpec:
    kind: MaskKind
    T: int
    chunk: int | None = None
    sigma: int | None = None
    nu: int | None = None

    def build(self) -> AttentionMask:
        if self.kind is MaskKind.CAUSAL:
            return causal_mask(self.T)
        if self.kind is MaskKind.CHUNK:
            return chunk_mask(self.T, self.chunk)
        return revision_mask(self.T, self.sigma, self.nu)

    @property
    def lookahead(self) -> int:
        """Largest future context any frame receives under this spec."""
        return int(self.build().lookahead().max())


def _check_T(T):
    if int(T) < 1:
        raise InvalidArgument(f"frame count must be >= 1, got {T}")
    return int(T)


def causal_mask(T: int) -> AttentionMask:
    T = _check_T(T)
    return AttentionMask(np.arange(T))


def chunk_mask(T: int, chunk: int) -> AttentionMask:
    T = _check_T(T)
    if chunk is None or int(chunk) < 1:
        raise InvalidArgument(f"chunk must be >= 1, got {chunk}")
    q = np.arange(T)
    ends = np.minimum((q // chunk + 1) * chunk, T) - 1
    return AttentionMask(ends)


def revision_mask(T: int, sigma: int, nu: int) -> AttentionMask:
    """Final context of each frame under periodic revision.

    Boundaries sit at every multiple of ``nu``; the boundary ``n`` recomputes
    frames ``[n - sigma, n - 1]`` with context up to ``n - 1``.  A frame keeps
    the context of the last boundary that revises it.
    """
    T = _check_T(T)
    if sigma is None or nu is None or not 1 <= nu <= sigma <= T:
        raise InvalidArgument(f"need 1 <= nu <= sigma <= T, got nu={nu} sigma={sigma} T={T}")
    t = np.arange(T)
    upper = np.minimum(t + sigma, T)
    last_boundary = (upper // nu) * nu
    revised = last_boundary >= t + 1
    ends = np.where(revised, np.maximum(t, last_boundary - 1), t)
    return AttentionMask(ends)


class DynamicMaskSampler:
    """Seeded stream of causal-or-revision masks for mixed training."""

    def __init__(self, p_causal: float, spec: MaskSpec, seed: int):
        if not 0.0 <= p_causal <= 1.0:
            raise InvalidArgument(f"p_causal must lie in [0, 1], got {p_causal}")
        self.p_causal = p_causal
        self.spec = spec
        self._rng = np.random.default_rng(seed)
        self._causal = causal_mask(spec.T)
        self._revision = revision_mask(spec.T, spec.sigma, spec.nu)

    def draw_is_causal(self) -> bool:
        return bool(self._rng.random() < self.p_causal)

    def sample(self) -> AttentionMask:
        return self._causal if self.draw_is_causal() else self._revision

    def __iter__(self):
        while True:
            yield self.sample()


def dynamic_mask_sample(p_causal: float, spec: MaskSpec, seed: int) -> AttentionMask:
    return DynamicMaskSampler(p_causal, spec, seed).sample()


def export_mask(mask: AttentionMask, destination, format: str = "bin") -> None:
    path = Path(destination)
    if mask.T < 1:
        raise InvalidArgument("refusing to export an empty mask")
    if format == "csv":
        dense = mask.dense().astype(np.uint8)
        payload = "".join(",".join(map(str, row)) + "\n" for row in dense).encode()
    elif format == "bin":
        payload = SRM1_MAGIC + struct.pack("<I", mask.T) + mask.ends.astype("<u4").tobytes()
    else:
        raise InvalidArgument(f"unknown mask format {format!r}")
    try:
        path.write_bytes(payload)
    except OSError as exc:
        raise StreamrevIOError(path, exc.strerror or str(exc)) from exc


def import_mask(source, format: str | None = None) -> AttentionMask:
    path = Path(source)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise StreamrevIOError(path, exc.strerror or str(exc)) from exc
    if format is None:
        format = "bin" if raw[:4] == SRM1_MAGIC else "csv"
    if format == "bin":
        if raw[:4] != SRM1_MAGIC or len(raw) < 8:
            raise FormatError(f"{path}: missing SRM1 header")
        (T,) = struct.unpack_from("<I", raw, 4)
        if len(raw) != 8 + 4 * T:
            raise FormatError(f"{path}: expected {T} row ends, file size {len(raw)}")
        ends = np.frombuffer(raw, dtype="<u4", offset=8).astype(np.int64)
        return AttentionMask(ends)
    rows = [line for line in raw.decode().splitlines() if line.strip()]
    dense = np.array([[int(v) for v in line.split(",")] for line in rows], dtype=bool)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise FormatError(f"{path}: CSV mask must be square")
    ends = np.array([np.flatnonzero(row).max() if row.any() else -1 for row in dense])
    rebuilt = AttentionMask(ends)
    if not np.array_equal(rebuilt.dense(), dense):
        raise FormatError(f"{path}: rows are not contiguous prefixes")
    return rebuilt
