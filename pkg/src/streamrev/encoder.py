"""Small pre-LN transformer encoder with a causal conv front-end.

Two execution paths share one set of weights:

* :func:`forward_offline` runs the whole sequence at once under an
  :class:`~streamrev.masks.AttentionMask` with dense masked softmax.
* :class:`EncoderState` streams frame by frame against per-layer key/value
  caches and can revise a window of past frames in place.

Weights are stored as float32; activations are carried in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import formats
from .errors import FormatError, InvalidArgument, NumericError
from .kernels import attend_rows
from .masks import AttentionMask

LN_EPS = 1e-5


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    heads: int = 2
    d_model: int = 32
    d_ff: int = 64
    vocab: int = 8
    d_in: int = 16
    history: int | None = None  # None keeps every past frame
    conv_kernel: int = 15
    frame_ms: int = 20

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1 or self.d_ff < 1 or self.d_in < 1:
            raise InvalidArgument("layers, heads, d_ff and d_in must be positive")
        if self.d_model < 1 or self.d_model % self.heads:
            raise InvalidArgument(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.vocab < 2:
            raise InvalidArgument(f"vocab must be >= 2 (blank plus one label), got {self.vocab}")
        if self.history is not None and self.history < 1:
            raise InvalidArgument(f"history must be >= 1 or None, got {self.history}")
        if self.conv_kernel < 1 or self.frame_ms < 1:
            raise InvalidArgument("conv_kernel and frame_ms must be positive")

    @property
    def d_head(self) -> int:
        return self.d_model // self.heads


def tensor_shapes(cfg: EncoderConfig) -> dict:
    d, f = cfg.d_model, cfg.d_ff
    shapes = {
        "frontend.conv.weight": (cfg.conv_kernel, cfg.d_in, d),
        "frontend.conv.bias": (d,),
    }
    for l in range(cfg.layers):
        p = f"layers.{l}."
        shapes.update(
            {
                p + "ln1.scale": (d,),
                p + "ln1.offset": (d,),
                p + "attn.wq": (d, d),
                p + "attn.wk": (d, d),
                p + "attn.wv": (d, d),
                p + "attn.wo": (d, d),
                p + "ln2.scale": (d,),
                p + "ln2.offset": (d,),
                p + "ff.w1": (d, f),
                p + "ff.b1": (f,),
                p + "ff.w2": (f, d),
                p + "ff.b2": (d,),
            }
        )
    shapes.update(
        {
            "final.ln.scale": (d,),
            "final.ln.offset": (d,),
            "final.proj.weight": (d, cfg.vocab),
            "final.proj.bias": (cfg.vocab,),
        }
    )
    return shapes


class Weights:
    """Named float32 tensors plus float64 views used by the math."""

    def __init__(self, config: EncoderConfig, tensors: dict):
        expected = tensor_shapes(config)
        missing = set(expected) - set(tensors)
        if missing:
            raise FormatError(f"missing tensor {sorted(missing)[0]!r}")
        extra = set(tensors) - set(expected)
        if extra:
            raise FormatError(f"unexpected tensor {sorted(extra)[0]!r}")
        for name, shape in expected.items():
            if tuple(tensors[name].shape) != shape:
                raise FormatError(f"tensor {name!r} has shape {tuple(tensors[name].shape)}, expected {shape}")
            if not np.all(np.isfinite(tensors[name])):
                raise FormatError(f"tensor {name!r} has non-finite entries")
        self.config = config
        self.tensors = {name: np.asarray(tensors[name], dtype=np.float32) for name in expected}
        self.f64 = {name: t.astype(np.float64) for name, t in self.tensors.items()}

    @classmethod
    def seeded(cls, config: EncoderConfig, seed: int) -> "Weights":
        rng = np.random.default_rng(seed)
        s = 1.0 / np.sqrt(config.d_model)
        tensors = {}
        for name, shape in tensor_shapes(config).items():
            if name.endswith(".scale"):
                tensors[name] = np.ones(shape, dtype=np.float32)
            elif name.endswith(".offset"):
                tensors[name] = np.zeros(shape, dtype=np.float32)
            else:
                tensors[name] = rng.uniform(-s, s, size=shape).astype(np.float32)
        return cls(config, tensors)

    @classmethod
    def load(cls, config: EncoderConfig, path) -> "Weights":
        return cls(config, formats.load_tensors(path))

    def save(self, path) -> None:
        formats.save_tensors(path, self.tensors)

    def __getitem__(self, name):
        return self.f64[name]

    def equals(self, other: "Weights") -> bool:
        return self.tensors.keys() == other.tensors.keys() and all(
            np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors
        )


def layer_norm(x, scale, offset):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * scale + offset


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def positional_encoding(positions, d_model):
    pos = np.asarray(positions, dtype=np.float64)[:, None]
    i = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i / d_model)
    pe = np.zeros((pos.shape[0], d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe


def frontend(features, weights: Weights, start: int = 0):
    """Causal conv (left zero padding, stride 1) plus sinusoidal positions.

    ``features`` holds frames ``start - (K-1) .. start + m - 1`` when
    ``start > 0``; for ``start == 0`` it holds frames ``0 .. m-1`` and the
    left context is zero.
    """
    cfg = weights.config
    K = cfg.conv_kernel
    W = weights["frontend.conv.weight"]
    x = np.asarray(features, dtype=np.float64)
    if start == 0:
        x = np.vstack([np.zeros((K - 1, cfg.d_in)), x])
    m = x.shape[0] - (K - 1)
    out = np.tile(weights["frontend.conv.bias"], (m, 1))
    for k in range(K):
        out += x[k : k + m] @ W[k]
    return out + positional_encoding(np.arange(start, start + m), cfg.d_model)


def ffn_block(x, weights: Weights, l: int):
    p = f"layers.{l}."
    b = layer_norm(x, weights[p + "ln2.scale"], weights[p + "ln2.offset"])
    hdn = np.maximum(b @ weights[p + "ff.w1"] + weights[p + "ff.b1"], 0.0)
    return x + hdn @ weights[p + "ff.w2"] + weights[p + "ff.b2"]


def qkv(x, weights: Weights, l: int):
    p = f"layers.{l}."
    a = layer_norm(x, weights[p + "ln1.scale"], weights[p + "ln1.offset"])
    return a @ weights[p + "attn.wq"], a @ weights[p + "attn.wk"], a @ weights[p + "attn.wv"]


def output_posteriors(x, weights: Weights):
    z = layer_norm(x, weights["final.ln.scale"], weights["final.ln.offset"])
    return softmax(z @ weights["final.proj.weight"] + weights["final.proj.bias"])


def attention_head(q, keys, values):
    """Single-head scaled dot-product attention for one query."""
    keys = np.atleast_2d(np.asarray(keys, dtype=np.float64))
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if keys.shape[0] == 0 or keys.shape[0] != values.shape[0]:
        raise InvalidArgument("need a non-empty key set matching the value set")
    q = np.asarray(q, dtype=np.float64)
    w = softmax(keys @ q / np.sqrt(q.shape[0]))
    return w @ values


def attention_weights(q, keys):
    keys = np.atleast_2d(np.asarray(keys, dtype=np.float64))
    q = np.asarray(q, dtype=np.float64)
    return softmax(keys @ q / np.sqrt(q.shape[0]))


def _history_lo(positions, history):
    positions = np.asarray(positions, dtype=np.int64)
    if history is None:
        return np.zeros_like(positions)
    return np.maximum(positions - history, 0)


def forward_offline(features, mask: AttentionMask, weights) -> np.ndarray:
    """Whole-sequence forward pass; returns a ``T x vocab`` posterior matrix."""
    if isinstance(weights, EncoderState):
        weights = weights.weights
    cfg = weights.config
    x_in = np.asarray(features, dtype=np.float64)
    if x_in.ndim != 2 or x_in.shape[1] != cfg.d_in:
        raise InvalidArgument(f"features must be T x {cfg.d_in}")
    if not np.all(np.isfinite(x_in)):
        raise NumericError("non-finite input features")
    T = x_in.shape[0]
    if mask.T != T:
        raise InvalidArgument(f"mask covers {mask.T} frames, features have {T}")
    allowed = mask.dense()
    lo = _history_lo(np.arange(T), cfg.history)
    allowed &= np.arange(T)[None, :] >= lo[:, None]
    x = frontend(x_in, weights)
    dh = cfg.d_head
    for l in range(cfg.layers):
        q, k, v = qkv(x, weights, l)
        ctx = np.empty_like(x)
        for h in range(cfg.heads):
            cols = slice(h * dh, (h + 1) * dh)
            scores = q[:, cols] @ k[:, cols].T / np.sqrt(dh)
            scores = np.where(allowed, scores, -np.inf)
            ctx[:, cols] = softmax(scores) @ v[:, cols]
        x = x + ctx @ weights[f"layers.{l}.attn.wo"]
        x = ffn_block(x, weights, l)
    return output_posteriors(x, weights)


class _Growable:
    def __init__(self, width, dtype=np.float64):
        self.data = np.zeros((16, width), dtype=dtype) if width else np.zeros(16, dtype=dtype)
        self.n = 0

    def _reserve(self, n):
        if n > self.data.shape[0]:
            grown = np.zeros((max(n, 2 * self.data.shape[0]),) + self.data.shape[1:], dtype=self.data.dtype)
            grown[: self.n] = self.data[: self.n]
            self.data = grown

    def append(self, row):
        self._reserve(self.n + 1)
        self.data[self.n] = row
        self.n += 1

    @property
    def view(self):
        return self.data[: self.n]


@dataclass
class LayerCache:
    """Keys, values and per-frame revision versions for one layer."""

    width: int
    keys: _Growable = field(init=False)
    values: _Growable = field(init=False)
    versions: _Growable = field(init=False)

    def __post_init__(self):
        self.keys = _Growable(self.width)
        self.values = _Growable(self.width)
        self.versions = _Growable(0, dtype=np.int64)

    def __len__(self):
        return self.keys.n

    def append(self, k, v):
        self.keys.append(k)
        self.values.append(v)
        self.versions.append(0)

    def overwrite(self, lo, K, V):
        hi = lo + K.shape[0]
        self.keys.data[lo:hi] = K
        self.values.data[lo:hi] = V
        self.versions.data[lo:hi] += 1


class EncoderState:
    """Streaming encoder state: caches, hidden outputs and posteriors."""

    def __init__(self, config: EncoderConfig, weights: Weights):
        if weights.config != config:
            raise InvalidArgument("weights were built for a different config")
        self.config = config
        self.weights = weights
        d = config.d_model
        self.caches = [LayerCache(d) for _ in range(config.layers)]
        self._features = _Growable(config.d_in)
        self._x0 = _Growable(d)
        self._hidden = [_Growable(d) for _ in range(config.layers)]
        self._post = _Growable(config.vocab)

    @classmethod
    def seeded(cls, config: EncoderConfig, seed: int) -> "EncoderState":
        return cls(config, Weights.seeded(config, seed))

    @classmethod
    def from_file(cls, config: EncoderConfig, path) -> "EncoderState":
        return cls(config, Weights.load(config, path))

    @property
    def t(self) -> int:
        return self._x0.n

    def hidden(self, layer: int) -> np.ndarray:
        """Latest output of ``layer`` (0-based) for every received frame."""
        return self._hidden[layer].view.copy()

    def posteriors(self) -> np.ndarray:
        return self._post.view.copy()

    def step(self, frame) -> np.ndarray:
        cfg, w = self.config, self.weights
        frame = np.asarray(frame, dtype=np.float64).reshape(-1)
        if frame.shape[0] != cfg.d_in:
            raise InvalidArgument(f"frame width {frame.shape[0]} != d_in {cfg.d_in}")
        if not np.all(np.isfinite(frame)):
            raise NumericError("non-finite input frame")
        t = self.t
        self._features.append(frame)
        K = cfg.conv_kernel
        window = self._features.view[max(0, t - K + 1) : t + 1]
        if window.shape[0] < K:
            window = np.vstack([np.zeros((K - window.shape[0], cfg.d_in)), window])
        x = frontend(window, w, start=t) if t else frontend(window[K - 1 :], w)
        self._x0.append(x[0])
        lo = _history_lo([t], cfg.history)
        hi = np.array([t])
        for l, cache in enumerate(self.caches):
            q, k, v = qkv(x, w, l)
            cache.append(k[0], v[0])
            ctx = attend_rows(q, cache.keys.view, cache.values.view, lo, hi, cfg.heads)
            x = x + ctx @ w[f"layers.{l}.attn.wo"]
            x = ffn_block(x, w, l)
            self._hidden[l].append(x[0])
        row = output_posteriors(x, w)[0]
        self._post.append(row)
        return row.copy()

    def revise(self, n: int, sigma: int) -> np.ndarray:
        """Recompute frames ``[max(0, n - sigma), n - 1]`` with context up to ``n - 1``.

        Layers are processed bottom-up; inside a layer all revised keys and
        values are replaced before any revised query attends.  Frames before
        the window contribute their stored keys/values and are never written.
        """
        cfg, w = self.config, self.weights
        if n > self.t or n < 0:
            raise InvalidArgument(f"boundary {n} beyond received frames {self.t}")
        if sigma < 1:
            raise InvalidArgument(f"sigma must be >= 1, got {sigma}")
        lo = max(0, n - sigma)
        if n == lo:
            return np.zeros((0, cfg.vocab))
        positions = np.arange(lo, n)
        key_lo = _history_lo(positions, cfg.history)
        key_hi = np.full(n - lo, n - 1)
        x = self._x0.view[lo:n].copy()
        for l, cache in enumerate(self.caches):
            q, k, v = qkv(x, w, l)
            cache.overwrite(lo, k, v)
            ctx = attend_rows(q, cache.keys.data[:n], cache.values.data[:n], key_lo, key_hi, cfg.heads)
            x = x + ctx @ w[f"layers.{l}.attn.wo"]
            x = ffn_block(x, w, l)
            self._hidden[l].data[lo:n] = x
        rows = output_posteriors(x, w)
        self._post.data[lo:n] = rows
        return rows.copy()


def init(config: EncoderConfig, seed: int | None = None, path=None) -> EncoderState:
    if (seed is None) == (path is None):
        raise InvalidArgument("give exactly one of seed or path")
    if path is not None:
        return EncoderState.from_file(config, path)
    return EncoderState.seeded(config, seed)


def stream_step(state: EncoderState, frame) -> np.ndarray:
    return state.step(frame)


def revise(state: EncoderState, n: int, sigma: int) -> np.ndarray:
    return state.revise(n, sigma)


def posteriors(state: EncoderState) -> np.ndarray:
    return state.posteriors()
