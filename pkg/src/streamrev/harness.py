"""End-to-end streaming sessions, metrics, and the naive replay oracle."""

from __future__ import annotations

import csv
import enum
import io
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import ctcdec, formats
from .ctcdec import BLANK, Hypothesis, psd_decode, psd_step, top_two, top_two_rows
from .encoder import (
    EncoderConfig,
    EncoderState,
    Weights,
    attention_head,
    ffn_block,
    forward_offline,
    frontend,
    output_posteriors,
    qkv,
)
from .errors import InvalidArgument
from .masks import AttentionMask
from .scheduler import OnlineScheduler, RevisionPolicy, plan, predicted_extra_frames


class Mode(enum.Enum):
    CAUSAL = "causal"
    REVISION = "revision"
    OFFLINE = "offline"


@dataclass
class SessionConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    policy: RevisionPolicy = field(default_factory=lambda: RevisionPolicy(sigma=50, nu=20, eta=1))
    mode: Mode = Mode.REVISION
    seed: int = 0
    features: object = None  # path or T x d_in array
    posteriors: object = None  # decoder-only: causal posterior rows
    revised_posteriors: object = None  # decoder-only: rows as seen after revision
    weights: object = None  # SRW1 path; seeded weights when None
    reference: list | None = None

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = Mode(self.mode)
        if (self.features is None) == (self.posteriors is None):
            raise InvalidArgument("give exactly one of features or posteriors")

    @property
    def decoder_only(self) -> bool:
        return self.posteriors is not None


def _matrix(src):
    if src is None:
        return None
    if isinstance(src, (str, Path)):
        return formats.load_matrix(src).astype(np.float64)
    return np.asarray(src, dtype=np.float64)


def _weights(cfg: SessionConfig) -> Weights:
    if cfg.weights is not None:
        return Weights.load(cfg.encoder, cfg.weights)
    return Weights.seeded(cfg.encoder, cfg.seed)


@dataclass
class SessionMetrics:
    mode: str
    frames: int
    recomputed_frames: int
    predicted_extra_frames: int | None
    avg_lookahead_ms: float
    stability: int
    redecoded_frames: int
    revision_events: int
    skipped_frames: int
    tokens: int
    wer: float | None = None
    # wall-clock; kept out of the deterministic metrics file
    rtf_proxy: float = 0.0
    elapsed_s: float = 0.0

    WALL_CLOCK = ("rtf_proxy", "elapsed_s")

    def deterministic(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in self.WALL_CLOCK}


@dataclass
class LogRecord:
    seq: int
    type: str  # "frame" or "revision"
    t: int
    n: int | None = None
    kind: str | None = None
    lo: int | None = None
    hi: int | None = None
    tau: int | None = None
    t_cal: int | None = None
    redecoded: int | None = None
    transcript: str = ""


LOG_FIELDS = ["seq", "type", "t", "n", "kind", "lo", "hi", "tau", "t_cal", "redecoded", "transcript"]


@dataclass
class SessionResult:
    transcript: list
    metrics: SessionMetrics
    log: list
    posteriors: np.ndarray
    causal_posteriors: np.ndarray
    theta: float

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for rec in self.log:
            w.writerow(["" if getattr(rec, f) is None else getattr(rec, f) for f in LOG_FIELDS])
        return buf.getvalue()


def _join(tokens) -> str:
    return " ".join(str(t) for t in tokens)


def _changed_tokens(before, after) -> int:
    """Previously emitted tokens that a re-decode retracted or replaced."""
    common = 0
    for x, y in zip(before, after):
        if x != y:
            break
        common += 1
    return len(before) - common


def wer(hypothesis, reference) -> float:
    hyp, ref = list(hypothesis), list(reference)
    if not ref:
        return float(len(hyp))
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1] / len(ref)


def run_session(cfg: SessionConfig) -> SessionResult:
    policy, enc = cfg.policy, cfg.encoder
    theta = policy.theta
    if cfg.decoder_only:
        causal_rows = _matrix(cfg.posteriors)
        revised_rows = _matrix(cfg.revised_posteriors)
        if revised_rows is None:
            revised_rows = causal_rows
        if revised_rows.shape != causal_rows.shape:
            raise InvalidArgument("revised posterior matrix must match the causal one")
        T = causal_rows.shape[0]
        state = None
    else:
        feats = _matrix(cfg.features)
        T = feats.shape[0]
        state = EncoderState(enc, _weights(cfg))
    if T < 1:
        raise InvalidArgument("input has no frames")

    log = []
    ends = np.arange(T)
    start = time.perf_counter()

    if cfg.mode is Mode.OFFLINE:
        if cfg.decoder_only:
            post = revised_rows.copy()
        else:
            post = forward_offline(feats, AttentionMask(np.full(T, T - 1)), state.weights)
        hyp = psd_decode(top_two_rows(post), theta)
        elapsed = time.perf_counter() - start
        ends = np.full(T, T - 1)
        log.append(LogRecord(seq=0, type="frame", t=T, transcript=_join(hyp.tokens)))
        causal_post = post
        recomputed, n_events, stability, redecoded = 0, 0, 0, 0
    else:
        sched = OnlineScheduler(policy, T_final=T) if cfg.mode is Mode.REVISION else None
        hyp = Hypothesis()
        post = np.zeros((T, enc.vocab if not cfg.decoder_only else causal_rows.shape[1]))
        causal_post = np.zeros_like(post)
        current = []
        recomputed = n_events = stability = redecoded = 0
        for t in range(T):
            row = causal_rows[t] if state is None else state.step(feats[t])
            post[t] = causal_post[t] = row
            tt = top_two(row)
            current.append(tt)
            psd_step(hyp, tt, theta)
            log.append(LogRecord(seq=len(log), type="frame", t=t + 1, transcript=_join(hyp.tokens)))
            if sched is None:
                continue
            for ev in sched.on_frame(t + 1):
                if state is None:
                    rows = revised_rows[ev.lo : ev.n]
                else:
                    rows = state.revise(ev.n, policy.sigma)
                post[ev.lo : ev.n] = rows
                new = top_two_rows(rows)
                al = ctcdec.spike_align_trace(current[ev.lo : ev.n], new, theta)
                before = list(hyp.tokens)
                res = ctcdec.redecode_from(hyp, al.tau, new, theta, start=ev.lo, keep=al.i_stop, pairs=al.pairs)
                hyp = res.hypothesis
                current[ev.lo : ev.n] = new
                t_cal = ev.cost + 1
                # the T_cal-th frame is the next causal step (none after the stream ends)
                propagated = t_cal - al.tau + (1 if ev.n < T else 0)
                recomputed += ev.cost
                redecoded += propagated
                stability += _changed_tokens(before, hyp.tokens)
                n_events += 1
                ends[ev.lo : ev.n] = np.maximum(ends[ev.lo : ev.n], ev.n - 1)
                log.append(
                    LogRecord(
                        seq=len(log),
                        type="revision",
                        t=t + 1,
                        n=ev.n,
                        kind=ev.kind.value,
                        lo=ev.lo,
                        hi=ev.hi,
                        tau=al.tau,
                        t_cal=t_cal,
                        redecoded=propagated,
                        transcript=_join(hyp.tokens),
                    )
                )
        elapsed = time.perf_counter() - start

    predicted = None
    if cfg.mode is Mode.REVISION and policy.sigma <= T:
        predicted = predicted_extra_frames(T, policy)
    elif cfg.mode is not Mode.REVISION:
        predicted = 0
    lookahead = float(np.mean(ends - np.arange(T)) * enc.frame_ms)
    metrics = SessionMetrics(
        mode=cfg.mode.value,
        frames=T,
        recomputed_frames=recomputed,
        predicted_extra_frames=predicted,
        avg_lookahead_ms=lookahead,
        stability=stability,
        redecoded_frames=redecoded,
        revision_events=n_events,
        skipped_frames=hyp.skipped,
        tokens=len(hyp.tokens),
        wer=None if cfg.reference is None else wer(hyp.tokens, cfg.reference),
        rtf_proxy=max(elapsed, 1e-9) / (T * enc.frame_ms / 1000.0),
        elapsed_s=elapsed,
    )
    return SessionResult(
        transcript=list(hyp.tokens),
        metrics=metrics,
        log=log,
        posteriors=post,
        causal_posteriors=causal_post,
        theta=theta,
    )


class _ReplayModel:
    """Layer outputs defined directly by the schedule, with no key/value cache.

    A frame's output at layer ``l`` after op ``c`` (the last op that computed
    it) is recomputed from that op's definition: its own layer ``l-1`` output
    and the layer ``l-1`` outputs of every key frame as they stood after op
    ``c``.  Values are memoised per ``(layer, frame, op)``, which is what the
    definition makes pure.
    """

    def __init__(self, weights: Weights, features, ops):
        self.w = weights
        self.cfg = weights.config
        self.x0 = frontend(features, weights)
        self.ops = ops  # list of (frames range, context end)
        self.computed_at = [[] for _ in range(features.shape[0])]
        for c, (frames, _) in enumerate(ops):
            for m in frames:
                self.computed_at[m].append(c)
        self._y = {}
        self._kv = {}

    def last(self, m, c):
        ops = [o for o in self.computed_at[m] if o <= c]
        return ops[-1]

    def y(self, l, m, c):
        if l == 0:
            return self.x0[m]
        key = (l, m, c)
        if key not in self._y:
            cfg, w = self.cfg, self.w
            x = self.y(l - 1, m, c)[None, :]
            q, _, _ = qkv(x, w, l - 1)
            ce = self.ops[c][1]
            lo = 0 if cfg.history is None else max(0, m - cfg.history)
            kv = [self.kv(l, j, self.last(j, c)) for j in range(lo, ce + 1)]
            keys = np.array([k for k, _ in kv])
            vals = np.array([v for _, v in kv])
            dh = cfg.d_head
            ctx = np.concatenate(
                [
                    attention_head(q[0, h * dh : (h + 1) * dh], keys[:, h * dh : (h + 1) * dh], vals[:, h * dh : (h + 1) * dh])
                    for h in range(cfg.heads)
                ]
            )
            x = x + ctx[None, :] @ w[f"layers.{l - 1}.attn.wo"]
            self._y[key] = ffn_block(x, w, l - 1)[0]
        return self._y[key]

    def kv(self, l, j, c):
        key = (l, j, c)
        if key not in self._kv:
            _, k, v = qkv(self.y(l - 1, j, c)[None, :], self.w, l - 1)
            self._kv[key] = (k[0], v[0])
        return self._kv[key]

    def posteriors_after(self, c, frames):
        L = self.cfg.layers
        x = np.array([self.y(L, m, self.last(m, c)) for m in frames])
        return output_posteriors(x, self.w)


def replay_ops(T: int, policy: RevisionPolicy | None):
    """Chronological ops: each arrival, then the events due at that frame count."""
    by_n = {}
    for ev in plan(T, policy) if policy is not None else []:
        by_n.setdefault(ev.n, []).append(ev)
    ops = []
    for t in range(T):
        ops.append((range(t, t + 1), t))
        for ev in by_n.get(t + 1, []):
            ops.append((range(ev.lo, ev.n), ev.n - 1))
    return ops


def naive_replay_oracle(cfg: SessionConfig):
    """Ground truth for a session: ``(final posteriors, transcript)``.

    Re-derives every state from its schedule definition and decodes the
    final posteriors from scratch; no caches and no spike alignment.
    """
    theta = cfg.policy.theta
    policy = cfg.policy if cfg.mode is Mode.REVISION else None
    if cfg.decoder_only:
        causal = _matrix(cfg.posteriors)
        revised = _matrix(cfg.revised_posteriors)
        revised = causal if revised is None else revised
        T = causal.shape[0]
        if cfg.mode is Mode.OFFLINE:
            post = revised.copy()
        else:
            post = causal.copy()
            for ev in plan(T, policy) if policy is not None else []:
                post[ev.lo : ev.n] = revised[ev.lo : ev.n]
        return post, psd_decode(top_two_rows(post), theta).tokens

    feats = _matrix(cfg.features)
    T = feats.shape[0]
    weights = _weights(cfg)
    if cfg.mode is Mode.OFFLINE:
        post = forward_offline(feats, AttentionMask(np.full(T, T - 1)), weights)
        return post, psd_decode(top_two_rows(post), theta).tokens
    ops = replay_ops(T, policy)
    model = _ReplayModel(weights, feats, ops)
    post = model.posteriors_after(len(ops) - 1, range(T))
    return post, psd_decode(top_two_rows(post), theta).tokens


def compare_modes(cfg: SessionConfig, modes) -> list[dict]:
    modes = [Mode(m) if isinstance(m, str) else m for m in modes]
    if len(modes) < 2:
        raise InvalidArgument("compare needs at least two modes")
    return [mode_row(cfg, mode) for mode in modes]


def mode_row(cfg: SessionConfig, mode) -> dict:
    res = run_session(replace(cfg, mode=Mode(mode)))
    return {**res.metrics.deterministic(), "transcript": _join(res.transcript)}


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: "" if v is None else v for k, v in r.items()})
    return buf.getvalue()


def emit_blank_dominance_trace(result: SessionResult, window: int = 20) -> list[tuple]:
    """Per window: fraction of blank-dominant frames before and after revision."""
    if window < 1:
        raise InvalidArgument("window must be >= 1")
    theta = result.theta

    def blank_flags(matrix):
        return np.array([ctcdec.dominant_label(top_two(r), theta) == BLANK for r in matrix])

    causal = blank_flags(result.causal_posteriors)
    revised = blank_flags(result.posteriors)
    T = causal.shape[0]
    return [
        (w0, float(causal[w0 : w0 + window].mean()), float(revised[w0 : w0 + window].mean()))
        for w0 in range(0, T, window)
    ]


def trace_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["window_start", "causal_blank_frac", "revised_blank_frac"])
    for w0, c, r in rows:
        w.writerow([w0, f"{c:.6f}", f"{r:.6f}"])
    return buf.getvalue()


def metrics_jsonl(metrics: SessionMetrics, wall_clock: bool = False) -> str:
    payload = asdict(metrics) if wall_clock else metrics.deterministic()
    return json.dumps(payload, sort_keys=True) + "\n"

