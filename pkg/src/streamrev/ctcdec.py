"""CTC greedy/PSD decoding and spike-position-alignment re-decoding.

Label 0 is the blank.  ``NONE`` marks a frame without a dominant label.
Frame indices inside :func:`spike_align` are 1-based, matching the
``tau`` it returns; everything else uses 0-based global frame indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgument

BLANK = 0
NONE = -1


class TopTwo(NamedTuple):
    l1: int
    p1: float
    l2: int
    p2: float


def top_two(row) -> TopTwo:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.shape[0] < 2:
        raise InvalidArgument("need a posterior row over at least two labels")
    order = np.argsort(-row, kind="stable")
    a, b = int(order[0]), int(order[1])
    return TopTwo(a, float(row[a]), b, float(row[b]))


def top_two_rows(matrix) -> list[TopTwo]:
    return [top_two(r) for r in np.asarray(matrix)]


def dominant_label(tt: TopTwo, theta: float) -> int:
    if tt.p1 <= 0.0:
        return NONE
    return tt.l1 if (tt.p1 - tt.p2) / tt.p1 >= theta else NONE


def dominant_seq(stream: Sequence[TopTwo], theta: float) -> list[int]:
    return [dominant_label(tt, theta) for tt in stream]


def effective_symbol(tt: TopTwo, theta: float) -> int:
    """Symbol a frame feeds into the collapse.

    The blank is only taken when it dominates; a frame whose top-1 is a
    non-dominant blank contributes its runner-up label instead.
    """
    if dominant_label(tt, theta) == BLANK:
        return BLANK
    return tt.l2 if tt.l1 == BLANK else tt.l1


def greedy_collapse(labels) -> list[int]:
    out = []
    prev = None
    for lab in labels:
        lab = int(lab)
        if lab != prev and lab != BLANK:
            out.append(lab)
        prev = lab
    return out


@dataclass
class Hypothesis:
    tokens: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    symbols: list = field(default_factory=list)
    skipped: int = 0

    @property
    def consumed(self) -> int:
        return len(self.symbols)

    @property
    def last(self):
        return self.symbols[-1] if self.symbols else None

    def copy(self) -> "Hypothesis":
        return Hypothesis(list(self.tokens), list(self.frames), list(self.symbols), self.skipped)

    def push(self, symbol: int) -> None:
        frame = len(self.symbols)
        if symbol != BLANK and symbol != self.last:
            self.tokens.append(symbol)
            self.frames.append(frame)
        self.symbols.append(symbol)


def psd_step(hyp: Hypothesis, tt: TopTwo, theta: float) -> tuple[Hypothesis, bool]:
    """Advance one frame.  Blank-dominant frames are skipped but still separate repeats."""
    if dominant_label(tt, theta) == BLANK:
        hyp.symbols.append(BLANK)
        hyp.skipped += 1
        return hyp, True
    hyp.push(effective_symbol(tt, theta))
    return hyp, False


def psd_decode(stream: Sequence[TopTwo], theta: float) -> Hypothesis:
    hyp = Hypothesis()
    for tt in stream:
        psd_step(hyp, tt, theta)
    return hyp


class Alignment(NamedTuple):
    tau: int
    i_stop: int
    pairs: list


NOT_FOUND = None


def find_next(i: int, j: int, psi: Sequence[int], phi: Sequence[int]):
    """Skip a dominant-blank run on one side and match the next spike label.

    ``psi``/``phi`` are 1-based via a leading placeholder.  Returns the cursor
    pair just past the matched spikes, or ``NOT_FOUND``.
    """
    last_i, last_j = len(psi) - 1, len(phi) - 1
    if psi[i] == BLANK:
        while i <= last_i and psi[i] == BLANK:
            i += 1
        if i > last_i or psi[i] != phi[j]:
            return NOT_FOUND
    elif phi[j] == BLANK:
        while j <= last_j and phi[j] == BLANK:
            j += 1
        if j > last_j or phi[j] != psi[i]:
            return NOT_FOUND
    else:
        return NOT_FOUND
    return i + 1, j + 1


def spike_align_trace(old: Sequence[TopTwo], new: Sequence[TopTwo], theta: float) -> Alignment:
    """Frame-by-frame comparison of previous and revised top-two streams.

    Both streams cover the ``T_cal - 1`` revised frames; ``tau`` is the
    1-based frame of the new stream from which decoding must be redone,
    ``T_cal`` when nothing changed.  ``i_stop`` is the old-stream cursor at
    that point and ``pairs`` lists the (old, new) frames judged equivalent.
    """
    if len(old) != len(new):
        raise InvalidArgument(f"stream lengths differ: {len(old)} vs {len(new)}")
    N = len(old)
    T_cal = N + 1
    a = [None, *old]
    b = [None, *new]
    psi = [None, *dominant_seq(old, theta)]
    phi = [None, *dominant_seq(new, theta)]
    i = j = 1
    tau = 0
    pairs = []
    while j < T_cal:
        if i > N:
            # old side exhausted: trailing new frames only pass if blank-dominant
            if any(phi[k] != BLANK for k in range(j, T_cal)):
                tau = j
            break
        if a[i].l1 == b[j].l1:
            if psi[i] != NONE and phi[j] != NONE:
                pairs.append((i, j))
                i, j = i + 1, j + 1
                continue
            if psi[i] == NONE and phi[j] == NONE and a[i].l2 == b[j].l2:
                pairs.append((i, j))
                i, j = i + 1, j + 1
                continue
            tau = j
            break
        if psi[i] != NONE and phi[j] != NONE and (a[i].l1 == BLANK or b[j].l1 == BLANK):
            nxt = find_next(i, j, psi, phi)
            if nxt is NOT_FOUND:
                tau = j
                break
            pairs.append((nxt[0] - 1, nxt[1] - 1))
            i, j = nxt
            continue
        if (psi[i] == NONE and a[i].l1 == BLANK and a[i].l2 == b[j].l1) or (
            phi[j] == NONE and b[j].l1 == BLANK and b[j].l2 == a[i].l1
        ):
            pairs.append((i, j))
            i, j = i + 1, j + 1
            continue
        tau = j
        break
    if tau == 0:
        tau = T_cal
    return Alignment(tau=tau, i_stop=min(i, T_cal), pairs=pairs)


def spike_align(old: Sequence[TopTwo], new: Sequence[TopTwo], theta: float) -> int:
    return spike_align_trace(old, new, theta).tau


@dataclass
class RedecodeResult:
    tau: int
    frames_redecoded: int
    hypothesis: Hypothesis


def redecode_from(
    hyp: Hypothesis,
    tau: int,
    new: Sequence[TopTwo],
    theta: float,
    start: int = 0,
    keep: int | None = None,
    pairs=None,
) -> RedecodeResult:
    """Keep the aligned prefix of ``hyp`` and re-run PSD over ``new[tau-1:]``.

    ``new[k]`` is global frame ``start + k``.  ``keep`` is the old-stream
    cursor returned with ``tau`` (defaults to ``tau``); old tokens before it
    are retained and moved onto the new frame they were aligned with.
    """
    if not 1 <= tau <= len(new) + 1:
        raise InvalidArgument(f"tau={tau} outside [1, {len(new) + 1}]")
    keep = tau if keep is None else keep
    g_old = start + keep - 1
    if hyp.consumed < g_old:
        raise InvalidArgument(f"hypothesis covers {hyp.consumed} frames, alignment needs {g_old}")
    moved = {start + i - 1: start + j - 1 for i, j in (pairs or [])}
    out = Hypothesis(skipped=hyp.skipped)
    for tok, f in zip(hyp.tokens, hyp.frames):
        if f < g_old:
            out.tokens.append(tok)
            out.frames.append(moved.get(f, f) if f >= start else f)
    # collapse state follows the revised stream from here on
    out.symbols = hyp.symbols[:start] + [effective_symbol(tt, theta) for tt in new[: tau - 1]]
    for tt in new[tau - 1 :]:
        psd_step(out, tt, theta)
    return RedecodeResult(tau=tau, frames_redecoded=len(new) - tau + 1, hypothesis=out)
