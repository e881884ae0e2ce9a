"""Streaming transformer encoder with periodic encoder-state revision.

Causal frame-by-frame inference that periodically recomputes a window of
past encoder states, plus CTC decoding that re-decodes only from the first
frame whose spikes actually moved.
"""

from .ctcdec import TopTwo, greedy_collapse, psd_decode, spike_align, top_two
from .encoder import EncoderConfig, EncoderState, Weights, forward_offline
from .harness import Mode, SessionConfig, naive_replay_oracle, run_session
from .kernels import BACKEND
from .masks import AttentionMask, causal_mask, chunk_mask, revision_mask
from .scheduler import RevisionPolicy, plan, predicted_extra_frames

__version__ = "0.1.0"

__all__ = [
    "AttentionMask",
    "BACKEND",
    "EncoderConfig",
    "EncoderState",
    "Mode",
    "RevisionPolicy",
    "SessionConfig",
    "TopTwo",
    "Weights",
    "causal_mask",
    "chunk_mask",
    "forward_offline",
    "greedy_collapse",
    "naive_replay_oracle",
    "plan",
    "predicted_extra_frames",
    "psd_decode",
    "revision_mask",
    "run_session",
    "spike_align",
    "top_two",
]
