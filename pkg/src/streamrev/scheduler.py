"""Revision schedules and the recompute cost model.

Everything here is integer frame arithmetic.  Seconds-valued settings are
converted with :meth:`RevisionPolicy.from_seconds` before reaching this module.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import NamedTuple

from .errors import DomainError, InvalidArgument


class EventKind(enum.Enum):
    PRE_PARTIAL = "pre_partial"
    FULL = "full"
    FINAL = "final"


@dataclass(frozen=True)
class RevisionPolicy:
    sigma: int
    nu: int
    eta: int = 0
    theta: float = 0.3
    history: int | None = None

    def __post_init__(self):
        if self.nu < 1:
            raise InvalidArgument(f"revision interval must be >= 1 frame, got {self.nu}")
        if self.sigma < self.nu:
            raise InvalidArgument(f"revision step {self.sigma} shorter than interval {self.nu}")
        if self.eta not in (0, 1):
            raise InvalidArgument(f"eta must be 0 or 1, got {self.eta}")
        if not 0.0 <= self.theta <= 1.0:
            raise InvalidArgument(f"theta must lie in [0, 1], got {self.theta}")

    @property
    def mu(self) -> int:
        return self.sigma // self.nu

    @classmethod
    def from_seconds(cls, step_s, interval_s, frame_ms=20, **kw) -> "RevisionPolicy":
        """Build a policy from seconds; an interval of 0 s means every frame."""
        sigma = round(step_s * 1000 / frame_ms)
        nu = max(1, round(interval_s * 1000 / frame_ms))
        return cls(sigma=sigma, nu=nu, **kw)


class RevisionEvent(NamedTuple):
    n: int
    lo: int
    hi: int
    kind: EventKind

    @property
    def cost(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class CostReport:
    T: int
    predicted: int
    measured: int
    mu: int


def _event(n, sigma, kind):
    return RevisionEvent(n=n, lo=max(0, n - sigma), hi=n - 1, kind=kind)


def _periodic(n, policy):
    kind = EventKind.PRE_PARTIAL if n < policy.sigma else EventKind.FULL
    return _event(n, policy.sigma, kind)


def plan(T: int, policy: RevisionPolicy) -> list[RevisionEvent]:
    if T < 1:
        raise InvalidArgument(f"frame count must be >= 1, got {T}")
    sigma, pre, full = policy.sigma, EventKind.PRE_PARTIAL, EventKind.FULL
    events = [
        RevisionEvent(n, max(0, n - sigma), n - 1, pre if n < sigma else full)
        for n in range(policy.nu, T + 1, policy.nu)
    ]
    if policy.eta:
        events.append(_event(T, policy.sigma, EventKind.FINAL))
    return events


def measured_extra_frames(events) -> int:
    return sum(e.cost for e in events)


def predicted_extra_frames(T: int, policy: RevisionPolicy) -> int:
    """Closed-form recompute count for ``T`` frames.

    ``ceil((T - sigma) / nu) * sigma + (mu + mu^2) * nu / 2 + eta * sigma``
    with ``mu = sigma // nu``.
    """
    sigma, nu = policy.sigma, policy.nu
    if sigma > T:
        raise DomainError(f"cost model needs sigma <= T, got sigma={sigma} T={T}")
    mu = policy.mu
    full = -((sigma - T) // nu)
    return full * sigma + (mu + mu * mu) * nu // 2 + policy.eta * sigma


def cost_report(T: int, policy: RevisionPolicy) -> CostReport:
    return CostReport(
        T=T,
        predicted=predicted_extra_frames(T, policy),
        measured=measured_extra_frames(plan(T, policy)),
        mu=policy.mu,
    )


class OnlineScheduler:
    """Emits the events due as frames arrive; single owner, frames in order."""

    def __init__(self, policy: RevisionPolicy, T_final: int | None = None):
        self.policy = policy
        self.T_final = T_final
        self.t = 0

    def on_frame(self, t: int, T_final: int | None = None) -> list[RevisionEvent]:
        """``t`` is the number of frames received so far (1-based)."""
        if t != self.t + 1:
            raise InvalidArgument(f"frame {t} arrived out of order (expected {self.t + 1})")
        self.t = t
        if T_final is not None:
            self.T_final = T_final
        due = []
        if t % self.policy.nu == 0:
            due.append(_periodic(t, self.policy))
        if self.policy.eta and self.T_final is not None and t == self.T_final:
            due.append(_event(t, self.policy.sigma, EventKind.FINAL))
        return due


def events_to_csv(events) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "kind", "lo", "hi", "cost"])
    for e in events:
        w.writerow([e.n, e.kind.value, e.lo, e.hi, e.cost])
    return buf.getvalue()
