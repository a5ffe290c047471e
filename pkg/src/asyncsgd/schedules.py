"""Learning-rate schedules and the model-averaging frequency scheme.

Both are indexed by the per-worker shared sample counter, i.e. minibatches
consumed so far.  The averaging scheme keeps the sync period at 1 for the
first half of the budget and then widens it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup to a scaled peak, then cosine or multistep decay.

    ``peak`` defaults to ``alpha0 * (batch_local * workers) / batch_base``,
    times 1.25 when ``boost`` is set (used by the partitioned asynchronous
    runs).  Warmup ramps linearly from alpha0 at step 0 to the peak at
    ``warmup``; cosine decays to exactly 0 at ``total``; multistep multiplies
    the peak by ``gamma`` at each milestone.
    """

    kind: str  # "cosine" | "multistep"
    alpha0: float
    total: int
    warmup: int = 0
    batch_local: int = 1
    workers: int = 1
    batch_base: int = 1
    boost: bool = False
    milestones: tuple[int, ...] = ()
    gamma: float = 0.1
    peak: float = field(default=0.0)

    def __post_init__(self):
        if self.kind not in ("cosine", "multistep"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not 0 <= self.warmup <= self.total:
            raise ValueError("warmup must lie within the budget")
        if any(m < 0 for m in self.milestones) or list(self.milestones) != sorted(
            self.milestones
        ):
            raise ValueError("milestones must be ascending and non-negative")
        if self.peak == 0.0:
            scaled = self.alpha0 * (self.batch_local * self.workers) / self.batch_base
            object.__setattr__(self, "peak", scaled * (1.25 if self.boost else 1.0))


def constant_schedule(alpha: float, total: int) -> LrSchedule:
    """A flat schedule: no warmup, no decay."""
    return LrSchedule(kind="multistep", alpha0=alpha, total=total, peak=alpha)


def lr_at(sched: LrSchedule, s: int) -> float:
    """Learning rate for sample-counter value ``s``; never negative."""
    if s < 0:
        raise ValueError("counter value must be non-negative")
    if s < sched.warmup:
        return sched.alpha0 + (sched.peak - sched.alpha0) * s / sched.warmup
    if sched.kind == "cosine":
        if s >= sched.total:
            return 0.0
        span = sched.total - sched.warmup
        return sched.peak * 0.5 * (1.0 + math.cos(math.pi * (s - sched.warmup) / span))
    drops = sum(1 for m in sched.milestones if s >= m)
    return sched.peak * sched.gamma**drops


@dataclass(frozen=True)
class SyncScheme:
    """Averaging period as a function of the sample counter.

    Period 1 (average after every minibatch) until ``switch_point``, the
    widened period ``period`` afterwards.  ``switch_point`` defaults to half
    the budget.
    """

    total: int
    period: int
    switch_point: int | None = None

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("period must be >= 1")
        switch = self.total // 2 if self.switch_point is None else self.switch_point
        if not 0 <= switch <= self.total:
            raise ValueError("switch point must lie within the budget")
        object.__setattr__(self, "switch_point", switch)


def sync_every(scheme: SyncScheme, s_cur: int) -> int:
    """How many counter ticks must elapse before the next averaging round."""
    return 1 if s_cur < scheme.switch_point else scheme.period
