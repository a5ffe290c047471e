"""Post-hoc analysis of recorded runs.

Write stamps give every worker a total order over its model writes; the
averaging stamps split that order into rounds.  From full-mode records the
per-round local views can be replayed deterministically: each worker's view
starts at the previous round mean and applies its logged block updates in
write order, and the next round mean is the fixed-order average of the final
views.  Everything here consumes in-memory run results or their NDJSON
serialisation; nothing feeds back into the engine.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import AveragerStamp, RunResult, UpdateRecord


def classify_update(record: UpdateRecord, round_start: int) -> bool | None:
    """An update is clean when every sampled snapshot element was written at
    or after the round-start stamp; None when the record carries no tags."""
    if record.tags is None:
        return None
    return bool((record.tags >= round_start).all())


def _stamps_by_worker(result: RunResult) -> dict[int, list[AveragerStamp]]:
    out: dict[int, list[AveragerStamp]] = {}
    for st in result.stamps:
        out.setdefault(st.worker, []).append(st)
    for stamps in out.values():
        stamps.sort(key=lambda st: st.u)
    return out


def _records_by_worker(result: RunResult) -> dict[int, list[UpdateRecord]]:
    out: dict[int, list[UpdateRecord]] = {}
    for rec in result.updates:
        out.setdefault(rec.worker, []).append(rec)
    for recs in out.values():
        recs.sort(key=lambda r: r.u)
    return out


def _round_of(stamp_orders: list[int], u: int) -> int:
    """0-based round index of a write stamp: rounds are the gaps between
    averaging stamps, round 0 before the first stamp."""
    return bisect.bisect_left(stamp_orders, u)


@dataclass(frozen=True)
class DelayBucket:
    t: int  # within-round update index (capped)
    total: int
    clean: int

    @property
    def p_hat(self) -> float:
        return self.clean / self.total


@dataclass(frozen=True)
class DelayStats:
    total: int
    clean_total: int
    unclassified: int
    k_bar: int  # largest per-round counter advance seen at any worker
    buckets: tuple[DelayBucket, ...]
    clean_sequence: np.ndarray  # indicators in global write-stamp order

    @property
    def p_hat(self) -> float:
        return self.clean_total / self.total if self.total else 1.0

    @property
    def min_p_hat(self) -> float:
        return min((b.p_hat for b in self.buckets), default=self.p_hat)


def delay_stats(result: RunResult, bucket_cap: int = 32, min_bucket: int = 50) -> DelayStats:
    """Classify every recorded update against its round-start stamp.

    ``min_p_hat`` is taken over within-round-index buckets holding at least
    ``min_bucket`` classified updates; indices past ``bucket_cap`` pool
    together.
    """
    stamps = _stamps_by_worker(result)
    records = _records_by_worker(result)
    counts: dict[int, list[int]] = {}
    ordered: list[tuple[int, int, bool]] = []
    total = clean_total = unclassified = 0
    for q, recs in records.items():
        orders = [st.u for st in stamps.get(q, [])]
        t_in_round: dict[int, int] = {}
        for rec in recs:
            j = _round_of(orders, rec.u)
            round_start = stamps[q][j - 1].u if j > 0 else 0
            t = t_in_round.get(j, 0)
            t_in_round[j] = t + 1
            clean = classify_update(rec, round_start)
            if clean is None:
                unclassified += 1
                continue
            total += 1
            clean_total += int(clean)
            slot = counts.setdefault(min(t, bucket_cap), [0, 0])
            slot[0] += 1
            slot[1] += int(clean)
            ordered.append((rec.u, q, clean))
    ordered.sort()
    buckets = tuple(
        DelayBucket(t, c[0], c[1])
        for t, c in sorted(counts.items())
        if c[0] >= min_bucket
    )
    k_bar = max((st.k_delta for st in result.stamps), default=0)
    return DelayStats(
        total=total,
        clean_total=clean_total,
        unclassified=unclassified,
        k_bar=k_bar,
        buckets=buckets,
        clean_sequence=np.array([c for _, _, c in ordered], dtype=bool),
    )


@dataclass(frozen=True)
class GrowthReport:
    """Does cumulative clean-update mass keep growing linearly?"""

    total: int
    clean_mass: int
    p_hat: float
    quarter_rates: tuple[float, ...]
    linear_growth: bool


def growth_report(stats: DelayStats, floor: float = 0.01) -> GrowthReport:
    seq = stats.clean_sequence
    n = len(seq)
    if n == 0:
        return GrowthReport(0, 0, 1.0, (), False)
    quarters = tuple(
        float(part.mean()) for part in np.array_split(seq.astype(float), 4) if len(part)
    )
    overall = float(seq.mean())
    linear = all(qr >= max(floor, 0.2 * overall) for qr in quarters)
    return GrowthReport(n, int(seq.sum()), overall, quarters, linear)


@dataclass(frozen=True)
class Replay:
    round_means: list[np.ndarray]  # index 0 is the initial vector
    distances: np.ndarray  # ||view - snapshot|| per replayed update
    distances_sq: np.ndarray
    clean: np.ndarray  # aligned classification (bool)
    k_bar: int


def replay_rounds(result: RunResult) -> Replay:
    """Deterministically re-derive round means and per-update view distances.

    Requires full-mode records (logged gradients and snapshots).  Workers'
    averaging stamps are barrier-aligned, so every worker contributes the
    same number of rounds.
    """
    cfg = result.config
    if cfg.record_mode != "full":
        raise ValueError("replay needs record_mode='full'")
    stamps = _stamps_by_worker(result)
    records = _records_by_worker(result)
    n_rounds = {q: len(st) for q, st in stamps.items()}
    if len(set(n_rounds.values())) > 1:
        raise ValueError(f"unaligned round counts {n_rounds}")
    rounds = next(iter(n_rounds.values()), 0)
    workers = sorted(stamps)

    grouped: dict[int, list[list[UpdateRecord]]] = {}
    for q in workers:
        orders = [st.u for st in stamps[q]]
        per_round: list[list[UpdateRecord]] = [[] for _ in range(rounds + 1)]
        for rec in records.get(q, []):
            per_round[_round_of(orders, rec.u)].append(rec)
        if per_round[rounds]:
            raise ValueError("updates recorded after the final round")
        grouped[q] = per_round

    dim = cfg.objective.dim
    means = [result.x0.copy()]
    dists: list[tuple[int, float, float, bool]] = []
    for j in range(rounds):
        finals = np.empty((len(workers), dim))
        for qi, q in enumerate(workers):
            view = means[-1].copy()
            round_start = stamps[q][j - 1].u if j > 0 else 0
            for rec in grouped[q][j]:
                gap = view - rec.snapshot
                clean = classify_update(rec, round_start)
                dists.append(
                    (rec.u, float(np.sqrt(gap @ gap)), float(gap @ gap), bool(clean))
                )
                lo = cfg.partition.block(rec.block_id).start
                view[lo : lo + len(rec.grad)] -= rec.lr * rec.grad
            finals[qi] = view
        means.append(np.mean(finals, axis=0))
    dists.sort(key=lambda d: d[0])
    return Replay(
        round_means=means,
        distances=np.array([d[1] for d in dists]),
        distances_sq=np.array([d[2] for d in dists]),
        clean=np.array([d[3] for d in dists], dtype=bool),
        k_bar=max((st.k_delta for st in result.stamps), default=0),
    )


@dataclass(frozen=True)
class DriftReport:
    """Clean-conditioned snapshot drift versus the lr^2 staleness bound."""

    alphas: tuple[float, ...]
    mean_dist: tuple[float, ...]
    mean_dist_sq: tuple[float, ...]
    bounds: tuple[float, ...]
    n_clean: tuple[int, ...]
    k_bar: int
    m_hat: float
    exponent: float  # log-log slope of mean distance vs alpha
    monotone: bool
    below_bound: bool


def drift_bound_check(
    runs: dict[float, Replay], m_hat: float, dim: int, min_events: int = 100
) -> DriftReport:
    """Check E[||view - snapshot|| | clean] against alpha^2 * (sqrt(d)*K*M)^2.

    ``runs`` maps each constant learning rate to its replay.  Raises when any
    rate contributed fewer than ``min_events`` clean updates.
    """
    if len(runs) < 3:
        raise ValueError("need at least three learning rates")
    alphas = tuple(sorted(runs))
    k_bar = max(r.k_bar for r in runs.values())
    b = math.sqrt(dim) * k_bar * m_hat
    mean_d, mean_sq, n_clean, bounds = [], [], [], []
    for a in alphas:
        rep = runs[a]
        mask = rep.clean
        n = int(mask.sum())
        if n < min_events:
            raise ValueError(f"insufficient data: {n} clean events at lr={a}")
        mean_d.append(float(rep.distances[mask].mean()))
        mean_sq.append(float(rep.distances_sq[mask].mean()))
        n_clean.append(n)
        bounds.append(a * a * b * b)
    slope = float(np.polyfit(np.log(alphas), np.log(mean_d), 1)[0])
    monotone = all(x < y for x, y in zip(mean_d, mean_d[1:]))
    below = all(d <= bd and sq <= bd for d, sq, bd in zip(mean_d, mean_sq, bounds))
    return DriftReport(
        alphas=alphas,
        mean_dist=tuple(mean_d),
        mean_dist_sq=tuple(mean_sq),
        bounds=tuple(bounds),
        n_clean=tuple(n_clean),
        k_bar=k_bar,
        m_hat=m_hat,
        exponent=slope,
        monotone=monotone,
        below_bound=below,
    )


def measured_savings(results, objective, partition, batch_size: int) -> float:
    """Backward-flop saving of block-restricted updates, averaged per block.

    Faster blocks complete more iterations, so a per-update mean would be
    biased toward the cheapest blocks; the block-selection rule assigns
    blocks uniformly, so each visited block carries equal weight.
    """
    if not isinstance(results, (list, tuple)):
        results = [results]
    full = objective.backward_cost(partition.block(0)) * batch_size
    per_block: dict[int, list[int]] = {}
    for result in results:
        for rec in result.updates:
            if rec.reason == "alternate_partial":
                per_block.setdefault(rec.block_id, []).append(rec.backward_flops)
    if not per_block:
        raise ValueError("no block-restricted updates recorded")
    savings = [1.0 - float(np.mean(costs)) / full for costs in per_block.values()]
    return float(np.mean(savings))


@dataclass(frozen=True)
class RateReport:
    budgets: tuple[int, ...]
    stats: tuple[float, ...]  # best mean full-gradient norm^2 per budget
    slope: float
    intercept: float
    passes: bool  # slope at most the threshold and series decreasing
    threshold: float


def fit_loglog_slope(budgets, stats) -> tuple[float, float]:
    coeffs = np.polyfit(np.log(np.asarray(budgets, dtype=float)), np.log(stats), 1)
    return float(coeffs[0]), float(coeffs[1])


def rate_check(stats_by_budget: dict[int, float], threshold: float = -0.4) -> RateReport:
    """Fit the log-log decay of best gradient norm^2 versus round budget."""
    if len(stats_by_budget) < 4:
        raise ValueError("need at least four budgets")
    budgets = tuple(sorted(stats_by_budget))
    stats = tuple(stats_by_budget[j] for j in budgets)
    slope, intercept = fit_loglog_slope(budgets, stats)
    decreasing = all(x > y for x, y in zip(stats, stats[1:]))
    return RateReport(
        budgets=budgets,
        stats=stats,
        slope=slope,
        intercept=intercept,
        passes=decreasing and slope <= threshold,
        threshold=threshold,
    )


def grad_norm_series(result: RunResult) -> np.ndarray:
    """Full-dataset gradient norm^2 at every replayed round mean."""
    obj = result.config.objective
    rep = replay_rounds(result)
    out = np.empty(len(rep.round_means) - 1)
    for j, x in enumerate(rep.round_means[1:]):
        g = obj.full_grad(x)
        out[j] = g @ g
    return out


def round_mean_series(result: RunResult) -> list[np.ndarray]:
    """Measured post-averaging means in round order (worker 0 retains them
    whenever recording is on)."""
    stamps = sorted((s for s in result.stamps if s.worker == 0), key=lambda s: s.round)
    means = [st.mean for st in stamps]
    if not means or any(m is None for m in means):
        raise ValueError("round means were not retained; run with recording on")
    return means


def mean_grad_norms(result: RunResult, limit: int | None = None) -> np.ndarray:
    """Full-dataset gradient norm^2 at the measured round means."""
    obj = result.config.objective
    means = round_mean_series(result)
    if limit is not None:
        means = means[:limit]
    out = np.empty(len(means))
    for j, x in enumerate(means):
        g = obj.full_grad(x)
        out[j] = g @ g
    return out


# ---------------------------------------------------------------------------
# NDJSON event log


def save_event_log(path: str | Path, result: RunResult) -> None:
    """Persist update and averaging records, one JSON object per line."""

    def arr(a):
        return None if a is None else np.asarray(a).tolist()

    with open(path, "w") as fh:
        for rec in result.updates:
            fh.write(
                json.dumps(
                    {
                        "kind": "update",
                        "worker": rec.worker,
                        "rank": rec.rank,
                        "s": rec.s,
                        "u": rec.u,
                        "k_claim": rec.k_claim,
                        "block_id": rec.block_id,
                        "reason": rec.reason,
                        "lr": rec.lr,
                        "flops": rec.flops,
                        "backward_flops": rec.backward_flops,
                        "clean": rec.clean,
                        "tag_indices": arr(rec.tag_indices),
                        "tags": arr(rec.tags),
                        "grad": arr(rec.grad),
                        "snapshot": arr(rec.snapshot),
                    }
                )
                + "\n"
            )
        for st in result.stamps:
            fh.write(
                json.dumps(
                    {
                        "kind": "average",
                        "worker": st.worker,
                        "round": st.round,
                        "u": st.u,
                        "s_cur": st.s_cur,
                        "k_delta": st.k_delta,
                        "wall_ms": st.wall_ms,
                        "snapshot": arr(st.snapshot),
                        "mean": arr(st.mean),
                    }
                )
                + "\n"
            )


def load_event_log(path: str | Path) -> tuple[list[UpdateRecord], list[AveragerStamp]]:
    updates: list[UpdateRecord] = []
    stamps: list[AveragerStamp] = []

    def arr(v, dtype=np.float64):
        return None if v is None else np.asarray(v, dtype=dtype)

    for line in Path(path).read_text().splitlines():
        obj = json.loads(line)
        if obj["kind"] == "update":
            updates.append(
                UpdateRecord(
                    worker=obj["worker"],
                    rank=obj["rank"],
                    s=obj["s"],
                    u=obj["u"],
                    k_claim=obj["k_claim"],
                    block_id=obj["block_id"],
                    reason=obj["reason"],
                    lr=obj["lr"],
                    flops=obj["flops"],
                    backward_flops=obj["backward_flops"],
                    clean=obj["clean"],
                    tag_indices=arr(obj["tag_indices"], np.int64),
                    tags=arr(obj["tags"], np.int64),
                    grad=arr(obj["grad"]),
                    snapshot=arr(obj["snapshot"]),
                )
            )
        else:
            stamps.append(
                AveragerStamp(
                    worker=obj["worker"],
                    round=obj["round"],
                    u=obj["u"],
                    s_cur=obj["s_cur"],
                    k_delta=obj["k_delta"],
                    wall_ms=obj["wall_ms"],
                    snapshot=arr(obj["snapshot"]),
                    mean=arr(obj["mean"]),
                )
            )
    return updates, stamps
