"""Training engine: asynchronous block-partitioned runs plus baselines.

``lap_sgd``/``lpp_sgd`` run, per worker, a group of updater threads and one
averaging thread over a shared lock-free parameter store.  Updaters claim a
minibatch slot from the shared counter, snapshot the store, compute a block
gradient at the snapshot, and subtract it element-atomically.  Averagers
poll the counter and, every time the scheme's period has elapsed, snapshot
their store, all-reduce the mean across workers, and add the difference back
element-atomically.  Only averagers synchronise with each other; updaters
never block.

``mb_sgd`` (one shared iterate, gradients averaged every step) and
``pl_sgd`` (independent local chains, models averaged every period) are
sequential, bitwise-reproducible baselines.
"""

from __future__ import annotations

import sys
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .objectives import EpochSampler, Objective, sample_batch
from .paramstore import AtomicCounter, ParamStore
from .partition import Block, BlockChoice, BlockPartition, SelectionReason, select_block
from .schedules import LrSchedule, SyncScheme, lr_at, sync_every

ALGOS = ("mb_sgd", "pl_sgd", "lap_sgd", "lpp_sgd")


@dataclass(frozen=True)
class RunConfig:
    algo: str
    objective: Objective
    partition: BlockPartition
    lr: LrSchedule
    sync: SyncScheme
    budget: int  # minibatch slots per worker
    warm_start_budget: int  # full-vector slots before block alternation
    workers: int = 2
    updaters: int = 4
    batch_size: int = 32
    seed: int = 0
    eval_interval: int = 0  # 0: only initial and final rows
    record_mode: str = "light"  # "off" | "light" | "full"
    tag_sample: int = 16
    quiescent: bool = False
    epoch_partition: bool = False
    round_budget: int | None = None  # stop after this many averaging rounds

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algorithm {self.algo!r}")
        if self.algo in ("mb_sgd", "pl_sgd") and self.updaters != 1:
            raise ValueError(f"{self.algo} is sequential per worker; set updaters=1")
        if self.record_mode not in ("off", "light", "full"):
            raise ValueError(f"unknown record mode {self.record_mode!r}")
        if self.workers < 1 or self.updaters < 1 or self.batch_size < 1:
            raise ValueError("workers, updaters, batch_size must be positive")
        if self.budget < 1:
            raise ValueError("budget must be positive")
        if self.algo == "lpp_sgd" and self.partition.num_blocks < self.updaters:
            raise ValueError("need at least one block per updater")
        if self.round_budget is not None:
            if self.algo in ("mb_sgd", "pl_sgd"):
                raise ValueError("round_budget applies to asynchronous runs only")
            if self.round_budget < 1:
                raise ValueError("round_budget must be positive")


@dataclass(slots=True)
class UpdateRecord:
    """One applied minibatch update."""

    worker: int
    rank: int
    s: int  # minibatch slot (snapshot order)
    u: int  # write stamp (update order)
    k_claim: int  # last averaging stamp visible when the write was claimed
    block_id: int
    reason: str
    lr: float
    flops: int
    backward_flops: int
    clean: bool | None  # all sampled snapshot tags at/after k_claim
    tag_indices: np.ndarray | None = None
    tags: np.ndarray | None = None
    grad: np.ndarray | None = None  # full mode
    snapshot: np.ndarray | None = None  # full mode


@dataclass(slots=True)
class AveragerStamp:
    """One averaging round as seen by one worker."""

    worker: int
    round: int
    u: int  # write stamp of the mean-difference apply
    s_cur: int
    k_delta: int  # counter ticks since this worker's previous round
    wall_ms: float
    snapshot: np.ndarray | None = None  # full mode
    mean: np.ndarray | None = None  # full mode


@dataclass(frozen=True)
class MetricsRow:
    algo: str
    seed: int
    wall_ms: float
    samples: int  # per-worker counter units (minibatches per worker)
    round: int
    train_loss: float
    grad_norm_sq: float
    flops: int
    p_hat: float

    CSV_HEADER = "algo,seed,wall_ms,samples,round,train_loss,grad_norm_sq,flops,p_hat"

    def as_csv(self) -> str:
        return ",".join(
            [
                self.algo,
                str(self.seed),
                repr(self.wall_ms),
                str(self.samples),
                str(self.round),
                repr(self.train_loss),
                repr(self.grad_norm_sq),
                str(self.flops),
                repr(self.p_hat),
            ]
        )


@dataclass
class RunResult:
    config: RunConfig
    metrics: list[MetricsRow]
    final_values: np.ndarray
    x0: np.ndarray
    wall_ms: float
    flops: int
    p_hat: float
    counter_finals: list[int]
    updates: list[UpdateRecord] = field(default_factory=list)
    stamps: list[AveragerStamp] = field(default_factory=list)


class PauseGate:
    """Lets an averager fence its worker's updaters between two updates.

    Test-only quiescent mode: updaters pass a checkpoint between iterations;
    ``pause`` returns once every registered updater is parked there, so no
    model write overlaps the fenced section.
    """

    def __init__(self):
        self._cv = threading.Condition()
        self._active = 0
        self._idle = 0
        self._paused = False

    def register(self) -> None:
        with self._cv:
            self._active += 1

    def leave(self) -> None:
        with self._cv:
            self._active -= 1
            self._cv.notify_all()

    def checkpoint(self) -> None:
        with self._cv:
            if not self._paused:
                return
            self._idle += 1
            self._cv.notify_all()
            while self._paused:
                self._cv.wait()
            self._idle -= 1
            self._cv.notify_all()

    def pause(self) -> None:
        with self._cv:
            self._paused = True
            while self._idle < self._active:
                self._cv.wait()

    def resume(self) -> None:
        with self._cv:
            self._paused = False
            self._cv.notify_all()


class _MeanAllReduce:
    """Slot-deposit all-reduce; every participant gets the same mean.

    The mean is a fixed-order reduction over the worker-indexed slot matrix,
    so it is deterministic given the deposited vectors.  Each call also
    and-reduces a per-participant "final" flag; the group exits only when a
    round is unanimously final, which keeps round counts aligned across
    workers during shutdown.
    """

    def __init__(self, workers: int, dim: int):
        self._slots = np.zeros((workers, dim))
        self._flags = np.zeros(workers, dtype=bool)
        self._mean = np.zeros(dim)
        self._unanimous = False
        self._barrier = threading.Barrier(workers)

    def reduce(self, worker: int, values: np.ndarray, final: bool) -> tuple[np.ndarray, bool]:
        self._slots[worker] = values
        self._flags[worker] = final
        if self._barrier.wait() == 0:
            np.mean(self._slots, axis=0, out=self._mean)
            self._unanimous = bool(self._flags.all())
        self._barrier.wait()
        mean = self._mean.copy()
        unanimous = self._unanimous
        self._barrier.wait()  # everyone copied; slots may be overwritten
        return mean, unanimous

    def abort(self) -> None:
        self._barrier.abort()


class _WorkerState:
    def __init__(self, worker: int, x0: np.ndarray, track_writes: bool, quiescent: bool):
        self.worker = worker
        self.store = ParamStore(x0, track_writes=track_writes)
        self.last_avg_stamp = AtomicCounter(0)
        self.exited_updaters = AtomicCounter(0)
        # counter value at this worker's latest averaging trigger; lets
        # updaters tell when the next round is overdue and yield the CPU
        self.synced_at = AtomicCounter(0)
        self.gate = PauseGate() if quiescent else None


class _RunState:
    """Everything shared across the run's threads."""

    def __init__(self, cfg: RunConfig, x0: np.ndarray):
        track = cfg.algo in ("lap_sgd", "lpp_sgd")
        self.cfg = cfg
        self.x0 = x0
        self.workers = [
            _WorkerState(q, x0, track, cfg.quiescent) for q in range(cfg.workers)
        ]
        self.allreduce = _MeanAllReduce(cfg.workers, cfg.objective.dim)
        self.stop = AtomicCounter(0)  # raised once the round budget is met
        # count of in-flight averaging rounds; updaters defer new iterations
        # while it is raised so the round rendezvous is not starved of CPU
        self.round_gate = AtomicCounter(0)
        # collective call number: bumped once per round OPENED; an averager
        # joins when this exceeds the rounds it has participated in
        self.round_calls = AtomicCounter(0)
        self.flops = AtomicCounter(0)
        self.clean_count = AtomicCounter(0)
        self.classified_count = AtomicCounter(0)
        self.updates: list[list[UpdateRecord]] = [[] for _ in range(cfg.workers * cfg.updaters)]
        self.stamps: list[list[AveragerStamp]] = [[] for _ in range(cfg.workers)]
        self.eval_points: list[tuple[int, int, float, int, float, np.ndarray]] = []
        self.errors: list[BaseException] = []
        self.error_lock = threading.Lock()
        self.t0 = 0.0

    def worker_done(self, q: int) -> bool:
        return self.workers[q].exited_updaters.read() == self.cfg.updaters

    def p_hat(self) -> float:
        total = self.classified_count.read()
        return self.clean_count.read() / total if total else 1.0

    def fail(self, exc: BaseException) -> None:
        with self.error_lock:
            self.errors.append(exc)
        self.stop.store(1)
        self.allreduce.abort()
        for ws in self.workers:
            if ws.gate is not None:
                ws.gate.resume()


def _updater_body(state: _RunState, q: int, rank: int) -> None:
    cfg = state.cfg
    ws = state.workers[q]
    obj = cfg.objective
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, q, rank]))
    if cfg.epoch_partition:
        shard = np.arange(obj.n_samples)[q :: cfg.workers]
        sampler = EpochSampler(shard, seed=cfg.seed * 1000 + q * 10 + rank)
    else:
        sampler = None
    full_tags = cfg.record_mode == "full"
    tag_pick = min(cfg.tag_sample, obj.dim)
    records = state.updates[q * cfg.updaters + rank - 1]
    sink = records.append if cfg.record_mode != "off" else None
    partial_allowed = cfg.algo == "lpp_sgd"

    if ws.gate is not None:
        ws.gate.register()
    try:
        _updater_loop(state, ws, rank, rng, sampler, full_tags, tag_pick, sink, partial_allowed)
    finally:
        if ws.gate is not None:
            ws.gate.leave()
        ws.exited_updaters.add(1)


def _updater_loop(state, ws, rank, rng, sampler, full_tags, tag_pick, sink, partial_allowed):
    cfg = state.cfg
    q = ws.worker
    store = ws.store
    obj = cfg.objective
    s = 0
    while s < cfg.budget and not state.stop.read():
        if ws.gate is not None:
            ws.gate.checkpoint()
        else:
            # cooperative pacing: defer new iterations while an averaging
            # round is mid-flight or overdue, so the averager is not starved
            # of CPU on few-core hosts.  Purely advisory — anything already
            # past this point overlaps the round freely, and a failure
            # unwinds through the stop flag
            while not state.stop.read():
                if state.round_gate.read() == 0:
                    s_now = store.sample_counter.read()
                    if s_now - ws.synced_at.read() < sync_every(cfg.sync, s_now):
                        break
                time.sleep(5e-5)
        s = store.read_and_inc()
        lr = lr_at(cfg.lr, s)
        if partial_allowed:
            choice = select_block(s, cfg.warm_start_budget, cfg.partition.num_blocks, rank)
        else:
            choice = BlockChoice(0, SelectionReason.WARM_START)
        block = cfg.partition.block(choice.block_id)
        if full_tags:
            snap = store.snapshot()
        else:
            idx = np.sort(rng.choice(obj.dim, size=tag_pick, replace=False))
            snap = store.snapshot(tag_indices=idx)
        if sampler is not None:
            batch = sampler.next_batch(cfg.batch_size)
        else:
            batch = sample_batch(rng, obj.n_samples, cfg.batch_size)
        g = obj.grad_block(snap.values, block, batch)
        k_claim = ws.last_avg_stamp.read()
        u = store.claim_update_order()
        store.sub_assign(block.start, lr * g.values, stamp=u)
        state.flops.add(g.flops)
        clean = None
        if snap.tags is not None:
            clean = bool((snap.tags >= k_claim).all())
            state.classified_count.add(1)
            if clean:
                state.clean_count.add(1)
        if sink is not None:
            sink(
                UpdateRecord(
                    worker=q,
                    rank=rank,
                    s=s,
                    u=u,
                    k_claim=k_claim,
                    block_id=choice.block_id,
                    reason=choice.reason.value,
                    lr=lr,
                    flops=g.flops,
                    backward_flops=g.backward_flops,
                    clean=clean,
                    tag_indices=snap.tag_indices,
                    tags=snap.tags,
                    grad=g.values.copy() if cfg.record_mode == "full" else None,
                    snapshot=snap.values if cfg.record_mode == "full" else None,
                )
            )


def _averager_body(state: _RunState, q: int, next_eval: int) -> None:
    cfg = state.cfg
    ws = state.workers[q]
    store = ws.store
    full = cfg.record_mode == "full"
    stamps = state.stamps[q]
    s_pre = 0
    round_no = 0
    backoff = 0.0
    while True:
        s_cur = store.sample_counter.read()
        drain = state.worker_done(q)
        # a peer worker opening a round is a trigger too: the all-reduce is
        # collective, so joining at once keeps the rendezvous from stalling
        pending = state.round_calls.read() > round_no
        fresh = s_cur - s_pre >= sync_every(cfg.sync, s_cur)
        due = drain or fresh
        if not due and not pending:
            time.sleep(backoff)
            backoff = min(2e-4, backoff * 2 + 1e-5)
            continue
        if due and not pending and drain and not fresh:
            # local updaters are finished; give peers a beat so their work
            # lands in this round instead of a storm of empty drain rounds
            time.sleep(2e-3)
            pending = state.round_calls.read() > round_no
        if due and not pending:
            state.round_calls.add(1)
        backoff = 0.0
        state.round_gate.add(1)
        try:
            if ws.gate is not None:
                ws.gate.pause()
            snap = store.snapshot()
            mean, unanimous = state.allreduce.reduce(q, snap.values, drain)
            u_avg = store.claim_update_order()
            store.add_assign(0, mean - snap.values, stamp=u_avg)
            ws.last_avg_stamp.store(u_avg)
            ws.synced_at.store(s_cur)
        finally:
            state.round_gate.add(-1)
            if ws.gate is not None:
                ws.gate.resume()
        round_no += 1
        if cfg.round_budget is not None and round_no >= cfg.round_budget:
            state.stop.store(1)
        wall_ms = (time.perf_counter() - state.t0) * 1e3
        stamps.append(
            AveragerStamp(
                worker=q,
                round=round_no,
                u=u_avg,
                s_cur=s_cur,
                k_delta=s_cur - s_pre,
                wall_ms=wall_ms,
                snapshot=snap.values if full else None,
                mean=mean if q == 0 and cfg.record_mode != "off" else None,
            )
        )
        s_pre = s_cur
        if q == 0 and (unanimous or (cfg.eval_interval and s_cur >= next_eval)):
            state.eval_points.append(
                (s_cur, round_no, wall_ms, state.flops.read(), state.p_hat(), mean)
            )
            if cfg.eval_interval:
                while next_eval <= s_cur:
                    next_eval += cfg.eval_interval
        if unanimous:
            return


def _guard(state: _RunState, fn, *args):
    def run():
        try:
            fn(state, *args)
        except BaseException as exc:  # surfaced after join
            state.fail(exc)

    return run


def _run_async(cfg: RunConfig) -> RunResult:
    obj = cfg.objective
    x0 = obj.init_params(cfg.seed)
    state = _RunState(cfg, x0)
    first_eval = cfg.eval_interval if cfg.eval_interval else cfg.budget + 1
    updaters = [
        threading.Thread(
            target=_guard(state, _updater_body, q, rank),
            name=f"updater-{q}-{rank}",
            daemon=True,
        )
        for q in range(cfg.workers)
        for rank in range(1, cfg.updaters + 1)
    ]
    averagers = [
        threading.Thread(
            target=_guard(state, _averager_body, q, first_eval),
            name=f"averager-{q}",
            daemon=True,
        )
        for q in range(cfg.workers)
    ]
    # finer thread timeslices keep averaging-round latency low on few cores
    old_switch = sys.getswitchinterval()
    sys.setswitchinterval(5e-4)
    try:
        state.t0 = time.perf_counter()
        # averagers first: starting a thread needs the interpreter lock, and
        # once the updaters are hot a late averager can be starved past the
        # whole run on a single core; an early averager just idles until the
        # first counter ticks arrive
        for t in averagers + updaters:
            t.start()
        for t in updaters + averagers:
            t.join()
        wall_ms = (time.perf_counter() - state.t0) * 1e3
    finally:
        sys.setswitchinterval(old_switch)
    if state.errors:
        raise RuntimeError("engine thread failed") from state.errors[0]

    final = state.eval_points[-1][5] if state.eval_points else x0
    rows = [_eval_row(cfg, 0, 0, 0.0, 0, 1.0, x0)]
    rows += [_eval_row(cfg, s, j, w, f, p, x) for s, j, w, f, p, x in state.eval_points]
    updates = [r for sink in state.updates for r in sink]
    stamps = [st for per_worker in state.stamps for st in per_worker]
    return RunResult(
        config=cfg,
        metrics=rows,
        final_values=final.copy(),
        x0=x0,
        wall_ms=wall_ms,
        flops=state.flops.read(),
        p_hat=state.p_hat(),
        counter_finals=[ws.store.sample_counter.read() for ws in state.workers],
        updates=updates,
        stamps=stamps,
    )


def _eval_row(
    cfg: RunConfig, samples: int, rnd: int, wall_ms: float, flops: int, p_hat: float, x: np.ndarray
) -> MetricsRow:
    obj = cfg.objective
    grad = obj.full_grad(x)
    return MetricsRow(
        algo=cfg.algo,
        seed=cfg.seed,
        wall_ms=wall_ms,
        samples=samples,
        round=rnd,
        train_loss=obj.full_loss(x),
        grad_norm_sq=float(grad @ grad),
        flops=flops,
        p_hat=p_hat,
    )


def _run_minibatch(cfg: RunConfig) -> RunResult:
    """One shared iterate; every step averages the workers' batch gradients.

    Each step draws one global batch of workers*batch_size indices and
    shards it, so splitting a batch across more workers walks the identical
    sample stream: Q workers at B match one worker at Q*B.
    """
    obj = cfg.objective
    x = obj.init_params(cfg.seed)
    x0 = x.copy()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0, 1]))
    full_block = Block(0, obj.dim)
    flops = 0
    evals: list[tuple[int, int, float, int, np.ndarray]] = []
    t0 = time.perf_counter()
    for k in range(1, cfg.budget + 1):
        lr = lr_at(cfg.lr, k - 1)
        grads = np.empty((cfg.workers, obj.dim))
        shards = sample_batch(rng, obj.n_samples, cfg.workers * cfg.batch_size)
        for q in range(cfg.workers):
            batch = shards[q * cfg.batch_size : (q + 1) * cfg.batch_size]
            g = obj.grad_block(x, full_block, batch)
            grads[q] = g.values
            flops += g.flops
        x -= lr * np.mean(grads, axis=0)
        if (cfg.eval_interval and k % cfg.eval_interval == 0) or k == cfg.budget:
            evals.append((k, k, (time.perf_counter() - t0) * 1e3, flops, x.copy()))
    wall_ms = (time.perf_counter() - t0) * 1e3
    rows = [_eval_row(cfg, 0, 0, 0.0, 0, 1.0, x0)]
    rows += [_eval_row(cfg, s, j, w, f, 1.0, xs) for s, j, w, f, xs in evals]
    return RunResult(
        config=cfg,
        metrics=rows,
        final_values=x,
        x0=x0,
        wall_ms=wall_ms,
        flops=flops,
        p_hat=1.0,
        counter_finals=[cfg.budget] * cfg.workers,
    )


def _run_post_local(cfg: RunConfig) -> RunResult:
    """Independent local chains, blocking model average every period.

    Batches come from the same global draw-and-shard stream as the
    synchronous baseline, so a period of one step recovers it exactly.
    """
    obj = cfg.objective
    x0 = obj.init_params(cfg.seed)
    xs = np.tile(x0, (cfg.workers, 1))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0, 1]))
    full_block = Block(0, obj.dim)
    flops = 0
    rounds = 0
    since_sync = 0
    evals: list[tuple[int, int, float, int, np.ndarray]] = []
    t0 = time.perf_counter()
    for k in range(1, cfg.budget + 1):
        lr = lr_at(cfg.lr, k - 1)
        shards = sample_batch(rng, obj.n_samples, cfg.workers * cfg.batch_size)
        for q in range(cfg.workers):
            batch = shards[q * cfg.batch_size : (q + 1) * cfg.batch_size]
            g = obj.grad_block(xs[q], full_block, batch)
            xs[q] -= lr * g.values
            flops += g.flops
        since_sync += 1
        if since_sync >= sync_every(cfg.sync, k) or k == cfg.budget:
            xs[:] = np.mean(xs, axis=0)
            rounds += 1
            since_sync = 0
            if (cfg.eval_interval and k >= rounds_next_eval(evals, cfg)) or k == cfg.budget:
                evals.append((k, rounds, (time.perf_counter() - t0) * 1e3, flops, xs[0].copy()))
    wall_ms = (time.perf_counter() - t0) * 1e3
    rows = [_eval_row(cfg, 0, 0, 0.0, 0, 1.0, x0)]
    rows += [_eval_row(cfg, s, j, w, f, 1.0, xv) for s, j, w, f, xv in evals]
    return RunResult(
        config=cfg,
        metrics=rows,
        final_values=xs[0].copy(),
        x0=x0,
        wall_ms=wall_ms,
        flops=flops,
        p_hat=1.0,
        counter_finals=[cfg.budget] * cfg.workers,
    )


def rounds_next_eval(evals: list, cfg: RunConfig) -> int:
    last = evals[-1][0] if evals else 0
    return last + cfg.eval_interval


def run_experiment(cfg: RunConfig) -> RunResult:
    if cfg.algo == "mb_sgd":
        return _run_minibatch(cfg)
    if cfg.algo == "pl_sgd":
        return _run_post_local(cfg)
    return _run_async(cfg)
