"""Offline analysis: classification, replay, drift/rate reports, event logs.

Synthetic event streams with hand-computable outcomes come first; the
round-trip and identity checks against live runs follow.
"""

from __future__ import annotations

import numpy as np
import pytest

from asyncsgd.engine import AveragerStamp, RunResult, UpdateRecord, run_experiment
from asyncsgd.instrumentation import (
    DelayStats,
    classify_update,
    delay_stats,
    drift_bound_check,
    growth_report,
    load_event_log,
    measured_savings,
    mean_grad_norms,
    rate_check,
    replay_rounds,
    round_mean_series,
    save_event_log,
)
from asyncsgd.instrumentation import Replay
from asyncsgd.objectives import QuadraticObjective
from asyncsgd.partition import balanced_boundaries, make_partition
from asyncsgd.schedules import SyncScheme

from support import tiny_config


# --------------------------------------------------------------------------
# synthetic events with hand-computed outcomes
# --------------------------------------------------------------------------


def _record(u, tags, *, block_id=0, grad=None, snapshot=None, lr=1.0, reason="warm_start"):
    return UpdateRecord(
        worker=0,
        rank=1,
        s=u,
        u=u,
        k_claim=0,
        block_id=block_id,
        reason=reason,
        lr=lr,
        flops=0,
        backward_flops=0,
        clean=None,
        tag_indices=None if tags is None else np.arange(len(tags)),
        tags=None if tags is None else np.asarray(tags, dtype=np.int64),
        grad=grad,
        snapshot=snapshot,
    )


def _stamp(worker, rnd, u, *, k_delta=1, snapshot=None, mean=None):
    return AveragerStamp(
        worker=worker,
        round=rnd,
        u=u,
        s_cur=u,
        k_delta=k_delta,
        wall_ms=0.0,
        snapshot=snapshot,
        mean=mean,
    )


def test_classification_against_the_round_start_stamp():
    assert classify_update(_record(1, [0, 0, 0]), round_start=0) is True
    assert classify_update(_record(1, [4, 6, 9]), round_start=5) is False
    assert classify_update(_record(1, [5, 6, 9]), round_start=5) is True
    assert classify_update(_record(1, None), round_start=0) is None


def _quad4():
    return QuadraticObjective(np.zeros((4, 4)))


def _synthetic_result(updates, stamps, x0):
    cfg = tiny_config(
        _quad4(),
        algo="lap_sgd",
        budget=1,
        workers=1,
        updaters=1,
        record_mode="full",
        partition=make_partition(4, (0, 1, 3, 4)),
    )
    return RunResult(
        config=cfg,
        metrics=[],
        final_values=x0.copy(),
        x0=x0,
        wall_ms=0.0,
        flops=0,
        p_hat=1.0,
        counter_finals=[1],
        updates=updates,
        stamps=stamps,
    )


def test_replay_applies_a_block_update_to_the_right_slice():
    x0 = np.array([1.0, 2.0, 3.0, 4.0])
    rec = _record(
        1,
        [0, 0, 0, 0],
        block_id=2,  # covers indices [1, 3)
        grad=np.array([-10.0, -20.0]),
        snapshot=x0.copy(),
    )
    after = np.array([1.0, 12.0, 23.0, 4.0])
    result = _synthetic_result(
        [rec], [_stamp(0, 1, 2, snapshot=after.copy(), mean=after.copy())], x0
    )
    rep = replay_rounds(result)
    assert np.array_equal(rep.round_means[0], x0)
    assert np.array_equal(rep.round_means[1], after)
    assert rep.distances.tolist() == [0.0]
    assert rep.clean.tolist() == [True]


def test_replay_rejects_updates_past_the_final_round():
    x0 = np.zeros(4)
    rec = _record(5, [0, 0, 0, 0], grad=np.zeros(4), snapshot=x0.copy())
    result = _synthetic_result([rec], [_stamp(0, 1, 2, snapshot=x0, mean=x0)], x0)
    with pytest.raises(ValueError, match="after the final round"):
        replay_rounds(result)


def test_replay_rejects_unaligned_round_counts():
    x0 = np.zeros(4)
    stamps = [
        _stamp(0, 1, 2, snapshot=x0, mean=x0),
        _stamp(1, 1, 2, snapshot=x0, mean=x0),
        _stamp(1, 2, 3, snapshot=x0, mean=x0),
    ]
    result = _synthetic_result([], stamps, x0)
    with pytest.raises(ValueError, match="unaligned round counts"):
        replay_rounds(result)


def test_replay_requires_full_records(quad8):
    result = run_experiment(tiny_config(quad8, algo="lap_sgd", budget=40))
    with pytest.raises(ValueError, match="record_mode='full'"):
        replay_rounds(result)


def test_delay_stats_counts_unclassified_records():
    x0 = np.zeros(4)
    updates = [
        _record(1, [0, 0, 0, 0]),
        _record(2, None),
        _record(3, [0, 0, 5, 0]),
    ]
    stamps = [_stamp(0, 1, 4, snapshot=x0, mean=x0)]
    stats = delay_stats(_synthetic_result(updates, stamps, x0), min_bucket=1)
    assert stats.total == 2
    assert stats.clean_total == 2  # round start is 0: every tag qualifies
    assert stats.unclassified == 1
    assert stats.p_hat == 1.0


def test_delay_stats_flags_updates_spanning_a_round():
    x0 = np.zeros(4)
    updates = [
        _record(1, [0, 0, 0, 0]),  # before the round: start 0, clean
        _record(5, [0, 0, 0, 0]),  # after a round stamped u=4: stale tags
        _record(6, [4, 4, 5, 9]),  # tags at/after the round start: clean
    ]
    stamps = [_stamp(0, 1, 4, snapshot=x0, mean=x0)]
    stats = delay_stats(_synthetic_result(updates, stamps, x0), min_bucket=1)
    assert stats.total == 3
    assert stats.clean_total == 2
    assert stats.p_hat == pytest.approx(2 / 3)
    assert [b.t for b in stats.buckets] == [0, 1]
    assert stats.buckets[0].total == 2  # first update of each round


def test_empty_recording_yields_vacuous_stats(quad8):
    result = run_experiment(
        tiny_config(quad8, algo="lap_sgd", budget=40, record_mode="off")
    )
    stats = delay_stats(result)
    assert stats.total == 0
    assert stats.p_hat == 1.0
    assert growth_report(stats).linear_growth is False


def test_growth_report_all_clean_and_all_stale():
    good = DelayStats(
        total=400, clean_total=400, unclassified=0, k_bar=1, buckets=(),
        clean_sequence=np.ones(400, dtype=bool),
    )
    rep = growth_report(good)
    assert rep.clean_mass == rep.total == 400
    assert rep.p_hat == 1.0
    assert rep.quarter_rates == (1.0, 1.0, 1.0, 1.0)
    assert rep.linear_growth is True

    bad = DelayStats(
        total=200, clean_total=0, unclassified=0, k_bar=1, buckets=(),
        clean_sequence=np.zeros(200, dtype=bool),
    )
    rep = growth_report(bad)
    assert rep.clean_mass == 0
    assert rep.p_hat == 0.0
    assert rep.linear_growth is False


def test_growth_report_flags_a_clean_rate_collapse():
    seq = np.concatenate([np.ones(300, dtype=bool), np.zeros(300, dtype=bool)])
    stats = DelayStats(
        total=600, clean_total=300, unclassified=0, k_bar=1, buckets=(),
        clean_sequence=seq,
    )
    rep = growth_report(stats)
    assert rep.quarter_rates == (1.0, 1.0, 0.0, 0.0)
    assert rep.linear_growth is False


# --------------------------------------------------------------------------
# drift and rate reports
# --------------------------------------------------------------------------


def _fake_replay(alpha, n=150, scale=3.0, k_bar=2):
    d = np.full(n, scale * alpha * alpha)
    return Replay(
        round_means=[],
        distances=d,
        distances_sq=d * d,
        clean=np.ones(n, dtype=bool),
        k_bar=k_bar,
    )


def test_drift_report_recovers_a_quadratic_exponent():
    alphas = (0.01, 0.02, 0.04)
    runs = {a: _fake_replay(a) for a in alphas}
    report = drift_bound_check(runs, m_hat=5.0, dim=16, min_events=100)
    assert report.alphas == alphas
    b = np.sqrt(16) * 2 * 5.0
    for a, bound, dist, sq in zip(
        alphas, report.bounds, report.mean_dist, report.mean_dist_sq
    ):
        assert bound == a * a * b * b
        assert dist == pytest.approx(3.0 * a * a)
        assert sq <= bound and dist <= bound
    assert report.monotone is True
    assert report.below_bound is True
    assert report.exponent == pytest.approx(2.0, abs=1e-9)
    assert report.n_clean == (150, 150, 150)


def test_drift_report_needs_three_rates_and_enough_events():
    with pytest.raises(ValueError, match="at least three learning rates"):
        drift_bound_check({0.01: _fake_replay(0.01), 0.02: _fake_replay(0.02)}, 1.0, 4)
    runs = {a: _fake_replay(a, n=10) for a in (0.01, 0.02, 0.04)}
    with pytest.raises(ValueError, match=r"insufficient data: 10 clean events at lr=0.01"):
        drift_bound_check(runs, 1.0, 4, min_events=100)


def test_rate_check_recovers_an_exact_power_law():
    budgets = (250, 500, 1000, 2000)
    stats = {j: 7.5 * j ** -0.7 for j in budgets}
    report = rate_check(stats, threshold=-0.4)
    assert report.slope == pytest.approx(-0.7, abs=1e-9)
    assert report.passes is True
    assert report.budgets == budgets


def test_rate_check_fails_a_non_decreasing_series_without_raising():
    stats = {250: 1.0, 500: 1.1, 1000: 1.2, 2000: 1.3}
    report = rate_check(stats)
    assert report.passes is False
    assert report.slope > 0


def test_rate_check_needs_four_budgets():
    with pytest.raises(ValueError, match="at least four budgets"):
        rate_check({250: 1.0, 500: 0.5, 1000: 0.25})


# --------------------------------------------------------------------------
# replay identity and savings on live runs
# --------------------------------------------------------------------------


def test_replay_reproduces_a_quiescent_run(quad8):
    cfg = tiny_config(
        quad8,
        algo="lap_sgd",
        budget=300,
        workers=2,
        updaters=2,
        record_mode="full",
        quiescent=True,
        sync=SyncScheme(total=300, period=4, switch_point=0),
    )
    result = run_experiment(cfg)
    rep = replay_rounds(result)
    measured = round_mean_series(result)
    assert len(rep.round_means) == len(measured) + 1
    for replayed, observed in zip(rep.round_means[1:], measured):
        assert np.max(np.abs(replayed - observed)) <= 1e-12
    assert np.max(np.abs(rep.round_means[-1] - result.final_values)) <= 1e-12
    assert bool(rep.clean.all())  # quiescent rounds never interleave updates


def test_replayed_gradient_series_matches_measured_means(quad8):
    cfg = tiny_config(
        quad8,
        algo="lap_sgd",
        budget=120,
        workers=2,
        updaters=1,
        record_mode="full",
        quiescent=True,
    )
    result = run_experiment(cfg)
    from asyncsgd.instrumentation import grad_norm_series

    replayed = grad_norm_series(result)
    measured = mean_grad_norms(result)
    assert replayed.shape == measured.shape
    assert np.max(np.abs(replayed - measured)) <= 1e-9


def test_round_means_require_recording(quad8):
    result = run_experiment(
        tiny_config(quad8, algo="lap_sgd", budget=40, record_mode="off")
    )
    with pytest.raises(ValueError, match="round means were not retained"):
        round_mean_series(result)


def test_measured_savings_matches_the_uniform_two_block_value(mlp_deep):
    bounds = balanced_boundaries(mlp_deep.layer_param_counts, 2)
    cfg = tiny_config(
        mlp_deep,
        algo="lpp_sgd",
        budget=200,
        workers=1,
        updaters=2,
        batch_size=4,
        partition=make_partition(mlp_deep.dim, bounds),
        warm_start_budget=40,
        record_mode="full",
        quiescent=True,
    )
    result = run_experiment(cfg)
    saving = measured_savings(
        result, mlp_deep, cfg.partition, batch_size=cfg.batch_size
    )
    # two equal-cost blocks over four uniform layers: (2-1)/(2*2) exactly
    assert saving == pytest.approx(0.25, abs=1e-12)


def test_measured_savings_requires_block_restricted_updates(quad8):
    result = run_experiment(
        tiny_config(quad8, algo="lap_sgd", budget=40, record_mode="full", quiescent=True)
    )
    with pytest.raises(ValueError, match="no block-restricted updates"):
        measured_savings(result, quad8, result.config.partition, batch_size=8)


# --------------------------------------------------------------------------
# event-log round trip
# --------------------------------------------------------------------------


def _records_equal(a: UpdateRecord, b: UpdateRecord) -> bool:
    for f in ("worker", "rank", "s", "u", "k_claim", "block_id", "reason",
              "lr", "flops", "backward_flops", "clean"):
        if getattr(a, f) != getattr(b, f):
            return False
    for f in ("tag_indices", "tags", "grad", "snapshot"):
        va, vb = getattr(a, f), getattr(b, f)
        if (va is None) != (vb is None):
            return False
        if va is not None and not np.array_equal(va, vb):
            return False
    return True


def test_event_log_round_trip(quad8, tmp_path):
    cfg = tiny_config(
        quad8, algo="lap_sgd", budget=60, workers=2, updaters=2, record_mode="full",
        quiescent=True,
    )
    result = run_experiment(cfg)
    path = tmp_path / "events.ndjson"
    save_event_log(path, result)
    updates, stamps = load_event_log(path)
    assert len(updates) == len(result.updates)
    assert len(stamps) == len(result.stamps)
    for a, b in zip(result.updates, updates):
        assert _records_equal(a, b)
    for a, b in zip(result.stamps, stamps):
        assert (a.worker, a.round, a.u, a.s_cur, a.k_delta) == (
            b.worker, b.round, b.u, b.s_cur, b.k_delta,
        )
        assert a.wall_ms == b.wall_ms
        assert np.array_equal(a.snapshot, b.snapshot)
        if a.mean is None:
            assert b.mean is None
        else:
            assert np.array_equal(a.mean, b.mean)


def test_loaded_log_replays_identically(quad8, tmp_path):
    cfg = tiny_config(
        quad8, algo="lap_sgd", budget=80, workers=2, updaters=1, record_mode="full",
        quiescent=True,
    )
    result = run_experiment(cfg)
    path = tmp_path / "events.ndjson"
    save_event_log(path, result)
    updates, stamps = load_event_log(path)
    reloaded = RunResult(
        config=cfg,
        metrics=result.metrics,
        final_values=result.final_values,
        x0=result.x0,
        wall_ms=result.wall_ms,
        flops=result.flops,
        p_hat=result.p_hat,
        counter_finals=result.counter_finals,
        updates=updates,
        stamps=stamps,
    )
    a = replay_rounds(result)
    b = replay_rounds(reloaded)
    assert np.array_equal(a.round_means[-1], b.round_means[-1])
    assert np.array_equal(a.distances, b.distances)
