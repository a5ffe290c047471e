"""Command-line experiment runner.

``asyncsgd run`` executes a preset or a config file and writes per-seed
metrics CSVs plus aggregate reports; ``asyncsgd gen-data`` writes synthetic
datasets.  Exit codes: 0 on success, 1 when a run's invariant checks fail,
2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    ExperimentConfig,
    build_dataset,
    build_objective,
    load_config,
    override,
    to_run_config,
)
from .engine import MetricsRow, RunResult, run_experiment
from .instrumentation import (
    DelayStats,
    Replay,
    delay_stats,
    drift_bound_check,
    fit_loglog_slope,
    mean_grad_norms,
    rate_check,
    replay_rounds,
    save_event_log,
)
from .objectives import estimate_moment_bounds
from .presets import PRESETS, Preset


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asyncsgd",
        description="asynchronous block-partitioned SGD experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a preset or a config file")
    run.add_argument("preset", nargs="?", help=f"one of: {', '.join(PRESETS)}")
    run.add_argument("--config", help="config file path (alternative to a preset)")
    run.add_argument("--algo", help="restrict or replace the algorithm")
    run.add_argument("--workers", type=int)
    run.add_argument("--updaters", type=int)
    run.add_argument("--batch", type=int)
    run.add_argument("--budget", type=int)
    run.add_argument("--lr", type=float, help="base learning rate (alpha0)")
    run.add_argument("--sync-h", type=int, help="averaging period after the switch point")
    run.add_argument("--tst", type=int, help="warm-start budget (full-vector phase)")
    run.add_argument("--seed", type=int, help="run a single seed instead of the seed list")
    run.add_argument("--out", help="output directory")
    run.add_argument("--event-log", action="store_true", help="persist NDJSON event logs")

    gen = sub.add_parser("gen-data", help="write a synthetic dataset CSV")
    gen.add_argument("generator", choices=("blobs", "targets"))
    gen.add_argument("--samples", type=int, required=True)
    gen.add_argument("--features", type=int, required=True)
    gen.add_argument("--classes", type=int, default=2)
    gen.add_argument("--separation", type=float, default=2.5)
    gen.add_argument("--noise", type=float, default=0.5)
    gen.add_argument("--spread", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    return parser


def _apply_flags(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    changes = {}
    if args.algo is not None:
        changes["algo"] = args.algo
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.updaters is not None:
        changes["updaters"] = args.updaters
    if args.batch is not None:
        changes["batch"] = args.batch
    if args.budget is not None:
        changes["budget"] = args.budget
    if args.lr is not None:
        changes["alpha0"] = args.lr
    if args.sync_h is not None:
        changes["period"] = args.sync_h
    if args.tst is not None:
        changes["warm_start"] = args.tst
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.out is not None:
        changes["out_dir"] = args.out
    return override(cfg, **changes) if changes else cfg


def _resolve_preset(args: argparse.Namespace) -> Preset:
    if args.config:
        cfg = load_config(args.config)
        return Preset(name=Path(args.config).stem, description="config file", configs=(cfg,))
    if not args.preset:
        raise ConfigError("give a preset name or --config")
    if args.preset not in PRESETS:
        raise ConfigError(f"unknown preset {args.preset!r}; known: {', '.join(PRESETS)}")
    preset = PRESETS[args.preset]
    if args.algo and any(c.algo == args.algo for c in preset.configs):
        # keep only the matching bundle member; other flags still apply
        preset = replace(
            preset, configs=tuple(c for c in preset.configs if c.algo == args.algo)
        )
    return preset


def _write_metrics(path: Path, rows: list[MetricsRow]) -> None:
    with open(path, "w") as fh:
        fh.write(MetricsRow.CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.as_csv() + "\n")


def _run_tag(cfg: ExperimentConfig, seed: int, rep: int) -> str:
    tag = f"{cfg.algo}_s{seed}"
    return tag if cfg.repeats == 1 else f"{tag}_r{rep}"


def _pooled_delay_rows(stats: list[DelayStats]) -> list[str]:
    counts: dict[int, list[int]] = {}
    for st in stats:
        for b in st.buckets:
            slot = counts.setdefault(b.t, [0, 0])
            slot[0] += b.total
            slot[1] += b.clean
    return [
        f"{t},{total},{clean},{repr(clean / total)}"
        for t, (total, clean) in sorted(counts.items())
    ]


def _run_standard(preset: Preset, out: Path, event_log: bool) -> int:
    summary_rows = []
    ok = True
    for cfg in preset.configs:
        objective = build_objective(cfg, build_dataset(cfg))
        finals, walls, flops, min_p = [], [], [], 1.0
        pooled: list[DelayStats] = []
        for seed in cfg.seeds:
            for rep in range(cfg.repeats):
                result = run_experiment(to_run_config(cfg, seed, objective))
                tag = _run_tag(cfg, seed, rep)
                _write_metrics(out / f"metrics_{tag}.csv", result.metrics)
                if event_log:
                    save_event_log(out / f"events_{tag}.ndjson", result)
                last = result.metrics[-1]
                finals.append(last.train_loss)
                walls.append(result.wall_ms)
                flops.append(result.flops)
                if result.updates:
                    st = delay_stats(result)
                    pooled.append(st)
                    min_p = min(min_p, st.min_p_hat)
        loss_mean = float(np.mean(finals))
        ok = ok and math.isfinite(loss_mean)
        summary_rows.append(
            (
                cfg.algo,
                loss_mean,
                float(np.std(finals)),
                float(np.mean(walls)),
                float(np.mean(flops)),
                min_p,
            )
        )
        if pooled:
            rows = _pooled_delay_rows(pooled)
            with open(out / f"delay_{cfg.algo}.csv", "w") as fh:
                fh.write("t,total,clean,p_hat\n")
                fh.writelines(r + "\n" for r in rows)

    with open(out / "summary.csv", "w") as fh:
        fh.write("algo,final_loss_mean,final_loss_std,wall_ms_mean,flops_mean,p_hat_min\n")
        for algo, lm, ls, wm, fm, mp in summary_rows:
            fh.write(f"{algo},{lm!r},{ls!r},{wm!r},{fm!r},{mp!r}\n")

    print(f"preset {preset.name}")
    print(f"{'algo':10s} {'final loss':>14s} {'+/- std':>12s} {'wall ms':>10s} {'min p':>7s}")
    for algo, lm, ls, wm, _, mp in summary_rows:
        print(f"{algo:10s} {lm:14.6e} {ls:12.2e} {wm:10.1f} {mp:7.3f}")
    return 0 if ok else 1


def _run_rate(preset: Preset, out: Path, event_log: bool) -> int:
    template = preset.configs[0]
    stats: dict[int, float] = {}
    for rounds in preset.round_grid:
        alpha = preset.rate_scale / math.sqrt(rounds)
        # the round budget is the real stopping rule; the iteration budget
        # only needs to be out of reach so every seed completes all rounds
        cfg = override(
            template, round_budget=rounds, alpha0=alpha, budget=1_000_000_000
        )
        objective = build_objective(cfg, build_dataset(cfg))
        series = []
        for seed in cfg.seeds:
            result = run_experiment(to_run_config(cfg, seed, objective))
            norms = mean_grad_norms(result, limit=rounds)
            if len(norms) < rounds:
                print(
                    f"rate-sweep: run produced {len(norms)} rounds, needed {rounds}",
                    file=sys.stderr,
                )
                return 1
            if event_log:
                save_event_log(out / f"events_rate_J{rounds}_s{seed}.ndjson", result)
            series.append(norms)
        per_round_mean = np.mean(np.stack(series), axis=0)
        stats[rounds] = float(per_round_mean.min())

    report = rate_check(stats)
    with open(out / "rate.csv", "w") as fh:
        fh.write("rounds,stat\n")
        for rounds in report.budgets:
            fh.write(f"{rounds},{stats[rounds]!r}\n")
    with open(out / "rate_report.txt", "w") as fh:
        fh.write(f"slope = {report.slope!r}\n")
        fh.write(f"intercept = {report.intercept!r}\n")
        fh.write(f"threshold = {report.threshold!r}\n")
        fh.write(f"pass = {'true' if report.passes else 'false'}\n")
    print(f"rate-sweep: slope {report.slope:.4f} "
          f"(threshold {report.threshold}) {'PASS' if report.passes else 'FAIL'}")
    return 0 if report.passes else 1


def _run_consistency(preset: Preset, out: Path, event_log: bool) -> int:
    template = preset.configs[0]
    objective = build_objective(template, build_dataset(template))
    probes = [objective.init_params(seed) for seed in template.seeds]
    if hasattr(objective, "minimizer"):
        probes.append(objective.minimizer)
    m_hat, _ = estimate_moment_bounds(
        objective, probes, trials=50, batch_size=template.batch, seed=999
    )

    replays: dict[float, Replay] = {}
    pooled: list[DelayStats] = []
    for alpha in preset.alpha_grid:
        cfg = override(template, alpha0=alpha)
        dists, dists_sq, clean, k_bar = [], [], [], 0
        for seed in cfg.seeds:
            result = run_experiment(to_run_config(cfg, seed, objective))
            rep = replay_rounds(result)
            dists.append(rep.distances)
            dists_sq.append(rep.distances_sq)
            clean.append(rep.clean)
            k_bar = max(k_bar, rep.k_bar)
            pooled.append(delay_stats(result))
            if event_log:
                save_event_log(out / f"events_alpha{alpha}_s{seed}.ndjson", result)
        replays[alpha] = Replay(
            round_means=[],
            distances=np.concatenate(dists),
            distances_sq=np.concatenate(dists_sq),
            clean=np.concatenate(clean),
            k_bar=k_bar,
        )

    report = drift_bound_check(replays, m_hat=m_hat, dim=objective.dim)
    with open(out / "consistency.csv", "w") as fh:
        fh.write("alpha,mean_dist,mean_dist_sq,bound,n_clean\n")
        for i, alpha in enumerate(report.alphas):
            fh.write(
                f"{alpha!r},{report.mean_dist[i]!r},{report.mean_dist_sq[i]!r},"
                f"{report.bounds[i]!r},{report.n_clean[i]}\n"
            )
    with open(out / "consistency_report.txt", "w") as fh:
        fh.write(f"exponent = {report.exponent!r}\n")
        fh.write(f"monotone = {'true' if report.monotone else 'false'}\n")
        fh.write(f"below_bound = {'true' if report.below_bound else 'false'}\n")
        fh.write(f"k_bar = {report.k_bar}\n")
        fh.write(f"m_hat = {report.m_hat!r}\n")
    with open(out / "delay.csv", "w") as fh:
        fh.write("t,total,clean,p_hat\n")
        fh.writelines(r + "\n" for r in _pooled_delay_rows(pooled))
    passed = report.monotone and report.below_bound
    print(f"consistency-sweep: exponent {report.exponent:.3f} "
          f"monotone={report.monotone} below_bound={report.below_bound} "
          f"{'PASS' if passed else 'FAIL'}")
    return 0 if passed else 1


def _cmd_run(args: argparse.Namespace) -> int:
    preset = _resolve_preset(args)
    preset = replace(preset, configs=tuple(_apply_flags(c, args) for c in preset.configs))
    out = Path(args.out if args.out else preset.configs[0].out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if preset.kind == "rate":
        return _run_rate(preset, out, args.event_log)
    if preset.kind == "consistency":
        return _run_consistency(preset, out, args.event_log)
    return _run_standard(preset, out, args.event_log)


def _cmd_gen_data(args: argparse.Namespace) -> int:
    from .data import make_blobs, make_linear_targets, save_csv

    if args.generator == "blobs":
        ds = make_blobs(
            args.samples,
            args.features,
            args.classes,
            separation=args.separation,
            noise=args.noise,
            seed=args.seed,
        )
    else:
        ds = make_linear_targets(
            args.samples, args.features, spread=args.spread, noise=args.noise, seed=args.seed
        )
    save_csv(args.out, ds)
    print(f"wrote {args.out} ({ds.features.shape[0]} samples)")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_gen_data(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
