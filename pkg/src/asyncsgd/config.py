"""Experiment configuration: file format, validation, defaults.

The format is deliberately small: ``[section]`` headers, ``key = value``
lines, ``#`` comments.  Strings are double-quoted, integers/reals/booleans
are bare, lists are comma-separated.  Unknown sections or keys are errors,
and every parse error carries its line number.  ``parse_config`` and
``serialize_config`` are exact inverses.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .data import Dataset, load_csv, make_blobs, make_linear_targets
from .engine import ALGOS, RunConfig
from .objectives import LogisticObjective, MlpObjective, Objective, QuadraticObjective
from .partition import BlockPartition, balanced_boundaries, even_boundaries, make_partition
from .schedules import LrSchedule, SyncScheme, constant_schedule


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # experiment
    algo: str = "lap_sgd"
    seeds: tuple[int, ...] = (1, 2, 3)
    repeats: int = 1
    budget: int = 20000
    round_budget: int = 0  # 0: run to the sample budget
    batch: int = 32
    workers: int = 2
    updaters: int = 4
    warm_start: int = -1  # -1: a tenth of the budget
    record: str = "light"
    tag_sample: int = 16
    quiescent: bool = False
    epoch_partition: bool = False
    eval_every: int = 0
    # objective
    kind: str = "quadratic"
    hidden: tuple[int, ...] = (24,)
    blocks: int = 0  # 0: one per updater
    # data
    source: str = "blobs"
    path: str = ""
    samples: int = 512
    features: int = 16
    classes: int = 4
    separation: float = 2.5
    noise: float = 0.5
    spread: float = 1.0
    data_seed: int = 11
    # schedule
    lr_kind: str = "cosine"
    alpha0: float = 0.05
    warmup: int = -1  # -1: a tenth of the budget
    batch_base: int = 32
    boost: bool = False
    milestones: tuple[int, ...] = ()
    gamma: float = 0.1
    # sync
    period: int = 16
    switch_point: int = -1  # -1: half the budget
    # output
    out_dir: str = "out"


# section -> ordered config keys; drives both parsing and serialization
_SCHEMA: dict[str, tuple[str, ...]] = {
    "experiment": (
        "algo",
        "seeds",
        "repeats",
        "budget",
        "round_budget",
        "batch",
        "workers",
        "updaters",
        "warm_start",
        "record",
        "tag_sample",
        "quiescent",
        "epoch_partition",
        "eval_every",
    ),
    "objective": ("kind", "hidden", "blocks"),
    "data": (
        "source",
        "path",
        "samples",
        "features",
        "classes",
        "separation",
        "noise",
        "spread",
        "data_seed",
    ),
    "schedule": (
        "lr_kind",
        "alpha0",
        "warmup",
        "batch_base",
        "boost",
        "milestones",
        "gamma",
    ),
    "sync": ("period", "switch_point"),
    "output": ("out_dir",),
}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _split_elements(rhs: str, lineno: int) -> list[str]:
    """Split a value list on commas, ignoring commas inside quotes."""
    parts: list[str] = []
    buf: list[str] = []
    quoted = False
    for ch in rhs:
        if ch == '"':
            quoted = not quoted
        if ch == "," and not quoted:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    if quoted:
        raise ConfigError(f"line {lineno}: unterminated string")
    parts.append("".join(buf))
    return parts


def _parse_scalar(token: str, lineno: int):
    token = token.strip()
    if not token:
        raise ConfigError(f"line {lineno}: empty value element")
    if token.startswith('"'):
        if len(token) < 2 or not token.endswith('"'):
            raise ConfigError(f"line {lineno}: unterminated string")
        return token[1:-1]
    if token in ("true", "false"):
        return token == "true"
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse value {token!r}") from None


def _coerce(key: str, value, lineno: int):
    kind = _FIELD_TYPES[key]
    if kind == "tuple[int, ...]":
        items = value if isinstance(value, tuple) else (value,)
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in items):
            raise ConfigError(f"line {lineno}: {key} expects integers")
        return tuple(items)
    if isinstance(value, tuple):
        raise ConfigError(f"line {lineno}: {key} expects a single value")
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"line {lineno}: {key} expects true or false")
        return value
    if kind == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"line {lineno}: {key} expects an integer")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"line {lineno}: {key} expects a number")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"line {lineno}: {key} expects a quoted string")
    return value


def parse_config(text: str) -> ExperimentConfig:
    values: dict[str, object] = {}
    section: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header")
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, _, rhs = line.partition("=")
        key = key.strip()
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        parts = [_parse_scalar(tok, lineno) for tok in _split_elements(rhs, lineno)]
        value = parts[0] if len(parts) == 1 else tuple(parts)
        values[key] = _coerce(key, value, lineno)
    cfg = ExperimentConfig(**values)
    validate_config(cfg)
    return cfg


def _format_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    lines: list[str] = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key in keys:
            value = getattr(cfg, key)
            if isinstance(value, tuple):
                rendered = ", ".join(_format_scalar(v) for v in value)
                if not value:
                    continue  # empty lists are representable only by omission
            else:
                rendered = _format_scalar(value)
            lines.append(f"{key} = {rendered}")
        lines.append("")
    return "\n".join(lines)


def validate_config(cfg: ExperimentConfig) -> None:
    def bad(key: str, why: str):
        raise ConfigError(f"{key}: {why}")

    if cfg.algo not in ALGOS:
        bad("algo", f"unknown algorithm {cfg.algo!r}")
    if cfg.algo in ("mb_sgd", "pl_sgd") and cfg.updaters != 1:
        bad("updaters", f"{cfg.algo} is sequential per worker; set updaters = 1")
    if not cfg.seeds:
        bad("seeds", "need at least one seed")
    if cfg.repeats < 1:
        bad("repeats", "must be positive")
    if cfg.budget < 1:
        bad("budget", "must be positive")
    if cfg.round_budget < 0:
        bad("round_budget", "must be non-negative")
    if cfg.round_budget and cfg.algo in ("mb_sgd", "pl_sgd"):
        bad("round_budget", "applies to asynchronous algorithms only")
    if cfg.batch < 1:
        bad("batch", "must be positive")
    if cfg.workers < 1 or cfg.updaters < 1:
        bad("workers", "workers and updaters must be positive")
    if cfg.record not in ("off", "light", "full"):
        bad("record", f"unknown record mode {cfg.record!r}")
    if cfg.kind not in ("quadratic", "logreg", "mlp"):
        bad("kind", f"unknown objective {cfg.kind!r}")
    if cfg.source not in ("blobs", "targets", "csv"):
        bad("source", f"unknown data source {cfg.source!r}")
    if cfg.source == "csv" and not cfg.path:
        bad("path", "csv source needs a path")
    if cfg.lr_kind not in ("cosine", "multistep", "constant"):
        bad("lr_kind", f"unknown schedule {cfg.lr_kind!r}")
    if cfg.period < 1:
        bad("period", "must be positive")


def warm_start_of(cfg: ExperimentConfig) -> int:
    return cfg.budget // 10 if cfg.warm_start < 0 else cfg.warm_start


def warmup_of(cfg: ExperimentConfig) -> int:
    return cfg.budget // 10 if cfg.warmup < 0 else cfg.warmup


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.source == "csv":
        return load_csv(cfg.path)
    if cfg.source == "targets":
        return make_linear_targets(
            cfg.samples, cfg.features, spread=cfg.spread, noise=cfg.noise, seed=cfg.data_seed
        )
    return make_blobs(
        cfg.samples,
        cfg.features,
        cfg.classes,
        separation=cfg.separation,
        noise=cfg.noise,
        seed=cfg.data_seed,
    )


def build_objective(cfg: ExperimentConfig, dataset: Dataset) -> Objective:
    if cfg.kind == "quadratic":
        return QuadraticObjective.from_dataset(dataset)
    if cfg.kind == "logreg":
        return LogisticObjective.from_dataset(dataset)
    return MlpObjective.from_dataset(dataset, hidden=cfg.hidden)


def build_partition(cfg: ExperimentConfig, objective: Objective) -> BlockPartition:
    blocks = cfg.blocks if cfg.blocks > 0 else cfg.updaters
    if blocks == 1:
        return make_partition(objective.dim, (0, objective.dim))
    layers = objective.layer_param_counts
    if layers is not None and len(layers) >= blocks:
        bounds = balanced_boundaries(layers, blocks)
    else:
        bounds = even_boundaries(objective.dim, blocks)
    return make_partition(objective.dim, bounds)


def build_schedule(cfg: ExperimentConfig) -> LrSchedule:
    if cfg.lr_kind == "constant":
        return constant_schedule(cfg.alpha0, cfg.budget)
    return LrSchedule(
        kind=cfg.lr_kind,
        alpha0=cfg.alpha0,
        total=cfg.budget,
        warmup=warmup_of(cfg),
        batch_local=cfg.batch,
        workers=cfg.workers,
        batch_base=cfg.batch_base,
        boost=cfg.boost,
        milestones=cfg.milestones,
        gamma=cfg.gamma,
    )


def to_run_config(cfg: ExperimentConfig, seed: int, objective: Objective | None = None) -> RunConfig:
    obj = objective if objective is not None else build_objective(cfg, build_dataset(cfg))
    return RunConfig(
        algo=cfg.algo,
        objective=obj,
        partition=build_partition(cfg, obj),
        lr=build_schedule(cfg),
        sync=SyncScheme(
            total=cfg.budget,
            period=cfg.period,
            switch_point=None if cfg.switch_point < 0 else cfg.switch_point,
        ),
        budget=cfg.budget,
        warm_start_budget=warm_start_of(cfg),
        workers=cfg.workers,
        updaters=cfg.updaters,
        batch_size=cfg.batch,
        seed=seed,
        eval_interval=cfg.eval_every,
        record_mode=cfg.record,
        tag_sample=cfg.tag_sample,
        quiescent=cfg.quiescent,
        epoch_partition=cfg.epoch_partition,
        round_budget=cfg.round_budget or None,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def override(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    out = replace(cfg, **changes)
    validate_config(out)
    return out
