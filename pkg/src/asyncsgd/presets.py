"""Canned experiment bundles.

A preset bundles the algorithm configurations that one study compares, plus
the sweep grids for the two analysis presets.  All datasets are synthetic
and seeded, so preset runs are reproducible end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .config import ExperimentConfig


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    configs: tuple[ExperimentConfig, ...]
    kind: str = "standard"  # "standard" | "rate" | "consistency"
    round_grid: tuple[int, ...] = ()  # rate: averaging-round budgets
    rate_scale: float = 0.5  # rate: lr = rate_scale / sqrt(rounds)
    alpha_grid: tuple[float, ...] = ()  # consistency: constant lrs


def _algos(base: ExperimentConfig, *specs: tuple[str, int, int]) -> tuple[ExperimentConfig, ...]:
    return tuple(
        replace(base, algo=algo, updaters=updaters, blocks=blocks)
        for algo, updaters, blocks in specs
    )


_QUAD_SMOKE = ExperimentConfig(
    seeds=(1, 2, 3),
    budget=20000,
    batch=32,
    kind="quadratic",
    source="targets",
    samples=256,
    features=64,
    noise=0.0,
    spread=1.0,
    data_seed=101,
    lr_kind="cosine",
    alpha0=0.05,
    eval_every=2000,
)

_LOGREG = ExperimentConfig(
    seeds=(1, 2, 3),
    budget=6000,
    batch=32,
    kind="logreg",
    source="blobs",
    samples=512,
    features=32,
    classes=2,
    separation=4.0,
    noise=0.3,
    data_seed=7,
    lr_kind="cosine",
    alpha0=0.1,
    eval_every=1000,
)

_MLP2 = ExperimentConfig(
    seeds=(1, 2, 3),
    budget=6000,
    batch=32,
    kind="mlp",
    hidden=(24,),
    source="blobs",
    samples=512,
    features=16,
    classes=4,
    separation=2.5,
    noise=0.6,
    data_seed=11,
    lr_kind="cosine",
    alpha0=0.1,
    eval_every=1000,
)

# four equal-size layers so partial backprop cost steps are uniform
_MLP4 = ExperimentConfig(
    seeds=(1, 2, 3),
    budget=4000,
    batch=32,
    kind="mlp",
    hidden=(16, 16, 16),
    source="blobs",
    samples=512,
    features=16,
    classes=16,
    separation=2.0,
    noise=0.5,
    data_seed=13,
    lr_kind="cosine",
    alpha0=0.05,
    eval_every=1000,
)

_RATE = replace(
    _MLP2,
    algo="lap_sgd",
    seeds=(1, 2, 3, 4, 5),
    lr_kind="constant",
    period=1,
    switch_point=0,
    warm_start=0,
    eval_every=0,
    record="light",
)

_CONSISTENCY = ExperimentConfig(
    algo="lap_sgd",
    seeds=(1, 2, 3),
    budget=4000,
    batch=32,
    kind="quadratic",
    source="targets",
    samples=256,
    features=64,
    noise=0.5,
    spread=1.0,
    data_seed=17,
    lr_kind="constant",
    warm_start=0,
    record="full",
)

PRESETS: dict[str, Preset] = {
    "quadratic-smoke": Preset(
        name="quadratic-smoke",
        description="strongly convex quadratic, all four algorithms",
        configs=_algos(
            _QUAD_SMOKE,
            ("mb_sgd", 1, 4),
            ("pl_sgd", 1, 4),
            ("lap_sgd", 4, 4),
            ("lpp_sgd", 4, 4),
        ),
    ),
    "logreg-blobs": Preset(
        name="logreg-blobs",
        description="separable two-class logistic regression",
        configs=_algos(
            _LOGREG,
            ("mb_sgd", 1, 4),
            ("pl_sgd", 1, 4),
            ("lap_sgd", 4, 4),
            ("lpp_sgd", 4, 4),
        ),
    ),
    "mlp-2layer": Preset(
        name="mlp-2layer",
        description="two-layer tanh network on gaussian blobs",
        configs=_algos(
            _MLP2,
            ("mb_sgd", 1, 2),
            ("pl_sgd", 1, 2),
            ("lap_sgd", 4, 2),
            ("lpp_sgd", 2, 2),
        ),
    ),
    "mlp-4layer": Preset(
        name="mlp-4layer",
        description="uniform four-layer network; partial-backprop comparison",
        configs=_algos(
            _MLP4,
            ("lap_sgd", 4, 4),
            ("lpp_sgd", 4, 4),
        ),
    ),
    "rate-sweep": Preset(
        name="rate-sweep",
        description="round-budget sweep fitting the ergodic decay slope",
        configs=(_RATE,),
        kind="rate",
        round_grid=(250, 500, 1000, 2000),
        rate_scale=0.5,
    ),
    "consistency-sweep": Preset(
        name="consistency-sweep",
        description="constant-lr sweep checking snapshot drift against the bound",
        configs=(_CONSISTENCY,),
        kind="consistency",
        alpha_grid=(0.01, 0.02, 0.04),
    ),
}
