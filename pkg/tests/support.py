"""Helpers imported by test modules (kept out of conftest so the name
is unambiguous when several test trees share one pytest invocation)."""

from __future__ import annotations

from asyncsgd.engine import RunConfig
from asyncsgd.partition import make_partition
from asyncsgd.schedules import SyncScheme, constant_schedule

# one verdict line per shipping criterion, filled in by test_acceptance and
# printed by the terminal-summary hook in conftest
ACCEPTANCE_LINES: list[str] = []


def tiny_config(objective, algo="mb_sgd", budget=50, **kw) -> RunConfig:
    """A fast-to-run configuration over the given objective."""
    dim = objective.dim
    defaults = dict(
        algo=algo,
        objective=objective,
        partition=make_partition(dim, (0, dim)),
        lr=constant_schedule(0.05, budget),
        sync=SyncScheme(total=budget, period=4, switch_point=0),
        budget=budget,
        warm_start_budget=0,
        workers=2,
        updaters=1,
        batch_size=8,
        seed=1,
    )
    defaults.update(kw)
    return RunConfig(**defaults)
