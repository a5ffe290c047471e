"""Shared objective fixtures and the acceptance-verdict summary hook."""

from __future__ import annotations

import pytest

import support
from asyncsgd.data import make_blobs, make_linear_targets
from asyncsgd.objectives import LogisticObjective, MlpObjective, QuadraticObjective


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    skipped = [
        rep
        for rep in terminalreporter.stats.get("skipped", ())
        if "test_acceptance" in rep.nodeid
    ]
    if not support.ACCEPTANCE_LINES and not skipped:
        return
    terminalreporter.section("acceptance criteria")
    for line in support.ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    for rep in skipped:
        name = rep.nodeid.split("::")[-1].removeprefix("test_")
        reason = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else rep.longrepr
        terminalreporter.write_line(f"ACCEPTANCE {name}: SKIP — {reason}")


@pytest.fixture(scope="session")
def quad8():
    """Tiny quadratic: 32 targets in 8 dimensions."""
    ds = make_linear_targets(n_samples=32, dim=8, spread=1.0, noise=0.5, seed=3)
    return QuadraticObjective.from_dataset(ds)


@pytest.fixture(scope="session")
def logreg8():
    ds = make_blobs(
        n_samples=64, n_features=8, n_classes=2, separation=3.0, noise=0.5, seed=5
    )
    return LogisticObjective.from_dataset(ds)


@pytest.fixture(scope="session")
def mlp_small():
    """Two-layer net, 61 parameters: 4 features -> 5 hidden -> 3 classes."""
    ds = make_blobs(
        n_samples=48, n_features=4, n_classes=3, separation=2.0, noise=0.5, seed=9
    )
    return MlpObjective.from_dataset(ds, hidden=(5,))


@pytest.fixture(scope="session")
def mlp_deep():
    """Four-layer net with uniform 42-parameter layers: widths 6-6-6-6-6."""
    ds = make_blobs(
        n_samples=48, n_features=6, n_classes=6, separation=2.0, noise=0.5, seed=13
    )
    return MlpObjective.from_dataset(ds, hidden=(6, 6, 6))
