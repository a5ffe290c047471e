"""Shared parameter vector with per-element atomic access.

Every element is a 64-bit float read and written atomically; range updates
are per-element CAS retry loops, so no operation ever takes a lock on the
vector and concurrent updates at the same index are never lost.  Snapshots
walk the vector in ascending index order with one atomic load per element;
they are not required to be a consistent cut across elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _atomics


class AtomicCounter:
    """A single shared int64 with atomic fetch-and-add."""

    __slots__ = ("_cell",)

    def __init__(self, initial: int = 0):
        self._cell = np.array([initial], dtype=np.int64)

    def read_and_inc(self) -> int:
        """Return the current value and advance by one, atomically."""
        return int(_atomics.fetch_add_i64(self._cell, 0, 1))

    def read(self) -> int:
        return int(_atomics.load_i64(self._cell, 0))

    def add(self, delta: int) -> int:
        """Add delta and return the value before the add."""
        return int(_atomics.fetch_add_i64(self._cell, 0, delta))

    def store(self, value: int) -> None:
        _atomics.store_i64(self._cell, 0, value)


@dataclass(frozen=True)
class Snapshot:
    """A point-in-time per-element copy of a store.

    ``order`` is the shared sample counter value read when collection began.
    ``tags`` carries writer update-order stamps when the store tracks them:
    aligned with ``tag_indices`` if that is set, otherwise one tag per
    element.  A tag is always <= the update order of the write that actually
    produced the value seen at that index, never newer.
    """

    values: np.ndarray
    order: int
    tags: np.ndarray | None = None
    tag_indices: np.ndarray | None = None


class ParamStore:
    """One worker's shared parameter vector plus its two shared counters.

    ``sample_counter`` hands out minibatch slots to the worker's updater
    threads; ``update_order_counter`` stamps every model write so the write
    history is totally ordered per worker.
    """

    def __init__(self, initial: np.ndarray, track_writes: bool = False):
        values = np.array(initial, dtype=np.float64, copy=True)
        if values.ndim != 1:
            raise ValueError("parameter vector must be one-dimensional")
        self.values = values
        self.dim = values.shape[0]
        self.sample_counter = AtomicCounter(0)
        self.update_order_counter = AtomicCounter(0)
        self.tags = np.zeros(self.dim, dtype=np.int64) if track_writes else None

    # -- element access -------------------------------------------------

    def read(self, index: int) -> float:
        return _atomics.load_f64(self.values, index)

    def write(self, index: int, value: float) -> None:
        _atomics.store_f64(self.values, index, value)

    # -- counters ---------------------------------------------------------

    def read_and_inc(self) -> int:
        """Claim the next minibatch slot from the shared sample counter."""
        return self.sample_counter.read_and_inc()

    def claim_update_order(self) -> int:
        """Claim the next write stamp; call once at the start of each write."""
        return self.update_order_counter.read_and_inc() + 1

    # -- snapshots ----------------------------------------------------------

    def snapshot(self, tag_indices: np.ndarray | None = None) -> Snapshot:
        """Collect a per-element atomic copy of the vector.

        With ``tag_indices`` given (int64 array), only those positions get
        writer tags; tags are read before the value copy so a racing write
        can only make a tag look older than the value it describes.  Without
        it, stores that track writes return a full tag array.
        """
        order = self.sample_counter.read()
        out = np.empty(self.dim, dtype=np.float64)
        if self.tags is None:
            _atomics.snapshot_f64(self.values, out)
            return Snapshot(out, order)
        if tag_indices is not None:
            out_tags = np.empty(len(tag_indices), dtype=np.int64)
            _atomics.gather_i64(self.tags, tag_indices, out_tags)
            _atomics.snapshot_f64(self.values, out)
            return Snapshot(out, order, out_tags, tag_indices)
        out_tags = np.empty(self.dim, dtype=np.int64)
        _atomics.snapshot_tagged_f64(self.values, self.tags, out, out_tags)
        return Snapshot(out, order, out_tags)

    # -- range updates ------------------------------------------------------

    def sub_assign(self, start: int, delta: np.ndarray, stamp: int = 0) -> None:
        """values[start+e] -= delta[e] per element, atomically, ascending."""
        self._accum(start, delta, -1.0, stamp)

    def add_assign(self, start: int, delta: np.ndarray, stamp: int = 0) -> None:
        """values[start+e] += delta[e] per element, atomically, ascending."""
        self._accum(start, delta, 1.0, stamp)

    def _accum(self, start: int, delta: np.ndarray, scale: float, stamp: int) -> None:
        delta = np.ascontiguousarray(delta, dtype=np.float64)
        if self.tags is None:
            _atomics.accum_cas_f64(self.values, start, delta, scale)
        else:
            _atomics.accum_cas_tagged_f64(
                self.values, self.tags, start, delta, scale, stamp
            )
