"""Block partitions of the parameter vector and the per-step block choice.

A partition is a set of ascending boundaries ``b_0=0 < b_1 < ... < b_U=d``.
Block 0 is always the whole vector; block i (1-based) covers the half-open
index range [b_{i-1}, b_i).  Blocks 1..U are disjoint and cover [0, d).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import NamedTuple, Sequence


class Block(NamedTuple):
    """Half-open index range [start, stop) of the parameter vector."""

    start: int
    stop: int

    @property
    def length(self) -> int:
        return self.stop - self.start


class SelectionReason(enum.Enum):
    WARM_START = "warm_start"
    ALTERNATE_FULL = "alternate_full"
    ALTERNATE_PARTIAL = "alternate_partial"


@dataclass(frozen=True)
class BlockChoice:
    block_id: int
    reason: SelectionReason


@dataclass(frozen=True)
class BlockPartition:
    """Validated block boundaries over a d-dimensional vector."""

    dim: int
    boundaries: tuple[int, ...]

    @property
    def num_blocks(self) -> int:
        return len(self.boundaries) - 1

    def block(self, block_id: int) -> Block:
        if block_id == 0:
            return Block(0, self.dim)
        if not 1 <= block_id <= self.num_blocks:
            raise ValueError(f"block id {block_id} outside [0, {self.num_blocks}]")
        return Block(self.boundaries[block_id - 1], self.boundaries[block_id])

    def blocks(self) -> list[Block]:
        """Blocks 1..U in order."""
        return [self.block(i) for i in range(1, self.num_blocks + 1)]


def make_partition(dim: int, boundaries: Sequence[int]) -> BlockPartition:
    """Build a partition, rejecting non-ascending or ill-fitting boundaries."""
    bounds = tuple(int(b) for b in boundaries)
    if dim < 0:
        raise ValueError("dimension must be non-negative")
    if len(bounds) < 2 or bounds[0] != 0 or bounds[-1] != dim:
        raise ValueError(f"boundaries must run from 0 to {dim}, got {bounds}")
    for lo, hi in itertools.pairwise(bounds):
        if hi <= lo:
            raise ValueError(f"boundaries must be strictly ascending, got {bounds}")
    return BlockPartition(dim, bounds)


def even_boundaries(dim: int, num_blocks: int) -> tuple[int, ...]:
    """Near-equal contiguous interval boundaries for unlayered objectives."""
    if num_blocks < 1 or num_blocks > dim:
        raise ValueError(f"cannot split {dim} elements into {num_blocks} blocks")
    step, extra = divmod(dim, num_blocks)
    bounds = [0]
    for i in range(num_blocks):
        bounds.append(bounds[-1] + step + (1 if i < extra else 0))
    return tuple(bounds)


def balanced_boundaries(
    layer_sizes: Sequence[int],
    num_blocks: int,
    layer_costs: Sequence[float] | None = None,
) -> tuple[int, ...]:
    """Choose layer-aligned boundaries minimising the worst block cost.

    ``layer_sizes`` are parameter counts per layer, input side first.  A
    block's cost is the work of a gradient pass truncated at the block's
    input-most layer, i.e. the suffix cost sum from that layer to the output.
    ``layer_costs`` defaults to the layer sizes.  Ties on the worst cost are
    broken by the smaller worst block size, then lexicographically, so a
    uniform model yields evenly sized blocks.
    """
    sizes = [int(s) for s in layer_sizes]
    if not sizes or any(s <= 0 for s in sizes):
        raise ValueError("layer sizes must be positive")
    n_layers = len(sizes)
    if not 1 <= num_blocks <= n_layers:
        raise ValueError(f"cannot split {n_layers} layers into {num_blocks} blocks")
    costs = list(layer_costs) if layer_costs is not None else [float(s) for s in sizes]
    if len(costs) != n_layers:
        raise ValueError("layer_costs length must match layer_sizes")
    suffix = [0.0] * (n_layers + 1)
    for layer in range(n_layers - 1, -1, -1):
        suffix[layer] = suffix[layer + 1] + costs[layer]
    prefix_size = [0]
    for s in sizes:
        prefix_size.append(prefix_size[-1] + s)

    best: tuple[float, int, tuple[int, ...]] | None = None
    for cut in itertools.combinations(range(1, n_layers), num_blocks - 1):
        splits = (0, *cut, n_layers)
        worst_cost = max(suffix[splits[i]] for i in range(num_blocks))
        worst_size = max(
            prefix_size[splits[i + 1]] - prefix_size[splits[i]]
            for i in range(num_blocks)
        )
        bounds = tuple(prefix_size[s] for s in splits)
        key = (worst_cost, worst_size, bounds)
        if best is None or key < best:
            best = key
    assert best is not None
    return best[2]


def select_block(s: int, warm_start_budget: int, num_blocks: int, rank: int) -> BlockChoice:
    """Pick the block for minibatch slot ``s`` for an updater of given rank.

    The first ``warm_start_budget`` slots train the full vector; after that,
    slots alternate between the updater's own partial block (even offset from
    the warm-start boundary) and the full vector (odd offset).
    """
    if not 1 <= rank <= num_blocks:
        raise ValueError(f"rank {rank} outside [1, {num_blocks}]")
    if s <= warm_start_budget:
        return BlockChoice(0, SelectionReason.WARM_START)
    if (s - warm_start_budget) % 2 == 1:
        return BlockChoice(0, SelectionReason.ALTERNATE_FULL)
    return BlockChoice(rank, SelectionReason.ALTERNATE_PARTIAL)
