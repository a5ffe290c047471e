"""Training objectives over a flat float64 parameter vector.

Each objective exposes minibatch loss and block-restricted minibatch
gradients with executed-flop accounting (one unit per scalar multiply-add in
the matrix products, forward and backward; activation and normalisation
costs are ignored).  The network objective supports truncated backward
passes: for a block of layers it backpropagates from the output down to the
block's input-most layer and stops there, doing the two matrix products at
every visited layer.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .partition import Block, BlockPartition


@dataclass(frozen=True)
class GradResult:
    """Block gradient plus the work spent computing it."""

    values: np.ndarray  # gradient slice, length == block length
    flops: int  # executed multiply-adds, forward + backward
    backward_flops: int  # backward-pass share of ``flops``
    batch_size: int


class Objective(abc.ABC):
    """A mean-over-samples loss with minibatch block gradients."""

    dim: int
    n_samples: int
    # Parameter counts per layer, input side first; None when the vector has
    # no layer structure (blocks may then split it anywhere).
    layer_param_counts: tuple[int, ...] | None = None

    @abc.abstractmethod
    def loss(self, x: np.ndarray, batch: np.ndarray) -> float: ...

    @abc.abstractmethod
    def grad_block(self, x: np.ndarray, block: Block, batch: np.ndarray) -> GradResult: ...

    @abc.abstractmethod
    def init_params(self, seed: int) -> np.ndarray: ...

    def full_loss(self, x: np.ndarray) -> float:
        return self.loss(x, np.arange(self.n_samples))

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        return self.grad_block(x, Block(0, self.dim), np.arange(self.n_samples)).values

    def backward_cost(self, block: Block) -> int:
        """Per-sample backward multiply-adds for this block's gradient."""
        raise NotImplementedError

    def check_block(self, block: Block) -> None:
        if not (0 <= block.start < block.stop <= self.dim):
            raise ValueError(f"block {block} outside [0, {self.dim})")


# ---------------------------------------------------------------------------
# batching


def sample_batch(rng: np.random.Generator, n_samples: int, batch_size: int) -> np.ndarray:
    """Uniform i.i.d. draw with replacement."""
    if n_samples <= 0 or batch_size <= 0:
        raise ValueError("need positive sample count and batch size")
    return rng.integers(0, n_samples, size=batch_size)


class EpochSampler:
    """Walks a reshuffled permutation of an index shard, epoch by epoch."""

    def __init__(self, indices: np.ndarray, seed: int):
        if len(indices) == 0:
            raise ValueError("empty shard")
        self._indices = np.asarray(indices)
        self._seed = seed
        self._epoch = -1
        self._pos = 0
        self._perm = np.empty(0, dtype=np.int64)

    def next_batch(self, batch_size: int) -> np.ndarray:
        out = np.empty(batch_size, dtype=np.int64)
        filled = 0
        while filled < batch_size:
            if self._pos >= len(self._perm):
                self._epoch += 1
                rng = np.random.default_rng(
                    np.random.SeedSequence([self._seed, self._epoch])
                )
                self._perm = self._indices[rng.permutation(len(self._indices))]
                self._pos = 0
            take = min(batch_size - filled, len(self._perm) - self._pos)
            out[filled : filled + take] = self._perm[self._pos : self._pos + take]
            self._pos += take
            filled += take
        return out


# ---------------------------------------------------------------------------
# quadratic


class QuadraticObjective(Objective):
    """f(x) = mean over samples of 0.5 * ||x - target_n||^2.

    The minimiser is the mean target.  Gradients are computed for the full
    vector and sliced, so block gradients agree with full-gradient slices
    exactly.
    """

    def __init__(self, targets: np.ndarray):
        targets = np.asarray(targets, dtype=np.float64)
        if targets.ndim != 2 or targets.shape[0] == 0:
            raise ValueError("targets must be a non-empty (n, d) array")
        self.targets = targets
        self.n_samples, self.dim = targets.shape
        self.minimizer = targets.mean(axis=0)

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "QuadraticObjective":
        return cls(ds.features)

    def init_params(self, seed: int) -> np.ndarray:
        return np.zeros(self.dim)

    def loss(self, x: np.ndarray, batch: np.ndarray) -> float:
        diff = x - self.targets[batch]
        return 0.5 * float(np.mean(np.sum(diff * diff, axis=1)))

    def grad_block(self, x: np.ndarray, block: Block, batch: np.ndarray) -> GradResult:
        self.check_block(block)
        grad = x - self.targets[batch].mean(axis=0)
        per_sample = self.dim * len(batch)
        return GradResult(grad[block.start : block.stop], 2 * per_sample, per_sample, len(batch))

    def backward_cost(self, block: Block) -> int:
        return self.dim


# ---------------------------------------------------------------------------
# logistic regression


class LogisticObjective(Objective):
    """Binary logistic loss over +-1 labels, parameters = feature weights."""

    def __init__(self, features: np.ndarray, labels: np.ndarray):
        feats = np.asarray(features, dtype=np.float64)
        labs = np.asarray(labels)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise ValueError("features must be a non-empty (n, f) array")
        if set(np.unique(labs)) - {-1, 1}:
            raise ValueError("labels must be +-1")
        self.features = feats
        self.signs = labs.astype(np.float64)
        self.n_samples, self.dim = feats.shape

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "LogisticObjective":
        if ds.n_classes != 2:
            raise ValueError("logistic regression needs a 2-class dataset")
        return cls(ds.features, np.where(ds.labels == 1, 1, -1))

    def init_params(self, seed: int) -> np.ndarray:
        return np.zeros(self.dim)

    def loss(self, x: np.ndarray, batch: np.ndarray) -> float:
        margin = self.signs[batch] * (self.features[batch] @ x)
        return float(np.mean(np.logaddexp(0.0, -margin)))

    def grad_block(self, x: np.ndarray, block: Block, batch: np.ndarray) -> GradResult:
        self.check_block(block)
        feats = self.features[batch]
        signs = self.signs[batch]
        margin = signs * (feats @ x)
        weight = -signs / (1.0 + np.exp(margin))  # d loss / d margin * sign
        grad = feats.T @ weight / len(batch)
        per_sample = self.dim * len(batch)
        return GradResult(grad[block.start : block.stop], 2 * per_sample, per_sample, len(batch))

    def backward_cost(self, block: Block) -> int:
        return self.dim

    def accuracy(self, x: np.ndarray) -> float:
        return float(np.mean(self.signs * (self.features @ x) > 0))


# ---------------------------------------------------------------------------
# fully-connected network


class MlpObjective(Objective):
    """Fully-connected net, tanh hidden layers, softmax cross-entropy head.

    The flat parameter layout is [W1, b1, W2, b2, ...] with W_l of shape
    (width_{l-1}, width_l).  Blocks must align to layer boundaries: each
    block is a run of whole layers.
    """

    def __init__(self, features: np.ndarray, labels: np.ndarray, hidden: tuple[int, ...], n_classes: int):
        feats = np.asarray(features, dtype=np.float64)
        labs = np.asarray(labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise ValueError("features must be a non-empty (n, f) array")
        if labs.min() < 0 or labs.max() >= n_classes:
            raise ValueError("labels outside [0, n_classes)")
        self.features = feats
        self.labels = labs
        self.n_samples = feats.shape[0]
        self.widths = (feats.shape[1], *hidden, n_classes)
        self.n_layers = len(self.widths) - 1
        self.layer_param_counts = tuple(
            self.widths[l] * self.widths[l + 1] + self.widths[l + 1]
            for l in range(self.n_layers)
        )
        self.dim = sum(self.layer_param_counts)
        edges = [0]
        for c in self.layer_param_counts:
            edges.append(edges[-1] + c)
        self._layer_edges = tuple(edges)
        self._onehot = np.eye(n_classes)[labs]

    @classmethod
    def from_dataset(cls, ds: Dataset, hidden: tuple[int, ...]) -> "MlpObjective":
        return cls(ds.features, ds.labels, hidden, ds.n_classes)

    def init_params(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([seed, self.dim]))
        x = np.zeros(self.dim)
        for l, (w, b) in enumerate(self._views(x)):
            w[:] = rng.normal(scale=1.0 / np.sqrt(self.widths[l]), size=w.shape)
        return x

    def _views(self, x: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        for l in range(self.n_layers):
            lo = self._layer_edges[l]
            n_in, n_out = self.widths[l], self.widths[l + 1]
            out.append(
                (x[lo : lo + n_in * n_out].reshape(n_in, n_out), x[lo + n_in * n_out : self._layer_edges[l + 1]])
            )
        return out

    def layers_of_block(self, block: Block) -> tuple[int, int]:
        """Map a block to its (first, last) 0-based layer indices."""
        self.check_block(block)
        if block.start == 0 and block.stop == self.dim:
            return 0, self.n_layers - 1
        try:
            first = self._layer_edges.index(block.start)
            last = self._layer_edges.index(block.stop) - 1
        except ValueError:
            raise ValueError(f"block {block} does not align to layer boundaries") from None
        return first, last

    def _forward(self, x: np.ndarray, batch: np.ndarray):
        acts = [self.features[batch]]
        z = None
        for l, (w, b) in enumerate(self._views(x)):
            z = acts[-1] @ w + b
            if l < self.n_layers - 1:
                acts.append(np.tanh(z))
        logits = z - z.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(logits).sum(axis=1, keepdims=True))
        log_probs = logits - log_norm
        return acts, log_probs

    def _forward_flops(self, batch_size: int) -> int:
        return batch_size * sum(
            self.widths[l] * self.widths[l + 1] for l in range(self.n_layers)
        )

    def loss(self, x: np.ndarray, batch: np.ndarray) -> float:
        _, log_probs = self._forward(x, batch)
        picked = log_probs[np.arange(len(batch)), self.labels[batch]]
        return -float(picked.mean())

    def grad_block(self, x: np.ndarray, block: Block, batch: np.ndarray) -> GradResult:
        first, _ = self.layers_of_block(block)
        acts, log_probs = self._forward(x, batch)
        views = self._views(x)
        n = len(batch)
        grad = np.zeros(self.dim)
        grad_views = self._views(grad)
        # delta starts as d loss / d logits; walk back to the block's
        # input-most layer, two matrix products per visited layer.
        delta = (np.exp(log_probs) - self._onehot[batch]) / n
        backward = 0
        for l in range(self.n_layers - 1, first - 1, -1):
            w, _ = views[l]
            gw, gb = grad_views[l]
            gw[:] = acts[l].T @ delta
            gb[:] = delta.sum(axis=0)
            delta = delta @ w.T
            backward += 2 * n * self.widths[l] * self.widths[l + 1]
            if l - 1 >= first:
                # acts[l] is a tanh output for every l >= 1
                delta = delta * (1.0 - acts[l] * acts[l])
        flops = self._forward_flops(n) + backward
        return GradResult(grad[block.start : block.stop], flops, backward, n)

    def backward_cost(self, block: Block) -> int:
        first, _ = self.layers_of_block(block)
        return sum(
            2 * self.widths[l] * self.widths[l + 1]
            for l in range(first, self.n_layers)
        )

    def accuracy(self, x: np.ndarray) -> float:
        _, log_probs = self._forward(x, np.arange(self.n_samples))
        return float(np.mean(log_probs.argmax(axis=1) == self.labels))


# ---------------------------------------------------------------------------
# derived quantities


def flops_savings_ratio(obj: Objective, partition: BlockPartition) -> float:
    """Backward work saved by cycling blocks instead of always going full.

    One full pass per block versus one truncated pass per block:
    1 - sum_i cost(block_i) / (U * cost(full)).
    """
    if obj.layer_param_counts is None:
        raise ValueError("truncated-backprop savings need a layered objective")
    full = obj.backward_cost(Block(0, obj.dim))
    blocks = partition.blocks()
    partial = sum(obj.backward_cost(b) for b in blocks)
    return 1.0 - partial / (len(blocks) * full)


def estimate_moment_bounds(
    obj: Objective,
    points: list[np.ndarray],
    trials: int,
    batch_size: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Empirical gradient moment bounds over probe points.

    Returns (m_hat, sigma_hat): the square roots of the largest observed
    mean squared minibatch-gradient norm and of the largest observed mean
    squared deviation from the full gradient.  Full-batch draws make
    sigma_hat exactly zero.
    """
    if trials < 30:
        raise ValueError("need at least 30 trials per point")
    if not points:
        raise ValueError("need at least one probe point")
    rng = np.random.default_rng(np.random.SeedSequence([seed, trials]))
    full_block = Block(0, obj.dim)
    worst_norm = 0.0
    worst_var = 0.0
    for x in points:
        full = obj.full_grad(x)
        sq_norms = np.empty(trials)
        sq_devs = np.empty(trials)
        for t in range(trials):
            if batch_size >= obj.n_samples:
                batch = np.arange(obj.n_samples)
            else:
                batch = sample_batch(rng, obj.n_samples, batch_size)
            g = obj.grad_block(x, full_block, batch).values
            sq_norms[t] = g @ g
            dev = g - full
            sq_devs[t] = dev @ dev
        worst_norm = max(worst_norm, float(sq_norms.mean()))
        worst_var = max(worst_var, float(sq_devs.mean()))
    return float(np.sqrt(worst_norm)), float(np.sqrt(worst_var))
