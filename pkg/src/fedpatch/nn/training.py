"""Mini-batch local training: shuffled epochs of Adam over one shard."""

from typing import NamedTuple

import numpy as np

from ..seeding import derive_seed
from .adam import adam_step, init_state
from .network import backward
from .weights import ModelWeights


class TrainResult(NamedTuple):
    weights: ModelWeights
    epoch_losses: list  # mean BCE per epoch, in epoch order


def train_epochs(weights: ModelWeights, patches: np.ndarray, labels: np.ndarray,
                 epochs: int, seed: int, learning_rate: float = 1e-3,
                 batch_size: int = 32, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8) -> TrainResult:
    """Train for `epochs` full passes over (patches, labels).

    Optimizer state is created fresh at every call, so the result is a pure
    function of (weights, data, epochs, seed). The shuffle order for epoch
    `e` depends only on (seed, e).
    """
    n = patches.shape[0]
    if n == 0:
        raise ValueError("empty training set: caller must exclude this shard")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")

    current = weights
    state = init_state(weights, learning_rate=learning_rate,
                       beta1=beta1, beta2=beta2, epsilon=epsilon)
    epoch_losses = []
    for e in range(epochs):
        rng = np.random.default_rng(derive_seed(seed, "epoch", e))
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, grads = backward(current, patches[idx], labels[idx])
            current, state = adam_step(current, grads, state)
            total += loss * len(idx)
        epoch_losses.append(total / n)
    return TrainResult(current, epoch_losses)
