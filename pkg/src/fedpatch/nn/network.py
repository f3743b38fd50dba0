"""Whole-network forward pass and exact gradients for sigmoid + BCE."""

import numpy as np

from . import layers as L
from .weights import ModelWeights, ShapeMismatchError

# Reported probabilities are clipped into the open interval so downstream
# code can rely on p in (0, 1) even when float32 sigmoid saturates.
_PROB_EPS = 1e-7


def _check_batch(weights: ModelWeights, batch: np.ndarray):
    spec = weights.spec
    expected = (spec.input_side, spec.input_side, spec.input_channels)
    if batch.ndim != 4 or batch.shape[1:] != expected:
        raise ShapeMismatchError(
            f"batch shape {batch.shape} does not match expected "
            f"(N, {expected[0]}, {expected[1]}, {expected[2]})")


def _forward_full(weights: ModelWeights, batch: np.ndarray, keep_caches: bool):
    spec = weights.spec
    dtype = batch.dtype
    x = batch
    caches = []
    for b, (out_c, n_convs) in enumerate(spec.conv_blocks):
        for c in range(n_convs):
            k = weights.layers[f"block{b}_conv{c}_kernel"].astype(dtype, copy=False)
            bias = weights.layers[f"block{b}_conv{c}_bias"].astype(dtype, copy=False)
            x, conv_cache = L.conv3x3_forward(x, k, bias)
            x, relu_mask = L.relu_forward(x)
            if keep_caches:
                caches.append(("conv", b, c, conv_cache, relu_mask))
        x, pool_cache = L.maxpool2_forward(x)
        if keep_caches:
            caches.append(("pool", b, None, pool_cache, None))
    h, gap_shape = L.gap_forward(x)
    dk = weights.layers["head_dense_kernel"].astype(dtype, copy=False)
    db = weights.layers["head_dense_bias"].astype(dtype, copy=False)
    logits, dense_cache = L.dense_forward(h, dk, db)
    logits = logits[:, 0]
    if keep_caches:
        caches.append(("head", None, None, (gap_shape, dense_cache), None))
    return logits, caches


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(weights: ModelWeights, batch: np.ndarray) -> np.ndarray:
    """Per-patch TIL-positive probability, strictly inside (0, 1)."""
    _check_batch(weights, batch)
    logits, _ = _forward_full(weights, batch, keep_caches=False)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits in forward pass")
    probs = _sigmoid(logits)
    return np.clip(probs, _PROB_EPS, 1.0 - _PROB_EPS)


def backward(weights: ModelWeights, batch: np.ndarray, labels: np.ndarray):
    """Mean binary cross-entropy over the batch plus exact gradients.

    Returns (loss, grads) where grads mirrors the ModelWeights layout.
    The loss is accumulated in float64 regardless of activation dtype.
    """
    _check_batch(weights, batch)
    labels = np.asarray(labels)
    n = batch.shape[0]
    if n == 0:
        raise ValueError("empty batch: mean loss is undefined")
    if labels.shape != (n,):
        raise ShapeMismatchError(
            f"labels shape {labels.shape} does not match batch size {n}")

    spec = weights.spec
    dtype = batch.dtype
    logits, caches = _forward_full(weights, batch, keep_caches=True)
    z = logits.astype(np.float64)
    y = labels.astype(np.float64)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))

    grads = {name: None for name, _ in spec.layer_shapes()}
    dz = ((_sigmoid(z) - y) / n).astype(dtype)

    kind, _, _, (gap_shape, dense_cache), _ = caches.pop()
    assert kind == "head"
    dk_head = weights.layers["head_dense_kernel"].astype(dtype, copy=False)
    dh, dwk, dwb = L.dense_backward(dense_cache, dk_head, dz[:, None])
    grads["head_dense_kernel"] = dwk
    grads["head_dense_bias"] = dwb
    dx = L.gap_backward(gap_shape, dh)

    for kind, b, c, cache, relu_mask in reversed(caches):
        if kind == "pool":
            dx = L.maxpool2_backward(cache, dx)
        else:
            dx = L.relu_backward(relu_mask, dx)
            dx, dwk, dwb = L.conv3x3_backward(cache, dx)
            grads[f"block{b}_conv{c}_kernel"] = dwk
            grads[f"block{b}_conv{c}_bias"] = dwb

    grad_weights = ModelWeights(
        spec, {name: grads[name].astype(np.float32, copy=False)
               for name, _ in spec.layer_shapes()})
    grad_weights.assert_finite()
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    return loss, grad_weights
