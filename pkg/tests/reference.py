"""Straight-line, nested-loop reference math used as test oracles.

Deliberately written without reusing any production layer code: plain
Python loops over numpy scalars, direct formula transcriptions.
"""

import math

import numpy as np


def naive_forward(weights, sample):
    """Probability for one (side, side, channels) sample, loop by loop."""
    spec = weights.spec
    x = np.asarray(sample, dtype=np.float64)
    for b, (out_c, n_convs) in enumerate(spec.conv_blocks):
        for c in range(n_convs):
            k = np.asarray(weights.layers[f"block{b}_conv{c}_kernel"], dtype=np.float64)
            bias = np.asarray(weights.layers[f"block{b}_conv{c}_bias"], dtype=np.float64)
            h, w, in_c = x.shape
            y = np.zeros((h, w, out_c))
            for i in range(h):
                for j in range(w):
                    for o in range(out_c):
                        acc = bias[o]
                        for ki in range(3):
                            for kj in range(3):
                                si, sj = i + ki - 1, j + kj - 1
                                if 0 <= si < h and 0 <= sj < w:
                                    for ci in range(in_c):
                                        acc += x[si, sj, ci] * k[ki, kj, ci, o]
                        y[i, j, o] = max(acc, 0.0)  # ReLU
            x = y
        # 2x2 max pool, stride 2
        h, w, ch = x.shape
        pooled = np.zeros((h // 2, w // 2, ch))
        for i in range(h // 2):
            for j in range(w // 2):
                for o in range(ch):
                    pooled[i, j, o] = max(x[2 * i, 2 * j, o], x[2 * i + 1, 2 * j, o],
                                          x[2 * i, 2 * j + 1, o], x[2 * i + 1, 2 * j + 1, o])
        x = pooled
    # global average pool
    h, w, ch = x.shape
    feat = [float(np.sum(x[:, :, o])) / (h * w) for o in range(ch)]
    dk = np.asarray(weights.layers["head_dense_kernel"], dtype=np.float64)
    db = float(weights.layers["head_dense_bias"][0])
    logit = db
    for o in range(ch):
        logit += feat[o] * dk[o, 0]
    return 1.0 / (1.0 + math.exp(-logit))


def naive_bce(probs, labels):
    """Mean binary cross-entropy from raw probabilities."""
    total = 0.0
    for p, y in zip(probs, labels):
        total += -(y * math.log(p) + (1 - y) * math.log(1 - p))
    return total / len(probs)


def naive_confusion(probs, labels, threshold=0.5):
    """Per-sample confusion accounting; returns (tp, fp, tn, fn)."""
    tp = fp = tn = fn = 0
    for p, y in zip(probs, labels):
        pred = 1 if p >= threshold else 0
        if pred == 1 and y == 1:
            tp += 1
        elif pred == 1 and y == 0:
            fp += 1
        elif pred == 0 and y == 0:
            tn += 1
        else:
            fn += 1
    return tp, fp, tn, fn


def naive_bacc_from_counts(tp, fp, tn, fn):
    if tp + fn == 0:
        return tn / (tn + fp)
    if tn + fp == 0:
        return tp / (tp + fn)
    return 0.5 * (tp / (tp + fn) + tn / (tn + fp))


def naive_balanced_accuracy(probs, labels, threshold=0.5):
    tp, fp, tn, fn = naive_confusion(probs, labels, threshold)
    if tp + fn == 0:
        return tn / (tn + fp)
    if tn + fp == 0:
        return tp / (tp + fn)
    return 0.5 * (tp / (tp + fn) + tn / (tn + fp))


def finite_difference_at(weights, batch, labels, name, idx, step, backward_fn):
    """Central difference quotient for one parameter coordinate."""
    batch64 = np.asarray(batch, dtype=np.float64)
    wp = weights.copy()
    wm = weights.copy()
    wp.layers[name][idx] += step
    wm.layers[name][idx] -= step
    actual = float(wp.layers[name][idx]) - float(wm.layers[name][idx])
    lp, _ = backward_fn(wp, batch64, labels)
    lm, _ = backward_fn(wm, batch64, labels)
    return (lp - lm) / actual


def finite_difference_gradients(weights, batch, labels, step, backward_fn):
    """Central finite differences of the batch loss over every parameter.

    Loss evaluations run with float64 activations so the difference
    quotient is limited by the step, not by accumulation noise.
    """
    batch64 = np.asarray(batch, dtype=np.float64)

    def loss_at(w):
        loss, _ = backward_fn(w, batch64, labels)
        return loss

    grads = {}
    for name, tensor in weights.layers.items():
        g = np.zeros(tensor.shape)
        for idx in np.ndindex(tensor.shape):
            wp = weights.copy()
            wm = weights.copy()
            wp.layers[name][idx] += step
            wm.layers[name][idx] -= step
            actual_step = float(wp.layers[name][idx]) - float(wm.layers[name][idx])
            g[idx] = (loss_at(wp) - loss_at(wm)) / actual_step
        grads[name] = g
    return grads
