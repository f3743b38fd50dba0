"""Vectorized layer primitives with exact analytic backward passes.

All activations use NHWC layout. Conv is implemented by flattening 3x3
neighbourhoods into columns and running one matmul per layer; the naive
nested-loop formulation lives only in the test suite as an oracle.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x_padded, n, h, w, c):
    # (N, H+2, W+2, C) -> (N*H*W, 9*C), neighbourhood-major (kh, kw, C)
    windows = sliding_window_view(x_padded, (3, 3), axis=(1, 2))
    windows = windows.transpose(0, 1, 2, 4, 5, 3)
    return np.ascontiguousarray(windows).reshape(n * h * w, 9 * c)


def conv3x3_forward(x, kernel, bias):
    """Same-size 3x3 convolution, stride 1, zero padding 1."""
    n, h, w, c = x.shape
    out_c = kernel.shape[3]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = _im2col(xp, n, h, w, c)
    y = cols @ kernel.reshape(9 * c, out_c) + bias
    cache = (cols, kernel, x.shape)
    return y.reshape(n, h, w, out_c), cache


def conv3x3_backward(cache, dy):
    cols, kernel, x_shape = cache
    n, h, w, c = x_shape
    out_c = kernel.shape[3]
    dyf = dy.reshape(n * h * w, out_c)
    dk = (cols.T @ dyf).reshape(3, 3, c, out_c)
    db = dyf.sum(axis=0)
    # dX is the same conv applied to dY with a 180deg-rotated,
    # channel-swapped kernel.
    k_rot = kernel[::-1, ::-1].transpose(0, 1, 3, 2)
    dx, _ = conv3x3_forward(dy, np.ascontiguousarray(k_rot),
                            np.zeros(c, dtype=dy.dtype))
    return dx, dk, db


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(mask, dy):
    return dy * mask


def maxpool2_forward(x):
    """2x2 max-pool, stride 2. Ties route the gradient to the first max."""
    n, h, w, c = x.shape
    xr = (x.reshape(n, h // 2, 2, w // 2, 2, c)
           .transpose(0, 1, 3, 5, 2, 4)
           .reshape(n, h // 2, w // 2, c, 4))
    idx = xr.argmax(axis=-1)
    y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return y, (idx, x.shape)


def maxpool2_backward(cache, dy):
    idx, x_shape = cache
    n, h, w, c = x_shape
    g = np.zeros((n, h // 2, w // 2, c, 4), dtype=dy.dtype)
    np.put_along_axis(g, idx[..., None], dy[..., None], axis=-1)
    return (g.reshape(n, h // 2, w // 2, c, 2, 2)
             .transpose(0, 1, 4, 2, 5, 3)
             .reshape(n, h, w, c))


def gap_forward(x):
    n, h, w, c = x.shape
    return x.mean(axis=(1, 2)), x.shape


def gap_backward(x_shape, dy):
    n, h, w, c = x_shape
    return np.broadcast_to(dy[:, None, None, :] / (h * w), x_shape).astype(dy.dtype)


def dense_forward(h, kernel, bias):
    return h @ kernel + bias, h


def dense_backward(cache, kernel, dy):
    h = cache
    dk = h.T @ dy
    db = dy.sum(axis=0)
    dh = dy @ kernel.T
    return dh, dk, db
