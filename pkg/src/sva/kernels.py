"""Hot numeric kernels: valid 3-D convolution and its two gradients.

Each kernel has a numba-jitted implementation and a pure-numpy one. The jitted
path is used when numba imports cleanly; set ``SVA_NUMBA=0`` to force the
numpy path. Both compute the same sums (up to float summation order), see
``benchmarks/kernel_bench.py`` for timings.

Shapes: frames (T, H, W, C), weights (K, 3, 3, 3, C), bias (K,), conv output
(T-2, H-2, W-2, K).
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via SVA_NUMBA=0 instead
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and os.environ.get("SVA_NUMBA", "1") != "0"


def _check_conv_shapes(frames: np.ndarray, weights: np.ndarray) -> None:
    if frames.ndim != 4:
        raise ValueError(f"frames must be 4-d (T,H,W,C), got {frames.shape}")
    if weights.ndim != 5 or weights.shape[1:4] != (3, 3, 3):
        raise ValueError(f"weights must be (K,3,3,3,C), got {weights.shape}")
    if frames.shape[3] != weights.shape[4]:
        raise ValueError("channel mismatch between frames and weights")
    if min(frames.shape[:3]) < 3:
        raise ValueError("valid 3x3x3 conv needs T,H,W >= 3")


def conv3d_forward_numpy(frames: np.ndarray, weights: np.ndarray,
                         bias: np.ndarray) -> np.ndarray:
    _check_conv_shapes(frames, weights)
    win = sliding_window_view(frames, (3, 3, 3), axis=(0, 1, 2))
    # win: (T-2, H-2, W-2, C, 3, 3, 3)
    out = np.tensordot(win, weights, axes=[(4, 5, 6, 3), (1, 2, 3, 4)])
    return out + bias


def conv3d_weight_grad_numpy(frames: np.ndarray,
                             dout: np.ndarray) -> np.ndarray:
    win = sliding_window_view(frames, (3, 3, 3), axis=(0, 1, 2))
    grad = np.tensordot(dout, win, axes=[(0, 1, 2), (0, 1, 2)])
    # grad: (K, C, 3, 3, 3) -> (K, 3, 3, 3, C)
    return np.ascontiguousarray(grad.transpose(0, 2, 3, 4, 1))


def conv3d_input_grad_numpy(dout: np.ndarray,
                            weights: np.ndarray) -> np.ndarray:
    padded = np.pad(dout, ((2, 2), (2, 2), (2, 2), (0, 0)))
    win = sliding_window_view(padded, (3, 3, 3), axis=(0, 1, 2))
    flipped = weights[:, ::-1, ::-1, ::-1, :]
    return np.tensordot(win, flipped, axes=[(3, 4, 5, 6), (0, 1, 2, 3)])


if HAVE_NUMBA:

    # loop nests keep j (the contiguous axis) innermost so LLVM can vectorize

    @numba.njit(cache=True)
    def _conv3d_forward_jit(frames, weights, bias):  # pragma: no cover
        t_out = frames.shape[0] - 2
        h_out = frames.shape[1] - 2
        w_out = frames.shape[2] - 2
        ch = frames.shape[3]
        kf = weights.shape[0]
        out = np.empty((t_out, h_out, w_out, kf))
        row = np.empty(w_out)
        for t in range(t_out):
            for i in range(h_out):
                for k in range(kf):
                    for j in range(w_out):
                        row[j] = bias[k]
                    for dt in range(3):
                        for dh in range(3):
                            fr = frames[t + dt, i + dh]
                            for c in range(ch):
                                w0 = weights[k, dt, dh, 0, c]
                                w1 = weights[k, dt, dh, 1, c]
                                w2 = weights[k, dt, dh, 2, c]
                                for j in range(w_out):
                                    row[j] += (w0 * fr[j, c] + w1 * fr[j + 1, c]
                                               + w2 * fr[j + 2, c])
                    for j in range(w_out):
                        out[t, i, j, k] = row[j]
        return out

    @numba.njit(cache=True)
    def _conv3d_weight_grad_jit(frames, dout):  # pragma: no cover
        t_out, h_out, w_out, kf = dout.shape
        ch = frames.shape[3]
        grad = np.zeros((kf, 3, 3, 3, ch))
        for t in range(t_out):
            for i in range(h_out):
                for k in range(kf):
                    for dt in range(3):
                        for dh in range(3):
                            fr = frames[t + dt, i + dh]
                            for dw in range(3):
                                for c in range(ch):
                                    acc = 0.0
                                    for j in range(w_out):
                                        acc += dout[t, i, j, k] * fr[j + dw, c]
                                    grad[k, dt, dh, dw, c] += acc
        return grad

    @numba.njit(cache=True)
    def _conv3d_input_grad_jit(dout, weights):  # pragma: no cover
        t_out, h_out, w_out, kf = dout.shape
        ch = weights.shape[4]
        dx = np.zeros((t_out + 2, h_out + 2, w_out + 2, ch))
        for t in range(t_out):
            for i in range(h_out):
                for k in range(kf):
                    for dt in range(3):
                        for dh in range(3):
                            target = dx[t + dt, i + dh]
                            for dw in range(3):
                                for c in range(ch):
                                    wv = weights[k, dt, dh, dw, c]
                                    for j in range(w_out):
                                        target[j + dw, c] += dout[t, i, j, k] * wv
        return dx

    def conv3d_forward_numba(frames, weights, bias):
        _check_conv_shapes(frames, weights)
        return _conv3d_forward_jit(np.ascontiguousarray(frames),
                                   np.ascontiguousarray(weights),
                                   np.ascontiguousarray(bias))

    def conv3d_weight_grad_numba(frames, dout):
        return _conv3d_weight_grad_jit(np.ascontiguousarray(frames),
                                       np.ascontiguousarray(dout))

    def conv3d_input_grad_numba(dout, weights):
        return _conv3d_input_grad_jit(np.ascontiguousarray(dout),
                                      np.ascontiguousarray(weights))


if NUMBA_ENABLED:
    conv3d_forward = conv3d_forward_numba
    conv3d_weight_grad = conv3d_weight_grad_numba
    conv3d_input_grad = conv3d_input_grad_numba
else:
    conv3d_forward = conv3d_forward_numpy
    conv3d_weight_grad = conv3d_weight_grad_numpy
    conv3d_input_grad = conv3d_input_grad_numpy
