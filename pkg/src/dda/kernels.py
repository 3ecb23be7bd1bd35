"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public names at the bottom of the module are bound to one of the two
paths once, at import time, according to :mod:`dda._accel`.  Both paths are
importable directly (``*_numba`` / ``*_numpy``) so tests and benchmarks can
compare them.
"""
import numpy as np

from . import _accel
from ._accel import njit


# --------------------------------------------------------------------------
# per-class reductions

@njit(cache=True)
def class_sums_numba(values, labels):
    n0 = 0.0
    n1 = 0.0
    s0 = 0.0
    s1 = 0.0
    for k in range(values.shape[0]):
        if labels[k] == 1:
            n1 += 1.0
            s1 += values[k]
        else:
            n0 += 1.0
            s0 += values[k]
    return n0, n1, s0, s1


def class_sums_numpy(values, labels):
    pos = labels == 1
    n1 = float(np.count_nonzero(pos))
    n0 = float(values.shape[0]) - n1
    s1 = float(np.sum(values[pos]))
    s0 = float(np.sum(values[~pos]))
    return n0, n1, s0, s1


@njit(cache=True)
def centered_squares_numba(values, labels, mean0, mean1):
    q0 = 0.0
    q1 = 0.0
    for k in range(values.shape[0]):
        if labels[k] == 1:
            d = values[k] - mean1
            q1 += d * d
        else:
            d = values[k] - mean0
            q0 += d * d
    return q0, q1


def centered_squares_numpy(values, labels, mean0, mean1):
    pos = labels == 1
    q1 = float(np.sum((values[pos] - mean1) ** 2)) if np.any(pos) else 0.0
    q0 = float(np.sum((values[~pos] - mean0) ** 2)) if not np.all(pos) else 0.0
    return q0, q1


# --------------------------------------------------------------------------
# threshold sweep: confusion counts at every grid point

@njit(cache=True)
def threshold_counts_numba(values, labels, grid):
    g = grid.shape[0]
    hist1 = np.zeros(g + 1, dtype=np.int64)
    hist0 = np.zeros(g + 1, dtype=np.int64)
    for k in range(values.shape[0]):
        # number of grid points <= value; the value is positive for all k below it
        j = np.searchsorted(grid, values[k], side="right")
        if labels[k] == 1:
            hist1[j] += 1
        else:
            hist0[j] += 1
    tp = np.zeros(g, dtype=np.int64)
    fp = np.zeros(g, dtype=np.int64)
    acc1 = 0
    acc0 = 0
    for k in range(g - 1, -1, -1):
        acc1 += hist1[k + 1]
        acc0 += hist0[k + 1]
        tp[k] = acc1
        fp[k] = acc0
    return tp, fp


def threshold_counts_numpy(values, labels, grid):
    g = grid.shape[0]
    j = np.searchsorted(grid, values, side="right")
    pos = labels == 1
    hist1 = np.bincount(j[pos], minlength=g + 1)
    hist0 = np.bincount(j[~pos], minlength=g + 1)
    tp = np.cumsum(hist1[::-1])[::-1][1:].astype(np.int64)
    fp = np.cumsum(hist0[::-1])[::-1][1:].astype(np.int64)
    return tp, fp


# --------------------------------------------------------------------------
# 2-D convolution, stride 1, "same" zero padding, odd square kernels
# layout: x (N, C, H, W), w (F, C, K, K), b (F,)

@njit(cache=True)
def _im2col(x, n, ksize):
    """(C*K*K, H*W) patch matrix of image ``n`` with zero padding."""
    _, n_in, height, width = x.shape
    pad = ksize // 2
    cols = np.zeros((n_in * ksize * ksize, height * width))
    for c in range(n_in):
        for ki in range(ksize):
            di = ki - pad
            for kj in range(ksize):
                dj = kj - pad
                row = (c * ksize + ki) * ksize + kj
                for h in range(max(0, -di), min(height, height - di)):
                    for q in range(max(0, -dj), min(width, width - dj)):
                        cols[row, h * width + q] = x[n, c, h + di, q + dj]
    return cols


@njit(cache=True)
def _col2im_add(cols, dx, n, ksize):
    _, n_in, height, width = dx.shape
    pad = ksize // 2
    for c in range(n_in):
        for ki in range(ksize):
            di = ki - pad
            for kj in range(ksize):
                dj = kj - pad
                row = (c * ksize + ki) * ksize + kj
                for h in range(max(0, -di), min(height, height - di)):
                    for q in range(max(0, -dj), min(width, width - dj)):
                        dx[n, c, h + di, q + dj] += cols[row, h * width + q]


@njit(cache=True)
def conv2d_forward_numba(x, w, b):
    n_img, _, height, width = x.shape
    n_out, n_in, ksize, _ = w.shape
    wmat = np.ascontiguousarray(w).reshape(n_out, n_in * ksize * ksize)
    y = np.empty((n_img, n_out, height, width))
    for n in range(n_img):
        out = np.dot(wmat, _im2col(x, n, ksize))
        for f in range(n_out):
            y[n, f] = out[f].reshape(height, width) + b[f]
    return y


@njit(cache=True)
def conv2d_backward_numba(x, w, dy):
    n_img, _, height, width = x.shape
    n_out, n_in, ksize, _ = w.shape
    wmat = np.ascontiguousarray(w).reshape(n_out, n_in * ksize * ksize)
    dx = np.zeros_like(x)
    dwmat = np.zeros_like(wmat)
    db = np.zeros(n_out)
    for n in range(n_img):
        g = np.ascontiguousarray(dy[n]).reshape(n_out, height * width)
        for f in range(n_out):
            db[f] += g[f].sum()
        dwmat += np.dot(g, _im2col(x, n, ksize).T)
        _col2im_add(np.dot(wmat.T, g), dx, n, ksize)
    return dx, dwmat.reshape(w.shape), db


def _windows(x, ksize):
    pad = ksize // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    # (N, C, H, W, K, K)
    return np.lib.stride_tricks.sliding_window_view(xp, (ksize, ksize), axis=(2, 3))


def conv2d_forward_numpy(x, w, b):
    win = _windows(x, w.shape[2])
    y = np.einsum("nchwij,fcij->nfhw", win, w, optimize=True)
    return y + b[None, :, None, None]


def conv2d_backward_numpy(x, w, dy):
    ksize = w.shape[2]
    win = _windows(x, ksize)
    dw = np.einsum("nfhw,nchwij->fcij", dy, win, optimize=True)
    db = dy.sum(axis=(0, 2, 3))
    # input gradient is a "same" convolution of dy with the flipped, transposed kernel
    w_flip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dx = np.einsum("nfhwij,cfij->nchw", _windows(dy, ksize), w_flip, optimize=True)
    return dx, dw, db


# --------------------------------------------------------------------------
# bilinear resize of an (H, W, C) image, half-pixel centers

@njit(cache=True)
def resize_bilinear_numba(img, out_h, out_w):
    in_h, in_w, n_ch = img.shape
    out = np.empty((out_h, out_w, n_ch))
    sy = in_h / out_h
    sx = in_w / out_w
    for i in range(out_h):
        fy = (i + 0.5) * sy - 0.5
        if fy < 0.0:
            fy = 0.0
        y0 = min(int(fy), in_h - 1)
        y1 = min(y0 + 1, in_h - 1)
        ty = fy - y0
        for j in range(out_w):
            fx = (j + 0.5) * sx - 0.5
            if fx < 0.0:
                fx = 0.0
            x0 = min(int(fx), in_w - 1)
            x1 = min(x0 + 1, in_w - 1)
            tx = fx - x0
            for c in range(n_ch):
                top = img[y0, x0, c] * (1.0 - tx) + img[y0, x1, c] * tx
                bot = img[y1, x0, c] * (1.0 - tx) + img[y1, x1, c] * tx
                out[i, j, c] = top * (1.0 - ty) + bot * ty
    return out


def _axis_weights(n_in, n_out):
    f = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    f = np.maximum(f, 0.0)
    i0 = np.minimum(f.astype(np.int64), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, f - i0


def resize_bilinear_numpy(img, out_h, out_w):
    y0, y1, ty = _axis_weights(img.shape[0], out_h)
    x0, x1, tx = _axis_weights(img.shape[1], out_w)
    ty = ty[:, None, None]
    tx = tx[None, :, None]
    top = img[y0][:, x0] * (1.0 - tx) + img[y0][:, x1] * tx
    bot = img[y1][:, x0] * (1.0 - tx) + img[y1][:, x1] * tx
    return top * (1.0 - ty) + bot * ty


if _accel.USE_NUMBA:
    class_sums = class_sums_numba
    centered_squares = centered_squares_numba
    threshold_counts = threshold_counts_numba
    conv2d_forward = conv2d_forward_numba
    conv2d_backward = conv2d_backward_numba
    resize_bilinear = resize_bilinear_numba
else:
    class_sums = class_sums_numpy
    centered_squares = centered_squares_numpy
    threshold_counts = threshold_counts_numpy
    conv2d_forward = conv2d_forward_numpy
    conv2d_backward = conv2d_backward_numpy
    resize_bilinear = resize_bilinear_numpy
