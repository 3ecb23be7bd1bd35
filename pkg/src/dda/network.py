"""Projection networks with sigmoid-bounded output and hand-written backprop.

Two architectures share one flat parameter vector layout (weights then bias,
layer by layer):

``mlp``
    point-wise network ``sizes = (d, h1, ..., 1)``, ReLU hidden layers.
``encdec``
    two-level encoder-decoder for ``(N, H, W, C)`` images with a skip
    connection, ``sizes = (C, c1, c2)``: conv3x3(C->c1) -> avgpool2 ->
    conv3x3(c1->c2) -> upsample2 -> concat(skip) -> conv3x3(c1+c2->c1) ->
    conv1x1(c1->1).

``forward`` returns ``sigmoid(y)`` and a cache holding the raw output ``y``;
``backward`` consumes a gradient with respect to ``y``.
"""
import struct
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from . import kernels
from .stats import sigmoid

MAGIC = b"DDA1"
FORMAT_VERSION = 1
KIND_CODES = {"mlp": 0, "encdec": 1}


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    kind: str
    sizes: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.kind == "mlp":
            if len(self.sizes) < 2 or self.sizes[-1] != 1:
                raise ValueError("mlp sizes must be (d, ..., 1)")
        elif self.kind == "encdec":
            if len(self.sizes) != 3:
                raise ValueError("encdec sizes must be (in_channels, c1, c2)")
        else:
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        if min(self.sizes) < 1:
            raise ValueError("layer sizes must be positive")

    @classmethod
    def mlp(cls, *sizes):
        return cls("mlp", sizes)

    @classmethod
    def encdec(cls, in_channels=3, c1=8, c2=16):
        return cls("encdec", (in_channels, c1, c2))

    def shapes(self):
        """Weight/bias shapes in storage order, plus per-layer (fan_in, fan_out)."""
        if self.kind == "mlp":
            out = []
            for a, b in zip(self.sizes[:-1], self.sizes[1:]):
                out.append(((a, b), (b,), (a, b)))
            return out
        c, c1, c2 = self.sizes
        return [((c1, c, 3, 3), (c1,), (c * 9, c1 * 9)),
                ((c2, c1, 3, 3), (c2,), (c1 * 9, c2 * 9)),
                ((c1, c1 + c2, 3, 3), (c1,), ((c1 + c2) * 9, c1 * 9)),
                ((1, c1, 1, 1), (1,), (c1, 1))]

    @property
    def n_params(self):
        return sum(int(np.prod(w)) + int(np.prod(b)) for w, b, _ in self.shapes())

    @property
    def input_dim(self):
        return self.sizes[0]


@dataclass
class ModelParams:
    arch: Architecture
    flat: np.ndarray

    def layers(self, flat=None):
        """(weight, bias) views into ``flat`` (defaults to the parameters)."""
        flat = self.flat if flat is None else flat
        views = []
        off = 0
        for wshape, bshape, _ in self.arch.shapes():
            nw = int(np.prod(wshape))
            nb = int(np.prod(bshape))
            views.append((flat[off:off + nw].reshape(wshape), flat[off + nw:off + nw + nb]))
            off += nw + nb
        return views

    @property
    def n_params(self):
        return self.flat.size


def init_params(arch: Architecture, rng) -> ModelParams:
    """He-uniform for ReLU layers, Xavier-uniform for the output layer; zero biases."""
    flat = np.zeros(arch.n_params)
    params = ModelParams(arch, flat)
    layers = params.layers()
    for idx, ((w, _b), (_, _, (fan_in, fan_out))) in enumerate(zip(layers, arch.shapes())):
        if idx == len(layers) - 1:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        else:
            limit = np.sqrt(6.0 / fan_in)
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return params


def _check_input(params, inputs):
    x = np.asarray(inputs, dtype=np.float64)
    arch = params.arch
    if arch.kind == "mlp":
        if x.ndim != 2 or x.shape[1] != arch.input_dim:
            raise ValueError(f"expected inputs of shape (N, {arch.input_dim}), got {x.shape}")
    else:
        if x.ndim != 4 or x.shape[3] != arch.input_dim:
            raise ValueError(f"expected images of shape (N, H, W, {arch.input_dim}), got {x.shape}")
        if x.shape[1] % 2 or x.shape[2] % 2:
            raise ValueError("encdec needs even image height and width")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    return x


def _avgpool2(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def _upsample2(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


def forward(params: ModelParams, inputs):
    """Returns ``(sigmoid(y), cache)``; ``y`` has one entry per row (mlp) or pixel (encdec)."""
    x = _check_input(params, inputs)
    layers = params.layers()
    if params.arch.kind == "mlp":
        acts = [x]
        h = x
        for w, b in layers[:-1]:
            h = np.maximum(h @ w + b, 0.0)
            acts.append(h)
        w, b = layers[-1]
        y = (h @ w + b)[:, 0]
        return sigmoid(y), {"acts": acts, "logits": y}

    (w1, b1), (w2, b2), (w3, b3), (w4, b4) = layers
    xc = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
    h1 = np.maximum(kernels.conv2d_forward(xc, w1, b1), 0.0)
    p1 = _avgpool2(h1)
    h2 = np.maximum(kernels.conv2d_forward(p1, w2, b2), 0.0)
    cat = np.ascontiguousarray(np.concatenate([_upsample2(h2), h1], axis=1))
    h3 = np.maximum(kernels.conv2d_forward(cat, w3, b3), 0.0)
    y = kernels.conv2d_forward(h3, w4, b4)[:, 0]
    cache = {"x": xc, "h1": h1, "p1": p1, "h2": h2, "cat": cat, "h3": h3, "logits": y}
    return sigmoid(y), cache


def backward(params: ModelParams, cache, grad_y):
    """Gradient of the loss with respect to every parameter, in flat layout."""
    grads = np.zeros_like(params.flat)
    glayers = params.layers(grads)
    layers = params.layers()
    g = np.asarray(grad_y, dtype=np.float64)
    if g.shape != cache["logits"].shape:
        raise ValueError(f"grad_y shape {g.shape} does not match outputs {cache['logits'].shape}")

    if params.arch.kind == "mlp":
        acts = cache["acts"]
        delta = g[:, None]
        for idx in range(len(layers) - 1, -1, -1):
            w, _ = layers[idx]
            gw, gb = glayers[idx]
            a = acts[idx]
            gw[...] = a.T @ delta
            gb[...] = delta.sum(axis=0)
            if idx > 0:
                delta = (delta @ w.T) * (a > 0.0)
        return grads

    (w1, _), (w2, _), (w3, _), (w4, _) = layers
    (gw1, gb1), (gw2, gb2), (gw3, gb3), (gw4, gb4) = glayers
    c1 = w1.shape[0]
    dy = np.ascontiguousarray(g[:, None])
    dh3, gw4[...], gb4[...] = kernels.conv2d_backward(cache["h3"], w4, dy)
    da3 = np.ascontiguousarray(dh3 * (cache["h3"] > 0.0))
    dcat, gw3[...], gb3[...] = kernels.conv2d_backward(cache["cat"], w3, da3)
    n, _, h, w = dcat.shape
    c2 = dcat.shape[1] - c1
    dup = dcat[:, :c2]
    dh1 = dcat[:, c2:].copy()
    dh2 = dup.reshape(n, c2, h // 2, 2, w // 2, 2).sum(axis=(3, 5))
    da2 = np.ascontiguousarray(dh2 * (cache["h2"] > 0.0))
    dp1, gw2[...], gb2[...] = kernels.conv2d_backward(cache["p1"], w2, da2)
    dh1 += _upsample2(dp1) * 0.25
    da1 = np.ascontiguousarray(dh1 * (cache["h1"] > 0.0))
    _, gw1[...], gb1[...] = kernels.conv2d_backward(cache["x"], w1, da1)
    return grads


# --------------------------------------------------------------------------
# optimization

@dataclass
class OptimState:
    m: np.ndarray
    v: np.ndarray
    lr: float
    step: int = 0
    plateau_count: int = 0
    best: float = float("inf")
    # learning-rate reductions since the last improvement (early-stopping signal)
    stale_reductions: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def create(cls, n_params, lr=1e-4):
        return cls(np.zeros(n_params), np.zeros(n_params), float(lr))


def adam_step(params: ModelParams, grads, state: OptimState,
              beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update, in place."""
    state.step += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grads
    state.v *= beta2
    state.v += (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    params.flat -= state.lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def plateau_scheduler(state: OptimState, val_metric, patience=3, factor=0.5, rel_tol=1e-4):
    """Halve the learning rate after ``patience`` consecutive non-improving checks.

    Lower ``val_metric`` is better; an improvement must beat the best value by
    more than ``rel_tol * |best|``.
    """
    val = float(val_metric)
    state.history.append(val)
    if state.best == float("inf") or val < state.best - rel_tol * abs(state.best):
        state.best = val
        state.plateau_count = 0
        state.stale_reductions = 0
        return state
    state.plateau_count += 1
    if state.plateau_count >= patience:
        state.lr *= factor
        state.plateau_count = 0
        state.stale_reductions += 1
    return state


# --------------------------------------------------------------------------
# checkpoint format:
#   magic "DDA1" | version u32 | kind u32 | layer count u32 | sizes u32 * count
#   | parameters f64 * n_params, all little-endian

def checkpoint_bytes(params: ModelParams) -> bytes:
    arch = params.arch
    head = MAGIC + struct.pack("<III", FORMAT_VERSION, KIND_CODES[arch.kind], len(arch.sizes))
    head += struct.pack(f"<{len(arch.sizes)}I", *arch.sizes)
    return head + params.flat.astype("<f8").tobytes()


def save_checkpoint(path, params: ModelParams):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(params))


def parse_checkpoint(data: bytes, name="<bytes>") -> ModelParams:
    if data[:4] != MAGIC:
        raise CheckpointError(f"{name}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 16:
        raise CheckpointError(f"{name}: truncated header")
    version, kind_code, count = struct.unpack_from("<III", data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{name}: unsupported format version {version}")
    kinds = {v: k for k, v in KIND_CODES.items()}
    if kind_code not in kinds:
        raise CheckpointError(f"{name}: unknown architecture code {kind_code}")
    off = 16
    if len(data) < off + 4 * count:
        raise CheckpointError(f"{name}: truncated architecture descriptor")
    sizes = struct.unpack_from(f"<{count}I", data, off)
    off += 4 * count
    try:
        arch = Architecture(kinds[kind_code], sizes)
    except ValueError as exc:
        raise CheckpointError(f"{name}: {exc}") from None
    expected = off + 8 * arch.n_params
    if len(data) != expected:
        raise CheckpointError(f"{name}: expected {expected} bytes, found {len(data)}")
    flat = np.frombuffer(data, dtype="<f8", offset=off).astype(np.float64)
    return ModelParams(arch, flat)


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read(), str(path))
