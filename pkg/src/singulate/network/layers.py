"""Layer descriptions and their numpy forward/backward kernels.

Weights follow the usual (out, in, kh, kw) layout; activations are kept
NHWC internally so im2col is a handful of strided copies feeding one GEMM.
Convolutions are 'same'-padded with stride 1. Flattening uses (C, H, W)
order.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

KINDS = ("convolution", "relu", "max_pool", "flatten", "fully_connected", "sigmoid")


class ArchitectureError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    units: int = 0
    in_features: int = 0
    pool: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArchitectureError(f"unknown layer kind {self.kind!r}")

    @property
    def has_params(self) -> bool:
        return self.kind in ("convolution", "fully_connected")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v or k == "kind"}

    @classmethod
    def from_dict(cls, d) -> "LayerSpec":
        return cls(**d)


def conv(cin, cout, k=3) -> LayerSpec:
    return LayerSpec("convolution", in_channels=cin, out_channels=cout, kernel=k)


def dense(fin, units) -> LayerSpec:
    return LayerSpec("fully_connected", in_features=fin, units=units)


RELU = LayerSpec("relu")
POOL = LayerSpec("max_pool", pool=2, stride=2)
FLATTEN = LayerSpec("flatten")
SIGMOID = LayerSpec("sigmoid")


def build_default_architecture(input_size: int = 64,
                               channels=(16, 16, 32, 32, 64),
                               pool_after=(0, 1, 2, 3), hidden: int = 256) -> list[LayerSpec]:
    """Five 3x3 conv+ReLU stages with 2x2 pooling after the first four, FC 256, FC 1."""
    layers: list[LayerSpec] = []
    cin, size = 1, input_size
    for i, cout in enumerate(channels):
        layers += [conv(cin, cout), RELU]
        if i in pool_after:
            layers.append(POOL)
            size //= 2
        cin = cout
    flat = cin * size * size
    layers += [FLATTEN, dense(flat, hidden), RELU, dense(hidden, 1), SIGMOID]
    infer_shapes(layers, (1, input_size, input_size))
    return layers


def infer_shapes(layers, input_shape) -> list[tuple]:
    """Per-layer output shapes (without batch); raises on any mismatch."""
    shape = tuple(input_shape)
    out = []
    for i, L in enumerate(layers):
        if L.kind == "convolution":
            if len(shape) != 3 or shape[0] != L.in_channels:
                raise ArchitectureError(f"layer {i}: conv expects {L.in_channels} channels, got {shape}")
            if L.kernel % 2 != 1 or L.stride != 1:
                raise ArchitectureError(f"layer {i}: only odd kernels with stride 1 are supported")
            shape = (L.out_channels, shape[1], shape[2])
        elif L.kind == "max_pool":
            if len(shape) != 3 or shape[1] % L.pool or shape[2] % L.pool:
                raise ArchitectureError(f"layer {i}: pool {L.pool} does not divide {shape}")
            shape = (shape[0], shape[1] // L.pool, shape[2] // L.pool)
        elif L.kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif L.kind == "fully_connected":
            if shape != (L.in_features,):
                raise ArchitectureError(f"layer {i}: dense expects {L.in_features} features, got {shape}")
            shape = (L.units,)
        out.append(shape)
    if shape != (1,):
        raise ArchitectureError(f"network must end in a single unit, got {shape}")
    return out


def param_shapes(L: LayerSpec) -> dict[str, tuple]:
    if L.kind == "convolution":
        return {"W": (L.out_channels, L.in_channels, L.kernel, L.kernel), "b": (L.out_channels,)}
    if L.kind == "fully_connected":
        return {"W": (L.in_features, L.units), "b": (L.units,)}
    return {}


def fan_in(L: LayerSpec) -> int:
    if L.kind == "convolution":
        return L.in_channels * L.kernel * L.kernel
    return L.in_features


# Kernels below work on NHWC activations. Forward kernels return
# (output, cache); backward kernels return (dx, grads).

def _wmat(W):
    o, c, k, _ = W.shape
    return W.transpose(2, 3, 1, 0).reshape(k * k * c, o)


def conv_forward(x, W, b):
    n, h, w, c = x.shape
    k = W.shape[-1]
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    cols = np.empty((n, h, w, k, k, c), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i, j, :] = xp[:, i:i + h, j:j + w, :]
    cols = cols.reshape(n * h * w, k * k * c)
    out = cols @ _wmat(W) + b
    return out.reshape(n, h, w, -1), (cols, x.shape)


def conv_backward(dout, cache, W, need_dx=True):
    cols, (n, h, w, c) = cache
    o, _, k, _ = W.shape
    d2 = dout.reshape(-1, o)
    dW = (cols.T @ d2).reshape(k, k, c, o).transpose(3, 2, 0, 1)
    db = d2.sum(axis=0)
    dx = None
    if need_dx:
        p = k // 2
        dcols = (d2 @ _wmat(W).T).reshape(n, h, w, k, k, c)
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
        dx = dxp[:, p:p + h, p:p + w, :]
    return dx, {"W": np.ascontiguousarray(dW), "b": db}


def pool_forward(x, s):
    """Max over non-overlapping s x s windows; ties go to the first element."""
    views = [x[:, i::s, j::s, :] for i in range(s) for j in range(s)]
    out = views[0].copy()
    for v in views[1:]:
        np.maximum(out, v, out=out)
    masks = []
    taken = np.zeros(out.shape, dtype=bool)
    for v in views:
        m = v == out
        m &= ~taken
        taken |= m
        masks.append(m)
    return out, (masks, x.shape)


def pool_backward(dout, cache, s):
    masks, shape = cache
    dx = np.empty(shape, dtype=dout.dtype)
    t = 0
    for i in range(s):
        for j in range(s):
            np.multiply(dout, masks[t], out=dx[:, i::s, j::s, :])
            t += 1
    return dx


def sigmoid(z):
    z = np.clip(z, -30.0, 30.0)
    return 1.0 / (1.0 + np.exp(-z))
