"""The push proposal network: parameters, inference and backpropagation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as ly
from .layers import LayerSpec

LOG_CLAMP = 1e-7


class NetworkError(RuntimeError):
    pass


@dataclass
class NetworkParams:
    """Weights, biases and Adam state for one architecture.

    ``weights[i]`` is a dict ``{"W", "b"}`` for layers with parameters and an
    empty dict otherwise. ``m``/``v`` mirror ``weights``; ``step`` counts
    optimizer updates.
    """

    arch: list[LayerSpec]
    input_shape: tuple[int, int, int]
    weights: list[dict]
    m: list[dict] = field(default_factory=list)
    v: list[dict] = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        if not self.m:
            self.m = zeros_like(self.weights)
        if not self.v:
            self.v = zeros_like(self.weights)

    @property
    def dtype(self):
        for w in self.weights:
            if w:
                return w["W"].dtype
        return np.dtype(np.float64)

    def n_params(self) -> int:
        return sum(a.size for w in self.weights for a in w.values())

    def copy(self) -> "NetworkParams":
        cp = lambda ws: [{k: a.copy() for k, a in w.items()} for w in ws]
        return NetworkParams(list(self.arch), self.input_shape, cp(self.weights),
                             cp(self.m), cp(self.v), self.step)

    def astype(self, dtype) -> "NetworkParams":
        cv = lambda ws: [{k: a.astype(dtype) for k, a in w.items()} for w in ws]
        return NetworkParams(list(self.arch), self.input_shape, cv(self.weights),
                             cv(self.m), cv(self.v), self.step)

    def check_finite(self) -> None:
        for i, w in enumerate(self.weights):
            for k, a in w.items():
                if not np.all(np.isfinite(a)):
                    raise NetworkError(f"non-finite parameter {k} in layer {i} ({self.arch[i].kind})")


def zeros_like(weights) -> list[dict]:
    return [{k: np.zeros_like(a) for k, a in w.items()} for w in weights]


def init_params(arch: list[LayerSpec], seed: int = 0, input_shape=(1, 64, 64),
                dtype=np.float32) -> NetworkParams:
    """Uniform init in +-sqrt(6 / fan_in), zero biases."""
    ly.infer_shapes(arch, input_shape)
    rng = np.random.default_rng(seed)
    weights = []
    for L in arch:
        shapes = ly.param_shapes(L)
        if not shapes:
            weights.append({})
            continue
        lim = np.sqrt(6.0 / ly.fan_in(L))
        weights.append({"W": rng.uniform(-lim, lim, size=shapes["W"]).astype(dtype),
                        "b": np.zeros(shapes["b"], dtype=dtype)})
    return NetworkParams(list(arch), tuple(input_shape), weights)


def _as_batch(params: NetworkParams, batch) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        x = batch
    else:
        x = np.stack([getattr(im, "pixels", im) for im in batch])
    if x.ndim == 3:
        x = x[:, None]
    if x.shape[1:] != params.input_shape:
        raise NetworkError(f"expected input {params.input_shape}, got {x.shape[1:]}")
    return np.ascontiguousarray(x.transpose(0, 2, 3, 1), dtype=params.dtype)


def _check(out, i, L):
    if not np.all(np.isfinite(out)):
        raise NetworkError(f"non-finite activations after layer {i} ({L.kind})")


def _run(params: NetworkParams, x: np.ndarray, keep: bool):
    caches = []
    logits = None
    for i, (L, w) in enumerate(zip(params.arch, params.weights)):
        if L.kind == "convolution":
            x, cache = ly.conv_forward(x, w["W"], w["b"])
        elif L.kind == "relu":
            cache = x > 0
            x = x * cache
        elif L.kind == "max_pool":
            x, cache = ly.pool_forward(x, L.pool)
        elif L.kind == "flatten":
            cache = x.shape
            x = x.transpose(0, 3, 1, 2).reshape(x.shape[0], -1)
        elif L.kind == "fully_connected":
            cache = x
            x = x @ w["W"] + w["b"]
        elif L.kind == "sigmoid":
            logits = x
            x = ly.sigmoid(x.astype(np.float64))
            cache = None
        _check(x, i, L)
        caches.append(cache if keep else None)
    return x, logits, caches


def forward(params: NetworkParams, batch) -> np.ndarray:
    """Success probabilities, one per image, strictly inside (0, 1)."""
    x = _as_batch(params, batch)
    if x.shape[0] == 0:
        return np.zeros(0)
    p, _, _ = _run(params, x, keep=False)
    return p.reshape(-1)


def forward_chunked(params: NetworkParams, batch, chunk: int = 256) -> np.ndarray:
    """Same as :func:`forward`, in slices of ``chunk`` images to bound memory."""
    if len(batch) == 0:
        return np.zeros(0)
    return np.concatenate([forward(params, batch[i:i + chunk]) for i in range(0, len(batch), chunk)])


def bce(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample negative log likelihood with p clamped to [1e-7, 1 - 1e-7]."""
    pc = np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)
    return -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))


def loss_and_gradients(params: NetworkParams, images, labels, return_probs: bool = False):
    """Mean clamped NLL over the batch and its gradient for every parameter.

    Returns ``(loss, grads)``, or ``(loss, grads, p)`` with ``return_probs``.
    """
    x = _as_batch(params, images)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    if n == 0:
        raise NetworkError("empty batch")
    p, _, caches = _run(params, x, keep=True)
    p = p.reshape(-1)
    loss = float(bce(p, y).mean())
    # d loss / d logit; zero where the clamp is active
    active = (p > LOG_CLAMP) & (p < 1.0 - LOG_CLAMP)
    g = np.where(active, (p - y) / n, 0.0).reshape(-1, 1).astype(params.dtype)

    grads = zeros_like(params.weights)
    first_param = next(i for i, L in enumerate(params.arch) if L.has_params)
    for i in range(len(params.arch) - 1, -1, -1):
        L, w, cache = params.arch[i], params.weights[i], caches[i]
        if L.kind == "sigmoid":
            continue
        if L.kind == "fully_connected":
            grads[i] = {"W": cache.T @ g, "b": g.sum(axis=0)}
            g = g @ w["W"].T
        elif L.kind == "flatten":
            n, h, w, c = cache
            g = g.reshape(n, c, h, w).transpose(0, 2, 3, 1)
        elif L.kind == "relu":
            g = g * cache
        elif L.kind == "max_pool":
            g = ly.pool_backward(g, cache, L.pool)
        elif L.kind == "convolution":
            g, grads[i] = ly.conv_backward(g, cache, w["W"], need_dx=i > first_param)
        if g is not None and not np.all(np.isfinite(g)):
            raise NetworkError(f"non-finite gradient at layer {i} ({L.kind})")
        if i == first_param:
            break
    if return_probs:
        return loss, grads, p
    return loss, grads
