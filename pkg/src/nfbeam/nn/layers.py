"""Minimal layers with hand-written backward passes.

Feature maps are ``(B, C, H, W)`` arrays.  Each layer caches what its
backward pass needs during ``forward`` and fills ``self.grads`` (same keys as
``self.params``) during ``backward``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x, training=True):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


def _uniform(rng, bound, shape, dtype):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Pad(Layer):
    """Zero padding of ``width`` on all four spatial sides."""

    def __init__(self, width=1):
        super().__init__()
        self.width = width

    def forward(self, x, training=True):
        p = self.width
        return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))

    def backward(self, grad):
        p = self.width
        return grad[:, :, p:-p, p:-p]


class Conv2d(Layer):
    """Valid (unpadded) stride-1 convolution; ``bias=False`` when a batch norm follows."""

    def __init__(self, c_in, c_out, kernel=(2, 2), rng=None, dtype=np.float32, bias=True):
        super().__init__()
        rng = np.random.default_rng() if rng is None else rng
        kh, kw = kernel
        bound = 1.0 / math.sqrt(c_in * kh * kw)
        self.params["weight"] = _uniform(rng, bound, (c_out, c_in, kh, kw), dtype)
        if bias:
            self.params["bias"] = _uniform(rng, bound, (c_out,), dtype)
        self.kernel = (kh, kw)

    def forward(self, x, training=True):
        w = self.params["weight"]
        if x.ndim != 4 or x.shape[1] != w.shape[1]:
            raise DimensionError(f"conv expects (B, {w.shape[1]}, H, W), got {x.shape}")
        kh, kw = self.kernel
        if x.shape[2] < kh or x.shape[3] < kw:
            raise DimensionError(f"feature map {x.shape[2:]} smaller than kernel {self.kernel}")
        win = sliding_window_view(x, self.kernel, axis=(2, 3))  # (B, C, Ho, Wo, kh, kw)
        self._cache = (x.shape, win)
        out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (B, Ho, Wo, Co)
        out = out.transpose(0, 3, 1, 2)
        if "bias" in self.params:
            out = out + self.params["bias"][:, None, None]
        return out

    def backward(self, grad):
        shape, win = self._cache
        w = self.params["weight"]
        kh, kw = self.kernel
        ho, wo = grad.shape[2], grad.shape[3]
        self.grads["weight"] = np.tensordot(grad, win, axes=([0, 2, 3], [0, 2, 3]))
        if "bias" in self.params:
            self.grads["bias"] = grad.sum(axis=(0, 2, 3))
        dx = np.zeros(shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                # (C, B, Ho, Wo)
                part = np.tensordot(w[:, :, i, j], grad, axes=([0], [1]))
                dx[:, :, i:i + ho, j:j + wo] += part.transpose(1, 0, 2, 3)
        return dx


class BatchNorm2d(Layer):
    """Per-channel batch normalisation; batch statistics in training mode."""

    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.params["weight"] = np.ones(channels, dtype=dtype)
        self.params["bias"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self.update_stats = True

    def forward(self, x, training=True):
        gamma = self.params["weight"][:, None, None]
        beta = self.params["bias"][:, None, None]
        if training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            if self.update_stats:
                m = x.size // x.shape[1]
                unbiased = var * m / max(m - 1, 1)
                rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
                rm *= 1 - self.momentum
                rm += self.momentum * mean
                rv *= 1 - self.momentum
                rv += self.momentum * unbiased
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
        self._cache = (xhat, inv_std, training)
        return gamma * xhat + beta

    def backward(self, grad):
        xhat, inv_std, training = self._cache
        gamma = self.params["weight"]
        self.grads["weight"] = (grad * xhat).sum(axis=(0, 2, 3))
        self.grads["bias"] = grad.sum(axis=(0, 2, 3))
        dxhat = grad * gamma[:, None, None]
        if not training:
            return dxhat * inv_std[:, None, None]
        m = grad.size // grad.shape[1]
        s1 = dxhat.sum(axis=(0, 2, 3))[:, None, None]
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[:, None, None]
        return (inv_std[:, None, None] / m) * (m * dxhat - s1 - xhat * s2)


class ReLU(Layer):
    def forward(self, x, training=True):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class AvgPoolWidth(Layer):
    """Average pooling with window (1, 2) and stride (1, 2)."""

    def forward(self, x, training=True):
        b, c, h, w = x.shape
        if w % 2:
            raise DimensionError(f"cannot halve odd width {w}")
        return x.reshape(b, c, h, w // 2, 2).mean(axis=-1)

    def backward(self, grad):
        return np.repeat(grad * 0.5, 2, axis=3)


class DeconvWidth(Layer):
    """Transposed convolution with kernel (1, 2) and stride (1, 2); doubles W."""

    def __init__(self, c_in, c_out, rng=None, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng() if rng is None else rng
        bound = 1.0 / math.sqrt(c_in)
        self.params["weight"] = _uniform(rng, bound, (c_in, c_out, 1, 2), dtype)
        self.params["bias"] = _uniform(rng, bound, (c_out,), dtype)

    def forward(self, x, training=True):
        w = self.params["weight"]
        if x.ndim != 4 or x.shape[1] != w.shape[0]:
            raise DimensionError(f"deconv expects (B, {w.shape[0]}, H, W), got {x.shape}")
        self._x = x
        b, _, h, width = x.shape
        out = np.einsum("bchw,coe->bohwe", x, w[:, :, 0, :], optimize=True)
        out = out.reshape(b, w.shape[1], h, 2 * width)
        return out + self.params["bias"][:, None, None]

    def backward(self, grad):
        x = self._x
        w = self.params["weight"]
        b, co, h, w2 = grad.shape
        g = grad.reshape(b, co, h, w2 // 2, 2)
        self.grads["weight"] = np.einsum("bchw,bohwe->coe", x, g, optimize=True)[:, :, None, :]
        self.grads["bias"] = grad.sum(axis=(0, 2, 3))
        return np.einsum("bohwe,coe->bchw", g, w[:, :, 0, :], optimize=True)


class Linear(Layer):
    def __init__(self, n_in, n_out, rng=None, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng() if rng is None else rng
        bound = 1.0 / math.sqrt(n_in)
        self.params["weight"] = _uniform(rng, bound, (n_out, n_in), dtype)
        self.params["bias"] = _uniform(rng, bound, (n_out,), dtype)

    def forward(self, x, training=True):
        self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad):
        self.grads["weight"] = grad.T @ self._x
        self.grads["bias"] = grad.sum(axis=0)
        return grad @ self.params["weight"]


class Tanh(Layer):
    def forward(self, x, training=True):
        self._y = np.tanh(x)
        return self._y

    def backward(self, grad):
        return grad * (1.0 - self._y**2)
