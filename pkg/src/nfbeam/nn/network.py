"""Encoder-decoder CNN mapping a ``2 x N`` channel image to a phase-only beam."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DimensionError
from .layers import (AvgPoolWidth, BatchNorm2d, Conv2d, DeconvWidth, Layer, Linear, Pad, ReLU,
                     Tanh)

LN2 = math.log(2.0)


@dataclass(frozen=True)
class NetworkConfig:
    """``widths = (c0, c1, c2)``: channels at full, half and quarter width."""

    n_antennas: int
    widths: tuple[int, int, int] = (1, 8, 16)
    tanh_head: bool = True
    seed: int = 0
    dtype: str = "float32"
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.n_antennas < 4 or self.n_antennas % 4:
            raise DimensionError(f"n_antennas must be a positive multiple of 4, got {self.n_antennas}")
        object.__setattr__(self, "widths", tuple(int(c) for c in self.widths))
        if len(self.widths) != 3 or min(self.widths) < 1:
            raise ValueError(f"widths must be three positive ints, got {self.widths}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        return cls(**d)


class FeatureBlock(Layer):
    """pad(1) -> [conv(2,2) -> BN -> ReLU] x 2; keeps H and W unchanged.

    The convolutions carry no bias: the batch norm that follows subtracts any
    per-channel constant, so such a bias would have an identically zero gradient.
    """

    def __init__(self, c_in, c_out, rng, dtype, momentum=0.1, eps=1e-5):
        super().__init__()
        self.layers = OrderedDict(
            pad=Pad(1),
            conv1=Conv2d(c_in, c_out, (2, 2), rng, dtype, bias=False),
            bn1=BatchNorm2d(c_out, momentum, eps, dtype),
            relu1=ReLU(),
            conv2=Conv2d(c_out, c_out, (2, 2), rng, dtype, bias=False),
            bn2=BatchNorm2d(c_out, momentum, eps, dtype),
            relu2=ReLU(),
        )

    def forward(self, x, training=True):
        if x.shape[2] < 2 or x.shape[3] < 2:
            raise DimensionError(f"feature block needs H, W >= 2, got {x.shape}")
        for layer in self.layers.values():
            x = layer.forward(x, training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers.values()):
            grad = layer.backward(grad)
        return grad


def phases_to_weights(theta: np.ndarray) -> np.ndarray:
    """``w = cos(pi theta) + j sin(pi theta)``; unit modulus by construction."""
    phi = np.pi * np.asarray(theta, dtype=float)
    return np.cos(phi) + 1j * np.sin(phi)


class BeamformerNet:
    """block -> pool -> block -> pool -> block -> deconv -> block -> deconv -> block -> FC [-> tanh].

    Each channel image is divided by its RMS element modulus before the first
    block, which leaves the optimal beam unchanged and keeps path-loss-scaled
    inputs in a trainable range.
    """

    def __init__(self, config: NetworkConfig):
        self.config = config
        dtype = np.dtype(config.dtype)
        rng = np.random.default_rng(config.seed)
        c0, c1, c2 = config.widths
        n = config.n_antennas
        bn = dict(momentum=config.bn_momentum, eps=config.bn_eps)
        self.modules = OrderedDict(
            enc1=FeatureBlock(1, c0, rng, dtype, **bn),
            pool1=AvgPoolWidth(),
            enc2=FeatureBlock(c0, c1, rng, dtype, **bn),
            pool2=AvgPoolWidth(),
            mid=FeatureBlock(c1, c2, rng, dtype, **bn),
            up1=DeconvWidth(c2, c1, rng, dtype),
            dec1=FeatureBlock(c1, c1, rng, dtype, **bn),
            up2=DeconvWidth(c1, c0, rng, dtype),
            dec2=FeatureBlock(c0, 1, rng, dtype, **bn),
        )
        self.fc = Linear(2 * n, n, rng, dtype)
        self.tanh = Tanh() if config.tanh_head else None
        self.trace: list[tuple[str, tuple[int, ...]]] = []

    # parameter access --------------------------------------------------
    def _leaf_layers(self):
        for name, module in self.modules.items():
            if isinstance(module, FeatureBlock):
                for sub, layer in module.layers.items():
                    yield f"{name}.{sub}", layer
            else:
                yield name, module
        yield "fc", self.fc

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((f"{prefix}.{k}", v) for prefix, layer in self._leaf_layers()
                           for k, v in layer.params.items())

    def gradients(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((f"{prefix}.{k}", layer.grads[k]) for prefix, layer in self._leaf_layers()
                           for k in layer.params)

    def buffers(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((f"{prefix}.{k}", v) for prefix, layer in self._leaf_layers()
                           for k, v in layer.buffers.items())

    def load_state(self, params: dict, buffers: dict | None = None) -> None:
        for store, new in ((self.parameters(), params), (self.buffers(), buffers or {})):
            for k, v in new.items():
                if k not in store:
                    raise KeyError(f"unknown array {k!r}")
                if store[k].shape != np.shape(v):
                    raise DimensionError(f"{k}: shape {np.shape(v)} != {store[k].shape}")
                store[k][...] = v

    def set_stat_updates(self, enabled: bool) -> None:
        for _, layer in self._leaf_layers():
            if isinstance(layer, BatchNorm2d):
                layer.update_stats = enabled

    # computation -------------------------------------------------------
    def forward_features(self, inputs: np.ndarray, training: bool = False) -> np.ndarray:
        """``(B, 2, N)`` channel images to the ``(B, 1, 2, N)`` decoder output."""
        n = self.config.n_antennas
        inputs = np.asarray(inputs)
        if inputs.ndim == 2:
            inputs = inputs[None]
        if inputs.shape[1:] != (2, n):
            raise DimensionError(f"expected input (B, 2, {n}), got {inputs.shape}")
        dtype = np.dtype(self.config.dtype)
        rms = np.sqrt(np.mean(inputs.astype(float) ** 2, axis=(1, 2)) * 2.0)
        rms = np.where(rms > 0, rms, 1.0)
        x = (inputs / rms[:, None, None]).astype(dtype)[:, None]
        self.trace = [("input", x.shape)]
        for name, module in self.modules.items():
            x = module.forward(x, training)
            self.trace.append((name, x.shape))
        return x

    def forward(self, inputs: np.ndarray, training: bool = False) -> np.ndarray:
        """Phase vector ``theta`` of shape ``(B, N)``; the beam is ``exp(j pi theta)``."""
        x = self.forward_features(inputs, training)
        b = x.shape[0]
        self._feat_shape = x.shape
        z = self.fc.forward(x.reshape(b, -1), training)
        self.trace.append(("fc", z.shape))
        if self.tanh is not None:
            z = self.tanh.forward(z, training)
        return z

    def backward(self, grad_theta: np.ndarray) -> "OrderedDict[str, np.ndarray]":
        """Back-propagate ``dL/dtheta``; returns gradients keyed like ``parameters()``."""
        g = np.asarray(grad_theta, dtype=np.dtype(self.config.dtype))
        if self.tanh is not None:
            g = self.tanh.backward(g)
        g = self.fc.backward(g).reshape(self._feat_shape)
        for module in reversed(self.modules.values()):
            g = module.backward(g)
        return self.gradients()

    def beam(self, inputs: np.ndarray) -> np.ndarray:
        """Evaluation-mode beams, shape ``(B, N)``."""
        return phases_to_weights(self.forward(inputs, training=False))


def negative_rate_loss(theta: np.ndarray, channels: np.ndarray, sigma2, tx_power=1.0):
    """Negative mean rate and its gradient with respect to ``theta``.

    ``channels`` is ``(B, K, N)`` with the served user first.  Returns
    ``(loss, dloss_dtheta)``; the loss equals ``-mean_b log2(1 + SINR_b)``.
    """
    theta = np.asarray(theta)
    b = theta.shape[0]
    phi = np.pi * theta
    cw = np.cos(phi) - 1j * np.sin(phi)  # conj(w)
    proj = np.einsum("bn,bkn->bk", cw, channels)
    power = proj.real**2 + proj.imag**2
    tx = np.broadcast_to(np.asarray(tx_power, dtype=power.dtype), (b,))
    sig = tx * power[:, 0]
    den = power[:, 1:].sum(axis=1) + sigma2
    rate = np.log2(1.0 + sig / den)
    loss = -rate.mean()

    # dR/dp_k for the served user (k = 0) and for interferers
    total = den + sig
    dr_dp = np.empty_like(power)
    dr_dp[:, 0] = tx / (total * LN2)
    dr_dp[:, 1:] = ((1.0 / total - 1.0 / den) / LN2)[:, None]
    # dp_k/dphi_n = 2 Im(conj(a_k) conj(w_n) h_kn)
    dp_dphi = 2.0 * np.imag(np.conj(proj)[:, :, None] * cw[:, None, :] * channels)
    grad_phi = -np.einsum("bk,bkn->bn", dr_dp, dp_dphi) / b
    return float(loss), (np.pi * grad_phi).astype(theta.dtype)
