"""Central finite-difference check of every network parameter gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import BeamformerNet, NetworkConfig, negative_rate_loss

# Some gradient entries of a narrow network are ~1e-9; the floor keeps round-off
# in the finite difference from reading as a large relative error there.
DEFAULT_FLOOR = 1e-6


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: dict[str, float]
    checked: int

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values())

    def passed(self, tol: float = 1e-4) -> bool:
        return self.worst < tol


def random_problem(n_antennas: int, batch: int = 6, n_users: int = 2, seed: int = 0):
    """Random complex channels ``(B, K, N)`` and their real input images."""
    rng = np.random.default_rng(seed)
    chans = (rng.normal(size=(batch, n_users, n_antennas))
             + 1j * rng.normal(size=(batch, n_users, n_antennas)))
    inputs = np.stack([chans[:, 0].real, chans[:, 0].imag], axis=1)
    return inputs, chans


def gradient_check(config: NetworkConfig | None = None, batch: int = 6, n_users: int = 2,
                   eps: float = 1e-5, floor: float = DEFAULT_FLOOR, seed: int = 0) -> GradCheckReport:
    """Compare back-propagated gradients with central differences, entry by entry.

    Runs in float64 with batch statistics (training mode) but frozen running
    averages, so the loss is a pure function of the parameters.  Batch-norm
    scales and shifts are randomised first: at their initial values (1, 0) a
    ReLU followed by a bias-free convolution and another batch norm makes the
    loss invariant to the scale, which would hide errors behind zero gradients.
    """
    if config is None:
        config = NetworkConfig(8, (1, 2, 4), dtype="float64", seed=seed)
    if np.dtype(config.dtype) != np.float64:
        raise ValueError("gradient checks need a float64 network")
    net = BeamformerNet(config)
    net.set_stat_updates(False)
    rng = np.random.default_rng(seed + 2)
    for name, p in net.parameters().items():
        if ".bn" in name:
            p[...] = rng.uniform(0.5, 1.5, p.shape) if name.endswith("weight") else rng.normal(0, 0.5, p.shape)
    inputs, chans = random_problem(config.n_antennas, batch, n_users, seed + 1)
    sigma2 = 0.5

    def loss_and_grad():
        theta = net.forward(inputs, training=True)
        return negative_rate_loss(theta, chans, sigma2)

    _, g = loss_and_grad()
    analytic = {k: v.copy() for k, v in net.backward(g).items()}
    errors, checked = {}, 0
    for name, p in net.parameters().items():
        worst = 0.0
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            up, _ = loss_and_grad()
            p[idx] = orig - eps
            down, _ = loss_and_grad()
            p[idx] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic[name][idx]
            worst = max(worst, abs(a - numeric) / max(abs(a) + abs(numeric), floor))
            checked += 1
        errors[name] = worst
    return GradCheckReport(errors, checked)
