"""Unsupervised training of the beamformer on the negative mean rate."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DatasetFormatError, DimensionError, TrainingError
from ..scenario import DatasetSplit, SampleBatch, TrainingSample, realify
from .network import BeamformerNet, NetworkConfig, negative_rate_loss, phases_to_weights
from .optim import Adam, ReduceLROnPlateau

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    batch_size: int = 256
    epochs: int = 1000
    plateau_factor: float = 0.5
    plateau_patience: int = 10
    min_lr: float = 1e-5
    seed: int = 0


@dataclass
class History:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
            for row in zip(self.epoch, self.train_loss, self.val_loss, self.lr):
                writer.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


@dataclass(frozen=True, eq=False)
class LossArrays:
    """Network inputs plus channels pre-divided by the noise standard deviation."""

    inputs: np.ndarray
    channels: np.ndarray
    tx_power: np.ndarray

    @classmethod
    def from_batch(cls, batch: SampleBatch, dtype="float32") -> "LossArrays":
        real = np.dtype(dtype)
        cplx = np.complex64 if real == np.float32 else np.complex128
        scaled = batch.channels / np.sqrt(batch.sigma2)[:, None, None]
        return cls(batch.inputs.astype(real), scaled.astype(cplx), batch.tx_power.astype(real))

    @classmethod
    def from_samples(cls, samples: Sequence[TrainingSample], dtype="float32") -> "LossArrays":
        return cls.from_batch(SampleBatch.from_samples(samples), dtype)

    def __len__(self):
        return len(self.inputs)

    def take(self, idx) -> "LossArrays":
        return LossArrays(self.inputs[idx], self.channels[idx], self.tx_power[idx])


def batch_loss(net: BeamformerNet, arrays: LossArrays, training: bool = False):
    theta = net.forward(arrays.inputs, training=training)
    return negative_rate_loss(theta, arrays.channels, 1.0, arrays.tx_power)


def evaluate_loss(net: BeamformerNet, arrays: LossArrays) -> float:
    if len(arrays) == 0:
        return float("nan")
    loss, _ = batch_loss(net, arrays, training=False)
    return loss


def _check_finite(net: BeamformerNet, what: str, batch_id) -> None:
    for k, v in net.parameters().items():
        if not np.all(np.isfinite(v)):
            raise TrainingError(f"non-finite {what} in {k}", batch_id=batch_id)


def geometry_meta(split: DatasetSplit) -> dict:
    g = split.geometry
    if g is None:
        return {}
    return {"geometry": {"n_antennas": g.n_antennas, "carrier_hz": g.carrier_hz, "spacing_m": g.spacing_m}}


def train(split: DatasetSplit, config: NetworkConfig, hyper: TrainConfig = TrainConfig(),
          checkpoint_path=None, net: BeamformerNet | None = None) -> tuple[BeamformerNet, History]:
    """Adam on shuffled mini-batches; the rate is halved on validation plateaus.

    The validation set is ``split.test``.  On a non-finite loss or update the
    last good state is written to ``checkpoint_path`` (when given) and
    :class:`TrainingError` is raised.
    """
    if not split.train:
        raise ValueError("empty training set")
    n = split.train[0].input.shape[1]
    if n != config.n_antennas:
        raise DimensionError(f"dataset has N={n}, network expects N={config.n_antennas}")
    net = BeamformerNet(config) if net is None else net
    train_arr = LossArrays.from_samples(split.train, config.dtype)
    val_arr = LossArrays.from_samples(split.test, config.dtype) if split.test else None

    params = net.parameters()
    opt = Adam(params, lr=hyper.lr)
    sched = ReduceLROnPlateau(opt, hyper.plateau_factor, hyper.plateau_patience, hyper.min_lr)
    rng = np.random.default_rng(hyper.seed)
    history = History()
    good = _snapshot(net, opt, sched, 0, rng)

    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(len(train_arr))
        losses, weights = [], []
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            if len(idx) < 2:  # batch statistics need two samples
                continue
            batch_id = (epoch, start // hyper.batch_size)
            loss, g = batch_loss(net, train_arr.take(idx), training=True)
            try:
                if not math.isfinite(loss) or not np.all(np.isfinite(g)):
                    raise TrainingError(f"non-finite loss at epoch {epoch}", batch_id=batch_id)
                grads = net.backward(g)
                for k, v in grads.items():
                    if not np.all(np.isfinite(v)):
                        raise TrainingError(f"non-finite gradient in {k}", batch_id=batch_id)
                opt.step(grads)
                _check_finite(net, "parameter", batch_id)
            except TrainingError as exc:
                if checkpoint_path is not None:
                    _restore(net, opt, sched, good)
                    save_checkpoint(checkpoint_path, net, opt, sched, good["epoch"], rng, history,
                                    geometry_meta(split))
                    exc.checkpoint = str(checkpoint_path)
                raise
            losses.append(loss)
            weights.append(len(idx))
        train_loss = float(np.average(losses, weights=weights))
        val_loss = evaluate_loss(net, val_arr) if val_arr is not None else train_loss
        sched.step(val_loss)
        history.epoch.append(epoch)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.lr.append(opt.lr)
        good = _snapshot(net, opt, sched, epoch, rng)
        if epoch % 50 == 0 or epoch == hyper.epochs:
            log.info("epoch %d train %.4f val %.4f lr %.2e", epoch, train_loss, val_loss, opt.lr)

    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, net, opt, sched, hyper.epochs, rng, history, geometry_meta(split))
    return net, history


def _snapshot(net, opt, sched, epoch, rng):
    return {
        "params": {k: v.copy() for k, v in net.parameters().items()},
        "buffers": {k: v.copy() for k, v in net.buffers().items()},
        "opt": {"t": opt.t, "lr": opt.lr, "m": {k: v.copy() for k, v in opt.m.items()},
                "v": {k: v.copy() for k, v in opt.v.items()}},
        "sched": sched.state_dict(),
        "epoch": epoch,
    }


def _restore(net, opt, sched, snap):
    net.load_state(snap["params"], snap["buffers"])
    opt.load_state_dict(snap["opt"])
    sched.load_state_dict(snap["sched"])


def infer(h, net: BeamformerNet) -> np.ndarray:
    """Beam for one channel (``ChannelVector`` or complex array); no codeword search."""
    coeffs = np.asarray(getattr(h, "coefficients", h))
    if coeffs.shape != (net.config.n_antennas,):
        raise DimensionError(f"channel length {coeffs.shape} != N={net.config.n_antennas}")
    theta = net.forward(realify(coeffs)[None], training=False)[0]
    return np.cos(np.pi * theta.astype(float)) + 1j * np.sin(np.pi * theta.astype(float))


def infer_batch(inputs: np.ndarray, net: BeamformerNet) -> np.ndarray:
    return phases_to_weights(net.forward(inputs, training=False))


# checkpoints ------------------------------------------------------------

def save_checkpoint(path, net: BeamformerNet, opt: Adam | None = None,
                    sched: ReduceLROnPlateau | None = None, epoch: int = 0,
                    rng: np.random.Generator | None = None, history: History | None = None,
                    extra: dict | None = None) -> None:
    """``.npz`` container: JSON metadata plus float64 parameter, buffer and optimiser arrays.

    ``extra`` is stored verbatim under ``meta["extra"]`` (e.g. the training geometry).
    """
    meta = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "network_config": net.config.to_dict(),
        "epoch": epoch,
        "optimizer": None if opt is None else {"t": opt.t, "lr": opt.lr},
        "scheduler": None if sched is None else sched.state_dict(),
        "rng_state": None if rng is None else rng.bit_generator.state,
        "history": None if history is None else asdict(history),
        "extra": extra or {},
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for k, v in net.parameters().items():
        arrays[f"param/{k}"] = v.astype(np.float64)
    for k, v in net.buffers().items():
        arrays[f"buffer/{k}"] = v.astype(np.float64)
    if opt is not None:
        for k in opt.m:
            arrays[f"adam_m/{k}"] = opt.m[k].astype(np.float64)
            arrays[f"adam_v/{k}"] = opt.v[k].astype(np.float64)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, **arrays)
    tmp.replace(path)


def load_checkpoint(path) -> tuple[BeamformerNet, dict]:
    """Rebuild the network; returns it with the metadata dict (optimiser arrays under ``adam``)."""
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(z["__meta__"].tobytes().decode())
            arrays = {k: z[k] for k in z.files if k != "__meta__"}
    except (OSError, ValueError, KeyError) as exc:
        raise DatasetFormatError(f"unreadable checkpoint {path}: {exc}") from None
    if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise DatasetFormatError(f"unsupported checkpoint version {meta.get('checkpoint_version')!r}")
    config = NetworkConfig.from_dict(meta["network_config"])
    net = BeamformerNet(config)
    pick = lambda prefix: {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
    net.load_state(pick("param/"), pick("buffer/"))
    meta["adam"] = {"m": pick("adam_m/"), "v": pick("adam_v/")}
    return net, meta
