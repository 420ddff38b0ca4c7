"""Numpy encoder-decoder CNN that maps a channel to a phase-only beam."""

from .network import BeamformerNet, NetworkConfig, negative_rate_loss, phases_to_weights
from .train import TrainConfig, infer, infer_batch, load_checkpoint, save_checkpoint, train

__all__ = ["BeamformerNet", "NetworkConfig", "TrainConfig", "infer", "infer_batch",
           "load_checkpoint", "negative_rate_loss", "phases_to_weights", "save_checkpoint", "train"]
