"""Multi-user drops, training samples and the on-disk dataset container.

Dataset file layout (all integers and floats little-endian)::

    b"NFBDS1\\n"                 7-byte magic
    uint32                       header length H
    H bytes                      UTF-8 JSON header
    payload                      float64 arrays, train split then test split

For each split with S samples, K users and N antennas the payload holds, in
order: locations (S, K, 2) as (range_m, angle_rad); channel coefficients
(S, K, N, 2) as (real, imag); beta (S, K); noise (S, 4) as (snr_db, sigma2,
reference_range_m, tx_power); ids (S, 2) as (frame, target user).  User 0 of
every sample is the served user.  The header records the format version,
geometry, sampling spans, seeds, path-loss mode, split sizes and a SHA-256 of
the payload.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import (ArrayGeometry, ChannelVector, FsplMode, NoiseModel, PolarLocation,
                      DEFAULT_REFERENCE_RANGE, noise_power, path_loss_beta, steering_matrix)
from .codebook import DEFAULT_ANGLE_SPAN, DEFAULT_RANGE_SPAN
from .errors import ConfigurationError, DatasetFormatError

FORMAT_VERSION = 1
MAGIC = b"NFBDS1\n"
TRAIN_SNR_RANGE = (-20.0, 20.0)


@dataclass(frozen=True)
class Spans:
    angle_span: tuple[float, float] = DEFAULT_ANGLE_SPAN
    range_span: tuple[float, float] = DEFAULT_RANGE_SPAN

    def __post_init__(self):
        a_lo, a_hi = self.angle_span
        r_lo, r_hi = self.range_span
        if not (-math.pi / 2 <= a_lo <= a_hi <= math.pi / 2):
            raise ConfigurationError(f"bad angle span {self.angle_span}")
        if not (0 < r_lo <= r_hi):
            raise ConfigurationError(f"bad range span {self.range_span}")

    def contains(self, loc: PolarLocation) -> bool:
        return (self.angle_span[0] <= loc.angle_rad <= self.angle_span[1]
                and self.range_span[0] <= loc.range_m <= self.range_span[1])


@dataclass(frozen=True)
class ScenarioFrame:
    users: tuple[PolarLocation, ...]
    frame_index: int


@dataclass(frozen=True, eq=False)
class TrainingSample:
    input: np.ndarray
    target_channel: ChannelVector
    interferer_channels: tuple[ChannelVector, ...]
    noise: NoiseModel
    ids: tuple[int, int]

    @property
    def channels(self) -> np.ndarray:
        """All user channels, served user first, shape ``(K, N)``."""
        return np.stack([self.target_channel.coefficients]
                        + [c.coefficients for c in self.interferer_channels])


@dataclass(eq=False)
class DatasetSplit:
    train: list[TrainingSample]
    test: list[TrainingSample]
    ratio: float
    seed: int
    geometry: ArrayGeometry | None = None
    spans: Spans = field(default_factory=Spans)
    fspl_mode: FsplMode = FsplMode.NORMALIZED
    frame_seed: int | None = None


def realify(h) -> np.ndarray:
    """Complex length-N vector to a ``2 x N`` real image (real row, imaginary row)."""
    h = np.asarray(getattr(h, "coefficients", h))
    return np.stack([h.real, h.imag])


def complexify(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return x[..., 0, :] + 1j * x[..., 1, :]


def generate_frames(spans: Spans, n_users: int = 3, n_frames: int = 1000, seed: int = 0,
                    range_scheme: str = "uniform") -> list[ScenarioFrame]:
    """``n_frames`` drops of ``n_users`` i.i.d. users over ``spans``."""
    if n_users < 1 or n_frames < 1:
        raise ConfigurationError(f"need n_users >= 1 and n_frames >= 1, got {n_users}, {n_frames}")
    rng = np.random.default_rng(seed)
    angles = rng.uniform(*spans.angle_span, size=(n_frames, n_users))
    r_lo, r_hi = spans.range_span
    u = rng.uniform(size=(n_frames, n_users))
    if range_scheme == "uniform":
        ranges = r_lo + (r_hi - r_lo) * u
    elif range_scheme == "inverse":
        ranges = 1.0 / (1.0 / r_hi + (1.0 / r_lo - 1.0 / r_hi) * u)
    else:
        raise ConfigurationError(f"unknown range scheme {range_scheme!r}")
    ranges = np.clip(ranges, r_lo, r_hi)
    return [ScenarioFrame(tuple(PolarLocation(float(r), float(a)) for r, a in zip(rr, aa)), t)
            for t, (rr, aa) in enumerate(zip(ranges, angles))]


def _draw_snr(snr_db, count, rng):
    if isinstance(snr_db, (tuple, list)):
        lo, hi = snr_db
        return rng.uniform(lo, hi, size=count)
    return np.full(count, float(snr_db))


def frames_to_samples(frames: Sequence[ScenarioFrame], geom: ArrayGeometry,
                      snr_db=TRAIN_SNR_RANGE, fspl_mode: FsplMode = FsplMode.NORMALIZED,
                      seed: int = 0, r_ref: float = DEFAULT_REFERENCE_RANGE,
                      tx_power: float = 1.0) -> list[TrainingSample]:
    """One sample per (frame, user): that user is served, the rest interfere.

    ``snr_db`` is either a fixed value or a ``(lo, hi)`` range sampled
    uniformly per sample.
    """
    if not frames:
        raise ConfigurationError("no frames")
    fspl_mode = FsplMode(fspl_mode)
    rng = np.random.default_rng(seed)
    n_users = len(frames[0].users)
    snrs = _draw_snr(snr_db, len(frames) * n_users, rng)
    samples = []
    for frame in frames:
        locs = frame.users
        ranges = np.array([u.range_m for u in locs])
        angles = np.array([u.angle_rad for u in locs])
        betas = np.atleast_1d(path_loss_beta(geom, ranges, fspl_mode))
        coeffs = betas[:, None] * steering_matrix(geom, ranges, angles)
        chans = [ChannelVector(coeffs[k], locs[k], fspl_mode, float(betas[k])) for k in range(len(locs))]
        for k in range(len(locs)):
            snr = float(snrs[len(samples)])
            noise = NoiseModel(snr, noise_power(snr, geom, fspl_mode, r_ref, tx_power), r_ref, tx_power)
            samples.append(TrainingSample(realify(chans[k]), chans[k],
                                          tuple(c for i, c in enumerate(chans) if i != k),
                                          noise, (frame.frame_index, k)))
    return samples


def split(samples: Sequence[TrainingSample], ratio: float = 0.75, seed: int = 0) -> DatasetSplit:
    if not 0 < ratio < 1:
        raise ConfigurationError(f"split ratio must lie in (0, 1), got {ratio}")
    perm = np.random.default_rng(seed).permutation(len(samples))
    n_train = int(round(ratio * len(samples)))
    return DatasetSplit([samples[i] for i in perm[:n_train]],
                        [samples[i] for i in perm[n_train:]], ratio, seed)


def build_dataset(geom: ArrayGeometry, spans: Spans = Spans(), n_users: int = 3,
                  n_frames: int = 1000, seed: int = 0, fspl_mode: FsplMode = FsplMode.NORMALIZED,
                  snr_db=TRAIN_SNR_RANGE, ratio: float = 0.75,
                  range_scheme: str = "uniform") -> DatasetSplit:
    """Frames, samples and split in one call, all derived from ``seed``."""
    frames = generate_frames(spans, n_users, n_frames, seed, range_scheme)
    samples = frames_to_samples(frames, geom, snr_db, fspl_mode, seed + 1)
    ds = split(samples, ratio, seed + 2)
    ds.geometry, ds.spans, ds.fspl_mode, ds.frame_seed = geom, spans, FsplMode(fspl_mode), seed
    return ds


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Array view of a list of samples for vectorised training and evaluation."""

    inputs: np.ndarray  # (B, 2, N)
    channels: np.ndarray  # (B, K, N), served user first
    sigma2: np.ndarray  # (B,)
    tx_power: np.ndarray  # (B,)

    @classmethod
    def from_samples(cls, samples: Sequence[TrainingSample]) -> "SampleBatch":
        if not samples:
            raise ConfigurationError("empty batch")
        return cls(np.stack([s.input for s in samples]),
                   np.stack([s.channels for s in samples]),
                   np.array([s.noise.sigma2 for s in samples]),
                   np.array([s.noise.tx_power for s in samples]))

    def __len__(self):
        return len(self.inputs)

    def take(self, idx) -> "SampleBatch":
        return SampleBatch(self.inputs[idx], self.channels[idx], self.sigma2[idx], self.tx_power[idx])


def export_locations_csv(frames: Sequence[ScenarioFrame], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "user", "range_m", "angle_rad"])
        for frame in frames:
            for k, loc in enumerate(frame.users):
                writer.writerow([frame.frame_index, k, repr(loc.range_m), repr(loc.angle_rad)])


def _pack(samples: Sequence[TrainingSample], n_users: int, n: int) -> bytes:
    s = len(samples)
    locs = np.zeros((s, n_users, 2))
    coeffs = np.zeros((s, n_users, n, 2))
    betas = np.zeros((s, n_users))
    noise = np.zeros((s, 4))
    ids = np.zeros((s, 2))
    for i, smp in enumerate(samples):
        chans = (smp.target_channel,) + tuple(smp.interferer_channels)
        if len(chans) != n_users:
            raise ConfigurationError("samples disagree in user count")
        for k, c in enumerate(chans):
            locs[i, k] = (c.location.range_m, c.location.angle_rad)
            coeffs[i, k, :, 0] = c.coefficients.real
            coeffs[i, k, :, 1] = c.coefficients.imag
            betas[i, k] = c.beta
        noise[i] = (smp.noise.snr_db, smp.noise.sigma2, smp.noise.reference_range_m, smp.noise.tx_power)
        ids[i] = smp.ids
    return b"".join(a.astype("<f8").tobytes() for a in (locs, coeffs, betas, noise, ids))


def _split_floats(s, n_users, n):
    return s * (n_users * 2 + n_users * n * 2 + n_users + 4 + 2)


def _unpack(buf: bytes, s: int, n_users: int, n: int, fspl_mode: FsplMode) -> list[TrainingSample]:
    flat = np.frombuffer(buf, dtype="<f8").astype(float)
    sizes = [s * n_users * 2, s * n_users * n * 2, s * n_users, s * 4, s * 2]
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    locs = parts[0].reshape(s, n_users, 2)
    coeffs = parts[1].reshape(s, n_users, n, 2)
    betas = parts[2].reshape(s, n_users)
    noise = parts[3].reshape(s, 4)
    ids = parts[4].reshape(s, 2)
    out = []
    for i in range(s):
        chans = [ChannelVector(coeffs[i, k, :, 0] + 1j * coeffs[i, k, :, 1],
                               PolarLocation(float(locs[i, k, 0]), float(locs[i, k, 1])),
                               fspl_mode, float(betas[i, k])) for k in range(n_users)]
        nm = NoiseModel(float(noise[i, 0]), float(noise[i, 1]), float(noise[i, 2]), float(noise[i, 3]))
        out.append(TrainingSample(realify(chans[0]), chans[0], tuple(chans[1:]), nm,
                                  (int(ids[i, 0]), int(ids[i, 1]))))
    return out


def _n_users(ds: DatasetSplit) -> int:
    for s in ds.train + ds.test:
        return 1 + len(s.interferer_channels)
    return 0


def save_dataset(ds: DatasetSplit, path) -> None:
    if ds.geometry is None:
        raise ConfigurationError("dataset has no geometry attached")
    geom = ds.geometry
    n_users = _n_users(ds)
    payload = (_pack(ds.train, n_users, geom.n_antennas)
               + _pack(ds.test, n_users, geom.n_antennas))
    header = {
        "format_version": FORMAT_VERSION,
        "geometry": {"n_antennas": geom.n_antennas, "carrier_hz": geom.carrier_hz,
                     "spacing_m": geom.spacing_m},
        "spans": {"angle_span": list(ds.spans.angle_span), "range_span": list(ds.spans.range_span)},
        "fspl_mode": FsplMode(ds.fspl_mode).value,
        "frame_seed": ds.frame_seed,
        "split_seed": ds.seed,
        "ratio": ds.ratio,
        "n_users": n_users,
        "counts": {"train": len(ds.train), "test": len(ds.test)},
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", len(head)) + head + payload)
    tmp.replace(path)


def read_dataset_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh)


def _read_header(fh) -> dict:
    magic = fh.read(len(MAGIC))
    if magic != MAGIC:
        raise DatasetFormatError("not a dataset file (bad magic)")
    raw = fh.read(4)
    if len(raw) != 4:
        raise DatasetFormatError("truncated header")
    (n,) = struct.unpack("<I", raw)
    head = fh.read(n)
    if len(head) != n:
        raise DatasetFormatError("truncated header")
    try:
        header = json.loads(head)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"corrupt header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported format version {header.get('format_version')!r}")
    return header


def load_dataset(path) -> DatasetSplit:
    with open(path, "rb") as fh:
        header = _read_header(fh)
        payload = fh.read()
    try:
        g = header["geometry"]
        geom = ArrayGeometry(int(g["n_antennas"]), float(g["carrier_hz"]), float(g["spacing_m"]))
        n_users = int(header["n_users"])
        n_train, n_test = int(header["counts"]["train"]), int(header["counts"]["test"])
        fspl_mode = FsplMode(header["fspl_mode"])
        expected = header["payload_bytes"]
        digest = header["payload_sha256"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"corrupt header: {exc}") from None
    if len(payload) != expected:
        raise DatasetFormatError(f"payload is {len(payload)} bytes, header says {expected}")
    if hashlib.sha256(payload).hexdigest() != digest:
        raise DatasetFormatError("payload checksum mismatch")
    n = geom.n_antennas
    cut = _split_floats(n_train, n_users, n) * 8
    if cut + _split_floats(n_test, n_users, n) * 8 != len(payload):
        raise DatasetFormatError("payload size inconsistent with split counts")
    spans = Spans(tuple(header["spans"]["angle_span"]), tuple(header["spans"]["range_span"]))
    return DatasetSplit(_unpack(payload[:cut], n_train, n_users, n, fspl_mode),
                        _unpack(payload[cut:], n_test, n_users, n, fspl_mode),
                        header["ratio"], header["split_seed"], geom, spans, fspl_mode,
                        header["frame_seed"])
