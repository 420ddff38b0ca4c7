"""Sweeps over one axis, evaluating every scheme on identical scenario sets."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..channel import ArrayGeometry, FsplMode, PolarLocation, batch_rates, matched_filter_bound
from ..codebook import HierarchySpec, PolarGrid
from ..errors import ConfigurationError
from ..nn.network import NetworkConfig
from ..nn.train import TrainConfig, infer_batch, load_checkpoint, train
from ..scenario import (SampleBatch, ScenarioFrame, Spans, build_dataset, frames_to_samples,
                        generate_frames)
from ..search import exhaustive_search, ff_hierarchical_search, nf_hierarchical_search
from .config import AXIS_UNITS, ExperimentConfig

log = logging.getLogger(__name__)

CSV_HEADER = ("axis", "scheme", "mean_rate", "std_rate", "overhead", "n")
SEED_STRIDE = 7919


@dataclass(frozen=True)
class SweepRow:
    axis: float
    scheme: str
    mean_rate: float
    std_rate: float
    overhead: int
    n: int


@dataclass
class SweepResult:
    axis: str
    rows: list[SweepRow]
    point_seeds: list[int]
    training: list[dict] = field(default_factory=list)

    def series(self, scheme: str) -> tuple[np.ndarray, np.ndarray]:
        pts = [(r.axis, r.mean_rate) for r in self.rows if r.scheme == scheme]
        return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])

    def table(self) -> dict[tuple[float, str], SweepRow]:
        return {(r.axis, r.scheme): r for r in self.rows}


# geometry and scenarios ----------------------------------------------------

def point_geometry(config: ExperimentConfig, value: float) -> ArrayGeometry:
    base = config.base_geometry()
    if config.axis == "carrier":
        # N fixed, half-wavelength spacing at each carrier: the aperture shrinks with f
        return ArrayGeometry(base.n_antennas, value * 1e9)
    if config.axis == "antennas":
        return ArrayGeometry(int(value), base.carrier_hz, config.spacing_m)
    return base


def point_fspl(config: ExperimentConfig) -> FsplMode:
    return FsplMode.PAPER_FSPL if config.axis == "carrier" else config.fspl


def point_seed(config: ExperimentConfig, index: int) -> int:
    return config.seed + SEED_STRIDE * (index + 1)


def point_scenarios(config: ExperimentConfig, index: int, value: float):
    """Evaluation samples for one axis point; user 0 of every drop is served.

    On the distance and angle axes the served user is pinned to the axis value
    and the other users are drawn over the full spans.
    """
    geom = point_geometry(config, value)
    spans = Spans(config.angle_span_rad, config.range_span_m)
    seed = point_seed(config, index)
    frames = generate_frames(spans, config.n_users, config.eval_frames, seed)
    if config.axis in ("distance", "angle"):
        pinned = []
        for f in frames:
            u = f.users[0]
            u = (PolarLocation(value, u.angle_rad) if config.axis == "distance"
                 else PolarLocation(u.range_m, math.radians(value)))
            pinned.append(ScenarioFrame((u,) + f.users[1:], f.frame_index))
        frames = pinned
    snr = value if config.axis == "snr" else config.snr_db
    samples = frames_to_samples(frames, geom, snr, point_fspl(config), seed + 1)
    return geom, [s for s in samples if s.ids[1] == 0]


# the learned scheme ---------------------------------------------------------

def _geom_dict(geom: ArrayGeometry) -> dict:
    return {"n_antennas": geom.n_antennas, "carrier_hz": geom.carrier_hz, "spacing_m": geom.spacing_m}


def _same_geometry(a: dict, b: dict) -> bool:
    return (int(a["n_antennas"]) == int(b["n_antennas"])
            and math.isclose(a["carrier_hz"], b["carrier_hz"], rel_tol=1e-12)
            and math.isclose(a["spacing_m"], b["spacing_m"], rel_tol=1e-12))


def check_checkpoint_geometry(meta: dict, geom: ArrayGeometry, path) -> None:
    stored = meta.get("extra", {}).get("geometry")
    if stored is None:
        if meta["network_config"]["n_antennas"] != geom.n_antennas:
            raise ConfigurationError(f"checkpoint {path} is for N={meta['network_config']['n_antennas']}, "
                                     f"sweep needs N={geom.n_antennas}")
        return
    if not _same_geometry(stored, _geom_dict(geom)):
        raise ConfigurationError(f"checkpoint {path} was trained for geometry {stored}, "
                                 f"sweep point needs {_geom_dict(geom)}")


def training_setup(config: ExperimentConfig, geom: ArrayGeometry) -> tuple[NetworkConfig, TrainConfig]:
    epochs = config.antenna_epochs if config.axis == "antennas" else config.epochs
    net_cfg = NetworkConfig(geom.n_antennas, config.widths, config.tanh_head, seed=config.seed)
    return net_cfg, TrainConfig(lr=config.lr, batch_size=config.batch_size, epochs=epochs,
                                seed=config.seed)


def ensure_checkpoint(config: ExperimentConfig, geom: ArrayGeometry, cache_dir: Path) -> tuple[Path, dict]:
    """Path of a network for ``geom``: the configured checkpoint, a cached one, or a new run."""
    if config.checkpoint:
        path = Path(config.checkpoint)
        _, meta = load_checkpoint(path)
        check_checkpoint_geometry(meta, geom, path)
        return path, {"checkpoint": str(path), "trained": False, "epochs": 0, "batches": 0}
    net_cfg, hyper = training_setup(config, geom)
    train_key = {"network": net_cfg.to_dict(), "train": asdict(hyper), "frames": config.train_frames,
                 "users": config.n_users, "fspl_mode": point_fspl(config).value,
                 "spans": [list(config.angle_span_deg), list(config.range_span_m)]}
    tag = hashlib.sha256(json.dumps([_geom_dict(geom), train_key], sort_keys=True).encode()).hexdigest()[:12]
    path = cache_dir / f"learned_N{geom.n_antennas}_{tag}.npz"
    spans = Spans(config.angle_span_rad, config.range_span_m)
    split = build_dataset(geom, spans, config.n_users, config.train_frames, config.seed, point_fspl(config))
    batches = sum(1 for s in range(0, len(split.train), hyper.batch_size)
                  if len(split.train) - s >= 2) * hyper.epochs
    info = {"checkpoint": str(path), "epochs": hyper.epochs, "batches": batches}
    if path.exists():
        return path, dict(info, trained=False)
    cache_dir.mkdir(parents=True, exist_ok=True)
    log.info("training network for N=%d, f=%.3g Hz (%d epochs)", geom.n_antennas, geom.carrier_hz, hyper.epochs)
    train(split, net_cfg, hyper, checkpoint_path=path)
    return path, dict(info, trained=True)


# evaluation -----------------------------------------------------------------

def _rates(config: ExperimentConfig, scheme: str, geom, samples, checkpoint):
    spans = (config.angle_span_rad, config.range_span_m)
    if scheme == "matched-filter-bound":
        return np.array([matched_filter_bound(s.target_channel, s.noise) for s in samples]), 0
    if scheme == "learned":
        net, _ = load_checkpoint(checkpoint)
        batch = SampleBatch.from_samples(samples)
        w = infer_batch(batch.inputs, net)
        return batch_rates(w, batch.channels, batch.sigma2, batch.tx_power), 0
    if scheme in ("exhaustive-256", "exhaustive-unlimited"):
        grid = PolarGrid.uniform(*config.exhaustive_grid, *spans)
        budget = 256 if scheme == "exhaustive-256" else None
        res = [exhaustive_search(geom, s, grid, budget) for s in samples]
    elif scheme == "nf-hier":
        res = [nf_hierarchical_search(geom, s, HierarchySpec(), *spans) for s in samples]
    elif scheme == "ff-hier":
        res = [ff_hierarchical_search(geom, s, angle_span=spans[0]) for s in samples]
    else:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    return np.array([r.score for r in res]), res[0].overhead


def evaluate_point(config: ExperimentConfig, index: int, value: float, checkpoint=None) -> list[SweepRow]:
    geom, samples = point_scenarios(config, index, value)
    rows = []
    for scheme in config.schemes:
        rates, overhead = _rates(config, scheme, geom, samples, checkpoint)
        rows.append(SweepRow(float(value), scheme, float(np.mean(rates)), float(np.std(rates)),
                             int(overhead), len(rates)))
    return rows


def run_sweep(config: ExperimentConfig, cache_dir=None) -> SweepResult:
    """Evaluate every scheme at every axis point.

    Each point draws its scenarios from ``seed + 7919 * (index + 1)``, so the
    schemes see identical inputs and results do not depend on ``workers``.
    """
    cache_dir = Path(cache_dir) if cache_dir is not None else config.output_path() / "checkpoints"
    checkpoints, training = [None] * len(config.grid), []
    if "learned" in config.schemes:
        # training runs one at a time, before any evaluation
        seen = {}
        for i, value in enumerate(config.grid):
            geom = point_geometry(config, value)
            key = json.dumps(_geom_dict(geom), sort_keys=True)
            if key not in seen:
                path, info = ensure_checkpoint(config, geom, cache_dir)
                seen[key] = path
                training.append(dict(info, geometry=_geom_dict(geom)))
            checkpoints[i] = seen[key]
    jobs = [(config, i, v, checkpoints[i]) for i, v in enumerate(config.grid)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_point = list(pool.map(evaluate_point, *zip(*jobs)))
    else:
        per_point = [evaluate_point(*job) for job in jobs]
    rows = [row for point in per_point for row in point]
    return SweepResult(config.axis, rows, [point_seed(config, i) for i in range(len(config.grid))],
                       training)


# outputs --------------------------------------------------------------------

def sweep_csv_text(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in result.rows:
        writer.writerow([repr(r.axis), r.scheme, repr(r.mean_rate), repr(r.std_rate), r.overhead, r.n])
    return buf.getvalue()


def overhead_report(result: SweepResult) -> list[dict]:
    """Codeword evaluations per decision and in total, per scheme.

    The learned scheme spends no pilots online; its one-time cost is reported
    as training epochs and mini-batches.
    """
    out = {}
    for r in result.rows:
        entry = out.setdefault(r.scheme, {"scheme": r.scheme, "per_decision": r.overhead,
                                          "decisions": 0, "total": 0,
                                          "training_epochs": 0, "training_batches": 0})
        entry["per_decision"] = max(entry["per_decision"], r.overhead)
        entry["decisions"] += r.n
        entry["total"] += r.overhead * r.n
    if "learned" in out:
        out["learned"]["training_epochs"] = sum(t["epochs"] for t in result.training)
        out["learned"]["training_batches"] = sum(t["batches"] for t in result.training)
    return list(out.values())


def overhead_csv_text(report: list[dict]) -> str:
    buf = io.StringIO()
    keys = ["scheme", "per_decision", "decisions", "total", "training_epochs", "training_batches"]
    writer = csv.DictWriter(buf, keys, lineterminator="\n")
    writer.writeheader()
    writer.writerows(report)
    return buf.getvalue()


def plot_sweep(result: SweepResult, config: ExperimentConfig, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for scheme in config.schemes:
        x, y = result.series(scheme)
        ax.plot(x, y, marker="o", ms=3, label=scheme)
    ax.set_xlabel(AXIS_UNITS[config.axis])
    ax.set_ylabel("mean rate (bit/s/Hz)")
    ax.set_title(config.name)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def emit_outputs(result: SweepResult, config: ExperimentConfig, out_dir=None) -> dict[str, Path]:
    """Write ``sweep.csv`` (first), ``overhead.csv``, ``manifest.json`` and ``<name>.png``."""
    if not result.rows:
        raise ConfigurationError("empty sweep result")
    out = Path(out_dir) if out_dir is not None else config.output_path()
    out.mkdir(parents=True, exist_ok=True)
    files = {"sweep": out / "sweep.csv", "overhead": out / "overhead.csv",
             "manifest": out / "manifest.json", "plot": out / f"{config.name}.png"}
    sweep_text = sweep_csv_text(result)
    files["sweep"].write_text(sweep_text)
    report = overhead_report(result)
    files["overhead"].write_text(overhead_csv_text(report))
    manifest = {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "argv": sys.argv[1:],
        "config": config.to_dict(),
        "config_source": config.source,
        "axis": result.axis,
        "point_seeds": result.point_seeds,
        "training": result.training,
        "overhead": report,
        "sweep_csv_sha256": hashlib.sha256(sweep_text.encode()).hexdigest(),
    }
    files["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    plot_sweep(result, config, files["plot"])
    return files
