"""``bench`` command line.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure
(non-finite training state or a failed gradient check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..channel import FsplMode
from ..errors import ConfigurationError, DatasetFormatError, DimensionError, TrainingError
from ..nn.gradcheck import gradient_check
from ..nn.train import save_checkpoint, train
from ..scenario import Spans, build_dataset, load_dataset, read_dataset_header, save_dataset
from .config import load_config
from .sweep import emit_outputs, overhead_report, run_sweep, training_setup

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
log = logging.getLogger("nfbeam.bench")


def _writable_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"output directory {path} is not writable: {exc}") from None
    return path


def cmd_run(args) -> int:
    config = load_config(args.config, **({"workers": args.workers} if args.workers else {}))
    out = _writable_dir(config.output_path())
    result = run_sweep(config)
    files = emit_outputs(result, config, out)
    for row in overhead_report(result):
        log.info("%-22s %6d evaluations per decision", row["scheme"], row["per_decision"])
    print(files["sweep"])
    return EXIT_OK


def cmd_train(args) -> int:
    config = load_config(args.config)
    out = _writable_dir(config.output_path())
    geom = config.base_geometry()
    if args.dataset:
        split = load_dataset(args.dataset)
        geom = split.geometry
    else:
        split = build_dataset(geom, Spans(config.angle_span_rad, config.range_span_m), config.n_users,
                              config.train_frames, config.seed, config.fspl)
    net_cfg, hyper = training_setup(config, geom)
    path = Path(args.out) if args.out else out / "checkpoint.npz"
    net, history = train(split, net_cfg, hyper, checkpoint_path=path)
    history.to_csv(path.with_suffix(".history.csv"))
    log.info("final train loss %.4f, validation loss %.4f", history.train_loss[-1], history.val_loss[-1])
    print(path)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = gradient_check(seed=args.seed)
    for name, err in report.max_rel_error.items():
        print(f"{name:24s} {err:.3e}")
    ok = report.passed(args.tol)
    print(f"{'PASS' if ok else 'FAIL'} worst {report.worst:.3e} over {report.checked} entries (tol {args.tol:g})")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_dataset_gen(args) -> int:
    config = load_config(args.config)
    geom = config.base_geometry()
    split = build_dataset(geom, Spans(config.angle_span_rad, config.range_span_m), config.n_users,
                          config.train_frames, config.seed, FsplMode(config.fspl_mode))
    save_dataset(split, args.out)
    print(args.out)
    return EXIT_OK


def cmd_dataset_inspect(args) -> int:
    header = read_dataset_header(args.path)
    if args.verify:
        load_dataset(args.path)
        header["verified"] = True
    print(json.dumps(header, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="Near-field beam training benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a sweep and write sweep.csv, manifest.json and a plot")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, help="override the config's worker count")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("train", help="train the beamformer and save a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", help="dataset file to train on instead of generating one")
    p.add_argument("--out", help="checkpoint path (default <output_dir>/checkpoint.npz)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference check of the toy network")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("dataset", help="generate or inspect dataset files")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    g = dsub.add_parser("gen")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_dataset_gen)
    i = dsub.add_parser("inspect")
    i.add_argument("path")
    i.add_argument("--verify", action="store_true", help="also load and checksum the payload")
    i.set_defaults(func=cmd_dataset_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TrainingError as exc:
        print(f"bench: numeric failure: {exc}", file=sys.stderr)
        if exc.checkpoint:
            print(f"bench: last good state saved to {exc.checkpoint}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigurationError, DimensionError, DatasetFormatError, FileNotFoundError) as exc:
        print(f"bench: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
