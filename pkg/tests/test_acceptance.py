"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines (they are
also shown in the pytest summary of failing tests).  Criteria 6, 7 and 9
share one desk-scale training run of about four minutes, as does the
inference example.
"""

import math
import time
from types import SimpleNamespace


import numpy as np
import pytest
from hypothesis import given, settings, strategies as st


from nfbeam.bench.cli import main as bench_main
from nfbeam.bench.config import parse_config
from nfbeam.bench.sweep import run_sweep
from nfbeam.channel import (ArrayGeometry, PolarLocation, achievable_rate, batch_rates,
                            far_field_steering, make_noise, matched_filter_bound,
                            near_field_channel, near_field_steering, rayleigh_distance)
from nfbeam.codebook import HierarchySpec, PolarGrid
from nfbeam.nn import BeamformerNet, NetworkConfig, TrainConfig, infer, infer_batch, train
from nfbeam.nn.gradcheck import gradient_check
from nfbeam.scenario import SampleBatch, TrainingSample, build_dataset
from nfbeam.search import exhaustive_search, ff_hierarchical_search, nf_hierarchical_search


def verdict(capsys, number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


# 1 ---------------------------------------------------------------------------

def test_criterion_01_rayleigh_table(capsys):
    rows = [(50e6, "0.09"), (1e9, "1.7"), (5e9, "8.3"), (28e9, "47"), (60e9, "100")]
    t0 = time.perf_counter()
    got = [rayleigh_distance(0.5, f) for f, _ in rows]
    elapsed = time.perf_counter() - t0
    shown = []
    for value, (_, printed) in zip(got, rows):
        decimals = len(printed.split(".")[1]) if "." in printed else 0
        shown.append(f"{value:.{decimals}f}")
    ok = shown == [p for _, p in rows] and elapsed < 1.0
    detail = ", ".join(f"{s} vs {p}" for s, (_, p) in zip(shown, rows))
    verdict(capsys, 1, ok, f"{detail}; {elapsed * 1e3:.2f} ms")


# 2 ---------------------------------------------------------------------------

def test_criterion_02_far_field_limit(capsys):
    geom = ArrayGeometry(256, 50e9)
    r = 1e4 * geom.aperture_m
    gap = 0.0
    for a in np.radians(np.linspace(-60, 60, 25)):
        near = near_field_steering(geom, PolarLocation(r, float(a)))
        gap = max(gap, np.max(np.abs(np.angle(near * np.conj(far_field_steering(geom, float(a)))))))
    verdict(capsys, 2, gap < 1e-3,
            f"max phase gap {gap:.3e} rad over angles -60..60 deg at r = {r:.0f} m (need < 1e-3)")


# 3 ---------------------------------------------------------------------------

def test_criterion_03_oracle_equivalence(capsys):
    geom = ArrayGeometry(64, 50e9)
    grid = PolarGrid.uniform(121, 40)
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    ratios = []
    for _ in range(100):
        loc = PolarLocation(float(grid.ranges_m[rng.integers(40)]), float(grid.angles_rad[rng.integers(121)]))
        sc = SimpleNamespace(target_channel=near_field_channel(geom, loc), interferer_channels=(),
                             noise=make_noise(10.0, geom))
        res = exhaustive_search(geom, sc, grid)
        ratios.append(res.score / matched_filter_bound(sc.target_channel, sc.noise))
    elapsed = time.perf_counter() - t0
    worst = min(ratios)
    verdict(capsys, 3, worst >= 0.99 and elapsed < 60,
            f"worst rate / bound {worst:.6f} over 100 users (need >= 0.99); {elapsed:.1f} s")


# 4 ---------------------------------------------------------------------------

def test_criterion_04_gradient_check(capsys):
    t0 = time.perf_counter()
    report = gradient_check()
    elapsed = time.perf_counter() - t0
    verdict(capsys, 4, report.passed(1e-4) and elapsed < 60,
            f"worst relative error {report.worst:.2e} over {report.checked} entries; {elapsed:.1f} s")


# 5 ---------------------------------------------------------------------------

NETS = {n: BeamformerNet(NetworkConfig(n, seed=1)) for n in (8, 64, 256)}


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(sorted(NETS)), st.integers(1, 5), st.integers(0, 2**31 - 1),
       st.floats(1e-3, 1e3))
def _shape_and_modulus(n, batch, seed, scale):
    net = NETS[n]
    x = np.random.default_rng(seed).standard_normal((batch, 2, n)) * scale
    assert net.forward_features(x).shape == (batch, 1, 2, n)
    w = net.beam(x)
    assert w.shape == (batch, n)
    assert np.max(np.abs(np.abs(w) - 1.0)) <= 1e-12


def test_criterion_05_shape_and_feasibility(capsys):
    try:
        _shape_and_modulus()
        ok, detail = True, "B x 1 x 2 x N and |w_n| = 1 within 1e-12 for N in {8, 64, 256}"
    except AssertionError as exc:
        ok, detail = False, f"counterexample: {exc}"
    verdict(capsys, 5, ok, detail)


# desk-scale training shared by 6, 7 and 9 -------------------------------------

DESK = dict(n_antennas=64, n_users=3, frames=500, epochs=200)
DESK_HYPER = TrainConfig(epochs=DESK["epochs"])  # library defaults otherwise


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    geom = ArrayGeometry(DESK["n_antennas"], 50e9)
    ds = build_dataset(geom, n_users=DESK["n_users"], n_frames=DESK["frames"], seed=0)
    path = tmp_path_factory.mktemp("desk") / "learned.npz"
    net, hist = train(ds, NetworkConfig(geom.n_antennas), DESK_HYPER, checkpoint_path=path)
    _, hist_plain = train(ds, NetworkConfig(geom.n_antennas, tanh_head=False), DESK_HYPER)
    return SimpleNamespace(geom=geom, ds=ds, net=net, hist=hist, hist_plain=hist_plain,
                           checkpoint=path, rates={})


def split_rates(desk, snr):
    """Mean rate of every scheme on the test split re-noised to ``snr`` dB (cached)."""
    if snr in desk.rates:
        return desk.rates[snr]
    geom, spans = desk.geom, desk.ds.spans
    noise = make_noise(snr, geom)
    samples = [TrainingSample(s.input, s.target_channel, s.interferer_channels, noise, s.ids)
               for s in desk.ds.test]
    batch = SampleBatch.from_samples(samples)
    sp = (spans.angle_span, spans.range_span)
    grid = PolarGrid.uniform(121, 40, *sp)
    out = {
        "learned": batch_rates(infer_batch(batch.inputs, desk.net), batch.channels, batch.sigma2).mean(),
        "nf-hier": np.mean([nf_hierarchical_search(geom, s, HierarchySpec(), *sp).score for s in samples]),
        "ff-hier": np.mean([ff_hierarchical_search(geom, s, angle_span=sp[0]).score for s in samples]),
        "exhaustive-256": np.mean([exhaustive_search(geom, s, grid, 256).score for s in samples]),
        "exhaustive-unlimited": np.mean([exhaustive_search(geom, s, grid).score for s in samples]),
    }
    desk.rates[snr] = out
    return out


def test_criterion_06_desk_training(desk, capsys):
    loss = np.array(desk.hist.train_loss)
    smooth = np.convolve(loss, np.ones(5) / 5, mode="valid")[:46]  # trailing mean, epochs 5-50
    a = bool(np.all(np.diff(smooth) < 0))
    val, val_plain = desk.hist.val_loss[-1], desk.hist_plain.val_loss[-1]
    b = val < val_plain
    r = split_rates(desk, 10.0)
    learned, e256, unl = r["learned"], r["exhaustive-256"], r["exhaustive-unlimited"]
    c = learned >= e256 and learned >= 0.85 * unl
    detail = (f"(a) smoothed loss decreasing over 50 epochs: {a}; "
              f"(b) val loss tanh {val:.3f} vs plain {val_plain:.3f}: {b}; "
              f"(c) learned {learned:.3f} vs exhaustive-256 {e256:.3f} and 0.85 x unlimited "
              f"{0.85 * unl:.3f}: {c}")
    verdict(capsys, 6, a and b and c, detail)


def test_criterion_07_ordering_at_20db(desk, capsys):
    r = split_rates(desk, 20.0)
    order = ["learned", "nf-hier", "ff-hier", "exhaustive-256"]
    ok = all(r[x] >= r[y] for x, y in zip(order, order[1:]))
    margins = ", ".join(f"{x} {r[x]:.3f}" for x in order)
    gains = ", ".join(f"{100 * (r['learned'] / r[x] - 1):+.0f}% vs {x}" for x in order[1:])
    verdict(capsys, 7, ok, f"{margins} (learned {gains})")


# 8 ---------------------------------------------------------------------------

def test_criterion_08_collinear_discrimination(capsys):
    geom = ArrayGeometry(256, 50e9)
    focus, behind = PolarLocation(10.0, 0.0), PolarLocation(30.0, 0.0)

    def gain_db(w, loc):
        return 20 * math.log10(abs(np.vdot(w, near_field_steering(geom, loc))))

    w_nf = near_field_steering(geom, focus)
    w_ff = far_field_steering(geom, 0.0)
    nf_drop = gain_db(w_nf, focus) - gain_db(w_nf, behind)
    ff_diff = abs(gain_db(w_ff, focus) - gain_db(w_ff, behind))
    verdict(capsys, 8, nf_drop >= 3 and ff_diff < 0.5,
            f"near-field beam drop {nf_drop:.2f} dB (need >= 3); far-field beam difference "
            f"{ff_diff:.2f} dB (need < 0.5)")


# 9 ---------------------------------------------------------------------------

def test_criterion_09_distance_trend(desk, capsys, tmp_path):
    config = parse_config(
        "axis = distance\ngrid = 5:50:5\nschemes = learned, matched-filter-bound\n"
        f"fspl_mode = paper_fspl\nn_antennas = {DESK['n_antennas']}\nn_users = {DESK['n_users']}\n"
        f"checkpoint = {desk.checkpoint}")
    res = run_sweep(config, tmp_path)
    r, bound = res.series("matched-filter-bound")
    _, learned = res.series("learned")
    monotone = bool(np.all(np.diff(bound) <= 0))
    ratio = learned / bound
    close = bool(np.all(ratio >= 0.85))
    detail = (f"bound non-increasing: {monotone}; learned / bound over r = 5..50 m: "
              + " ".join(f"{x:.2f}" for x in ratio) + f" (need >= 0.85 everywhere): {close}")
    verdict(capsys, 9, monotone and close, detail)


def test_infer_lone_user_example(desk, capsys):
    """Not a numbered criterion: inference on held-out on-grid lone users vs the bound."""
    geom, spans = desk.geom, desk.ds.spans
    grid = PolarGrid.uniform(121, 40, spans.angle_span, spans.range_span)
    rng = np.random.default_rng(11)
    noise = make_noise(10.0, geom)
    ratios = []
    for _ in range(50):
        loc = PolarLocation(float(grid.ranges_m[rng.integers(40)]), float(grid.angles_rad[rng.integers(121)]))
        h = near_field_channel(geom, loc)
        w = infer(h, desk.net)
        ratios.append(achievable_rate(w, h, (), noise) / matched_filter_bound(h, noise))
    mean = float(np.mean(ratios))
    line = (f"{'PASS' if mean >= 0.85 else 'FAIL'} infer example: lone on-grid users at 10 dB reach "
            f"{mean:.3f} of the bound on average (min {min(ratios):.3f}, need >= 0.85)")
    with capsys.disabled():
        print("\n" + line)
    assert mean >= 0.85, line


# 10 --------------------------------------------------------------------------

def test_criterion_10_reproducible_run(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("NFBEAM_OUTPUT_ROOT", str(tmp_path))
    body = ("axis = snr\ngrid = -20:20:10\nschemes = nf-hier, ff-hier, exhaustive-256, learned, "
            "matched-filter-bound\nn_antennas = 16\neval_frames = 20\ntrain_frames = 40\nepochs = 3\n"
            "batch_size = 32\n")
    outs = []
    for run in ("first", "second"):
        cfg = tmp_path / f"{run}.cfg"
        cfg.write_text(body + f"output_dir = {run}\n")
        assert bench_main(["run", "--config", str(cfg)]) == 0
        outs.append((tmp_path / run / "sweep.csv").read_bytes())
    verdict(capsys, 10, outs[0] == outs[1], f"two runs, {len(outs[0])} CSV bytes, identical: {outs[0] == outs[1]}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
