"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (lines are printed
even without ``-s``).
"""

import json
import time

import numpy as np
import pytest

from streamrev.cli import main
from streamrev.ctcdec import psd_decode, redecode_from, spike_align, spike_align_trace
from streamrev.encoder import EncoderConfig, EncoderState, Weights, forward_offline
from streamrev.harness import SessionConfig, naive_replay_oracle, run_session
from streamrev.masks import DynamicMaskSampler, MaskKind, MaskSpec, causal_mask, chunk_mask, revision_mask
from streamrev.scheduler import RevisionPolicy, plan, predicted_extra_frames

from .conftest import spike, stream
from .streams import random_stream, shifted_pair

A, B = 1, 2


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})")
        return ok

    return emit


def test_1_causal_streaming_equivalence(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(1, 6):
        rng = np.random.default_rng(seed)
        for L in (1, 2, 3):
            cfg = EncoderConfig(layers=L)
            weights = Weights.seeded(cfg, seed)
            for T in (1, 2, 7, 16, 64):
                feats = rng.standard_normal((T, cfg.d_in))
                st = EncoderState(cfg, weights)
                streamed = np.array([st.step(x) for x in feats])
                offline = forward_offline(feats, causal_mask(T), weights)
                worst = max(worst, float(np.abs(streamed - offline).max()))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-5 and elapsed < 30
    assert report(1, "causal streaming equivalence", ok, f"max diff {worst:.2e}, {elapsed:.1f} s")


def test_2_revision_equivalence(report):
    t0 = time.perf_counter()
    worst, mismatches, cells = 0.0, 0, 0
    for sigma, nu in [(50, 20), (50, 50), (4, 2), (10, 1)]:
        for eta in (0, 1):
            for T in (60, 100, 120):
                feats = np.random.default_rng(1000 + T + sigma + nu).standard_normal((T, 16))
                cfg = SessionConfig(policy=RevisionPolicy(sigma, nu, eta), features=feats, seed=T + nu)
                res = run_session(cfg)
                post, tokens = naive_replay_oracle(cfg)
                worst = max(worst, float(np.abs(res.posteriors - post).max()))
                mismatches += res.transcript != tokens
                cells += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-5 and mismatches == 0 and elapsed < 60
    detail = f"{cells} cells, max diff {worst:.2e}, {mismatches} transcript mismatches, {elapsed:.1f} s"
    assert report(2, "revision equivalence vs naive replay", ok, detail)


def test_3_cost_model_exactness(report):
    t0 = time.perf_counter()
    checked = failures = 0
    for nu in (1, 2, 4, 5, 10, 20, 25, 50):
        for T in range(nu, 201, nu):
            for sigma in range(nu, T + 1):
                for eta in (0, 1):
                    policy = RevisionPolicy(sigma, nu, eta)
                    measured = sum(e.cost for e in plan(T, policy))
                    failures += measured != predicted_extra_frames(T, policy)
                    checked += 1
    spots = {(100, 50, 20, 0): 210, (100, 50, 20, 1): 260, (60, 50, 20, 0): 110}
    spot_ok = all(
        predicted_extra_frames(T, RevisionPolicy(s, n, e)) == v == sum(ev.cost for ev in plan(T, RevisionPolicy(s, n, e)))
        for (T, s, n, e), v in spots.items()
    )
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and spot_ok and elapsed < 5
    detail = f"{checked} configs, {failures} mismatches, spot values {'ok' if spot_ok else 'wrong'}, {elapsed:.1f} s"
    assert report(3, "cost model exactness", ok, detail)


def test_4_spike_alignment_suite(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    identical_ok = all(
        spike_align(s, s, theta) == len(s) + 1
        for s, theta in ((random_stream(rng, int(rng.integers(0, 60))), float(rng.random())) for _ in range(1000))
    )
    tagged_ok = (
        spike_align(stream([A, 0, B]), stream([A, 0, B]), 0.3) == 4
        and spike_align(stream([A, 0]), stream([B, 0]), 0.3) == 1
        and spike_align(stream([A, 0, B, 0]), stream([A, B, 0, 0]), 0.3) == 5
    )
    pairs = disagreements = 0
    while pairs < 1000:
        pair = shifted_pair(rng)
        if pair is None:
            continue
        old, new = pair
        tail = [spike(int(rng.integers(0, 6))) for _ in range(int(rng.integers(0, 3)))]
        al = spike_align_trace(old, new, 0.3)
        res = redecode_from(psd_decode(old, 0.3), al.tau, new + tail, 0.3, keep=al.i_stop, pairs=al.pairs)
        disagreements += res.hypothesis.tokens != psd_decode(new + tail, 0.3).tokens
        pairs += 1
    elapsed = time.perf_counter() - t0
    ok = identical_ok and tagged_ok and disagreements == 0 and elapsed < 10
    detail = (
        f"identical {'ok' if identical_ok else 'wrong'}, tagged {'ok' if tagged_ok else 'wrong'}, "
        f"{disagreements}/{pairs} oracle disagreements, {elapsed:.1f} s"
    )
    assert report(4, "spike alignment suite", ok, detail)


def test_5_causality(report):
    rng = np.random.default_rng(5)
    cfg = EncoderConfig()
    weights = Weights.seeded(cfg, 5)
    worst = 0.0
    for _ in range(100):
        T = int(rng.integers(2, 40))
        cut = int(rng.integers(1, T))
        feats = rng.standard_normal((T, cfg.d_in))
        other = feats.copy()
        other[cut:] = rng.standard_normal((T - cut, cfg.d_in)) * rng.uniform(0.1, 10)
        a, b = EncoderState(cfg, weights), EncoderState(cfg, weights)
        pa = np.array([a.step(x) for x in feats])
        pb = np.array([b.step(x) for x in other])
        worst = max(worst, float(np.abs(pa[:cut] - pb[:cut]).max()))
    ok = worst <= 1e-12
    assert report(5, "causality under suffix perturbation", ok, f"100 trials, max diff {worst:.2e}")


def test_6_mask_properties(report):
    contain = monotone = chunk_ok = True
    for T in range(1, 41):
        causal = causal_mask(T).dense()
        for nu in range(1, T + 1):
            prev = None
            for sigma in range(nu, T + 1):
                rev = revision_mask(T, sigma, nu)
                contain &= bool(np.all(rev.dense() >= causal))
                if prev is not None:
                    monotone &= bool(np.all(rev.ends >= prev))
                prev = rev.ends
        for c in range(1, T + 1):
            q = np.arange(T)
            chunk_ok &= bool(np.all(chunk_mask(T, c).ends == np.minimum((q // c + 1) * c, T) - 1))
    golden = revision_mask(6, 4, 2).ends.tolist()
    sampler = DynamicMaskSampler(0.3, MaskSpec(MaskKind.REVISION, 50, sigma=10, nu=4), seed=2023)
    ratio = sum(sampler.draw_is_causal() for _ in range(10000)) / 10000
    ok = contain and monotone and chunk_ok and golden == [3, 3, 5, 5, 5, 5] and abs(ratio - 0.3) <= 0.02
    detail = (
        f"containment {contain}, monotone {monotone}, chunks {chunk_ok}, golden {golden}, causal ratio {ratio:.4f}"
    )
    assert report(6, "mask properties", ok, detail)


def test_7_decoder_only_stability(report):
    rng = np.random.default_rng(7)
    results = []
    for T, sigma, nu in [(47, 10, 4), (121, 50, 20), (33, 6, 5)]:
        labels = rng.integers(0, 6, size=T)
        rows = np.full((T, 6), 0.02)
        rows[np.arange(T), labels] = 0.9
        # revised rows differ in value but keep every frame's top two
        revised = rows.copy()
        revised[np.arange(T), labels] = 0.88
        cfg = SessionConfig(
            policy=RevisionPolicy(sigma, nu, 0), posteriors=rows, revised_posteriors=revised, mode="revision"
        )
        res = run_session(cfg)
        events = [r for r in res.log if r.type == "revision"]
        results.append(
            res.metrics.stability == 0
            and len(events) == T // nu
            and all(r.tau == r.t_cal and r.redecoded == 1 for r in events)
            and res.metrics.redecoded_frames == len(events)
        )
    ok = all(results)
    assert report(7, "decoder-only stability", ok, f"{sum(results)}/{len(results)} sessions clean")


def test_8_cli_fixture_determinism(report, tmp_path, capsys):
    codes = [main(["run", "--fixture", "--out", str(tmp_path / d)]) for d in ("a", "b")]
    capsys.readouterr()
    same = {
        name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        for name in ("metrics.jsonl", "events.csv")
    }
    metrics = json.loads((tmp_path / "a" / "metrics.jsonl").read_text())
    ok = codes == [0, 0] and all(same.values())
    detail = f"exit codes {codes}, identical {same}, {metrics['revision_events']} revision events"
    assert report(8, "CLI fixture determinism", ok, detail)
