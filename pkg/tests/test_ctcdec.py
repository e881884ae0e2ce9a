import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamrev.ctcdec import (
    BLANK,
    NONE,
    NOT_FOUND,
    Hypothesis,
    TopTwo,
    dominant_label,
    effective_symbol,
    find_next,
    greedy_collapse,
    psd_decode,
    psd_step,
    redecode_from,
    spike_align,
    spike_align_trace,
    top_two,
)
from streamrev.errors import InvalidArgument

from .conftest import spike, stream
from .streams import random_stream, shifted_pair

A, B, C = 1, 2, 3


class TestTopTwo:
    def test_basic(self):
        assert top_two([0.1, 0.7, 0.2]) == TopTwo(1, 0.7, 2, 0.2)

    def test_uniform_tie_break(self):
        tt = top_two([0.25] * 4)
        assert (tt.l1, tt.l2) == (0, 1)

    def test_one_hot(self):
        assert top_two([0, 0, 1.0, 0]).p2 == 0

    def test_too_short(self):
        with pytest.raises(InvalidArgument):
            top_two([1.0])


class TestDominant:
    def test_clear_margin(self):
        assert dominant_label(TopTwo(A, 0.9, B, 0.05), 0.3) == A

    def test_narrow_margin(self):
        assert dominant_label(TopTwo(A, 0.5, B, 0.4), 0.3) == NONE

    def test_tie_boundary(self):
        tt = TopTwo(A, 0.4, B, 0.4)
        assert dominant_label(tt, 0.0) == A
        assert dominant_label(tt, 0.01) == NONE

    def test_zero_mass(self):
        assert dominant_label(TopTwo(A, 0.0, B, 0.0), 0.0) == NONE

    @settings(max_examples=300)
    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_raising_theta_only_removes(self, p, q, lo, hi):
        p1, p2 = max(p, q), min(p, q)
        lo, hi = min(lo, hi), max(lo, hi)
        tt = TopTwo(A, p1, B, p2)
        if dominant_label(tt, hi) != NONE:
            assert dominant_label(tt, lo) == A


class TestCollapse:
    @pytest.mark.parametrize(
        "labels,tokens",
        [([0, A, A, 0, B], [A, B]), ([A, 0, A], [A, A]), ([], []), ([A, A, B, B, 0, 0, B], [A, B, B])],
    )
    def test_greedy(self, labels, tokens):
        assert greedy_collapse(labels) == tokens


class TestPSD:
    def test_blank_dominant_skipped(self):
        hyp = Hypothesis()
        psd_step(hyp, spike(A), 0.3)
        before = list(hyp.tokens)
        _, skipped = psd_step(hyp, spike(BLANK), 0.3)
        assert skipped and hyp.tokens == before

    def test_separator_kept(self):
        assert psd_decode(stream([A, BLANK, A]), 0.3).tokens == [A, A]

    def test_repeat_collapsed(self):
        assert psd_decode(stream([A, A]), 0.3).tokens == [A]

    def test_non_dominant_blank_yields_runner_up(self):
        weak_blank = TopTwo(BLANK, 0.5, B, 0.45)
        assert effective_symbol(weak_blank, 0.3) == B
        hyp, skipped = psd_step(Hypothesis(), weak_blank, 0.3)
        assert not skipped and hyp.tokens == [B]

    def test_token_frames(self):
        hyp = psd_decode(stream([BLANK, A, A, BLANK, B]), 0.3)
        assert hyp.frames == [1, 4]

    @settings(max_examples=200)
    @given(st.integers(0, 10**6), st.floats(0, 1))
    def test_skip_iff_blank_dominant(self, seed, theta):
        hyp = Hypothesis()
        for tt in random_stream(np.random.default_rng(seed), 20):
            _, skipped = psd_step(hyp, tt, theta)
            assert skipped == (dominant_label(tt, theta) == BLANK)

    @settings(max_examples=200)
    @given(st.integers(0, 10**6), st.floats(0, 1))
    def test_equals_collapse_of_symbol_stream(self, seed, theta):
        s = random_stream(np.random.default_rng(seed), 30)
        assert psd_decode(s, theta).tokens == greedy_collapse([effective_symbol(tt, theta) for tt in s])


class TestSpikeAlign:
    def test_identical(self):
        s = stream([A, BLANK, B, B, BLANK])
        assert spike_align(s, s, 0.3) == 6

    def test_first_frame_differs(self):
        assert spike_align(stream([A, BLANK]), stream([B, BLANK]), 0.3) == 1

    def test_blank_shift_absorbed(self):
        old = stream([A, BLANK, B, BLANK])
        new = stream([A, B, BLANK, BLANK])
        assert spike_align(old, new, 0.3) == 5

    def test_shift_other_direction(self):
        old = stream([A, B, BLANK, BLANK])
        new = stream([A, BLANK, B, BLANK])
        al = spike_align_trace(old, new, 0.3)
        assert al.tau == 5 and al.i_stop == 4

    def test_trailing_label_forces_redecode(self):
        old = stream([A, BLANK, BLANK, B])
        new = stream([A, B, BLANK, C])
        al = spike_align_trace(old, new, 0.3)
        assert al.tau == 3
        res = redecode_from(psd_decode(old, 0.3), al.tau, new, 0.3, keep=al.i_stop, pairs=al.pairs)
        assert res.hypothesis.tokens == [A, B, C]

    def test_non_dominant_agreement(self):
        old = [TopTwo(A, 0.4, B, 0.35)]
        assert spike_align(old, [TopTwo(A, 0.42, B, 0.33)], 0.3) == 2
        assert spike_align(old, [TopTwo(A, 0.42, C, 0.33)], 0.3) == 1

    def test_mixed_dominance_same_top(self):
        assert spike_align([TopTwo(A, 0.4, B, 0.35)], [spike(A)], 0.3) == 1

    def test_weak_blank_matches_runner_up(self):
        old = [TopTwo(BLANK, 0.5, A, 0.45), spike(BLANK)]
        new = [spike(A), spike(BLANK)]
        assert spike_align(old, new, 0.3) == 3
        assert spike_align(new, old, 0.3) == 3

    def test_both_undominated_different_top(self):
        assert spike_align([TopTwo(A, 0.4, B, 0.35)], [TopTwo(B, 0.4, A, 0.35)], 0.3) == 1

    def test_empty(self):
        assert spike_align([], [], 0.3) == 1

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgument):
            spike_align(stream([A]), stream([A, A]), 0.3)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0, 1), st.integers(0, 40))
    def test_tau_range(self, seed, theta, n):
        rng = np.random.default_rng(seed)
        old, new = random_stream(rng, n), random_stream(rng, n)
        assert 1 <= spike_align(old, new, theta) <= n + 1
        assert spike_align(old, old, theta) == n + 1


class TestFindNext:
    def test_blank_then_match(self):
        psi = [None, BLANK, B]
        phi = [None, B]
        assert find_next(1, 1, psi, phi) == (3, 2)

    def test_blank_run_to_end(self):
        assert find_next(1, 1, [None, BLANK, BLANK], [None, B, BLANK]) is NOT_FOUND

    def test_labels_differ(self):
        assert find_next(1, 1, [None, BLANK, C], [None, B, BLANK]) is NOT_FOUND

    def test_new_side_blank(self):
        assert find_next(2, 2, [None, A, B, BLANK], [None, A, BLANK, BLANK, B]) == (3, 5)

    def test_undominated_after_blank(self):
        assert find_next(1, 1, [None, BLANK, NONE], [None, B, BLANK]) is NOT_FOUND


class TestRedecode:
    def test_nothing_changed_propagates_one(self):
        old = stream([A, BLANK, B])
        hyp = psd_decode(old, 0.3)
        res = redecode_from(hyp, 4, old + [spike(C)], 0.3)
        assert res.frames_redecoded == 1 and res.hypothesis.tokens == [A, B, C]

    def test_from_start_is_full_decode(self):
        old, new = stream([A, BLANK, B]), stream([C, C, BLANK, A])
        res = redecode_from(psd_decode(old, 0.3), 1, new, 0.3)
        assert res.hypothesis.tokens == psd_decode(new, 0.3).tokens
        assert res.frames_redecoded == 4

    def test_blank_shift_equals_full_decode(self):
        old = stream([A, BLANK, B, BLANK])
        new = stream([A, B, BLANK, BLANK])
        al = spike_align_trace(old, new, 0.3)
        full_new = new + [spike(B)]
        res = redecode_from(psd_decode(old, 0.3), al.tau, full_new, 0.3, keep=al.i_stop, pairs=al.pairs)
        assert al.tau == 5
        assert res.hypothesis.tokens == psd_decode(full_new, 0.3).tokens == [A, B, B]

    def test_offset_window(self):
        prefix = stream([C, BLANK])
        old = prefix + stream([A, BLANK, B])
        new_window = stream([A, BLANK, C])
        hyp = psd_decode(old, 0.3)
        tau = spike_align(old[2:], new_window, 0.3)
        res = redecode_from(hyp, tau, new_window, 0.3, start=2)
        assert tau == 3
        assert res.hypothesis.tokens == psd_decode(prefix + new_window, 0.3).tokens

    def test_retained_tokens_move_to_aligned_frame(self):
        old = stream([BLANK, A, BLANK, BLANK])
        new = stream([BLANK, BLANK, BLANK, A])
        al = spike_align_trace(old, new, 0.3)
        res = redecode_from(psd_decode(old, 0.3), al.tau, new, 0.3, keep=al.i_stop, pairs=al.pairs)
        assert res.hypothesis.frames == [3]

    def test_tau_out_of_range(self):
        with pytest.raises(InvalidArgument):
            redecode_from(Hypothesis(), 0, stream([A]), 0.3)
        with pytest.raises(InvalidArgument):
            redecode_from(Hypothesis(), 3, stream([A]), 0.3)


def test_shifted_spikes_match_full_decode():
    rng = np.random.default_rng(77)
    checked = 0
    while checked < 500:
        pair = shifted_pair(rng)
        if pair is None:
            continue
        old, new = pair
        cur = [spike(int(rng.integers(0, 6)))]
        al = spike_align_trace(old, new, 0.3)
        res = redecode_from(psd_decode(old, 0.3), al.tau, new + cur, 0.3, keep=al.i_stop, pairs=al.pairs)
        assert res.hypothesis.tokens == psd_decode(new + cur, 0.3).tokens
        checked += 1


def test_prefix_safety():
    # matched prefixes carry the same blank-free dominant labels
    rng = np.random.default_rng(5)
    seen = 0
    while seen < 300:
        pair = shifted_pair(rng)
        if pair is None:
            continue
        old, new = pair
        if rng.random() < 0.5 and new:
            k = int(rng.integers(0, len(new)))
            new[k] = spike(int(rng.integers(1, 6)))
        al = spike_align_trace(old, new, 0.3)

        def labels(s, upto):
            return [tt.l1 for tt in s[: upto - 1] if tt.l1 != BLANK]

        assert labels(old, al.i_stop) == labels(new, al.tau)
        seen += 1
