import random

import pytest

from slosim.costmodel import DecodeStepLUT, synth_profile_from_anchors
from slosim.decode_sched import (
    compute_slack,
    continuous_batching_select,
    select_decode_batch,
)
from slosim.domain import Request, SLOConfig

SLO = SLOConfig()
ANCHORS = [(1, 8192, 11_000), (1, 131072, 40_300)]


def decoding(rid, input_len, n_gen=0, t_first=0, output_len=500):
    r = Request(id=rid, arrival_time=0, input_len=input_len, output_len=output_len)
    r.record_first_token(t_first)
    for k in range(n_gen):
        r.record_decode_token(t_first + k + 1)
    return r


def constant_lut(value_us):
    return synth_profile_from_anchors([(1, 8192, value_us)], 0.0)


def test_compute_slack_examples():
    lut = constant_lut(11_000)
    r = decoding("r", 8192, n_gen=3)
    assert compute_slack(r, 120_000, SLO, lut) == pytest.approx(69_000.0)
    fresh = decoding("f", 8192)
    assert compute_slack(fresh, 0, SLO, lut) == pytest.approx(39_000.0)
    slow = decoding("s", 8192, n_gen=1)
    assert compute_slack(slow, 150_000, SLO, constant_lut(40_300)) == pytest.approx(-90_300.0)


def test_compute_slack_explicit_step_cost():
    lut = constant_lut(11_000)
    r = decoding("r", 8192)
    assert compute_slack(r, 0, SLO, lut, step_cost_us=41_509.0) == pytest.approx(8_491.0)


def test_compute_slack_requires_first_token():
    r = Request(id="r", arrival_time=0, input_len=10, output_len=5)
    with pytest.raises(ValueError):
        compute_slack(r, 0, SLO, constant_lut(11_000))


def test_select_delays_straggler():
    lut = synth_profile_from_anchors(ANCHORS, 0.03)
    # both one token in, 28.491ms elapsed: identical slack against the joint
    # step cost (41509us), well above the short request's own step time
    short = decoding("S", 8192, n_gen=1)
    long = decoding("L", 131072, n_gen=1)
    sel = select_decode_batch([long, short], 28_491, SLO, lut)
    assert sel.batch == ["S"]
    assert sel.delayed == ["L"]
    assert not sel.fallback
    assert sel.s_min_us == pytest.approx(30_000.0)
    assert sel.predicted_step_time_us == lut.lookup(1, short.seq_len)
    assert sel.predicted_step_time_us == pytest.approx(11_000, rel=1e-3)


def test_select_packs_when_throughput_improves():
    lut = synth_profile_from_anchors(ANCHORS, 0.03)
    s1 = decoding("S1", 8192, n_gen=1)
    s2 = decoding("S2", 8192, n_gen=1)
    sel = select_decode_batch([s2, s1], 10_000, SLO, lut)
    assert sel.batch == ["S1", "S2"]
    assert sel.delayed == []
    rate_one = 1 / lut.lookup(1, s1.seq_len)
    rate_two = 2 / lut.lookup(2, s2.seq_len)
    assert rate_two > rate_one
    assert sel.predicted_step_time_us == lut.lookup(2, s2.seq_len)


def test_select_fallback_on_negative_slack():
    lut = synth_profile_from_anchors(ANCHORS, 0.03)
    r = decoding("r", 8192)
    # elapsed eats the whole budget: slack is -5ms, below any step time
    sel = select_decode_batch([r], 44_000, SLO, lut)
    assert sel.fallback
    assert sel.batch == ["r"]
    assert sel.delayed == []
    assert sel.s_min_us == pytest.approx(-5_000.0)
    assert sel.predicted_step_time_us == lut.lookup(1, r.seq_len)


def test_select_rejects_empty_active_set():
    with pytest.raises(ValueError):
        select_decode_batch([], 0, SLO, constant_lut(11_000))
    with pytest.raises(ValueError):
        continuous_batching_select([], constant_lut(11_000))


def test_continuous_batches_everyone():
    lut = synth_profile_from_anchors(ANCHORS, 0.03)
    short = decoding("S", 8192)
    long = decoding("L", 131072)
    sel = continuous_batching_select([long, short], lut)
    assert sel.batch == ["S", "L"]
    assert sel.delayed == []
    assert sel.predicted_step_time_us == lut.lookup(2, 131072) == 41_509.0
    solo = continuous_batching_select([short], lut)
    assert solo.batch == ["S"]
    assert solo.predicted_step_time_us == lut.lookup(1, 8192)


def random_lut(rng):
    bszs = sorted(rng.sample(range(1, 12), rng.randrange(2, 5)))
    seqs = sorted(rng.sample(range(100, 200_000), rng.randrange(2, 6)))
    lut = DecodeStepLUT(bsz_buckets=bszs, seq_buckets=seqs)
    for b in bszs:
        for s in seqs:
            lut.update(b, s, rng.randrange(1_000, 80_000))
    return lut


def test_selection_postconditions_random():
    rng = random.Random(4242)
    for _ in range(500):
        lut = random_lut(rng)
        active = []
        for k in range(rng.randrange(1, 7)):
            r = decoding(
                f"r{k}",
                rng.randrange(1, 150_000),
                n_gen=rng.randrange(0, 40),
                output_len=100,
            )
            active.append(r)
        t_now = rng.randrange(100, 2_000_000)
        sel = select_decode_batch(active, t_now, SLO, lut)
        ids = {r.id for r in active}
        assert set(sel.batch) | set(sel.delayed) == ids
        assert not (set(sel.batch) & set(sel.delayed))
        assert sel.batch  # non-empty fallback rule
        by_id = {r.id: r for r in active}
        seqs = [by_id[rid].seq_len for rid in sel.batch]
        assert seqs == sorted(seqs)  # admission order ascends in seq_len
        if not sel.fallback:
            # feasibility and strict throughput gain, replayed from the trace
            rates = []
            for idx, t_step in enumerate(sel.admission_step_times_us):
                assert t_step <= sel.s_min_us
                rates.append((idx + 1) / t_step)
            assert all(a < b for a, b in zip(rates, rates[1:]))
            assert sel.predicted_step_time_us == lut.lookup(len(sel.batch), max(seqs))


def test_matches_continuous_with_equal_lengths_and_slack():
    lut = synth_profile_from_anchors(ANCHORS, 0.03)
    active = [decoding(f"r{k}", 8192, n_gen=1) for k in range(5)]
    adaptive = select_decode_batch(active, 0, SLO, lut)
    continuous = continuous_batching_select(active, lut)
    assert adaptive.batch == continuous.batch
    assert adaptive.delayed == continuous.delayed == []
    assert adaptive.predicted_step_time_us == continuous.predicted_step_time_us
