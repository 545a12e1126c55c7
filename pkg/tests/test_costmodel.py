import itertools
import json
import random

import pytest

from slosim.costmodel import (
    DecodeStepLUT,
    PrefillThroughputEstimator,
    load_profile,
    save_profile,
    synth_profile_from_anchors,
)
from slosim.domain import ConfigurationError

ANCHORS = [(1, 8192, 11_000), (1, 131072, 40_300)]


def test_lookup_anchor_values():
    lut = synth_profile_from_anchors(ANCHORS, 0.03)
    assert lut.lookup(1, 8192) == 11_000.0
    assert lut.lookup(1, 131072) == 40_300.0


def test_lookup_interpolates_between_sparse_entries():
    # only two populated cells; the midpoint query interpolates between them
    lut = DecodeStepLUT()
    lut.update(1, 8192, 11_000)
    lut.update(1, 131072, 40_300)
    assert lut.lookup(1, 69632) == (11_000 + 40_300) / 2


def test_lookup_clamps_outside_populated_range():
    lut = DecodeStepLUT()
    lut.update(1, 8192, 11_000)
    lut.update(1, 131072, 40_300)
    assert lut.lookup(1, 100) == 11_000.0
    assert lut.lookup(1, 500_000) == 40_300.0
    # only one populated batch-size row: clamp across bsz too
    assert lut.lookup(64, 8192) == 11_000.0


def test_empty_lut_refuses_lookup():
    with pytest.raises(ConfigurationError):
        DecodeStepLUT().lookup(1, 8192)


def test_update_running_mean():
    lut = DecodeStepLUT()
    lut.update(1, 8192, 10_000)
    assert lut.lookup(1, 8192) == 10_000.0
    assert lut.observation_count(1, 8192) == 1
    lut.update(1, 8192, 12_000)
    assert lut.lookup(1, 8192) == 11_000.0
    lut.update(1, 8192, 11_000)
    assert lut.lookup(1, 8192) == 11_000.0
    assert lut.observation_count(1, 8192) == 3


def test_update_folds_into_containing_bucket():
    lut = DecodeStepLUT()
    lut.update(3, 9000, 5_000)  # lands in the (4, 16384) bucket
    assert lut.observation_count(4, 16384) == 1
    assert lut.observation_count(2, 8192) == 0
    lut.update(500, 999_999, 7_000)  # beyond both grids: clamps to the last bucket
    assert lut.observation_count(256, 262144) == 1


def test_grid_point_lookup_is_exact_mean():
    rng = random.Random(7)
    lut = DecodeStepLUT()
    observations = {}
    for _ in range(500):
        bsz = rng.choice(lut.bsz_buckets)
        seq = rng.choice(lut.seq_buckets)
        obs = rng.randrange(1, 200_000)
        lut.update(bsz, seq, obs)
        observations.setdefault((bsz, seq), []).append(obs)
    for (bsz, seq), values in observations.items():
        assert lut.lookup(bsz, seq) == sum(values) / len(values)


def test_lookup_monotone_in_seq_for_monotone_entries():
    rng = random.Random(11)
    for _ in range(20):
        lut = DecodeStepLUT()
        value = rng.randrange(1_000, 5_000)
        for seq in lut.seq_buckets:
            value += rng.randrange(0, 3_000)
            lut.update(1, seq, value)
        queries = sorted(rng.randrange(1, 300_000) for _ in range(50))
        results = [lut.lookup(1, q) for q in queries]
        assert all(a <= b for a, b in zip(results, results[1:]))


def test_synth_batch_growth():
    lut = synth_profile_from_anchors(ANCHORS, 0.03)
    assert lut.lookup(2, 131072) == pytest.approx(40_300 * 1.03)  # 41509
    assert lut.lookup(2, 131072) == 41_509.0


def test_synth_single_anchor_constant():
    lut = synth_profile_from_anchors([(1, 8192, 11_000)], 0.0)
    for bsz, seq in [(1, 100), (1, 8192), (4, 70_000), (256, 262144)]:
        assert lut.lookup(bsz, seq) == 11_000.0


def test_synth_counts_use_prior_weight():
    lut = synth_profile_from_anchors(ANCHORS, 0.03, prior_weight=7)
    assert lut.observation_count(1, 8192) == 7


def test_synth_warns_on_non_increasing_anchors():
    with pytest.warns(UserWarning):
        synth_profile_from_anchors([(1, 8192, 11_000), (1, 131072, 11_000)], 0.0)


def test_synth_requires_base_anchor():
    with pytest.raises(ValueError):
        synth_profile_from_anchors([(2, 8192, 11_000)])


def test_estimator_anchored_duration():
    est = PrefillThroughputEstimator.seeded(131072, 8_800_000)
    assert est.estimate_duration_us(131072) == 8_800_000
    assert est.estimate_duration_us(0) == 0
    assert est.mu_tokens_per_s == pytest.approx(14894.545, rel=1e-4)


def test_estimator_direct_division():
    est = PrefillThroughputEstimator.seeded(10_000, 1_000_000)
    assert est.estimate_duration_us(20_000) == 2_000_000


def test_estimator_rounds_up():
    est = PrefillThroughputEstimator.seeded(3, 1_000)
    assert est.estimate_duration_us(1) == 334  # 333.33 rounded up


def test_estimator_update_weighted_mean():
    est = PrefillThroughputEstimator.seeded(131072, 8_800_000)
    est.update(8192, 400_400)
    assert est.mu_tokens_per_s == pytest.approx(139264 / 9.2004, rel=1e-6)
    assert est.mu_tokens_per_s == pytest.approx(15136.7, abs=0.1)


def test_estimator_idle_time_dilutes():
    est = PrefillThroughputEstimator.seeded(10_000, 1_000_000)
    before = est.mu_tokens_per_s
    est.update(0, 1_000_000)
    assert est.mu_tokens_per_s < before


def test_estimator_identical_updates():
    est = PrefillThroughputEstimator()
    est.update(10_000, 1_000_000)
    est.update(10_000, 1_000_000)
    assert est.mu_tokens_per_s == 10_000.0


def test_estimator_update_order_does_not_matter():
    rng = random.Random(3)
    updates = [(rng.randrange(0, 50_000), rng.randrange(1, 2_000_000)) for _ in range(8)]
    mus = set()
    for perm in itertools.islice(itertools.permutations(updates), 50):
        est = PrefillThroughputEstimator()
        for tokens, dur in perm:
            est.update(tokens, dur)
        mus.add(est.mu_tokens_per_s)
    assert len(mus) == 1


def test_estimator_unseeded_is_configuration_error():
    est = PrefillThroughputEstimator()
    with pytest.raises(ConfigurationError):
        est.estimate_duration_us(10)
    with pytest.raises(ConfigurationError):
        _ = est.mu_tokens_per_s


def test_profile_round_trip(tmp_path):
    lut = synth_profile_from_anchors(ANCHORS, 0.03, prior_weight=5)
    lut.update(2, 10_000, 33_000)
    path = tmp_path / "profile.json"
    save_profile(str(path), lut, (131072, 8_800_000))
    loaded, anchor = load_profile(str(path))
    assert anchor == (131072, 8_800_000)
    assert loaded.bsz_buckets == lut.bsz_buckets
    assert loaded.seq_buckets == lut.seq_buckets
    rng = random.Random(5)
    for _ in range(100):
        b = rng.randrange(1, 300)
        s = rng.randrange(1, 300_000)
        assert loaded.lookup(b, s) == pytest.approx(lut.lookup(b, s), rel=1e-12)


def test_profile_shape_validation(tmp_path):
    lut = synth_profile_from_anchors(ANCHORS, 0.03)
    path = tmp_path / "profile.json"
    save_profile(str(path), lut, (131072, 8_800_000))
    data = json.loads(path.read_text())
    data["entries_us"] = data["entries_us"][:-1]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    with pytest.raises(ConfigurationError):
        load_profile(str(bad))


def test_lut_rejects_bad_buckets():
    with pytest.raises(ValueError):
        DecodeStepLUT(bsz_buckets=[2, 1])
    with pytest.raises(ValueError):
        DecodeStepLUT(seq_buckets=[0, 10])
    with pytest.raises(ValueError):
        DecodeStepLUT(bsz_buckets=[])
