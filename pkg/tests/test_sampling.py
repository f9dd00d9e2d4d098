import numpy as np
import pytest

from kgdlr.dataset import TripleSet, build_filter_index, compute_bern_stats
from kgdlr.sampling import (HEAD, RELATION, TAIL, EntityChoice, NegativeSampler, SamplerConfig,
                            SamplingError, Scheme, choose_slots, corrupt, slot_probabilities)


def _changed_slot(pos, neg):
    diff = pos != neg
    assert (diff.sum(axis=1) == 1).all()
    return diff.argmax(axis=1)


def test_fb15k_probabilities():
    p_head, p_rel, p_tail = slot_probabilities("nser", 14951, 1345)
    assert 2 * 14951 + 1345 == 31247
    assert p_head == p_tail == pytest.approx(0.47848, abs=5e-6)
    assert p_rel == pytest.approx(0.04304, abs=5e-6)


def test_wn18_probabilities():
    assert slot_probabilities("nser", 40943, 18)[1] == pytest.approx(2.198e-4, rel=1e-3)


def test_no_relations_degenerates_to_nse():
    assert slot_probabilities("nser", 100, 0) == (0.5, 0.0, 0.5)


def test_nse_never_picks_relation():
    slots = choose_slots("nse", 10, 10, np.random.default_rng(0), 10_000)
    assert RELATION not in set(slots.tolist())


def test_choose_slots_deterministic():
    a = choose_slots("nser", 50, 7, np.random.default_rng(3), 100)
    b = choose_slots("nser", 50, 7, np.random.default_rng(3), 100)
    assert np.array_equal(a, b)


def test_two_entity_exhaustive():
    f = build_filter_index([TripleSet([(0, 0, 1)])])
    cfg = SamplerConfig("nse", "uniform", 100, seed=0)
    seen = set()
    sampler = NegativeSampler(cfg, 2, 1, f)
    for _ in range(200):
        neg, flag = sampler.corrupt((0, 0, 1))
        assert neg in {(1, 0, 1), (0, 0, 0)} and not flag
        seen.add(neg)
    assert seen == {(1, 0, 1), (0, 0, 0)}


def test_output_differs_from_input():
    rng = np.random.default_rng(0)
    pos = np.stack([rng.integers(0, 9, 5000), rng.integers(0, 4, 5000), rng.integers(0, 9, 5000)], 1)
    neg, _ = NegativeSampler(SamplerConfig("nser", seed=1), 9, 4).corrupt_batch(pos)
    assert (neg != pos).any(axis=1).all()


def test_filtered_negatives_not_known():
    rng = np.random.default_rng(1)
    train = TripleSet(np.stack([rng.integers(0, 12, 300), rng.integers(0, 3, 300), rng.integers(0, 12, 300)], 1))
    f = build_filter_index([train])
    sampler = NegativeSampler(SamplerConfig("nser", seed=2), 12, 3, f)
    neg, flag = sampler.corrupt_batch(train.triples)
    assert not f.contains_many(neg[~flag]).any()


def test_exhaustion_flags_false_negative():
    # every corruption of (0,0,1) is known
    f = build_filter_index([TripleSet([(0, 0, 1), (1, 0, 1), (0, 0, 0)])])
    neg, flag = NegativeSampler(SamplerConfig("nse", max_resample=5, seed=0), 2, 1, f).corrupt((0, 0, 1))
    assert flag and neg in {(1, 0, 1), (0, 0, 0)}


def test_single_relation_slot_error():
    with pytest.raises(SamplingError):
        corrupt(SamplerConfig("nser", seed=0), (0, 0, 1), 1, 1)


def test_bern_requirement():
    with pytest.raises(SamplingError):
        NegativeSampler(SamplerConfig("nse", "bern"), 5, 1)
    with pytest.raises(SamplingError):
        NegativeSampler(SamplerConfig("nse", "uniform"), 5, 1, bern=compute_bern_stats(TripleSet([(0, 0, 1)])))


def test_bern_head_probability_frequency():
    bern = compute_bern_stats(TripleSet([(0, 0, 1), (0, 0, 2)]))
    assert bern.head_probability(0) == pytest.approx(2 / 3)
    sampler = NegativeSampler(SamplerConfig("nse", "bern", seed=4), 50, 1, bern=bern)
    pos = np.tile([0, 0, 1], (1_000_000, 1))
    neg, _ = sampler.corrupt_batch(pos)
    freq = np.mean(_changed_slot(pos, neg) == HEAD)
    assert abs(freq - 2 / 3) < 0.002


def test_nser_bern_keeps_relation_share():
    bern = compute_bern_stats(TripleSet([(0, 0, 1), (0, 0, 2), (3, 1, 4)]))
    sampler = NegativeSampler(SamplerConfig("nser", "bern", seed=5), 20, 5, bern=bern)
    pos = np.tile([0, 0, 1], (400_000, 1))
    slots = _changed_slot(pos, sampler.corrupt_batch(pos)[0])
    p_rel = 5 / 45
    assert abs(np.mean(slots == RELATION) - p_rel) < 0.004
    assert abs(np.mean(slots == HEAD) - (1 - p_rel) * 2 / 3) < 0.004


def test_nse_equals_nser_conditioned_on_entity_slot():
    n_ent, n_rel = 6, 3
    pos = np.tile([2, 1, 4], (300_000, 1))
    nse = NegativeSampler(SamplerConfig("nse", seed=7), n_ent, n_rel).corrupt_batch(pos)[0]
    nser = NegativeSampler(SamplerConfig("nser", seed=8), n_ent, n_rel).corrupt_batch(pos)[0]
    nser = nser[nser[:, 1] == 1]

    def dist(neg):
        keys, counts = np.unique(neg, axis=0, return_counts=True)
        return {tuple(k): c / len(neg) for k, c in zip(keys.tolist(), counts)}

    a, b = dist(nse), dist(nser)
    assert a.keys() == b.keys() and len(a) == 2 * (n_ent - 1)
    assert max(abs(a[k] - b[k]) for k in a) < 0.005


def test_sampler_stream_deterministic():
    pos = np.tile([0, 0, 1], (100, 1))
    a = NegativeSampler(SamplerConfig("nser", seed=11), 30, 4).corrupt_batch(pos)[0]
    b = NegativeSampler(SamplerConfig("nser", seed=11), 30, 4).corrupt_batch(pos)[0]
    assert np.array_equal(a, b)


def test_config_parsing():
    cfg = SamplerConfig("NSER", "Bern")
    assert cfg.scheme is Scheme.NSER and cfg.entity_choice is EntityChoice.BERN
    with pytest.raises(ValueError):
        SamplerConfig(max_resample=0)
