import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_ranks, perturbed_params
from kgdlr.dataset import TripleSet, build_filter_index
from kgdlr.evaluation import (EvaluationError, PartialMetrics, evaluate, evaluate_naive,
                              evaluate_parallel_by_relation, evaluate_parallel_global, merge_metrics,
                              rank_one, validation_sample_metric)
from kgdlr.models import ConfigError, ModelKind, ModelParams

KINDS = list(ModelKind)


def _line_model():
    # entities at 0, 1, 2 on a line, one relation translating by +1
    return ModelParams("TransE", np.array([[0.0], [1.0], [2.0]]), np.array([[1.0]]))


def test_three_entity_raw_vs_filtered():
    p = _line_model()
    assert rank_one(p, "L1", (0, 0, 2), "tail", None) == 2
    f = build_filter_index([TripleSet([(0, 0, 1), (0, 0, 2)])])
    assert rank_one(p, "L1", (0, 0, 2), "tail", f) == 1
    assert rank_one(p, "L1", (0, 0, 2), "head", None) == 2


def test_ties_do_not_count():
    p = ModelParams("TransE", np.array([[0.0], [0.5], [1.5]]), np.array([[1.0]]))
    # true tail and candidate 2 both sit 0.5 away from h + r
    assert rank_one(p, "L1", (0, 0, 1), "tail", None) == 1
    assert rank_one(_line_model(), "L1", (1, 0, 0), "tail", None) == 3


def test_bad_direction():
    with pytest.raises(ValueError):
        rank_one(_line_model(), "L1", (0, 0, 1), "sideways", None)


def _small_problem(kind, seed=0, n_ent=12, n_rel=3, n=20):
    dims = (5, 4) if kind in (ModelKind.TRANSR, ModelKind.TRANSD) else (5, None)
    p = perturbed_params(kind, n_ent, n_rel, *dims, seed=seed)
    rng = np.random.default_rng(seed)
    def draw(m):
        return TripleSet(np.stack([rng.integers(0, n_ent, m), rng.integers(0, n_rel, m), rng.integers(0, n_ent, m)], 1))
    train, test = draw(60), draw(n)
    return p, train, test, build_filter_index([train, test])


@pytest.mark.parametrize("dis", ["L1", "L2"])
@pytest.mark.parametrize("kind", KINDS)
def test_engines_match_brute_force(kind, dis):
    p, _, test, f = _small_problem(kind)
    heads, tails = brute_force_ranks(p, dis, test.triples.tolist(), f.known)
    naive = evaluate_naive(p, dis, test, f)
    assert np.array_equal(naive.head_ranks, heads) and np.array_equal(naive.tail_ranks, tails)
    for workers in (1, 2, 3):
        par = evaluate(p, dis, test, f, "parallel", workers)
        assert np.array_equal(par.head_ranks, heads) and np.array_equal(par.tail_ranks, tails)
        assert par.mean_rank == naive.mean_rank and par.hits_at_10 == naive.hits_at_10


def test_by_relation_engine_handles_transe():
    p, _, test, f = _small_problem(ModelKind.TRANSE, seed=3)
    a = evaluate_parallel_by_relation(p, "L1", test, f, 2)
    b = evaluate_parallel_global(p, "L1", test, f, 2)
    assert np.array_equal(a.ranks, b.ranks)


def test_global_engine_rejects_projection_models():
    p, _, test, f = _small_problem(ModelKind.TRANSH)
    with pytest.raises(ConfigError):
        evaluate_parallel_global(p, "L1", test, f, 1)


def test_pooled_mean_rank_and_breakdown():
    p, _, test, f = _small_problem(ModelKind.TRANSE, seed=5)
    m = evaluate_naive(p, "L2", test, f)
    assert m.mean_rank == pytest.approx(np.concatenate([m.head_ranks, m.tail_ranks]).mean())
    assert m.head_mean_rank == pytest.approx(m.head_ranks.mean())
    assert m.tail_hits_at_10 == pytest.approx(np.mean(m.tail_ranks <= 10))
    assert m.rank_count == 2 * m.triple_count == 40


def test_more_workers_than_triples():
    p, _, test, f = _small_problem(ModelKind.TRANSE, n=3)
    assert np.array_equal(evaluate(p, "L1", test, f, workers=8).ranks, evaluate_naive(p, "L1", test, f).ranks)


def test_bucket_order_does_not_matter():
    p, _, test, f = _small_problem(ModelKind.TRANSR, seed=2, n_rel=4, n=30)
    base = evaluate_parallel_by_relation(p, "L2", test, f, 2)
    n_buckets = len(np.unique(test.relations))
    for seed in range(3):
        order = np.random.default_rng(seed).permutation(n_buckets)
        other = evaluate_parallel_by_relation(p, "L2", test, f, 2, bucket_order=order)
        assert np.array_equal(other.ranks, base.ranks) and other.mean_rank == base.mean_rank


def test_empty_split_and_bad_workers():
    p, _, test, f = _small_problem(ModelKind.TRANSE)
    empty = TripleSet(np.empty((0, 3)))
    for fn in (evaluate_naive, lambda *a: evaluate(*a, "parallel", 2)):
        with pytest.raises(EvaluationError, match="empty"):
            fn(p, "L1", empty, f)
    with pytest.raises(ConfigError):
        evaluate(p, "L1", test, f, "parallel", 0)
    with pytest.raises(ConfigError):
        evaluate_parallel_by_relation(p, "L1", test, f, -1)


def test_filter_can_only_improve_ranks():
    p, train, test, _ = _small_problem(ModelKind.TRANSD, seed=4)
    none = evaluate_naive(p, "L1", test, None)
    small = evaluate_naive(p, "L1", test, build_filter_index([test]))
    full = evaluate_naive(p, "L1", test, build_filter_index([train, test]))
    assert (small.ranks <= none.ranks).all() and (full.ranks <= small.ranks).all()
    assert none.hits_at_10 <= small.hits_at_10 <= full.hits_at_10


def test_merge_example():
    m = merge_metrics([PartialMetrics(rank_sum=6, count=2, hits=1), PartialMetrics(rank_sum=12, count=1, hits=1)])
    assert m.mean_rank == 6.0 and m.hits_at_10 == pytest.approx(2 / 3)


def test_merge_single_part_is_identity():
    part = PartialMetrics.from_ranks([0, 1, 2], [6, 2, 1], [12, 1, 1])
    m = merge_metrics([part])
    assert m.mean_rank == pytest.approx(23 / 6) and m.hits_at_10 == pytest.approx(5 / 6)
    assert m.head_ranks.tolist() == [6, 2, 1] and m.tail_ranks.tolist() == [12, 1, 1]


def test_merge_empty():
    with pytest.raises(EvaluationError):
        merge_metrics([])


ranks = st.lists(st.integers(1, 50), min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(ranks, ranks), min_size=1, max_size=6))
def test_merge_is_partition_invariant(groups):
    parts, offset = [], 0
    for h, t in groups:
        n = min(len(h), len(t))
        parts.append(PartialMetrics.from_ranks(np.arange(offset, offset + n), h[:n], t[:n]))
        offset += n

    def regroup(ps):
        return PartialMetrics.from_ranks(np.concatenate([p.indices for p in ps]),
                                         np.concatenate([p.head_ranks for p in ps]),
                                         np.concatenate([p.tail_ranks for p in ps]))

    whole = merge_metrics(parts)
    cut = len(parts) // 2
    for other in (merge_metrics(parts[::-1]), merge_metrics([regroup(parts)]),
                  merge_metrics([regroup(parts[:cut] or parts[:1]), *parts[max(cut, 1):]])):
        assert other.mean_rank == whole.mean_rank and other.hits_at_10 == whole.hits_at_10
        assert np.array_equal(other.head_ranks, whole.head_ranks)
        assert np.array_equal(other.tail_ranks, whole.tail_ranks)


def test_validation_sample_is_deterministic():
    p, train, _, _ = _small_problem(ModelKind.TRANSE, n=5)
    f = build_filter_index([train])
    a = validation_sample_metric(p, "L1", train, f, sample_size=25, seed=7, workers=1)
    b = validation_sample_metric(p, "L1", train, f, sample_size=25, seed=7, workers=2)
    assert a == b
    full = validation_sample_metric(p, "L1", train, f, sample_size=10_000, seed=0, workers=1)
    assert full == evaluate_naive(p, "L1", train, f).mean_rank
