"""Filtered link-prediction metrics: MeanRank and hits@10.

Three engines produce identical per-triple ranks:

- :func:`evaluate_naive` walks the split one triple at a time and re-projects
  every candidate for every triple. It is the reference.
- :func:`evaluate_parallel_global` splits the set into ``c`` contiguous chunks
  and scores whole row blocks against the entity table (TransE).
- :func:`evaluate_parallel_by_relation` buckets triples by relation, projects
  the entity table once per bucket and lets ``c`` workers drain the bucket
  queue (TransH/R/D).

A candidate is ranked above the ground truth only if its score is strictly
lower; candidates forming other known triples are skipped.
"""
from __future__ import annotations

import multiprocessing as mp
import os
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .dataset import FilterIndex, TripleSet
from .models import ConfigError, Dissimilarity, ModelKind, ModelParams, project, translation_distance

HEAD, TAIL = "head", "tail"

# upper bound on candidate-block cells (rows x entities) scored at once
BLOCK_CELLS = 1 << 15


class EvaluationError(ValueError):
    pass


@dataclass
class PartialMetrics:
    """Additive rank statistics of one part of a split."""

    rank_sum: float
    count: int
    hits: int
    head_sum: float = 0.0
    head_count: int = 0
    head_hits: int = 0
    tail_sum: float = 0.0
    tail_count: int = 0
    tail_hits: int = 0
    triple_count: int = 0
    indices: np.ndarray | None = None  # positions in the evaluated split
    head_ranks: np.ndarray | None = None
    tail_ranks: np.ndarray | None = None

    @classmethod
    def from_ranks(cls, indices, head_ranks, tail_ranks, k: int = 10) -> "PartialMetrics":
        head_ranks = np.asarray(head_ranks, dtype=np.int64)
        tail_ranks = np.asarray(tail_ranks, dtype=np.int64)
        hs, ts = int(head_ranks.sum()), int(tail_ranks.sum())
        hh, th = int((head_ranks <= k).sum()), int((tail_ranks <= k).sum())
        return cls(hs + ts, len(head_ranks) + len(tail_ranks), hh + th,
                   hs, len(head_ranks), hh, ts, len(tail_ranks), th,
                   triple_count=len(head_ranks), indices=np.asarray(indices, dtype=np.int64),
                   head_ranks=head_ranks, tail_ranks=tail_ranks)


@dataclass
class EvalMetrics:
    mean_rank: float
    hits_at_10: float
    head_mean_rank: float
    head_hits_at_10: float
    tail_mean_rank: float
    tail_hits_at_10: float
    triple_count: int
    rank_count: int
    seconds: float = 0.0
    head_ranks: np.ndarray | None = field(default=None, repr=False)
    tail_ranks: np.ndarray | None = field(default=None, repr=False)

    @property
    def ms_per_triple(self) -> float:
        return 1000.0 * self.seconds / self.triple_count if self.triple_count else 0.0

    @property
    def ranks(self) -> np.ndarray:
        """All individual ranks, head predictions first."""
        return np.concatenate([self.head_ranks, self.tail_ranks])

    def to_record(self) -> dict:
        return {
            "mean_rank": self.mean_rank,
            "hits_at_10": self.hits_at_10,
            "head": {"mean_rank": self.head_mean_rank, "hits_at_10": self.head_hits_at_10},
            "tail": {"mean_rank": self.tail_mean_rank, "hits_at_10": self.tail_hits_at_10},
            "triples": self.triple_count,
            "ms_per_triple": self.ms_per_triple,
        }


def _ratio(a, b):
    return a / b if b else float("nan")


def merge_metrics(parts) -> EvalMetrics:
    """Pool partial statistics exactly (sums over counts, never means of means)."""
    parts = list(parts)
    if not parts:
        raise EvaluationError("nothing to merge")
    s = {name: sum(getattr(p, name) for p in parts) for name in (
        "rank_sum", "count", "hits", "head_sum", "head_count", "head_hits",
        "tail_sum", "tail_count", "tail_hits", "triple_count")}
    if not s["count"]:
        raise EvaluationError("merged parts contain no ranks")
    head_ranks = tail_ranks = None
    if all(p.indices is not None for p in parts):
        idx = np.concatenate([p.indices for p in parts])
        order = np.argsort(idx, kind="stable")
        head_ranks = np.concatenate([p.head_ranks for p in parts])[order]
        tail_ranks = np.concatenate([p.tail_ranks for p in parts])[order]
    return EvalMetrics(
        mean_rank=s["rank_sum"] / s["count"],
        hits_at_10=s["hits"] / s["count"],
        head_mean_rank=_ratio(s["head_sum"], s["head_count"]),
        head_hits_at_10=_ratio(s["head_hits"], s["head_count"]),
        tail_mean_rank=_ratio(s["tail_sum"], s["tail_count"]),
        tail_hits_at_10=_ratio(s["tail_hits"], s["tail_count"]),
        triple_count=s["triple_count"],
        rank_count=s["count"],
        head_ranks=head_ranks,
        tail_ranks=tail_ranks,
    )


# ------------------------------------------------------------------ naive

def _filtered(filter_index: FilterIndex | None, h: int, r: int, t: int, direction: str):
    if filter_index is None:
        return ()
    if direction == TAIL:
        return [e for e in filter_index.tails(h, r) if e != t]
    return [e for e in filter_index.heads(r, t) if e != h]


def rank_one(params: ModelParams, dis, triple, direction: str, filter_index: FilterIndex | None) -> int:
    """Filtered rank of the true head (``"head"``) or tail (``"tail"``) of ``triple``."""
    dis = Dissimilarity.parse(dis)
    h, r, t = (int(x) for x in triple)
    rv = params.relation[r].reshape(-1, 1)
    cands = project(params, r, None)
    if direction == TAIL:
        scores = translation_distance(project(params, r, [h]), rv, cands, dis)
        truth = t
    elif direction == HEAD:
        scores = translation_distance(cands, rv, project(params, r, [t]), dis)
        truth = h
    else:
        raise ValueError(f"direction must be 'head' or 'tail', got {direction!r}")
    drop = _filtered(filter_index, h, r, t, direction)
    if len(drop):
        scores[list(drop)] = np.inf
    return 1 + int(np.count_nonzero(scores < scores[truth]))


def evaluate_naive(params: ModelParams, dis, split: TripleSet, filter_index: FilterIndex | None,
                   k: int = 10) -> EvalMetrics:
    if not len(split):
        raise EvaluationError("empty evaluation split")
    start = time.perf_counter()
    heads, tails = [], []
    for triple in split.triples:
        heads.append(rank_one(params, dis, triple, HEAD, filter_index))
        tails.append(rank_one(params, dis, triple, TAIL, filter_index))
    out = merge_metrics([PartialMetrics.from_ranks(np.arange(len(split)), heads, tails, k)])
    out.seconds = time.perf_counter() - start
    return out


# --------------------------------------------------------------- parallel

def _block_ranks(cands: np.ndarray, rel_vecs: np.ndarray, triples: np.ndarray, dis: Dissimilarity,
                 filter_index: FilterIndex | None) -> tuple[np.ndarray, np.ndarray]:
    """Ranks for a block of triples against a dimension-first candidate table ``(d, N)``.

    ``rel_vecs`` is ``(d, n)`` with one relation vector per triple. The
    arithmetic per candidate matches :func:`rank_one` exactly.
    """
    n_ent = cands.shape[1]
    step = max(1, BLOCK_CELLS // max(n_ent, 1))
    head_out = np.empty(len(triples), dtype=np.int64)
    tail_out = np.empty(len(triples), dtype=np.int64)
    table = cands[:, None, :]
    for lo in range(0, len(triples), step):
        blk = triples[lo:lo + step]
        rows = np.arange(len(blk))
        rv = rel_vecs[:, lo:lo + step, None]
        for direction, out in ((TAIL, tail_out), (HEAD, head_out)):
            if direction == TAIL:
                scores = translation_distance(cands[:, blk[:, 0], None], rv, table, dis)
                truth = blk[:, 2]
            else:
                scores = translation_distance(table, rv, cands[:, blk[:, 2], None], dis)
                truth = blk[:, 0]
            for i, (h, r, t) in enumerate(blk):
                drop = _filtered(filter_index, int(h), int(r), int(t), direction)
                if len(drop):
                    scores[i, list(drop)] = np.inf
            true_scores = scores[rows, truth]
            out[lo:lo + len(blk)] = 1 + np.count_nonzero(scores < true_scores[:, None], axis=1)
    return head_out, tail_out


_SHARED: dict = {}


def _set_shared(params, dis, filter_index, k):
    _SHARED.update(params=params, dis=dis, filter=filter_index, k=k)


def _chunk_task(indices: np.ndarray, triples: np.ndarray) -> PartialMetrics:
    params, dis, filt, k = _SHARED["params"], _SHARED["dis"], _SHARED["filter"], _SHARED["k"]
    cands = np.ascontiguousarray(params.entity.T)
    rel_vecs = params.relation[triples[:, 1]].T
    heads, tails = _block_ranks(cands, rel_vecs, triples, dis, filt)
    return PartialMetrics.from_ranks(indices, heads, tails, k)


def _bucket_task(relation: int, indices: np.ndarray, triples: np.ndarray) -> PartialMetrics:
    params, dis, filt, k = _SHARED["params"], _SHARED["dis"], _SHARED["filter"], _SHARED["k"]
    cands = project(params, relation, None)
    rel_vecs = np.repeat(params.relation[relation].reshape(-1, 1), len(triples), axis=1)
    heads, tails = _block_ranks(cands, rel_vecs, triples, dis, filt)
    return PartialMetrics.from_ranks(indices, heads, tails, k)


class _InlineExecutor:
    def map(self, fn, *iterables, chunksize=1):
        return map(fn, *iterables)


@contextmanager
def _pool(workers: int, params, dis, filter_index, k):
    if workers < 1:
        raise ConfigError(f"worker count must be >= 1, got {workers}")
    if workers == 1:
        saved = dict(_SHARED)
        _set_shared(params, dis, filter_index, k)
        try:
            yield _InlineExecutor()
        finally:
            _SHARED.clear()
            _SHARED.update(saved)
        return
    methods = mp.get_all_start_methods()
    if "fork" in methods:
        # children inherit the shared snapshot without pickling it
        saved = dict(_SHARED)
        _set_shared(params, dis, filter_index, k)
        try:
            with ProcessPoolExecutor(workers, mp_context=mp.get_context("fork")) as ex:
                yield ex
        finally:
            _SHARED.clear()
            _SHARED.update(saved)
    else:
        with ProcessPoolExecutor(workers, initializer=_set_shared,
                                 initargs=(params, dis, filter_index, k)) as ex:
            yield ex


def default_workers() -> int:
    env = os.environ.get("KGE_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def evaluate_parallel_global(params: ModelParams, dis, split: TripleSet, filter_index: FilterIndex | None,
                             workers: int = 1, k: int = 10) -> EvalMetrics:
    """Equal contiguous chunks, one per worker, scored against the shared entity space."""
    if params.kind is not ModelKind.TRANSE:
        raise ConfigError("the global engine needs a model without relation-specific spaces")
    if workers < 1:
        raise ConfigError(f"worker count must be >= 1, got {workers}")
    if not len(split):
        raise EvaluationError("empty evaluation split")
    dis = Dissimilarity.parse(dis)
    start = time.perf_counter()
    chunks = [c for c in np.array_split(np.arange(len(split)), workers) if len(c)]
    with _pool(min(workers, len(chunks)), params, dis, filter_index, k) as ex:
        parts = list(ex.map(_chunk_task, chunks, [split.triples[c] for c in chunks]))
    out = merge_metrics(parts)
    out.seconds = time.perf_counter() - start
    return out


def relation_buckets(split: TripleSet) -> list[tuple[int, np.ndarray]]:
    """(relation, split positions) per relation, in ascending relation order."""
    rels = split.relations
    return [(int(r), np.flatnonzero(rels == r)) for r in np.unique(rels)]


def evaluate_parallel_by_relation(params: ModelParams, dis, split: TripleSet,
                                  filter_index: FilterIndex | None, workers: int = 1, k: int = 10,
                                  bucket_order=None) -> EvalMetrics:
    """Relation buckets drained from a FIFO queue by ``workers`` processes.

    ``bucket_order`` optionally permutes the queue; the merged result does not
    depend on it.
    """
    if workers < 1:
        raise ConfigError(f"worker count must be >= 1, got {workers}")
    if not len(split):
        raise EvaluationError("empty evaluation split")
    dis = Dissimilarity.parse(dis)
    start = time.perf_counter()
    buckets = relation_buckets(split)
    if bucket_order is not None:
        buckets = [buckets[i] for i in bucket_order]
    rels = [r for r, _ in buckets]
    idxs = [ix for _, ix in buckets]
    with _pool(min(workers, len(buckets)), params, dis, filter_index, k) as ex:
        parts = list(ex.map(_bucket_task, rels, idxs, [split.triples[ix] for ix in idxs], chunksize=1))
    out = merge_metrics(parts)
    out.seconds = time.perf_counter() - start
    return out


def evaluate(params: ModelParams, dis, split: TripleSet, filter_index: FilterIndex | None,
             engine: str = "parallel", workers: int | None = None, k: int = 10) -> EvalMetrics:
    """Dispatch to the naive engine or to the parallel engine suited to the model kind."""
    if engine == "naive":
        return evaluate_naive(params, dis, split, filter_index, k)
    if engine != "parallel":
        raise ValueError(f"unknown engine {engine!r}")
    workers = default_workers() if workers is None else workers
    if params.kind is ModelKind.TRANSE:
        return evaluate_parallel_global(params, dis, split, filter_index, workers, k)
    return evaluate_parallel_by_relation(params, dis, split, filter_index, workers, k)


def sample_indices(n: int, sample_size: int, seed: int) -> np.ndarray:
    if sample_size >= n:
        return np.arange(n)
    return np.sort(np.random.default_rng(seed).choice(n, size=sample_size, replace=False))


def validation_sample_metric(params: ModelParams, dis, valid: TripleSet, filter_index: FilterIndex | None,
                             sample_size: int = 1000, seed: int = 0, workers: int | None = None) -> float:
    """Filtered MeanRank on a seeded sample of the validation split.

    The sample depends only on ``(len(valid), sample_size, seed)``, so every
    evaluation point of a run sees the same triples.
    """
    sub = valid.subset(sample_indices(len(valid), sample_size, seed))
    return evaluate(params, dis, sub, filter_index, "parallel", workers).mean_rank
