"""Synthetic knowledge graphs with a known TransE structure."""
from __future__ import annotations

import numpy as np

from .dataset import Dataset, TripleSet, Vocabulary


def planted_transe_graph(n_entities: int = 200, n_relations: int = 10, dim: int = 20,
                         n_triples: int = 2000, split=(0.8, 0.1, 0.1), seed: int = 0,
                         norm: int = 2, relation_scale: float = 0.5) -> tuple[Dataset, np.ndarray, np.ndarray]:
    """Plant TransE embeddings and keep the ``n_triples`` best-scoring facts.

    Entities lie on the unit sphere; relations are Gaussian with expected
    norm about ``relation_scale``.

    Every (h, r, t) with h != t is scored by ||h + r - t||; the lowest-scoring
    triples form the graph, which is shuffled and split train/valid/test.
    Returns ``(dataset, entity_emb, relation_emb)``.
    """
    rng = np.random.default_rng(seed)
    ent = rng.normal(size=(n_entities, dim))
    ent /= np.linalg.norm(ent, axis=1, keepdims=True)
    rel = rng.normal(size=(n_relations, dim)) * (relation_scale / np.sqrt(dim))
    diff = (ent[:, None, None, :] + rel[None, :, None, :]) - ent[None, None, :, :]
    scores = np.linalg.norm(diff, ord=norm, axis=-1)
    idx = np.arange(n_entities)
    scores[idx, :, idx] = np.inf
    flat = np.argsort(scores, axis=None, kind="stable")[:n_triples]
    triples = np.stack(np.unravel_index(flat, scores.shape), axis=1).astype(np.int64)
    triples = triples[rng.permutation(len(triples))]
    n_train = int(round(split[0] * len(triples)))
    n_valid = int(round(split[1] * len(triples)))
    vocab = Vocabulary.from_labels([f"e{i}" for i in range(n_entities)],
                                   [f"r{i}" for i in range(n_relations)])
    data = Dataset(vocab,
                   TripleSet(triples[:n_train], "train"),
                   TripleSet(triples[n_train:n_train + n_valid], "valid"),
                   TripleSet(triples[n_train + n_valid:], "test"))
    return data, ent, rel


def random_graph(n_entities: int, n_relations: int, n_triples: int, seed: int = 0) -> TripleSet:
    """Uniformly random triples (duplicates allowed)."""
    rng = np.random.default_rng(seed)
    return TripleSet(np.stack([rng.integers(0, n_entities, n_triples),
                               rng.integers(0, n_relations, n_triples),
                               rng.integers(0, n_entities, n_triples)], axis=1))


def wn18_shaped_split(n_triples: int, seed: int = 0, n_entities: int = 40943,
                      n_relations: int = 18) -> TripleSet:
    """Random triples over a vocabulary of WN18's size, for timing runs without the data."""
    return random_graph(n_entities, n_relations, n_triples, seed)
