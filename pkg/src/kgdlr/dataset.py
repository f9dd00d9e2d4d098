"""Triple files, vocabularies, filter indexes and Bernoulli corruption statistics.

Files follow the public FB15k/WN18 layout: one ``head<TAB>relation<TAB>tail``
line per fact, with ``train.txt``, ``valid.txt`` and ``test.txt`` in one
directory.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class DataError(ValueError):
    """Malformed triple file."""


class VocabularyError(KeyError):
    """Label not present in a fixed vocabulary."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


@dataclass(frozen=True)
class Vocabulary:
    entity_labels: tuple[str, ...] = ()
    relation_labels: tuple[str, ...] = ()
    entity_index: Mapping[str, int] = field(default_factory=dict, repr=False)
    relation_index: Mapping[str, int] = field(default_factory=dict, repr=False)

    @classmethod
    def from_labels(cls, entities: Iterable[str], relations: Iterable[str]) -> "Vocabulary":
        """Build a vocabulary, assigning indices in first-appearance order."""
        ent = tuple(dict.fromkeys(entities))
        rel = tuple(dict.fromkeys(relations))
        return cls(ent, rel, {e: i for i, e in enumerate(ent)}, {r: i for i, r in enumerate(rel)})

    @classmethod
    def from_label_triples(cls, triples: Iterable[tuple[str, str, str]]) -> "Vocabulary":
        entities: dict[str, None] = {}
        relations: dict[str, None] = {}
        for h, r, t in triples:
            entities.setdefault(h)
            relations.setdefault(r)
            entities.setdefault(t)
        return cls.from_labels(entities, relations)

    @property
    def n_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def n_relations(self) -> int:
        return len(self.relation_labels)

    @property
    def n_total(self) -> int:
        return 2 * self.n_entities + self.n_relations

    def entity_id(self, label: str) -> int:
        try:
            return self.entity_index[label]
        except KeyError:
            raise VocabularyError(f"unknown entity label {label!r}") from None

    def relation_id(self, label: str) -> int:
        try:
            return self.relation_index[label]
        except KeyError:
            raise VocabularyError(f"unknown relation label {label!r}") from None


@dataclass(frozen=True)
class TripleSet:
    """Indexed triples of one split, as an ``(n, 3)`` int64 array of ``(h, r, t)`` rows."""

    triples: np.ndarray
    split_name: str = "train"

    def __post_init__(self):
        arr = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        arr.setflags(write=False)
        object.__setattr__(self, "triples", arr)

    def __len__(self) -> int:
        return len(self.triples)

    def __iter__(self):
        return (tuple(int(x) for x in row) for row in self.triples)

    @property
    def heads(self) -> np.ndarray:
        return self.triples[:, 0]

    @property
    def relations(self) -> np.ndarray:
        return self.triples[:, 1]

    @property
    def tails(self) -> np.ndarray:
        return self.triples[:, 2]

    def subset(self, index) -> "TripleSet":
        return TripleSet(self.triples[index], self.split_name)

    def check_bounds(self, vocab: Vocabulary) -> None:
        if not len(self):
            return
        t = self.triples
        if t.min() < 0 or t[:, [0, 2]].max() >= vocab.n_entities or t[:, 1].max() >= vocab.n_relations:
            raise IndexError(f"{self.split_name}: triple index outside vocabulary bounds")


def read_label_triples(path) -> list[tuple[str, str, str]]:
    """Parse a TSV triple file into label triples. Blank lines are skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            out.append((parts[0], parts[1], parts[2]))
    return out


def index_triples(label_triples: Sequence[tuple[str, str, str]], vocab: Vocabulary,
                  split_name: str = "train") -> TripleSet:
    rows = [(vocab.entity_id(h), vocab.relation_id(r), vocab.entity_id(t)) for h, r, t in label_triples]
    return TripleSet(np.array(rows, dtype=np.int64).reshape(-1, 3), split_name)


def load_triples(path, vocab: Vocabulary | str = "build-fresh",
                 split_name: str | None = None) -> tuple[TripleSet, Vocabulary]:
    """Load one triple file.

    With ``vocab="build-fresh"`` a new vocabulary is built from this file alone;
    otherwise labels are looked up in the supplied vocabulary and unknown labels
    raise :class:`VocabularyError`.
    """
    if split_name is None:
        split_name = os.path.splitext(os.path.basename(str(path)))[0]
    labels = read_label_triples(path)
    if isinstance(vocab, str):
        if vocab != "build-fresh":
            raise ValueError(f"vocab must be a Vocabulary or 'build-fresh', got {vocab!r}")
        vocab = Vocabulary.from_label_triples(labels)
    return index_triples(labels, vocab, split_name), vocab


def write_triples(path, triples: TripleSet, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in triples.triples:
            fh.write(f"{vocab.entity_labels[h]}\t{vocab.relation_labels[r]}\t{vocab.entity_labels[t]}\n")


@dataclass(frozen=True)
class Dataset:
    vocab: Vocabulary
    train: TripleSet
    valid: TripleSet
    test: TripleSet

    def split(self, name: str) -> TripleSet:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def stats(self) -> dict:
        return {
            "entities": self.vocab.n_entities,
            "relations": self.vocab.n_relations,
            "train": len(self.train),
            "valid": len(self.valid),
            "test": len(self.test),
        }


def load_dataset(directory) -> Dataset:
    """Load ``train.txt``/``valid.txt``/``test.txt`` with one vocabulary built over all splits."""
    labels = {}
    for name in SPLITS:
        path = os.path.join(directory, f"{name}.txt")
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing split file: {path}")
        labels[name] = read_label_triples(path)
    vocab = Vocabulary.from_label_triples(t for name in SPLITS for t in labels[name])
    sets = {name: index_triples(labels[name], vocab, name) for name in SPLITS}
    return Dataset(vocab, sets["train"], sets["valid"], sets["test"])


def triple_keys(triples: np.ndarray, n_entities: int, n_relations: int) -> np.ndarray:
    """Encode ``(h, r, t)`` rows as unique int64 keys."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return (triples[:, 0] * n_relations + triples[:, 1]) * n_entities + triples[:, 2]


class FilterIndex:
    """Membership over every known triple, with per-(h, r) tails and per-(r, t) heads.

    Immutable after construction and safe to share read-only between workers.
    """

    def __init__(self, splits: Sequence[TripleSet], n_entities: int | None = None,
                 n_relations: int | None = None):
        arrays = [s.triples for s in splits if len(s)]
        allt = np.concatenate(arrays) if arrays else np.empty((0, 3), dtype=np.int64)
        if n_entities is None:
            n_entities = int(allt[:, [0, 2]].max()) + 1 if len(allt) else 0
        if n_relations is None:
            n_relations = int(allt[:, 1].max()) + 1 if len(allt) else 0
        if len(allt) and (allt.min() < 0 or allt[:, [0, 2]].max() >= n_entities
                          or allt[:, 1].max() >= n_relations):
            raise IndexError("triple index outside vocabulary bounds")
        self.n_entities = n_entities
        self.n_relations = n_relations

        keys = triple_keys(allt, max(n_entities, 1), max(n_relations, 1))
        uniq, first = np.unique(keys, return_index=True)
        if len(uniq) < len(keys):
            logger.warning("%d duplicate triples across splits stored once", len(keys) - len(uniq))
        self._keys = uniq
        self._keys.setflags(write=False)
        rows = allt[np.sort(first)]

        self.known: frozenset[tuple[int, int, int]] = frozenset(map(tuple, rows.tolist()))
        tails: dict[tuple[int, int], set[int]] = {}
        heads: dict[tuple[int, int], set[int]] = {}
        for h, r, t in self.known:
            tails.setdefault((h, r), set()).add(t)
            heads.setdefault((r, t), set()).add(h)
        self.tails_of = {k: frozenset(v) for k, v in tails.items()}
        self.heads_of = {k: frozenset(v) for k, v in heads.items()}

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, triple) -> bool:
        return tuple(int(x) for x in triple) in self.known

    def contains_many(self, triples: np.ndarray) -> np.ndarray:
        """Vectorised membership test for an ``(n, 3)`` array."""
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if not len(self._keys):
            return np.zeros(len(triples), dtype=bool)
        keys = triple_keys(triples, max(self.n_entities, 1), max(self.n_relations, 1))
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, len(self._keys) - 1)
        return self._keys[pos] == keys

    def tails(self, h: int, r: int) -> frozenset[int]:
        return self.tails_of.get((h, r), frozenset())

    def heads(self, r: int, t: int) -> frozenset[int]:
        return self.heads_of.get((r, t), frozenset())


def build_filter_index(splits: Sequence[TripleSet], vocab: Vocabulary | None = None) -> FilterIndex:
    if vocab is None:
        return FilterIndex(splits)
    return FilterIndex(splits, vocab.n_entities, vocab.n_relations)


@dataclass(frozen=True)
class BernStats:
    """Per-relation tails-per-head and heads-per-tail averages over the training split."""

    tph: Mapping[int, float]
    hpt: Mapping[int, float]

    def head_probability(self, relation: int) -> float:
        """Probability of corrupting the head for ``relation``: tph / (tph + hpt)."""
        try:
            tph, hpt = self.tph[relation], self.hpt[relation]
        except KeyError:
            raise KeyError(f"relation {relation} absent from the training split") from None
        return tph / (tph + hpt)

    def head_probabilities(self, n_relations: int) -> np.ndarray:
        """Dense lookup table; relations without statistics get NaN."""
        out = np.full(n_relations, np.nan)
        for r in self.tph:
            out[r] = self.head_probability(r)
        return out


def compute_bern_stats(train: TripleSet) -> BernStats:
    if not len(train):
        raise ValueError("Bernoulli statistics need a non-empty training split")
    pairs = np.unique(train.triples, axis=0)
    tph, hpt = {}, {}
    for r in np.unique(pairs[:, 1]):
        rows = pairs[pairs[:, 1] == r]
        n_pairs = len(np.unique(rows[:, [0, 2]], axis=0))
        tph[int(r)] = n_pairs / len(np.unique(rows[:, 0]))
        hpt[int(r)] = n_pairs / len(np.unique(rows[:, 2]))
    return BernStats(tph, hpt)
