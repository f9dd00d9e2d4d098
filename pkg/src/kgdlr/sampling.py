"""Negative sampling by corrupting the head, the tail or (NSER) the relation."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .dataset import BernStats, FilterIndex

logger = logging.getLogger(__name__)

HEAD, RELATION, TAIL = 0, 1, 2


class SamplingError(ValueError):
    pass


class Scheme(str, enum.Enum):
    NSE = "nse"
    NSER = "nser"


class EntityChoice(str, enum.Enum):
    UNIFORM = "uniform"
    BERN = "bern"


@dataclass(frozen=True)
class SamplerConfig:
    scheme: Scheme = Scheme.NSER
    entity_choice: EntityChoice = EntityChoice.UNIFORM
    max_resample: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(str(getattr(self.scheme, "value", self.scheme)).lower()))
        object.__setattr__(self, "entity_choice",
                           EntityChoice(str(getattr(self.entity_choice, "value", self.entity_choice)).lower()))
        if self.max_resample < 1:
            raise ValueError("max_resample must be positive")


def slot_probabilities(scheme, n_entities: int, n_relations: int) -> tuple[float, float, float]:
    """(P(head), P(relation), P(tail)) before any Bernoulli bias."""
    if Scheme(scheme) is Scheme.NSE:
        return 0.5, 0.0, 0.5
    total = 2 * n_entities + n_relations
    return n_entities / total, n_relations / total, n_entities / total


def choose_slots(scheme, n_entities: int, n_relations: int, rng: np.random.Generator,
                 size: int | None = None):
    """Draw corruption slots (HEAD, RELATION or TAIL)."""
    p_head, p_rel, _ = slot_probabilities(scheme, n_entities, n_relations)
    u = rng.random(size)
    return np.where(u < p_head, HEAD, np.where(u < p_head + p_rel, RELATION, TAIL))


def choose_slot(cfg: SamplerConfig, n_entities: int, n_relations: int, rng: np.random.Generator) -> int:
    return int(choose_slots(cfg.scheme, n_entities, n_relations, rng))


def _draw_excluding(rng, n: int, original: np.ndarray) -> np.ndarray:
    # uniform over range(n) without the original value
    draw = rng.integers(0, n - 1, size=original.shape)
    return draw + (draw >= original)


class NegativeSampler:
    """Stateful corruption sampler owning its own random stream.

    ``bern`` must be supplied exactly when ``cfg.entity_choice`` is Bern.
    """

    def __init__(self, cfg: SamplerConfig, n_entities: int, n_relations: int,
                 filter_index: FilterIndex | None = None, bern: BernStats | None = None):
        if (cfg.entity_choice is EntityChoice.BERN) != (bern is not None):
            raise SamplingError("Bernoulli statistics are required iff entity_choice is bern")
        self.cfg = cfg
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.filter = filter_index
        self.rng = np.random.default_rng(cfg.seed)
        self._head_prob = bern.head_probabilities(n_relations) if bern is not None else None
        self.exhausted = 0

    def _slots(self, relations: np.ndarray) -> np.ndarray:
        n = len(relations)
        if self._head_prob is None:
            return choose_slots(self.cfg.scheme, self.n_entities, self.n_relations, self.rng, n)
        # Bern only biases the head/tail split; the relation slot keeps #Rel/#Total
        _, p_rel, _ = slot_probabilities(self.cfg.scheme, self.n_entities, self.n_relations)
        p_head = self._head_prob[relations]
        if np.isnan(p_head).any():
            bad = int(relations[np.isnan(p_head)][0])
            raise KeyError(f"relation {bad} absent from the training split")
        u = self.rng.random(n)
        v = self.rng.random(n)
        return np.where(u < p_rel, RELATION, np.where(v < p_head, HEAD, TAIL))

    def _replace(self, neg: np.ndarray, slots: np.ndarray, rows: np.ndarray, src: np.ndarray) -> None:
        for slot, size in ((HEAD, self.n_entities), (RELATION, self.n_relations), (TAIL, self.n_entities)):
            sel = rows[slots[rows] == slot]
            if len(sel):
                if size < 2:
                    raise SamplingError(f"cannot corrupt slot {slot}: vocabulary has {size} item(s)")
                neg[sel, slot] = _draw_excluding(self.rng, size, src[sel, slot])

    def corrupt_batch(self, triples) -> tuple[np.ndarray, np.ndarray]:
        """Corrupt every row of ``triples``.

        Returns ``(negatives, possibly_false)``; a row is flagged when every
        one of ``max_resample`` draws hit a known triple.
        """
        pos = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        neg = pos.copy()
        slots = self._slots(pos[:, 1])
        pending = np.arange(len(pos))
        self._replace(neg, slots, pending, pos)
        if self.filter is not None:
            for _ in range(self.cfg.max_resample - 1):
                pending = pending[self.filter.contains_many(neg[pending])]
                if not len(pending):
                    break
                self._replace(neg, slots, pending, pos)
            else:
                pending = pending[self.filter.contains_many(neg[pending])]
        flagged = np.zeros(len(pos), dtype=bool)
        if self.filter is not None and len(pending):
            flagged[pending] = True
            self.exhausted += len(pending)
            logger.debug("resampling exhausted for %d triple(s)", len(pending))
        return neg, flagged

    def corrupt(self, triple) -> tuple[tuple[int, int, int], bool]:
        neg, flag = self.corrupt_batch(np.asarray(triple).reshape(1, 3))
        return tuple(int(x) for x in neg[0]), bool(flag[0])


def corrupt(cfg: SamplerConfig, triple, n_entities: int, n_relations: int,
            filter_index: FilterIndex | None = None, bern: BernStats | None = None):
    """One-off corruption using a fresh sampler seeded from ``cfg.seed``."""
    return NegativeSampler(cfg, n_entities, n_relations, filter_index, bern).corrupt(triple)
