"""Negative sampling by head/tail (and optionally relation) corruption.

Draws are filtered against a fixed set of known positive triples. A draw that
keeps hitting the filter is retried up to ``retry_cap`` times. After that the
last draw is accepted and counted as an escape, so sampling always terminates
even when almost every corruption is a known positive.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .data import Quadruple
from .errors import CannotCorruptError

log = logging.getLogger(__name__)

HEAD, RELATION, TAIL = 0, 1, 2
SLOT_NAMES = ("head", "relation", "tail")
STRATEGIES = ("entities-only", "entities+relations")
DEFAULT_RETRY_CAP = 100


class PositiveFilter:
    """Exact membership over ``(h, r, t)`` triples, also usable on whole arrays."""

    def __init__(self, triples: Iterable[tuple[int, int, int]], num_entities: int, num_relations: int):
        self.num_entities = int(num_entities)
        self.num_relations = int(num_relations)
        self.triples = frozenset((int(h), int(r), int(t)) for h, r, t in triples)
        arr = np.array(sorted(self.triples), dtype=np.int64).reshape(-1, 3)
        self.keys = np.unique(self.encode(arr[:, 0], arr[:, 1], arr[:, 2]))

    def encode(self, h, r, t) -> np.ndarray:
        h, r, t = (np.asarray(x, dtype=np.int64) for x in (h, r, t))
        return (h * self.num_relations + r) * self.num_entities + t

    def __contains__(self, triple) -> bool:
        return tuple(int(x) for x in triple) in self.triples

    def __len__(self) -> int:
        return len(self.triples)

    def contains(self, h, r, t) -> np.ndarray:
        keys = self.encode(h, r, t)
        if len(self.keys) == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, len(self.keys) - 1)
        return self.keys[pos] == keys

    @classmethod
    def from_dataset(cls, dataset, scope: str = "train") -> "PositiveFilter":
        names = {"train": ("train",), "all": ("train", "valid", "test")}.get(scope)
        if names is None:
            raise ValueError(f"filter scope must be 'train' or 'all', got {scope!r}")
        return cls(dataset.triples(*names), dataset.num_entities, dataset.num_relations)


@dataclass
class SamplingStats:
    draws: int = 0
    escapes: int = 0


class Negative(NamedTuple):
    quadruple: Quadruple
    tau: int
    slot: str


NegativeBatch = list  # list[Negative]


def _corrupt(q, slot, filt, rng, size, cap, stats):
    h, r, t = q[0], q[1], q[2]
    for _ in range(cap):
        x = int(rng.integers(size))
        cand = (x, r, t) if slot == HEAD else (h, x, t) if slot == RELATION else (h, r, x)
        if cand not in filt:
            break
    else:
        if stats is not None:
            stats.escapes += 1
        log.warning("retry cap %d hit corrupting %s of %s", cap, SLOT_NAMES[slot], (h, r, t))
    if stats is not None:
        stats.draws += 1
    return Quadruple(cand[0], cand[1], cand[2], q[3], q[4])


def corrupt_entity(
    q: Quadruple,
    tau: int,
    slot: str,
    filt: PositiveFilter,
    rng: np.random.Generator,
    retry_cap: int = DEFAULT_RETRY_CAP,
    stats: SamplingStats | None = None,
) -> Quadruple:
    """Replace the head or tail with a uniform entity that is not a known positive."""
    if filt.num_entities < 2:
        raise CannotCorruptError("need at least 2 entities to corrupt an entity slot")
    if slot not in ("head", "tail"):
        raise ValueError(f"entity slot must be 'head' or 'tail', got {slot!r}")
    return _corrupt(q, HEAD if slot == "head" else TAIL, filt, rng, filt.num_entities, retry_cap, stats)


def corrupt_relation(
    q: Quadruple,
    tau: int,
    filt: PositiveFilter,
    rng: np.random.Generator,
    retry_cap: int = DEFAULT_RETRY_CAP,
    stats: SamplingStats | None = None,
) -> Quadruple:
    if filt.num_relations < 2:
        raise CannotCorruptError("need at least 2 relations to corrupt the relation slot")
    return _corrupt(q, RELATION, filt, rng, filt.num_relations, retry_cap, stats)


def slot_probabilities(strategy: str, count: int, rel_neg_weight: float | None = None) -> np.ndarray:
    """Probabilities of corrupting ``(head, relation, tail)``.

    With relations enabled the relation slot defaults to ``1 / (2 * count)``
    and the remainder is split evenly between head and tail.
    """
    if strategy == "entities-only":
        return np.array([0.5, 0.0, 0.5])
    if strategy != "entities+relations":
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    p_rel = 1.0 / (2 * count) if rel_neg_weight is None else float(rel_neg_weight)
    if not 0.0 <= p_rel <= 1.0:
        raise ValueError(f"rel_neg_weight must lie in [0, 1], got {p_rel}")
    side = (1.0 - p_rel) / 2
    return np.array([side, p_rel, side])


def build_negatives(
    q: Quadruple,
    tau: int,
    strategy: str,
    count: int,
    filt: PositiveFilter,
    rng: np.random.Generator,
    rel_neg_weight: float | None = None,
    retry_cap: int = DEFAULT_RETRY_CAP,
    stats: SamplingStats | None = None,
) -> NegativeBatch:
    if count < 1:
        raise ValueError("count must be >= 1")
    probs = slot_probabilities(strategy, count, rel_neg_weight)
    out = []
    for slot in rng.choice(3, size=count, p=probs):
        if slot == RELATION:
            neg = corrupt_relation(q, tau, filt, rng, retry_cap, stats)
        else:
            neg = corrupt_entity(q, tau, SLOT_NAMES[slot], filt, rng, retry_cap, stats)
        out.append(Negative(neg, tau, SLOT_NAMES[slot]))
    return out


class NegativeSampler:
    """Array version of :func:`build_negatives` used by the training loop.

    ``sample`` returns ``count`` negatives per positive, laid out positive-major
    (the negatives of positive ``i`` sit at ``i*count : (i+1)*count``).
    """

    def __init__(
        self,
        filt: PositiveFilter,
        strategy: str = "entities-only",
        count: int = 5,
        rel_neg_weight: float | None = None,
        retry_cap: int = DEFAULT_RETRY_CAP,
    ):
        if count < 1:
            raise ValueError("count must be >= 1")
        self.filter = filt
        self.count = int(count)
        self.strategy = strategy
        self.probs = slot_probabilities(strategy, count, rel_neg_weight)
        self.retry_cap = int(retry_cap)
        self.stats = SamplingStats()
        if self.probs[HEAD] + self.probs[TAIL] > 0 and filt.num_entities < 2:
            raise CannotCorruptError("need at least 2 entities to corrupt an entity slot")
        if self.probs[RELATION] > 0 and filt.num_relations < 2:
            raise CannotCorruptError("need at least 2 relations to corrupt the relation slot")

    def sample(self, h, r, t, rng: np.random.Generator):
        """Returns ``(h', r', t', slot)`` arrays of length ``len(h) * count``."""
        h, r, t = (np.repeat(np.asarray(x, dtype=np.int64), self.count) for x in (h, r, t))
        n = len(h)
        slot = rng.choice(3, size=n, p=self.probs)
        nh, nr, nt = h.copy(), r.copy(), t.copy()
        todo = np.arange(n)
        for _ in range(self.retry_cap):
            if len(todo) == 0:
                break
            s = slot[todo]
            sizes = np.where(s == RELATION, self.filter.num_relations, self.filter.num_entities)
            draw = (rng.random(len(todo)) * sizes).astype(np.int64)
            nh[todo] = np.where(s == HEAD, draw, h[todo])
            nr[todo] = np.where(s == RELATION, draw, r[todo])
            nt[todo] = np.where(s == TAIL, draw, t[todo])
            todo = todo[self.filter.contains(nh[todo], nr[todo], nt[todo])]
        self.stats.draws += n
        if len(todo):
            self.stats.escapes += len(todo)
            log.warning("retry cap hit for %d negatives", len(todo))
        return nh, nr, nt, slot
