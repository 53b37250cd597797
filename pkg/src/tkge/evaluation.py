"""Head / tail / relation ranking with Mean Rank and HIT@k.

Ranks are raw by default. Each candidate is scored in the query's bucket (the
bucket holding the fact's start year) and candidates are sorted by ascending
score. The gold rank is ``1 + #(candidates scoring strictly lower)``, so a
tie never pushes the gold down. Listed candidates with equal scores are
ordered by id.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .buckets import BucketIndex, buckets_covering
from .errors import CheckpointError
from .models import EmbeddingStore, ModelKind, norm_of, project_onto

TASKS = ("head", "tail", "relation")
DEFAULT_KS = (1, 3, 10)
TIE_NOTE = "raw ranks; ties resolved optimistically (rank = 1 + #strictly-better)"


class Scorer:
    """Scores every candidate for one slot, caching per-plane projections."""

    def __init__(self, store: EmbeddingStore, kind: ModelKind):
        self.store = store
        self.kind = kind
        self._ent: dict[int, np.ndarray] = {}
        self._rel: dict[int, np.ndarray] = {}

    def _plane(self, key: int) -> np.ndarray:
        if self.kind.time_planes:
            return self.store.normal[key]
        return self.store.transh_normal[key]

    def _proj_entities(self, key: int) -> np.ndarray:
        if key not in self._ent:
            self._ent[key] = project_onto(self.store.entity, self._plane(key))
        return self._ent[key]

    def _proj_relations(self, key: int) -> np.ndarray:
        if key not in self._rel:
            self._rel[key] = project_onto(self.store.relation, self._plane(key))
        return self._rel[key]

    def candidates(self, h: int, r: int, t: int, tau: int, task: str) -> np.ndarray:
        kind, store = self.kind, self.store
        if kind.relation_planes and task == "relation":
            u = store.entity[h] + store.relation - store.entity[t]
            e = project_onto(u, store.transh_normal)
        elif kind.time_planes or kind.relation_planes:
            key = tau if kind.time_planes else r
            ents = self._proj_entities(key)
            if task == "relation":
                e = ents[h] + self._proj_relations(key) - ents[t]
            else:
                rel = self._proj_relations(key)[r]
                e = ents[h] + rel - ents if task == "tail" else ents + rel - ents[t]
        else:
            ents, rels = store.entity, store.relation
            if task == "relation":
                e = ents[h] + rels - ents[t]
            elif task == "tail":
                e = ents[h] + rels[r] - ents
            else:
                e = ents + rels[r] - ents[t]
        return norm_of(e, kind.norm)


def gold_of(q, task: str) -> int:
    return {"head": q[0], "relation": q[1], "tail": q[2]}[task]


def rank_from_scores(scores: np.ndarray, gold: int, exclude: np.ndarray | None = None) -> int:
    """1-based optimistic rank of ``gold``; ``exclude`` marks candidates dropped from the count."""
    better = scores < scores[gold]
    if exclude is not None:
        better &= ~exclude
    return int(better.sum()) + 1


def candidate_order(scores: np.ndarray) -> np.ndarray:
    return np.argsort(scores, kind="stable")


def query_buckets(q, index: BucketIndex, bucket_mode: str = "start") -> Sequence[int]:
    if bucket_mode == "start":
        return (index.bucket_of(q[3]),)
    if bucket_mode == "best":
        return buckets_covering((q[3], q[4]), index)
    raise ValueError(f"bucket mode must be 'start' or 'best', got {bucket_mode!r}")


def _check_sizes(store: EmbeddingStore, kind: ModelKind, index: BucketIndex | None):
    if kind.time_planes and (index is None or index.num_buckets != store.num_buckets):
        raise CheckpointError(
            f"bucket index has {None if index is None else index.num_buckets} buckets, "
            f"store has {store.num_buckets}"
        )


def _filtered_mask(filt, q, task: str, n: int) -> np.ndarray:
    h, r, t = q[0], q[1], q[2]
    ids = np.arange(n)
    if task == "head":
        mask = filt.contains(ids, r, t)
    elif task == "tail":
        mask = filt.contains(h, r, ids)
    else:
        mask = filt.contains(h, ids, t)
    mask[gold_of(q, task)] = False
    return mask


@dataclass
class RankResult:
    rank: int
    order: np.ndarray
    scores: np.ndarray
    tau: int


def rank_candidates(
    q,
    task: str,
    store: EmbeddingStore,
    kind: ModelKind,
    index: BucketIndex | None,
    *,
    scorer: Scorer | None = None,
    filt=None,
    bucket_mode: str = "start",
) -> RankResult:
    """Rank the gold item of ``q`` among all candidates for ``task``.

    ``filt`` (a :class:`~tkge.sampling.PositiveFilter`) switches to filtered
    ranking; ``bucket_mode="best"`` scores each candidate by its minimum over
    the buckets the fact covers.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    scorer = scorer or Scorer(store, kind)
    if kind.time_planes:
        taus = query_buckets(q, index, bucket_mode)
    else:
        taus = (0,)
    scores = None
    for tau in taus:
        s = scorer.candidates(q[0], q[1], q[2], tau, task)
        scores = s if scores is None else np.minimum(scores, s)
    gold = gold_of(q, task)
    exclude = None if filt is None else _filtered_mask(filt, q, task, len(scores))
    return RankResult(rank_from_scores(scores, gold, exclude), candidate_order(scores), scores, taus[0])


@dataclass
class RankReport:
    task: str
    ranks: np.ndarray
    hit_at: dict[int, float] = field(default_factory=dict)

    @classmethod
    def from_ranks(cls, task: str, ranks: Iterable[int], ks: Iterable[int] = DEFAULT_KS) -> "RankReport":
        ranks = np.asarray(list(ranks), dtype=np.int64)
        n = max(len(ranks), 1)
        hit_at = {int(k): float((ranks <= k).sum()) / n for k in sorted(set(ks))}
        return cls(task, ranks, hit_at)

    @property
    def n(self) -> int:
        return len(self.ranks)

    @property
    def mean_rank(self) -> float:
        return float(self.ranks.mean()) if len(self.ranks) else float("nan")

    def line(self) -> str:
        parts = [f"task={self.task}", f"mr={self.mean_rank:.4f}"]
        parts += [f"hit{k}={v:.4f}" for k, v in self.hit_at.items()]
        parts.append(f"n={self.n}")
        return " ".join(parts)


def evaluate_split(
    quads: Sequence,
    tasks: Iterable[str],
    store: EmbeddingStore,
    kind: ModelKind,
    index: BucketIndex | None,
    ks: Iterable[int] = DEFAULT_KS,
    *,
    filt=None,
    bucket_mode: str = "start",
) -> dict[str, RankReport]:
    """Rank every quadruple of a split for each task.

    HIT@10 is always reported for entity tasks and HIT@1 for relations, on top
    of whatever ``ks`` asks for.
    """
    if not len(quads):
        raise ValueError("cannot evaluate an empty split")
    _check_sizes(store, kind, index)
    scorer = Scorer(store, kind)
    reports = {}
    for task in tasks:
        must = (1,) if task == "relation" else (10,)
        ranks = [
            rank_candidates(q, task, store, kind, index, scorer=scorer, filt=filt, bucket_mode=bucket_mode).rank
            for q in quads
        ]
        reports[task] = RankReport.from_ranks(task, ranks, tuple(ks) + must)
    return reports


def format_reports(reports: dict[str, RankReport], title: str = "") -> str:
    ks = sorted({k for r in reports.values() for k in r.hit_at})
    head = f"{'task':<9}{'n':>7}{'MR':>12}" + "".join(f"{'HIT@' + str(k):>10}" for k in ks)
    lines = [f"# {title}" if title else None, f"# {TIE_NOTE}", head]
    for rep in reports.values():
        cells = "".join(
            f"{rep.hit_at[k]:>10.4f}" if k in rep.hit_at else f"{'-':>10}" for k in ks
        )
        lines.append(f"{rep.task:<9}{rep.n:>7}{rep.mean_rank:>12.4f}{cells}")
    lines.append("")
    lines.extend(rep.line() for rep in reports.values())
    return "\n".join(line for line in lines if line is not None)


@dataclass
class CompletionRecord:
    quadruple: tuple
    task: str
    gold: int
    rank: int
    top: list[tuple[int, float]]
    hit: bool


def fine_grained_report(
    quads: Sequence,
    store: EmbeddingStore,
    kind: ModelKind,
    index: BucketIndex | None,
    n_cases: int | None = None,
    tasks: Iterable[str] = TASKS,
) -> list[CompletionRecord]:
    """Per-query completion records: top-1 for relations, top-10 for entities."""
    _check_sizes(store, kind, index)
    scorer = Scorer(store, kind)
    picked = quads if n_cases is None else quads[:n_cases]
    records = []
    for task in tasks:
        k = 1 if task == "relation" else 10
        for q in picked:
            res = rank_candidates(q, task, store, kind, index, scorer=scorer)
            top = [(int(c), float(res.scores[c])) for c in res.order[:k]]
            records.append(CompletionRecord(tuple(int(x) for x in q), task, gold_of(q, task), res.rank, top, res.rank <= k))
    return records


def _fact_with_gap(rec: CompletionRecord, entities, relations) -> tuple[str, str, str]:
    h, r, t = rec.quadruple[:3]
    names = [entities.name(h), relations.name(r), entities.name(t)]
    names[{"head": 0, "relation": 1, "tail": 2}[rec.task]] = "?"
    return tuple(names)


def _name(rec: CompletionRecord, idx: int, entities, relations) -> str:
    return (relations if rec.task == "relation" else entities).name(idx)


def format_fine_grained(records: Sequence[CompletionRecord], entities, relations) -> str:
    lines = [f"{'task':<9}{'query':<60}{'span':<12}{'gold':<30}hit  top candidates"]
    for rec in records:
        fact = "(" + ", ".join(_fact_with_gap(rec, entities, relations)) + ")"
        span = f"{rec.quadruple[3]}-{rec.quadruple[4]}"
        gold = _name(rec, rec.gold, entities, relations)
        top = ", ".join(_name(rec, c, entities, relations) for c, _ in rec.top)
        mark = "yes" if rec.hit else "-"
        lines.append(f"{rec.task:<9}{fact:<60}{span:<12}{gold:<30}{mark:<5}{top}")
    return "\n".join(lines)


def write_fine_grained_csv(path, records: Sequence[CompletionRecord], entities, relations) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["task", "head", "relation", "tail", "t_s", "t_e", "gold", "top_k", "hit"])
        for rec in records:
            h, r, t, t_s, t_e = rec.quadruple
            top = ";".join(f"{_name(rec, c, entities, relations)}={s:.6f}" for c, s in rec.top)
            w.writerow([
                rec.task, entities.name(h), relations.name(r), entities.name(t),
                t_s, t_e, _name(rec, rec.gold, entities, relations), top, int(rec.hit),
            ])
