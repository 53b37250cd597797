"""Temporal KG dataset loading: vocabularies, quadruple parsing, time spans."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import MalformedLineError, TimeParseError, UnknownSymbolError

log = logging.getLogger(__name__)

DEFAULT_MAX_YEAR = 3000

# optional sign, a year field, then optional "-month-day..." tail
_TIME_TOKEN = re.compile(r"^(-?)([0-9#]+)(?:-[0-9#]+)*$")


class Quadruple(NamedTuple):
    head: int
    relation: int
    tail: int
    t_s: int
    t_e: int

    @property
    def triple(self) -> tuple[int, int, int]:
        return (self.head, self.relation, self.tail)


class TimeSpanRaw(NamedTuple):
    start_token: str
    end_token: str


class RawQuadruple(NamedTuple):
    """A parsed line whose time tokens have not been resolved to years yet."""

    head: int
    relation: int
    tail: int
    span: TimeSpanRaw
    line_no: int = 0


class Vocab:
    """Dense bidirectional name <-> id map. Ids are assigned in insertion order."""

    def __init__(self, names: Iterable[str] = ()):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self._ids.get(name)
        if idx is None:
            idx = len(self._names)
            self._ids[name] = idx
            self._names.append(name)
        return idx

    def id(self, name: str) -> int:
        return self._ids[name]

    def name(self, idx: int) -> str:
        return self._names[idx]

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self):
        return iter(self._names)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._names == other._names

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for idx, name in enumerate(self._names):
                f.write(f"{idx}\t{name}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        vocab = cls()
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                idx, _, name = line.partition("\t")
                if int(idx) != len(vocab):
                    raise MalformedLineError(
                        f"{path}:{line_no}: vocab ids must be dense and sorted"
                    )
                vocab.add(name)
        return vocab


def parse_quadruple_line(
    line: str,
    entities: Vocab,
    relations: Vocab,
    mode: str = "build",
    line_no: int = 0,
) -> RawQuadruple:
    """Split one tab-separated line into ids plus raw time tokens.

    In ``"build"`` mode unseen names get fresh ids; in ``"frozen"`` mode they
    raise :class:`UnknownSymbolError`.
    """
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) != 5:
        raise MalformedLineError(
            f"line {line_no}: expected 5 tab-separated fields, got {len(fields)}",
            line_no=line_no,
        )
    head, rel, tail, start, end = (f.strip() for f in fields)
    if not all((head, rel, tail, start, end)):
        raise MalformedLineError(f"line {line_no}: empty field", line_no=line_no)

    def lookup(vocab: Vocab, name: str) -> int:
        if mode == "build":
            return vocab.add(name)
        if name not in vocab:
            raise UnknownSymbolError(f"line {line_no}: unknown symbol {name!r}")
        return vocab.id(name)

    return RawQuadruple(
        lookup(entities, head),
        lookup(relations, rel),
        lookup(entities, tail),
        TimeSpanRaw(start, end),
        line_no,
    )


def parse_year(token: str) -> int | None:
    """Leading year of a time token, or None when the year is unknown.

    A year field holding any ``#`` counts as unknown (``####``, ``19##-##-##``).
    """
    m = _TIME_TOKEN.match(token.strip())
    if m is None:
        raise TimeParseError(f"cannot parse time token {token!r}")
    sign, year = m.groups()
    if "#" in year:
        return None
    return -int(year) if sign else int(year)


def resolve_time_span(
    raw: TimeSpanRaw, min_year: int, max_year: int = DEFAULT_MAX_YEAR
) -> tuple[int, int, bool]:
    """Resolve raw tokens to ``(t_s, t_e, swapped)``.

    Unknown start maps to ``min_year`` and unknown end to ``max_year``.
    Inverted spans are swapped and flagged.
    """
    if min_year >= max_year:
        raise ValueError(f"min_year ({min_year}) must be < max_year ({max_year})")
    t_s = parse_year(raw.start_token)
    t_e = parse_year(raw.end_token)
    t_s = min_year if t_s is None else t_s
    t_e = max_year if t_e is None else t_e
    if t_s > t_e:
        return t_e, t_s, True
    return t_s, t_e, False


@dataclass(frozen=True)
class Dataset:
    train: tuple[Quadruple, ...]
    valid: tuple[Quadruple, ...]
    test: tuple[Quadruple, ...]
    entity_vocab: Vocab = field(compare=False)
    relation_vocab: Vocab = field(compare=False)
    min_year: int = 0
    max_year: int = DEFAULT_MAX_YEAR
    swapped_spans: int = 0

    @property
    def num_entities(self) -> int:
        return len(self.entity_vocab)

    @property
    def num_relations(self) -> int:
        return len(self.relation_vocab)

    def split(self, name: str) -> tuple[Quadruple, ...]:
        if name not in ("train", "valid", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def array(self, name: str) -> np.ndarray:
        """Split as an ``(n, 5)`` int64 array of ``h, r, t, t_s, t_e``."""
        rows = self.split(name)
        if not rows:
            return np.zeros((0, 5), dtype=np.int64)
        return np.asarray(rows, dtype=np.int64)

    def triples(self, *names: str) -> set[tuple[int, int, int]]:
        return {q.triple for name in names for q in self.split(name)}

    def duplicate_count(self) -> int:
        """Quadruples in valid/test that also occur verbatim in an earlier split."""
        seen = set(self.train)
        dups = 0
        for name in ("valid", "test"):
            for q in self.split(name):
                dups += q in seen
            seen.update(self.split(name))
        return dups

    def stats(self) -> dict[str, int]:
        return {
            "entities": self.num_entities,
            "relations": self.num_relations,
            "train": len(self.train),
            "valid": len(self.valid),
            "test": len(self.test),
            "min_year": self.min_year,
            "max_year": self.max_year,
            "swapped_spans": self.swapped_spans,
            "cross_split_duplicates": self.duplicate_count(),
        }


def _read_split(path, entities, relations, mode) -> list[RawQuadruple]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(parse_quadruple_line(line, entities, relations, mode, line_no))
            except (MalformedLineError, UnknownSymbolError) as exc:
                raise type(exc)(f"{path}:{exc}", line_no=line_no) from None
    return out


def load_dataset(
    train_path: str | Path,
    valid_path: str | Path,
    test_path: str | Path,
    *,
    max_year: int = DEFAULT_MAX_YEAR,
    min_year: int | None = None,
) -> Dataset:
    """Load three quadruple files with a vocabulary over their union.

    ``min_year`` defaults to the smallest known year anywhere in the corpus.
    """
    entities, relations = Vocab(), Vocab()
    raw = {
        name: _read_split(path, entities, relations, "build")
        for name, path in (("train", train_path), ("valid", valid_path), ("test", test_path))
    }

    if min_year is None:
        known = []
        for rows in raw.values():
            for rq in rows:
                for token in rq.span:
                    try:
                        year = parse_year(token)
                    except TimeParseError as exc:
                        raise TimeParseError(f"line {rq.line_no}: {exc}") from None
                    if year is not None:
                        known.append(year)
        min_year = min(known) if known else max_year - 1
        min_year = min(min_year, max_year - 1)

    swapped = 0
    splits = {}
    for name, rows in raw.items():
        quads = []
        for rq in rows:
            try:
                t_s, t_e, flip = resolve_time_span(rq.span, min_year, max_year)
            except TimeParseError as exc:
                raise TimeParseError(f"{name} line {rq.line_no}: {exc}") from None
            if flip:
                swapped += 1
                log.warning("%s line %d: inverted span %s swapped", name, rq.line_no, tuple(rq.span))
            quads.append(Quadruple(rq.head, rq.relation, rq.tail, t_s, t_e))
        splits[name] = tuple(quads)

    ds = Dataset(
        splits["train"],
        splits["valid"],
        splits["test"],
        entities,
        relations,
        min_year=min_year,
        max_year=max_year,
        swapped_spans=swapped,
    )
    log.info(
        "loaded %d/%d/%d quadruples, %d entities, %d relations",
        len(ds.train), len(ds.valid), len(ds.test), ds.num_entities, ds.num_relations,
    )
    return ds
