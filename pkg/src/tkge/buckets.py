"""Threshold-balanced time buckets built from fine-grained validity slices.

Every fact is expanded into the fine slices ``t_s, t_s + S, ... <= t_e`` it is
valid in. Slices are scanned in temporal order while their counts accumulate;
once the running mass exceeds the threshold, the current slice year becomes a
boundary and the accumulator restarts from zero.

A boundary year closes its bucket, so bucket ``i`` holds the years
``(boundaries[i-1], boundaries[i]]``. The first bucket starts at ``min_year``
and the last one ends at ``max_year``.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyInputError

log = logging.getLogger(__name__)

Span = tuple[int, int]


@dataclass(frozen=True)
class BucketConfig:
    slice_width: int = 1
    threshold: int = 300

    def __post_init__(self):
        if int(self.slice_width) < 1:
            raise ValueError(f"slice_width must be >= 1, got {self.slice_width}")
        if int(self.threshold) < 1:
            raise ValueError(f"threshold must be >= 1, got {self.threshold}")


# ordered year -> count; plain dicts keep insertion order and we insert sorted
SliceHistogram = dict


def expand_fine_slices(spans: Iterable[Span], config: BucketConfig) -> SliceHistogram:
    """Count how many facts are valid in each fine slice.

    Works on difference arrays per ``t_s mod S`` residue class, so long spans
    (e.g. ones ending at the unknown-end sentinel) stay cheap.
    """
    arr = np.asarray(list(spans), dtype=np.int64).reshape(-1, 2)
    if len(arr) == 0:
        return {}
    t_s, t_e = arr[:, 0], arr[:, 1]
    if np.any(t_s > t_e):
        raise ValueError("every span needs t_s <= t_e")
    step = int(config.slice_width)
    lo = int(t_s.min())
    offsets = t_s - lo
    residue = offsets % step
    first = offsets // step
    count = (t_e - t_s) // step + 1
    width = int((first + count).max()) + 1

    totals: dict[int, int] = {}
    for rho in np.unique(residue):
        sel = residue == rho
        diff = np.zeros(width, dtype=np.int64)
        np.add.at(diff, first[sel], 1)
        np.add.at(diff, first[sel] + count[sel], -1)
        mass = np.cumsum(diff)
        for j in np.flatnonzero(mass):
            totals[lo + int(rho) + int(j) * step] = int(mass[j])
    return {year: totals[year] for year in sorted(totals)}


def endpoint_histogram(spans: Iterable[Span]) -> SliceHistogram:
    """Counts of start and end years only (one count if they coincide).

    This is the older equal-frequency split used by plain HyTE, which ignores
    the years a fact spans between its endpoints.
    """
    counts: dict[int, int] = {}
    for t_s, t_e in spans:
        for year in {int(t_s), int(t_e)}:
            counts[year] = counts.get(year, 0) + 1
    return {year: counts[year] for year in sorted(counts)}


@dataclass(frozen=True)
class BucketIndex:
    boundaries: tuple[int, ...]
    min_year: int
    max_year: int

    def __post_init__(self):
        b = self.boundaries
        if any(x >= y for x, y in zip(b, b[1:])):
            raise ValueError(f"boundaries must be strictly increasing: {b}")
        if self.min_year > self.max_year:
            raise ValueError("min_year > max_year")
        if b and (b[0] < self.min_year or b[-1] > self.max_year):
            raise ValueError("boundaries fall outside [min_year, max_year]")

    @property
    def num_buckets(self) -> int:
        return len(self.boundaries) + 1

    def lookup(self, t: int) -> tuple[int, bool]:
        """``(bucket, clamped)``; years outside the range go to the nearest end bucket."""
        clamped = t < self.min_year or t > self.max_year
        t = min(max(t, self.min_year), self.max_year)
        return bisect.bisect_left(self.boundaries, t), clamped

    def bucket_of(self, t: int) -> int:
        return self.lookup(t)[0]

    def buckets_of(self, years) -> np.ndarray:
        years = np.clip(np.asarray(years, dtype=np.int64), self.min_year, self.max_year)
        return np.searchsorted(np.asarray(self.boundaries, dtype=np.int64), years, side="left")

    def year_range(self, bucket: int) -> tuple[int, int]:
        if not 0 <= bucket < self.num_buckets:
            raise IndexError(f"bucket {bucket} out of range [0, {self.num_buckets})")
        start = self.min_year if bucket == 0 else self.boundaries[bucket - 1] + 1
        end = self.max_year if bucket == self.num_buckets - 1 else self.boundaries[bucket]
        return start, end

    def covering(self, t_s: int, t_e: int) -> range:
        return buckets_covering((t_s, t_e), self)


def bucket_of(t: int, index: BucketIndex) -> int:
    return index.bucket_of(t)


def buckets_covering(span: Span, index: BucketIndex) -> range:
    t_s, t_e = span
    if t_s > t_e:
        raise ValueError(f"span {span} has t_s > t_e")
    return range(index.bucket_of(t_s), index.bucket_of(t_e) + 1)


def build_boundaries(
    hist: Mapping[int, int],
    config: BucketConfig,
    min_year: int | None = None,
    max_year: int | None = None,
) -> BucketIndex:
    """Scan the histogram and cut a boundary each time the mass exceeds the threshold.

    A boundary landing on the very last slice would leave an empty trailing
    bucket, so it is dropped; the last full bucket then becomes the final one.
    """
    if not hist:
        raise EmptyInputError("cannot build buckets from an empty histogram")
    years = sorted(hist)
    lo = years[0] if min_year is None else min(min_year, years[0])
    hi = years[-1] if max_year is None else max(max_year, years[-1])

    expected = math.ceil((years[-1] - years[0]) / config.slice_width)
    if len(years) > expected + 1:
        log.debug("histogram has %d keys, more than the %d slices expected", len(years), expected + 1)

    boundaries = []
    count = 0
    for year in years:
        count += hist[year]
        if count > config.threshold:
            boundaries.append(year)
            count = 0
    if boundaries and boundaries[-1] == years[-1]:
        boundaries.pop()
    return BucketIndex(tuple(boundaries), lo, hi)


def build_index(
    spans: Sequence[Span], config: BucketConfig, *, balanced: bool = True
) -> BucketIndex:
    """Index over the given spans; ``balanced=False`` gives the endpoint-only split."""
    spans = [(int(a), int(b)) for a, b in spans]
    if not spans:
        raise EmptyInputError("cannot build buckets without any spans")
    hist = expand_fine_slices(spans, config) if balanced else endpoint_histogram(spans)
    lo = min(s for s, _ in spans)
    hi = max(e for _, e in spans)
    return build_boundaries(hist, config, lo, hi)


def bucket_mass(hist: Mapping[int, int], index: BucketIndex) -> list[int]:
    """Sum of slice counts whose year falls in each bucket."""
    mass = [0] * index.num_buckets
    for year, count in hist.items():
        mass[index.bucket_of(year)] += count
    return mass


@dataclass
class BucketStats:
    index: BucketIndex
    fact_counts: list[int]
    slice_mass: list[int] | None = None

    def rows(self):
        for b in range(self.index.num_buckets):
            start, end = self.index.year_range(b)
            mass = None if self.slice_mass is None else self.slice_mass[b]
            yield b, start, end, self.fact_counts[b], mass

    def format(self) -> str:
        idx = self.index
        out = [
            f"num_buckets {idx.num_buckets}",
            f"year_range {idx.min_year} {idx.max_year}",
            "boundaries " + " ".join(str(b) for b in idx.boundaries),
            "",
            f"{'bucket':>6}  {'start':>6}  {'end':>6}  {'facts':>8}  {'slice_mass':>10}",
        ]
        for b, start, end, facts, mass in self.rows():
            mass_s = "-" if mass is None else str(mass)
            out.append(f"{b:>6}  {start:>6}  {end:>6}  {facts:>8}  {mass_s:>10}")
        counts = self.fact_counts
        out.append("")
        out.append(
            f"facts per bucket: min {min(counts)} max {max(counts)} "
            f"mean {sum(counts) / len(counts):.2f}"
        )
        return "\n".join(out)


def bucket_stats(dataset, index: BucketIndex, config: BucketConfig | None = None) -> BucketStats:
    """Count training facts covering each bucket (a fact counts once per bucket it spans)."""
    diff = np.zeros(index.num_buckets + 1, dtype=np.int64)
    for q in dataset.train:
        cover = buckets_covering((q.t_s, q.t_e), index)
        diff[cover.start] += 1
        diff[cover.stop] -= 1
    counts = [int(c) for c in np.cumsum(diff)[:-1]]
    mass = None
    if config is not None and dataset.train:
        hist = expand_fine_slices([(q.t_s, q.t_e) for q in dataset.train], config)
        mass = bucket_mass(hist, index)
    return BucketStats(index, counts, mass)
