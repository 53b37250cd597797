"""Plain-text checkpoints.

Layout::

    tkge-ckpt v1 <model> <dim> <num-entities> <num-relations> <num-buckets> <norm>
    boundaries <min_year> <max_year> [<b1> <b2> ...]
    <one row per vector: entities, relations, time normals, relation normals>

Time normals are present only for hyperplane-time models and relation normals
only for TransH. Values are written with 17 significant digits, so a
save/load round trip is exact.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .buckets import BucketIndex
from .errors import CheckpointError
from .models import EmbeddingStore, ModelKind

MAGIC = "tkge-ckpt"
VERSION = "v1"


@dataclass
class Checkpoint:
    kind: ModelKind
    store: EmbeddingStore
    index: BucketIndex


def _rows(mat: np.ndarray) -> str:
    buf = io.StringIO()
    np.savetxt(buf, mat, fmt="%.17g", delimiter=" ")
    return buf.getvalue()


def dumps(kind: ModelKind, store: EmbeddingStore, index: BucketIndex) -> str:
    if kind.time_planes and store.num_buckets != index.num_buckets:
        raise CheckpointError("store and bucket index disagree on the number of buckets")
    header = (
        f"{MAGIC} {VERSION} {kind.name} {store.dim} {store.num_entities} "
        f"{store.num_relations} {index.num_buckets} {kind.norm}\n"
    )
    bounds = " ".join(str(x) for x in (index.min_year, index.max_year, *index.boundaries))
    parts = [header, f"boundaries {bounds}\n"]
    parts += [_rows(mat) for mat in store.params().values()]
    return "".join(parts)


def save(path: str | Path, kind: ModelKind, store: EmbeddingStore, index: BucketIndex) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(kind, store, index), encoding="utf-8")
    os.replace(tmp, path)


def loads(text: str) -> Checkpoint:
    lines = text.splitlines()
    if len(lines) < 2:
        raise CheckpointError("checkpoint is truncated")
    head = lines[0].split()
    if len(head) != 8 or head[0] != MAGIC:
        raise CheckpointError(f"not a checkpoint header: {lines[0]!r}")
    if head[1] != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {head[1]!r}")
    try:
        kind = ModelKind(head[2], head[7])
        dim, n_ent, n_rel, n_buckets = (int(x) for x in head[3:7])
    except ValueError as exc:
        raise CheckpointError(f"bad checkpoint header: {exc}") from None

    bline = lines[1].split()
    if not bline or bline[0] != "boundaries" or len(bline) < 3:
        raise CheckpointError("missing boundaries line")
    try:
        years = [int(x) for x in bline[1:]]
        index = BucketIndex(tuple(years[2:]), years[0], years[1])
    except ValueError as exc:
        raise CheckpointError(f"bad boundaries line: {exc}") from None
    if index.num_buckets != n_buckets:
        raise CheckpointError(f"header says {n_buckets} buckets, boundaries give {index.num_buckets}")

    sections = [("entity", n_ent), ("relation", n_rel)]
    if kind.time_planes:
        sections.append(("normal", n_buckets))
    if kind.relation_planes:
        sections.append(("transh_normal", n_rel))
    expected = sum(n for _, n in sections)
    body = lines[2:]
    if len(body) != expected:
        raise CheckpointError(f"expected {expected} vector rows, found {len(body)}")
    try:
        data = np.loadtxt(io.StringIO("\n".join(body)), dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise CheckpointError(f"unreadable vector rows: {exc}") from None
    if data.shape != (expected, dim):
        raise CheckpointError(f"vector block has shape {data.shape}, expected {(expected, dim)}")

    mats, start = {}, 0
    for name, n in sections:
        mats[name] = data[start:start + n].copy()
        start += n
    store = EmbeddingStore(mats["entity"], mats["relation"], mats.get("normal"), mats.get("transh_normal"))
    return Checkpoint(kind, store, index)


def load(path: str | Path) -> Checkpoint:
    return loads(Path(path).read_text(encoding="utf-8"))
