"""Translational scorers over an explicit numpy parameter store.

All model kinds share one residual form. With ``u = h + r - t`` and a unit
normal ``n``, the projected residual is ``e = u - (n.u) n``, which equals
``P(h) + P(r) - P(t)``. The score is ``||e||`` under l1 or l2.

* TransE uses no plane, so ``e = u``.
* TransH picks the plane normal by relation.
* HyTE, bt-HyTE and tr-HyTE pick the plane normal by time bucket.

Gradients are written out by hand. With ``s = d||e||/de`` (``sign(e)`` for
l1, ``e/||e||`` for l2) they are:

    d/du = s - (n.s) n        (h gets +, r gets +, t gets -)
    d/dn = -(s.n) u - (n.u) s
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

log = logging.getLogger(__name__)

MODEL_NAMES = ("transe", "transh", "hyte", "bt-hyte", "tr-hyte")
NORMS = ("l1", "l2")


@dataclass(frozen=True)
class ModelKind:
    name: str = "bt-hyte"
    norm: str = "l1"

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.name!r}; choose from {MODEL_NAMES}")
        if self.norm not in NORMS:
            raise ValueError(f"unknown norm {self.norm!r}; choose l1 or l2")

    @property
    def time_planes(self) -> bool:
        return self.name in ("hyte", "bt-hyte", "tr-hyte")

    @property
    def relation_planes(self) -> bool:
        return self.name == "transh"

    @property
    def balanced_buckets(self) -> bool:
        """Plain HyTE keeps the endpoint-only split; everything else uses the balanced one."""
        return self.name != "hyte"

    @property
    def corrupts_relations(self) -> bool:
        return self.name == "tr-hyte"


@dataclass
class EmbeddingStore:
    entity: np.ndarray
    relation: np.ndarray
    normal: np.ndarray | None = None
    transh_normal: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.entity.shape[1]

    @property
    def num_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def num_relations(self) -> int:
        return self.relation.shape[0]

    @property
    def num_buckets(self) -> int:
        return 0 if self.normal is None else self.normal.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        out = {"entity": self.entity, "relation": self.relation}
        if self.normal is not None:
            out["normal"] = self.normal
        if self.transh_normal is not None:
            out["transh_normal"] = self.transh_normal
        return out

    def copy(self) -> "EmbeddingStore":
        return EmbeddingStore(
            self.entity.copy(),
            self.relation.copy(),
            None if self.normal is None else self.normal.copy(),
            None if self.transh_normal is None else self.transh_normal.copy(),
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params().values())


def init_store(
    kind: ModelKind,
    num_entities: int,
    num_relations: int,
    num_buckets: int,
    dim: int,
    rng: np.random.Generator,
) -> EmbeddingStore:
    """Uniform(-6/sqrt(d), 6/sqrt(d)) for every matrix, then one constraint pass.

    Relation vectors are scaled to unit length once here (as in TransE's
    initialization) and left unconstrained afterwards.
    """
    bound = 6.0 / np.sqrt(dim)

    def draw(rows):
        return rng.uniform(-bound, bound, size=(rows, dim))

    store = EmbeddingStore(
        entity=draw(num_entities),
        relation=draw(num_relations),
        normal=draw(num_buckets) if kind.time_planes else None,
        transh_normal=draw(num_relations) if kind.relation_planes else None,
    )
    store.relation /= np.linalg.norm(store.relation, axis=1, keepdims=True)
    enforce_constraints(store, rng)
    return store


def project_onto(v: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Remove the component of ``v`` along unit normal ``n`` (row-wise for 2-D input)."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    return v - np.sum(v * n, axis=-1, keepdims=True) * n


def project(v: np.ndarray, tau: int, store: EmbeddingStore) -> np.ndarray:
    if store.normal is None:
        raise IndexError("store has no time hyperplanes")
    if not 0 <= tau < store.num_buckets:
        raise IndexError(f"bucket {tau} out of range [0, {store.num_buckets})")
    return project_onto(v, store.normal[tau])


def _planes(store: EmbeddingStore, kind: ModelKind, r, tau):
    if kind.time_planes:
        return store.normal[tau]
    if kind.relation_planes:
        return store.transh_normal[r]
    return None


def residuals(store: EmbeddingStore, kind: ModelKind, h, r, t, tau):
    """Returns ``(u, e, n)``; ``n`` is None for TransE."""
    u = store.entity[h] + store.relation[r] - store.entity[t]
    n = _planes(store, kind, r, tau)
    e = u if n is None else project_onto(u, n)
    return u, e, n


def norm_of(e: np.ndarray, norm: str) -> np.ndarray:
    if norm == "l1":
        return np.abs(e).sum(axis=-1)
    return np.sqrt((e * e).sum(axis=-1))


def scores(store: EmbeddingStore, kind: ModelKind, h, r, t, tau) -> np.ndarray:
    """Vectorized score over index arrays (broadcastable)."""
    _, e, _ = residuals(store, kind, h, r, t, tau)
    return norm_of(e, kind.norm)


def score(q, tau: int, kind: ModelKind, store: EmbeddingStore) -> float:
    """Score of one quadruple (anything with head/relation/tail) in bucket ``tau``."""
    if kind.time_planes and not 0 <= tau < store.num_buckets:
        raise IndexError(f"bucket {tau} out of range [0, {store.num_buckets})")
    return float(scores(store, kind, q[0], q[1], q[2], tau))


def margin_loss(pos_score, neg_score, margin: float):
    return np.maximum(0.0, pos_score - neg_score + margin)


def _score_direction(e: np.ndarray, norm: str) -> np.ndarray:
    if norm == "l1":
        return np.sign(e)
    length = np.sqrt((e * e).sum(axis=-1, keepdims=True))
    safe = np.where(length > 0, length, 1.0)
    return np.where(length > 0, e / safe, 0.0)


class Triples(NamedTuple):
    """Parallel index arrays for a batch of scored triples."""

    h: np.ndarray
    r: np.ndarray
    t: np.ndarray
    tau: np.ndarray


@dataclass
class DenseGrads:
    entity: np.ndarray
    relation: np.ndarray
    normal: np.ndarray | None
    transh_normal: np.ndarray | None

    @classmethod
    def zeros_like(cls, store: EmbeddingStore) -> "DenseGrads":
        return cls(
            np.zeros_like(store.entity),
            np.zeros_like(store.relation),
            None if store.normal is None else np.zeros_like(store.normal),
            None if store.transh_normal is None else np.zeros_like(store.transh_normal),
        )

    def items(self):
        for name in ("entity", "relation", "normal", "transh_normal"):
            g = getattr(self, name)
            if g is not None:
                yield name, g


def _accumulate(grads: DenseGrads, store, kind, trip: Triples, sign: float, active):
    h, r, t, tau = (np.asarray(a)[active] for a in trip)
    if len(h) == 0:
        return
    u, e, n = residuals(store, kind, h, r, t, tau)
    s = _score_direction(e, kind.norm)
    if n is None:
        g_u = s
    else:
        ns = np.sum(n * s, axis=-1, keepdims=True)
        nu = np.sum(n * u, axis=-1, keepdims=True)
        g_u = s - ns * n
        g_n = -(ns * u) - nu * s
        target = grads.normal if kind.time_planes else grads.transh_normal
        np.add.at(target, tau if kind.time_planes else r, sign * g_n)
    np.add.at(grads.entity, h, sign * g_u)
    np.add.at(grads.entity, t, -sign * g_u)
    np.add.at(grads.relation, r, sign * g_u)


def batch_loss_and_grads(
    store: EmbeddingStore,
    kind: ModelKind,
    pos: Triples,
    neg: Triples,
    margin: float,
) -> tuple[float, DenseGrads, np.ndarray]:
    """Summed hinge loss over aligned (positive, negative) pairs and its gradient.

    Returns ``(loss, grads, per_pair_losses)``. Pairs whose hinge is inactive
    contribute nothing.
    """
    pos_s = scores(store, kind, *pos)
    neg_s = scores(store, kind, *neg)
    losses = margin_loss(pos_s, neg_s, margin)
    active = losses > 0
    grads = DenseGrads.zeros_like(store)
    if active.any():
        _accumulate(grads, store, kind, pos, +1.0, active)
        _accumulate(grads, store, kind, neg, -1.0, active)
    return float(losses.sum()), grads, losses


def gradients(pos, neg, margin: float, kind: ModelKind, store: EmbeddingStore) -> dict:
    """Sparse gradient of one hinge term.

    ``pos`` and ``neg`` are ``(h, r, t, tau)`` tuples. The result maps
    ``(param_name, row)`` to a d-vector and is empty when the margin is met.
    """
    p = Triples(*(np.array([x]) for x in pos))
    q = Triples(*(np.array([x]) for x in neg))
    loss, grads, _ = batch_loss_and_grads(store, kind, p, q, margin)
    out = {}
    if loss <= 0:
        return out
    rows = {
        "entity": {pos[0], pos[2], neg[0], neg[2]},
        "relation": {pos[1], neg[1]},
        "normal": {pos[3], neg[3]} if kind.time_planes else set(),
        "transh_normal": {pos[1], neg[1]} if kind.relation_planes else set(),
    }
    for name, g in grads.items():
        for row in sorted(rows[name]):
            out[(name, int(row))] = g[row].copy()
    return out


def apply_sgd(store: EmbeddingStore, grads: DenseGrads, lr: float) -> None:
    params = store.params()
    for name, g in grads.items():
        params[name] -= lr * g


def enforce_constraints(store: EmbeddingStore, rng: np.random.Generator | None = None) -> int:
    """Unit-normalize hyperplane normals and pull entity vectors into the unit ball.

    Rows already within 1e-12 of the target are left untouched, so repeated
    calls are bit-stable. Returns the number of zero normals that had to be
    re-drawn.
    """
    reinit = 0
    for name in ("normal", "transh_normal"):
        mat = getattr(store, name)
        if mat is None:
            continue
        lengths = np.linalg.norm(mat, axis=1)
        zero = lengths == 0
        if zero.any():
            rng = rng if rng is not None else np.random.default_rng(0)
            log.warning("re-initializing %d zero %s vector(s)", int(zero.sum()), name)
            mat[zero] = rng.uniform(-1.0, 1.0, size=(int(zero.sum()), mat.shape[1]))
            lengths[zero] = np.linalg.norm(mat[zero], axis=1)
            reinit += int(zero.sum())
        off = np.abs(lengths - 1.0) > 1e-12
        if off.any():
            mat[off] /= lengths[off, None]
    lengths = np.linalg.norm(store.entity, axis=1)
    big = lengths > 1.0 + 1e-12
    if big.any():
        store.entity[big] /= lengths[big, None]
    return reinit
