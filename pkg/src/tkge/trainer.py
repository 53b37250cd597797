"""Mini-batch SGD over (positive, bucket) training instances."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .buckets import BucketIndex, build_index
from .config import TrainConfig, config_lines
from .data import Dataset
from .errors import DivergenceError
from .evaluation import evaluate_split
from .models import (
    EmbeddingStore,
    ModelKind,
    Triples,
    apply_sgd,
    batch_loss_and_grads,
    enforce_constraints,
    init_store,
)
from .sampling import NegativeSampler, PositiveFilter

log = logging.getLogger(__name__)

# columns of the instance array
H, R, T, TS, TE, TAU = range(6)


def build_train_index(dataset: Dataset, config: TrainConfig) -> BucketIndex:
    """Bucket index from the training spans alone; other splits are mapped through it."""
    spans = [(q.t_s, q.t_e) for q in dataset.train]
    if not spans:
        return BucketIndex((), dataset.min_year, dataset.max_year)
    return build_index(spans, config.bucket, balanced=config.kind.balanced_buckets)


def expand_training_instances(dataset: Dataset, index: BucketIndex) -> np.ndarray:
    """One row ``(h, r, t, t_s, t_e, tau)`` per training fact and bucket it covers."""
    quads = dataset.array("train")
    if len(quads) == 0:
        return np.zeros((0, 6), dtype=np.int64)
    first = index.buckets_of(quads[:, 3])
    last = index.buckets_of(quads[:, 4])
    reps = last - first + 1
    rows = np.repeat(quads, reps, axis=0)
    offsets = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
    tau = np.repeat(first, reps) + offsets
    return np.column_stack([rows, tau]).astype(np.int64)


def train_epoch(
    instances: np.ndarray,
    store: EmbeddingStore,
    config: TrainConfig,
    rng: np.random.Generator,
    sampler: NegativeSampler,
    *,
    epoch: int = 0,
) -> float:
    """Shuffle, then one SGD step per mini-batch on the summed hinge loss."""
    if len(instances) == 0:
        raise ValueError("no training instances")
    kind = config.kind
    order = rng.permutation(len(instances))
    total = 0.0
    k = sampler.count
    for b, start in enumerate(range(0, len(order), config.batch_size)):
        batch = instances[order[start:start + config.batch_size]]
        nh, nr, nt, _ = sampler.sample(batch[:, H], batch[:, R], batch[:, T], rng)
        tau = np.repeat(batch[:, TAU], k)
        pos = Triples(np.repeat(batch[:, H], k), np.repeat(batch[:, R], k), np.repeat(batch[:, T], k), tau)
        neg = Triples(nh, nr, nt, tau)
        loss, grads, losses = batch_loss_and_grads(store, kind, pos, neg, config.margin)
        if not np.isfinite(loss):
            bad = int(np.flatnonzero(~np.isfinite(losses))[0]) // k
            raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}, instance {tuple(batch[bad])}")
        total += loss
        if loss > 0:
            apply_sgd(store, grads, config.lr)
            enforce_constraints(store, rng)
            if not store.all_finite():
                raise DivergenceError(f"non-finite parameters after epoch {epoch}, batch {b}")
    return total


@dataclass
class BestSlot:
    criterion: str
    epoch: int = -1
    value: float = float("inf")
    store: EmbeddingStore | None = None

    def offer(self, epoch: int, value: float, store: EmbeddingStore) -> bool:
        if np.isfinite(value) and value < self.value:
            self.epoch, self.value, self.store = epoch, value, store.copy()
            return True
        if self.store is None:
            self.epoch, self.store = epoch, store.copy()
        return False


@dataclass
class RunManifest:
    lines: list[str] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)

    def add(self, line: str) -> None:
        self.lines.append(line)

    def record_epoch(self, epoch: int, head_mr: float, tail_mr: float, rel_mr: float, loss: float) -> None:
        if self.history and epoch <= self.history[-1]["epoch"]:
            raise ValueError("manifest epochs must increase")
        self.history.append(dict(epoch=epoch, head_mr=head_mr, tail_mr=tail_mr, rel_mr=rel_mr, loss=loss))
        self.add(f"epoch {epoch} head_mr {head_mr:.6f} tail_mr {tail_mr:.6f} rel_mr {rel_mr:.6f} loss {loss:.6f}")

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


@dataclass
class TrainResult:
    kind: ModelKind
    index: BucketIndex
    store: EmbeddingStore
    initial: EmbeddingStore
    best_entity: BestSlot
    best_relation: BestSlot
    manifest: RunManifest
    sampler: NegativeSampler


def _validate(dataset: Dataset, store, kind, index, config):
    if not dataset.valid:
        nan = float("nan")
        return nan, nan, nan
    reps = evaluate_split(dataset.valid, ("head", "tail", "relation"), store, kind, index, ks=(1, 10),
                          bucket_mode=config.eval_bucket)
    return reps["head"].mean_rank, reps["tail"].mean_rank, reps["relation"].mean_rank


def run_training(dataset: Dataset, config: TrainConfig, out_dir: str | Path | None = None) -> TrainResult:
    """Train, validating every ``testfreq`` epochs and tracking two best checkpoints.

    The entity slot keeps the epoch with the lowest mean of head and tail MR on
    the validation split; the relation slot keeps the lowest relation MR.
    """
    config.validate()
    kind = config.kind
    index = build_train_index(dataset, config)
    rng = np.random.default_rng(config.seed)
    store = init_store(kind, dataset.num_entities, dataset.num_relations, index.num_buckets, config.dim, rng)
    initial = store.copy()
    filt = PositiveFilter.from_dataset(dataset, config.filter_scope)
    sampler = NegativeSampler(filt, config.resolved_strategy, config.neg_sample,
                              config.resolved_rel_neg_weight, config.retry_cap)
    instances = expand_training_instances(dataset, index)

    manifest = RunManifest()
    manifest.add("tkge-manifest v1")
    manifest.lines.extend(config_lines(config))
    for key, value in dataset.stats().items():
        manifest.add(f"dataset {key} {value}")
    manifest.add(f"buckets num {index.num_buckets} min_year {index.min_year} max_year {index.max_year}")
    manifest.add("boundaries " + " ".join(str(b) for b in index.boundaries))
    manifest.add(f"instances {len(instances)}")
    manifest.add(f"init uniform bound {6.0 / np.sqrt(config.dim):.9f} then constraints")

    best_entity = BestSlot("mean(head_mr, tail_mr)")
    best_relation = BestSlot("rel_mr")

    def checkpoint_epoch(epoch: int, loss: float):
        head, tail, rel = _validate(dataset, store, kind, index, config)
        manifest.record_epoch(epoch, head, tail, rel, loss)
        best_entity.offer(epoch, (head + tail) / 2, store)
        best_relation.offer(epoch, rel, store)
        log.info("epoch %d loss %.4f valid head_mr %.2f tail_mr %.2f rel_mr %.3f", epoch, loss, head, tail, rel)

    checkpoint_epoch(0, float("nan"))
    for epoch in range(1, config.max_epoch + 1):
        started = time.perf_counter()
        epoch_rng = np.random.default_rng([config.seed, epoch])
        loss = train_epoch(instances, store, config, epoch_rng, sampler, epoch=epoch) if len(instances) else 0.0
        manifest.epoch_seconds.append(time.perf_counter() - started)
        if epoch % config.testfreq == 0 or epoch == config.max_epoch:
            checkpoint_epoch(epoch, loss)

    manifest.add(f"best_entity epoch {best_entity.epoch} value {best_entity.value:.6f}")
    manifest.add(f"best_relation epoch {best_relation.epoch} value {best_relation.value:.6f}")
    manifest.add(f"sampling draws {sampler.stats.draws} retry_cap_escapes {sampler.stats.escapes}")

    result = TrainResult(kind, index, store, initial, best_entity, best_relation, manifest, sampler)
    if out_dir is not None:
        write_outputs(result, dataset, out_dir)
    return result


def write_outputs(result: TrainResult, dataset: Dataset, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.save(out / "final.ckpt", result.kind, result.store, result.index)
    checkpoint.save(out / "best-entity.ckpt", result.kind, result.best_entity.store, result.index)
    checkpoint.save(out / "best-relation.ckpt", result.kind, result.best_relation.store, result.index)
    (out / "manifest.txt").write_text(result.manifest.text(), encoding="utf-8")
    # wall-clock kept apart so the manifest stays byte-reproducible
    (out / "timing.txt").write_text(
        "".join(f"epoch {i} seconds {s:.4f}\n" for i, s in enumerate(result.manifest.epoch_seconds, 1)),
        encoding="utf-8",
    )
    dataset.entity_vocab.dump(out / "entities.txt")
    dataset.relation_vocab.dump(out / "relations.txt")
