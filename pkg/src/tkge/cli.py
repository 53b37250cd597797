"""``tkge`` command line: bucket-stats, train, eval, predict, inspect-ckpt."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .buckets import BucketIndex, bucket_stats, build_index
from .config import TrainConfig, load_config, parse_config_text
from .data import Vocab, load_dataset, parse_year
from .errors import CheckpointError, ConfigError, TKGEError
from .evaluation import (
    DEFAULT_KS,
    TASKS,
    Scorer,
    evaluate_split,
    fine_grained_report,
    format_fine_grained,
    format_reports,
    write_fine_grained_csv,
)
from .models import MODEL_NAMES, NORMS
from .sampling import PositiveFilter, STRATEGIES

log = logging.getLogger("tkge")


class UsageError(TKGEError):
    pass


def _csv_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_data_args(p, required=True):
    p.add_argument("--train", required=required, help="training quadruples (TSV)")
    p.add_argument("--valid", required=required, help="validation quadruples (TSV)")
    p.add_argument("--test", required=required, help="test quadruples (TSV)")


def _add_train_args(p):
    p.add_argument("--config", help="key = value config file")
    _add_data_args(p, required=False)
    p.add_argument("--model", choices=MODEL_NAMES)
    p.add_argument("--slice_width", type=int)
    p.add_argument("--thr", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--norm", choices=NORMS)
    p.add_argument("--neg_sample", type=int)
    p.add_argument("--batch_size", type=int)
    p.add_argument("--max_epoch", type=int)
    p.add_argument("--testfreq", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--rel_neg_weight", type=float)
    p.add_argument("--filter_scope", choices=("train", "all"))
    p.add_argument("--eval_bucket", choices=("start", "best"))
    p.add_argument("--out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tkge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bucket-stats", help="build time buckets from the training split and report them")
    _add_train_args(p)

    p = sub.add_parser("train", help="train a model and write checkpoints plus a manifest")
    _add_train_args(p)

    p = sub.add_parser("eval", help="rank a split with a checkpoint")
    p.add_argument("--ckpt", required=True)
    _add_data_args(p)
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--tasks", default=",".join(TASKS))
    p.add_argument("--k", default=",".join(str(k) for k in DEFAULT_KS), help="comma-separated HIT@k list")
    p.add_argument("--filtered", action="store_true", help="drop other known positives (diagnostic)")
    p.add_argument("--eval_bucket", default="start", choices=("start", "best"))
    p.add_argument("--report", help="also write the report to this file")
    p.add_argument("--fine_grained", help="write per-query completion CSV here")
    p.add_argument("--cases", type=int, default=20, help="rows of the fine-grained table to print")

    p = sub.add_parser("predict", help="complete one query with a single '?' slot")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab_dir", help="directory with entities.txt / relations.txt (default: checkpoint dir)")
    p.add_argument("--top_n", type=int, default=10)
    for name in ("head", "relation", "tail"):
        p.add_argument(name, help=f"{name} name, or '?' for the slot to complete")
    p.add_argument("start", help="start year (#### if unknown)")
    p.add_argument("end", help="end year (#### if unknown)")

    p = sub.add_parser("inspect-ckpt", help="summarize a checkpoint")
    p.add_argument("ckpt")
    return parser


def _resolve_config(args) -> TrainConfig:
    names = ("train", "valid", "test", "model", "slice_width", "thr", "lr", "margin", "dim", "norm",
             "neg_sample", "batch_size", "max_epoch", "testfreq", "seed", "strategy",
             "rel_neg_weight", "filter_scope", "eval_bucket", "out_dir")
    overrides = {n: getattr(args, n, None) for n in names}
    file_values = {}
    if args.config is not None:
        file_values = parse_config_text(Path(args.config).read_text(encoding="utf-8"), args.config)
    env_seed = os.environ.get("TKGE_SEED")
    if overrides["seed"] is None and "seed" not in file_values and env_seed:
        try:
            overrides["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError([f"TKGE_SEED must be an integer, got {env_seed!r}"]) from None
    cfg = load_config(args.config, **overrides)
    missing = [n for n in ("train", "valid", "test") if getattr(cfg, n) is None]
    if missing:
        raise ConfigError([f"missing dataset path: --{n}" for n in missing])
    return cfg


def cmd_bucket_stats(args, out) -> int:
    cfg = _resolve_config(args)
    dataset = load_dataset(cfg.train, cfg.valid, cfg.test)
    spans = [(q.t_s, q.t_e) for q in dataset.train]
    if not spans:
        raise UsageError("training split is empty; nothing to bucket")
    index = build_index(spans, cfg.bucket, balanced=cfg.kind.balanced_buckets)
    stats = bucket_stats(dataset, index, cfg.bucket)
    print(f"slice_width {cfg.slice_width} thr {cfg.thr} "
          f"mode {'balanced' if cfg.kind.balanced_buckets else 'endpoint'}", file=out)
    print(stats.format(), file=out)
    return 0


def cmd_train(args, out) -> int:
    from .trainer import run_training

    cfg = _resolve_config(args)
    out_dir = Path(cfg.out_dir or "runs/tkge")
    dataset = load_dataset(cfg.train, cfg.valid, cfg.test)
    result = run_training(dataset, cfg, out_dir)
    print(f"wrote {out_dir}/final.ckpt, best-entity.ckpt, best-relation.ckpt, manifest.txt", file=out)
    print(f"num_buckets {result.index.num_buckets}", file=out)
    print(f"best_entity epoch {result.best_entity.epoch} value {result.best_entity.value:.4f}", file=out)
    print(f"best_relation epoch {result.best_relation.epoch} value {result.best_relation.value:.4f}", file=out)
    return 0


def _check_vocab(ckpt: checkpoint.Checkpoint, entities: int, relations: int):
    if ckpt.store.num_entities != entities or ckpt.store.num_relations != relations:
        raise CheckpointError(
            f"checkpoint has {ckpt.store.num_entities} entities / {ckpt.store.num_relations} relations, "
            f"dataset has {entities} / {relations}"
        )


def cmd_eval(args, out) -> int:
    ckpt = checkpoint.load(args.ckpt)
    dataset = load_dataset(args.train, args.valid, args.test)
    _check_vocab(ckpt, dataset.num_entities, dataset.num_relations)
    tasks = _csv_list(args.tasks)
    bad = [t for t in tasks if t not in TASKS]
    if bad or not tasks:
        raise UsageError(f"unknown task(s) {bad}; choose from {TASKS}")
    try:
        ks = [int(k) for k in _csv_list(args.k)]
    except ValueError:
        raise UsageError(f"--k must be a comma-separated list of integers, got {args.k!r}") from None
    quads = dataset.split(args.split)
    filt = PositiveFilter.from_dataset(dataset, "all") if args.filtered else None
    reports = evaluate_split(quads, tasks, ckpt.store, ckpt.kind, ckpt.index, ks,
                             filt=filt, bucket_mode=args.eval_bucket)
    mode = "filtered" if args.filtered else "raw"
    text = format_reports(reports, f"{ckpt.kind.name} {args.split} split, {mode} ranking")
    print(text, file=out)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    if args.fine_grained:
        records = fine_grained_report(quads, ckpt.store, ckpt.kind, ckpt.index, tasks=tasks)
        write_fine_grained_csv(args.fine_grained, records, dataset.entity_vocab, dataset.relation_vocab)
        shown = [r for r in records if r.quadruple in {tuple(q) for q in quads[:args.cases]}]
        print("", file=out)
        print(format_fine_grained(shown, dataset.entity_vocab, dataset.relation_vocab), file=out)
    return 0


def _year(token: str, index: BucketIndex, end: bool) -> int:
    year = parse_year(token)
    if year is None:
        return index.max_year if end else index.min_year
    return year


def cmd_predict(args, out) -> int:
    ckpt = checkpoint.load(args.ckpt)
    vocab_dir = Path(args.vocab_dir) if args.vocab_dir else Path(args.ckpt).parent
    entities = Vocab.load(vocab_dir / "entities.txt")
    relations = Vocab.load(vocab_dir / "relations.txt")
    _check_vocab(ckpt, len(entities), len(relations))

    head, rel, tail, start, end = args.head, args.relation, args.tail, args.start, args.end
    slots = [i for i, x in enumerate((head, rel, tail)) if x == "?"]
    if len(slots) != 1:
        raise UsageError(f"query needs exactly one '?' among head/relation/tail, found {len(slots)}")
    task = ("head", "relation", "tail")[slots[0]]
    ids = []
    for name, vocab, what in ((head, entities, "entity"), (rel, relations, "relation"), (tail, entities, "entity")):
        if name == "?":
            ids.append(0)
        elif name not in vocab:
            raise UsageError(f"unknown {what} {name!r}")
        else:
            ids.append(vocab.id(name))
    t_s = _year(start, ckpt.index, end=False)
    t_e = _year(end, ckpt.index, end=True)
    tau, clamped = ckpt.index.lookup(t_s)
    scores = Scorer(ckpt.store, ckpt.kind).candidates(ids[0], ids[1], ids[2], tau, task)
    order = np.argsort(scores, kind="stable")[: max(args.top_n, 0)]
    names = relations if task == "relation" else entities
    note = " (year outside training range, clamped)" if clamped else ""
    print(f"# task {task} span {t_s}-{t_e} bucket {tau}{note}", file=out)
    print(f"{'rank':>5}  {'score':>12}  candidate", file=out)
    for i, c in enumerate(order, 1):
        print(f"{i:>5}  {scores[c]:>12.6f}  {names.name(int(c))}", file=out)
    return 0


def cmd_inspect(args, out) -> int:
    ckpt = checkpoint.load(args.ckpt)
    store, idx = ckpt.store, ckpt.index
    print(f"model {ckpt.kind.name} norm {ckpt.kind.norm} dim {store.dim}", file=out)
    print(f"entities {store.num_entities} relations {store.num_relations} buckets {idx.num_buckets}", file=out)
    print(f"year_range {idx.min_year} {idx.max_year}", file=out)
    print("boundaries " + " ".join(str(b) for b in idx.boundaries), file=out)
    for name, mat in store.params().items():
        lengths = np.linalg.norm(mat, axis=1)
        print(f"{name:<14} rows {mat.shape[0]:>6}  norm min {lengths.min():.6f} "
              f"max {lengths.max():.6f} mean {lengths.mean():.6f}", file=out)
    print(f"finite {store.all_finite()}", file=out)
    return 0


COMMANDS = {
    "bucket-stats": cmd_bucket_stats,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "inspect-ckpt": cmd_inspect,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"tkge: config error: {problem}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"tkge: {exc}", file=sys.stderr)
        return 2
    except (TKGEError, OSError, ValueError) as exc:
        print(f"tkge: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
