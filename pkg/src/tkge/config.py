"""Training configuration: defaults, ``key = value`` files and validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .buckets import BucketConfig
from .errors import ConfigError
from .models import MODEL_NAMES, NORMS, ModelKind
from .sampling import STRATEGIES


@dataclass
class TrainConfig:
    # optimization defaults follow the published bt-HyTE / tr-HyTE setup
    lr: float = 1e-4
    max_epoch: int = 4000
    testfreq: int = 5
    dim: int = 128
    margin: float = 10.0
    norm: str = "l1"
    neg_sample: int = 5
    batch_size: int = 5000
    model: str = "bt-hyte"
    slice_width: int = 1
    thr: int = 300
    seed: int = 0
    strategy: str | None = None
    rel_neg_weight: float | None = None
    filter_scope: str = "train"
    retry_cap: int = 100
    eval_bucket: str = "start"
    train: str | None = None
    valid: str | None = None
    test: str | None = None
    out_dir: str | None = None

    @property
    def kind(self) -> ModelKind:
        return ModelKind(self.model, self.norm)

    @property
    def bucket(self) -> BucketConfig:
        return BucketConfig(self.slice_width, self.thr)

    @property
    def resolved_strategy(self) -> str:
        if self.strategy is not None:
            return self.strategy
        return "entities+relations" if self.model == "tr-hyte" else "entities-only"

    @property
    def resolved_rel_neg_weight(self) -> float:
        if self.rel_neg_weight is not None:
            return self.rel_neg_weight
        return 1.0 / (2 * self.neg_sample)

    def problems(self) -> list[str]:
        out = []
        if self.max_epoch < 0:
            out.append(f"max_epoch must be >= 0, got {self.max_epoch}")
        for name in ("testfreq", "dim", "neg_sample", "batch_size", "slice_width", "thr", "retry_cap"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lr < 0:
            out.append(f"lr must be >= 0, got {self.lr}")
        if self.margin <= 0:
            out.append(f"margin must be > 0, got {self.margin}")
        if self.norm not in NORMS:
            out.append(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.model not in MODEL_NAMES:
            out.append(f"model must be one of {MODEL_NAMES}, got {self.model!r}")
        if self.strategy is not None and self.strategy not in STRATEGIES:
            out.append(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.rel_neg_weight is not None and not 0 <= self.rel_neg_weight <= 1:
            out.append(f"rel_neg_weight must lie in [0, 1], got {self.rel_neg_weight}")
        if self.filter_scope not in ("train", "all"):
            out.append(f"filter_scope must be 'train' or 'all', got {self.filter_scope!r}")
        if self.eval_bucket not in ("start", "best"):
            out.append(f"eval_bucket must be 'start' or 'best', got {self.eval_bucket!r}")
        return out

    def validate(self) -> "TrainConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def items(self):
        for f in fields(self):
            yield f.name, getattr(self, f.name)


ALIASES = {"inpdim": "dim", "threshold": "thr", "S": "slice_width", "THR": "thr"}
_FIELDS = {f.name: f for f in fields(TrainConfig)}


def _coerce(name: str, raw: str) -> Any:
    typ = str(_FIELDS[name].type)
    if raw.lower() in ("none", "null", "") and "None" in typ:
        return None
    if typ.startswith("int"):
        return int(raw)
    if typ.startswith("float"):
        return float(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    """Parse ``key = value`` lines. Collects every problem before raising."""
    values, problems = {}, []
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            problems.append(f"{source}:{line_no}: expected 'key = value'")
            continue
        key = ALIASES.get(key, key)
        if key not in _FIELDS:
            problems.append(f"{source}:{line_no}: unknown config key {key!r}")
            continue
        try:
            values[key] = _coerce(key, raw)
        except ValueError:
            problems.append(f"{source}:{line_no}: bad value {raw!r} for {key}")
    if problems:
        raise ConfigError(problems)
    return values


def load_config(path: str | Path | None = None, **overrides) -> TrainConfig:
    """Defaults, then the file, then non-None overrides; validated as a whole."""
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8"), str(path)))
    unknown = [k for k in overrides if k not in _FIELDS]
    if unknown:
        raise ConfigError([f"unknown config key {k!r}" for k in unknown])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**values).validate()


def config_lines(cfg: TrainConfig) -> list[str]:
    d = dataclasses.asdict(cfg)
    d["strategy"] = cfg.resolved_strategy
    d["rel_neg_weight"] = cfg.resolved_rel_neg_weight if d["strategy"] == "entities+relations" else 0.0
    del d["out_dir"]  # output location must not change manifest bytes
    return [f"config {k} {v}" for k, v in d.items()]
