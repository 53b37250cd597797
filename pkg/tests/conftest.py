import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tkge.buckets import BucketIndex
from tkge.data import load_dataset
from tkge.models import ModelKind, init_store
from tkge.synthetic import write_synthetic_dataset

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def toy_paths(tmp_path):
    return write_synthetic_dataset(tmp_path / "toy", seed=3)


@pytest.fixture
def toy_dataset(toy_paths):
    return load_dataset(*toy_paths)


def random_store(kind, num_entities=50, num_relations=5, num_buckets=3, dim=16, seed=0):
    return init_store(kind, num_entities, num_relations, num_buckets, dim, np.random.default_rng(seed))


@pytest.fixture
def fixture_50():
    """50 entities, 5 relations, 3 buckets, random embeddings and 200 random queries."""
    kind = ModelKind("bt-hyte", "l1")
    store = random_store(kind, seed=7)
    index = BucketIndex((1950, 1990), 1900, 2020)
    rng = np.random.default_rng(11)
    quads = []
    for _ in range(200):
        h, t = (int(x) for x in rng.integers(50, size=2))
        r = int(rng.integers(5))
        t_s = int(rng.integers(1900, 2021))
        t_e = int(rng.integers(t_s, 2021))
        quads.append((h, r, t, t_s, t_e))
    return kind, store, index, quads


def yago_style_rows(num_facts=3000, num_entities=800, num_relations=10, seed=0):
    """YAGO11k-flavoured rows: dash dates, `#` unknowns, BCE years, long open-ended spans."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(num_facts):
        h, t = (int(x) for x in rng.integers(num_entities, size=2))
        r = int(rng.integers(num_relations))
        start = int(rng.normal(1900, 80))
        start = min(start, 2015)
        kind = rng.random()
        if kind < 0.02:
            start_tok = "####-##-##"
        elif start < 0:
            start_tok = f"-{-start:04d}-##-##"
        else:
            start_tok = f"{start:04d}-{int(rng.integers(1, 13)):02d}-##"
        if kind > 0.85:
            end_tok = "####-##-##"
        else:
            end_tok = f"{min(2017, start + int(rng.integers(0, 40))):04d}-##-##"
        rows.append((f"ent{h}", f"rel{r}", f"ent{t}", start_tok, end_tok))
    return rows


@pytest.fixture
def yago_like_paths(tmp_path):
    from tkge.synthetic import write_split

    rows = yago_style_rows()
    d = tmp_path / "yago_like"
    d.mkdir()
    n = len(rows)
    paths = [d / "train.txt", d / "valid.txt", d / "test.txt"]
    write_split(paths[0], rows[: int(n * 0.8)])
    write_split(paths[1], rows[int(n * 0.8): int(n * 0.9)])
    write_split(paths[2], rows[int(n * 0.9):])
    return paths
