"""Small random temporal KGs in the on-disk quadruple format, for demos and tests.

With ``clusters`` set, entities are dealt round-robin into ordered clusters.
Relation ``r`` links a head in cluster ``c`` to a tail in cluster
``c + r + 1``, so the graph is consistent with a translation per relation.
Without clusters the triples are uniform random, and translational models
can only memorize them.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def random_facts(
    num_entities: int = 50,
    num_relations: int = 4,
    num_facts: int = 300,
    year_range: tuple[int, int] = (1900, 2000),
    max_span: int = 15,
    seed: int = 0,
    clusters: int | None = 10,
    unknown_end_rate: float = 0.0,
) -> list[tuple[str, str, str, str, str]]:
    """Distinct ``(h, r, t)`` facts with random year spans, as string fields."""
    rng = np.random.default_rng(seed)
    if clusters:
        if clusters < num_relations + 2:
            raise ValueError("need at least num_relations + 2 clusters")
        cluster = np.arange(num_entities) % clusters
        members = [np.flatnonzero(cluster == c) for c in range(clusters)]
        capacity = sum(
            int((cluster + r + 1 < clusters).sum()) * len(members[0])
            for r in range(num_relations)
        )
    else:
        capacity = num_entities * num_relations * (num_entities - 1)
    if num_facts > capacity:
        raise ValueError("more facts requested than distinct triples exist")

    seen, rows = set(), []
    lo, hi = year_range
    while len(rows) < num_facts:
        h = int(rng.integers(num_entities))
        r = int(rng.integers(num_relations))
        if clusters:
            target = cluster[h] + r + 1
            if target >= clusters:
                continue
            t = int(rng.choice(members[target]))
        else:
            t = int(rng.integers(num_entities))
            if h == t:
                continue
        if (h, r, t) in seen:
            continue
        seen.add((h, r, t))
        start = int(rng.integers(lo, hi + 1))
        end = min(hi, start + int(rng.integers(0, max_span + 1)))
        end_tok = "####-##-##" if rng.random() < unknown_end_rate else f"{end}-##-##"
        rows.append((f"e{h}", f"r{r}", f"e{t}", f"{start}-##-##", end_tok))
    return rows


def write_split(path: str | Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write("\t".join(row) + "\n")


def write_synthetic_dataset(out_dir: str | Path, valid_frac: float = 0.1, test_frac: float = 0.1, **kwargs):
    """Write ``train.txt``/``valid.txt``/``test.txt``; returns the three paths.

    Validation and test facts are copies of training facts, so every id
    resolves on tiny graphs.
    """
    rows = random_facts(**kwargs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_valid = max(1, int(len(rows) * valid_frac))
    n_test = max(1, int(len(rows) * test_frac))
    paths = [out / "train.txt", out / "valid.txt", out / "test.txt"]
    write_split(paths[0], rows)
    write_split(paths[1], rows[:n_valid])
    write_split(paths[2], rows[n_valid:n_valid + n_test])
    return paths
