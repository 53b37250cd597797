import csv

import numpy as np
import pytest

from conftest import random_store
from oracles import brute_force_rank
from tkge.buckets import BucketIndex
from tkge.data import Vocab
from tkge.errors import CheckpointError
from tkge.evaluation import (
    RankReport,
    evaluate_split,
    fine_grained_report,
    format_fine_grained,
    format_reports,
    rank_candidates,
    rank_from_scores,
    write_fine_grained_csv,
)
from tkge.models import EmbeddingStore, ModelKind
from tkge.sampling import PositiveFilter


class TestRankFromScores:
    def test_gold_best(self):
        assert rank_from_scores(np.array([0.1, 0.5, 0.9]), 0) == 1

    def test_gold_second(self):
        assert rank_from_scores(np.array([0.5, 0.1, 0.9]), 0) == 2

    def test_ties_are_optimistic(self):
        assert rank_from_scores(np.array([0.3, 0.3, 0.3]), 2) == 1

    def test_exclusion(self):
        assert rank_from_scores(np.array([0.5, 0.1, 0.2]), 0, np.array([False, True, False])) == 2


class TestAgainstBruteForce:
    @pytest.mark.parametrize("task", ["head", "tail", "relation"])
    def test_bt_hyte(self, fixture_50, task):
        kind, store, index, quads = fixture_50
        for q in quads:
            tau = index.bucket_of(q[3])
            expected_rank, expected_order = brute_force_rank(store, kind, q, task, tau)
            res = rank_candidates(q, task, store, kind, index)
            assert res.rank == expected_rank
            assert res.tau == tau
            assert list(res.order[:10]) == expected_order[:10]

    @pytest.mark.parametrize("name", ["transe", "transh", "tr-hyte"])
    @pytest.mark.parametrize("task", ["head", "tail", "relation"])
    def test_other_models(self, fixture_50, name, task):
        _, _, index, quads = fixture_50
        kind = ModelKind(name, "l2")
        store = random_store(kind, seed=4)
        for q in quads[:60]:
            if task == "relation" and q[0] == q[2]:
                continue  # every relation scores exactly |r| = 1; order is rounding noise
            tau = index.bucket_of(q[3])
            assert rank_candidates(q, task, store, kind, index).rank == brute_force_rank(store, kind, q, task, tau)[0]

    def test_best_bucket_never_worse_for_gold(self, fixture_50):
        kind, store, index, quads = fixture_50
        for q in quads[:50]:
            start = rank_candidates(q, "tail", store, kind, index)
            best = rank_candidates(q, "tail", store, kind, index, bucket_mode="best")
            assert best.scores[q[2]] <= start.scores[q[2]]


class TestReports:
    def test_arithmetic(self):
        rep = RankReport.from_ranks("tail", [1, 2, 5, 20], ks=(1, 10))
        assert rep.mean_rank == 7.0
        assert rep.hit_at == {1: 0.25, 10: 0.75}
        assert rep.line() == "task=tail mr=7.0000 hit1=0.2500 hit10=0.7500 n=4"

    def test_default_ks_always_include_required(self, fixture_50):
        kind, store, index, quads = fixture_50
        reps = evaluate_split(quads[:20], ["head", "relation"], store, kind, index, ks=(3,))
        assert set(reps["head"].hit_at) == {3, 10}
        assert set(reps["relation"].hit_at) == {1, 3}
        text = format_reports(reps, "valid")
        assert "HIT@10" in text and "raw ranks" in text

    def test_random_model_mean_rank_near_half(self, fixture_50):
        kind, store, index, quads = fixture_50
        rng = np.random.default_rng(0)
        flat = EmbeddingStore(store.entity, store.relation, store.normal)
        quads = [(int(rng.integers(50)), 0, int(rng.integers(50)), 1960, 1960) for _ in range(400)]
        mr = evaluate_split(quads, ["tail"], flat, kind, index)["tail"].mean_rank
        assert 15 < mr < 36

    def test_empty_split(self, fixture_50):
        kind, store, index, _ = fixture_50
        with pytest.raises(ValueError):
            evaluate_split([], ["head"], store, kind, index)

    def test_bucket_mismatch(self, fixture_50):
        kind, store, _, quads = fixture_50
        with pytest.raises(CheckpointError):
            evaluate_split(quads, ["head"], store, kind, BucketIndex((1950,), 1900, 2020))

    def test_filtered_never_worse(self, fixture_50):
        kind, store, index, quads = fixture_50
        filt = PositiveFilter([q[:3] for q in quads], 50, 5)
        raw = evaluate_split(quads, ["tail", "relation"], store, kind, index)
        filtered = evaluate_split(quads, ["tail", "relation"], store, kind, index, filt=filt)
        for task in raw:
            assert np.all(filtered[task].ranks <= raw[task].ranks)


class TestFineGrained:
    def test_aggregate_matches_hits(self, fixture_50):
        kind, store, index, quads = fixture_50
        records = fine_grained_report(quads, store, kind, index)
        reps = evaluate_split(quads, ["head", "tail", "relation"], store, kind, index)
        for task, k in (("head", 10), ("tail", 10), ("relation", 1)):
            hits = [r.hit for r in records if r.task == task]
            assert np.mean(hits) == pytest.approx(reps[task].hit_at[k])
            assert all(len(r.top) == k for r in records if r.task == task)

    def test_outputs(self, fixture_50, tmp_path):
        kind, store, index, quads = fixture_50
        ents = Vocab([f"e{i}" for i in range(50)])
        rels = Vocab([f"r{i}" for i in range(5)])
        records = fine_grained_report(quads, store, kind, index, n_cases=3)
        assert len(records) == 9
        text = format_fine_grained(records, ents, rels)
        assert "?" in text
        path = tmp_path / "fg.csv"
        write_fine_grained_csv(path, records, ents, rels)
        rows = list(csv.DictReader(path.open()))
        assert len(rows) == 9
        assert rows[0]["top_k"].count(";") == 9
        assert rows[-1]["top_k"].count("=") == 1
