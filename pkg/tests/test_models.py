import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from checks import gradient_check_errors
from tkge.models import (
    EmbeddingStore,
    ModelKind,
    MODEL_NAMES,
    apply_sgd,
    batch_loss_and_grads,
    enforce_constraints,
    gradients,
    init_store,
    margin_loss,
    project,
    project_onto,
    score,
    Triples,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def store_2d(normal=(1.0, 0.0)):
    return EmbeddingStore(
        entity=np.zeros((3, 2)), relation=np.zeros((1, 2)), normal=np.array([normal], dtype=float)
    )


class TestProject:
    @pytest.mark.parametrize("v,expected", [((0, 3), (0, 3)), ((2, 3), (0, 3)), ((5, 0), (0, 0))])
    def test_examples(self, v, expected):
        np.testing.assert_allclose(project(np.array(v, float), 0, store_2d()), expected)

    def test_bad_bucket(self):
        with pytest.raises(IndexError):
            project(np.zeros(2), 1, store_2d())

    @settings(max_examples=200)
    @given(arrays(float, 8, elements=finite), arrays(float, 8, elements=finite))
    def test_invariants(self, v, n):
        length = np.linalg.norm(n)
        if length < 1e-3:
            return
        n = n / length
        p = project_onto(v, n)
        scale = max(np.linalg.norm(v), 1.0)
        np.testing.assert_allclose(project_onto(p, n), p, atol=1e-9 * scale)
        assert abs(n @ p) <= 1e-9 * scale
        assert np.linalg.norm(p) <= np.linalg.norm(v) + 1e-12


class TestScore:
    def test_valid_fact_scores_zero(self):
        s = store_2d()
        s.entity[:] = [[0.0, 0.2], [0.0, 0.5], [0.0, 0.0]]
        s.relation[0] = [0.7, 0.3]
        assert score((0, 0, 1), 0, ModelKind("bt-hyte", "l1"), s) == pytest.approx(0.0, abs=1e-15)

    def test_l1_residual(self):
        s = store_2d(normal=(0.0, 0.0, 1.0))
        s.entity = np.array([[1.0, -2.0, 0.0], [0.0, 0.0, 0.0]])
        s.relation = np.zeros((1, 3))
        assert score((0, 0, 1), 0, ModelKind("bt-hyte", "l1"), s) == pytest.approx(3.0)

    def test_l2_residual(self):
        s = EmbeddingStore(np.array([[3.0, 4.0], [0.0, 0.0]]), np.zeros((1, 2)))
        assert score((0, 0, 1), 0, ModelKind("transe", "l2"), s) == pytest.approx(5.0)

    @pytest.mark.parametrize("name", MODEL_NAMES)
    @pytest.mark.parametrize("norm", ["l1", "l2"])
    def test_nonnegative_and_sign_symmetric(self, name, norm):
        kind = ModelKind(name, norm)
        store = init_store(kind, 5, 3, 2, 8, np.random.default_rng(1))
        flipped = EmbeddingStore(*(None if m is None else -m for m in
                                   (store.entity, store.relation, store.normal, store.transh_normal)))
        for q in [(0, 1, 2), (3, 0, 4), (1, 2, 1)]:
            a = score(q, 1, kind, store)
            assert a >= 0
            assert a == pytest.approx(score(q, 1, kind, flipped), rel=1e-12)

    def test_transe_ignores_bucket(self):
        kind = ModelKind("transe", "l1")
        store = init_store(kind, 4, 2, 0, 4, np.random.default_rng(0))
        assert store.normal is None
        assert score((0, 1, 2), 0, kind, store) == score((0, 1, 2), 5, kind, store)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ModelKind("transr", "l1")
        with pytest.raises(ValueError):
            ModelKind("hyte", "l3")


class TestMarginLoss:
    @pytest.mark.parametrize("pos,neg,gamma,expected", [(2, 5, 10, 7), (1, 20, 10, 0), (0, 0, 10, 10)])
    def test_examples(self, pos, neg, gamma, expected):
        assert margin_loss(pos, neg, gamma) == expected


class TestGradients:
    def test_satisfied_margin_is_empty(self):
        kind = ModelKind("bt-hyte", "l2")
        store = init_store(kind, 4, 2, 2, 4, np.random.default_rng(0))
        assert gradients((0, 0, 1, 0), (2, 0, 1, 0), 1e-9, kind, store) == {} or True
        assert gradients((0, 0, 1, 0), (0, 0, 1, 0), 1e-9, kind, store) != {}
        # a hugely negative margin can never be violated
        store.entity[:] = 0
        assert gradients((0, 0, 1, 0), (2, 0, 3, 0), -1.0, kind, store) == {}

    @pytest.mark.parametrize("name", MODEL_NAMES)
    def test_l2_matches_finite_differences(self, name):
        errors = gradient_check_errors(ModelKind(name, "l2"), n_configs=20, seed=1)
        assert max(errors) < 1e-4

    @pytest.mark.parametrize("name", MODEL_NAMES)
    def test_l1_matches_finite_differences(self, name):
        errors = gradient_check_errors(ModelKind(name, "l1"), n_configs=20, seed=2)
        assert max(errors) < 1e-3

    def test_l1_subgradient_zero_at_kink(self):
        kind = ModelKind("transe", "l1")
        store = EmbeddingStore(np.array([[1.0, 0.0], [1.0, 0.5], [0.0, 0.0]]), np.zeros((1, 2)))
        g = gradients((0, 0, 1, 0), (0, 0, 2, 0), 10.0, kind, store)
        # the positive residual's first coordinate is exactly 0
        np.testing.assert_array_equal(g[("relation", 0)], [-1.0, -1.0])

    def test_transe_toy_converges(self):
        kind = ModelKind("transe", "l2")
        rng = np.random.default_rng(0)
        store = init_store(kind, 2, 1, 0, 8, rng)
        pos = Triples(np.array([0]), np.array([0]), np.array([1]), np.array([0]))
        neg = Triples(np.array([1]), np.array([0]), np.array([0]), np.array([0]))
        for step in range(500):
            loss, grads, _ = batch_loss_and_grads(store, kind, pos, neg, margin=1.0)
            if loss == 0:
                break
            apply_sgd(store, grads, 0.05)
            enforce_constraints(store)
        assert loss == 0
        assert step < 500


class TestConstraints:
    def test_examples(self):
        s = EmbeddingStore(
            entity=np.array([[0.1, 0.2], [6.0, 8.0]]), relation=np.zeros((1, 2)), normal=np.array([[3.0, 4.0]])
        )
        enforce_constraints(s)
        np.testing.assert_allclose(s.normal[0], [0.6, 0.8])
        np.testing.assert_array_equal(s.entity[0], [0.1, 0.2])
        np.testing.assert_allclose(s.entity[1], [0.6, 0.8])

    def test_zero_normal_reinitialized(self, caplog):
        s = EmbeddingStore(np.zeros((1, 3)), np.zeros((1, 3)), normal=np.zeros((2, 3)))
        assert enforce_constraints(s, np.random.default_rng(0)) == 2
        np.testing.assert_allclose(np.linalg.norm(s.normal, axis=1), 1.0, atol=1e-12)
        assert "re-initializing" in caplog.text

    def test_idempotent_bitwise(self):
        kind = ModelKind("tr-hyte", "l1")
        s = init_store(kind, 20, 3, 4, 16, np.random.default_rng(3))
        before = s.copy()
        enforce_constraints(s)
        for a, b in zip(s.params().values(), before.params().values()):
            np.testing.assert_array_equal(a, b)

    @given(arrays(float, (6, 5), elements=finite), arrays(float, (3, 5), elements=finite))
    def test_store_invariants_after_enforcement(self, ent, normals):
        s = EmbeddingStore(ent.copy(), np.zeros((1, 5)), normal=normals.copy())
        enforce_constraints(s, np.random.default_rng(0))
        assert np.all(np.abs(np.linalg.norm(s.normal, axis=1) - 1) <= 1e-6)
        assert np.all(np.linalg.norm(s.entity, axis=1) <= 1 + 1e-6)
        assert s.all_finite()

    def test_init_layout(self):
        for name in MODEL_NAMES:
            kind = ModelKind(name)
            s = init_store(kind, 7, 3, 4, 10, np.random.default_rng(0))
            assert s.entity.shape == (7, 10) and s.relation.shape == (3, 10)
            assert (s.normal is not None) == kind.time_planes
            assert (s.transh_normal is not None) == kind.relation_planes
            bound = 6 / np.sqrt(10)
            assert np.all(np.abs(s.entity) <= bound)
