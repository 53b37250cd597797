import numpy as np
import pytest

from conftest import random_store
from tkge import checkpoint
from tkge.buckets import BucketIndex
from tkge.errors import CheckpointError
from tkge.models import MODEL_NAMES, ModelKind

INDEX = BucketIndex((1950, 1990), 1900, 2020)


class TestRoundTrip:
    @pytest.mark.parametrize("name", MODEL_NAMES)
    def test_exact(self, tmp_path, name):
        kind = ModelKind(name, "l2")
        store = random_store(kind, num_entities=7, num_relations=3, dim=5, seed=2)
        store.entity[0, 0] = 1 / 3
        checkpoint.save(tmp_path / "m.ckpt", kind, store, INDEX)
        ck = checkpoint.load(tmp_path / "m.ckpt")
        assert ck.kind == kind
        assert ck.index == INDEX
        for (na, a), (nb, b) in zip(store.params().items(), ck.store.params().items()):
            assert na == nb
            np.testing.assert_array_equal(a, b)
        assert not (tmp_path / "m.ckpt.tmp").exists()

    def test_header(self):
        kind = ModelKind("bt-hyte", "l1")
        text = checkpoint.dumps(kind, random_store(kind, 4, 2, 3, 6), INDEX)
        assert text.splitlines()[:2] == ["tkge-ckpt v1 bt-hyte 6 4 2 3 l1", "boundaries 1900 2020 1950 1990"]

    def test_bytes_stable(self):
        kind = ModelKind("hyte", "l1")
        store = random_store(kind, 4, 2, 3, 6)
        assert checkpoint.dumps(kind, store, INDEX) == checkpoint.dumps(*(lambda c: (c.kind, c.store, c.index))(
            checkpoint.loads(checkpoint.dumps(kind, store, INDEX))))


class TestErrors:
    def good(self):
        kind = ModelKind("bt-hyte", "l1")
        return checkpoint.dumps(kind, random_store(kind, 4, 2, 3, 6), INDEX)

    @pytest.mark.parametrize("mutate", [
        lambda t: "",
        lambda t: t.replace("tkge-ckpt", "nope", 1),
        lambda t: t.replace(" v1 ", " v9 ", 1),
        lambda t: t.replace("bt-hyte", "transr", 1),
        lambda t: t.replace("boundaries 1900 2020 1950 1990", "boundaries 1900 2020 1950"),
        lambda t: t.replace("boundaries 1900", "boundaries x"),
        lambda t: t.rsplit("\n", 2)[0] + "\n",
        lambda t: t.replace("\n", " 0.5\n", 3),
    ])
    def test_rejected(self, mutate):
        with pytest.raises(CheckpointError):
            checkpoint.loads(mutate(self.good()))

    def test_mismatched_store(self):
        kind = ModelKind("bt-hyte", "l1")
        with pytest.raises(CheckpointError):
            checkpoint.dumps(kind, random_store(kind, 4, 2, 2, 6), INDEX)
