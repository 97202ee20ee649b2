"""Deployment chain: checkpoint -> frozen -> optimized, with equivalence."""

import numpy as np
import pytest

from mobiderm import backbone as bb
from mobiderm import export
from mobiderm import ops
from mobiderm.synthetic import CLASS_NAMES


@pytest.fixture()
def checkpoint(trained_head, toy_spec):
    store, result = trained_head
    return export.Checkpoint(
        store=bb.WeightStore(dict(store.entries)),
        spec=toy_spec,
        labels=list(CLASS_NAMES),
        hyperparams={"learning_rate": 1e-4, "epochs": 3},
        adam_tensors=result.adam_tensors,
        adam_steps=result.adam_steps,
        preprocessing="default",
    )


def random_batch(spec, n=10, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1, 1, (n, spec.input_size, spec.input_size, 3)).astype(np.float32)


class TestCheckpointIO:
    def test_round_trip(self, checkpoint, tmp_path):
        path = tmp_path / "model.ckpt"
        export.save_checkpoint(checkpoint, path)
        back = export.load_checkpoint(path)
        assert back.store.equals(checkpoint.store)
        assert back.spec == checkpoint.spec
        assert back.labels == checkpoint.labels
        assert back.adam_steps == checkpoint.adam_steps
        assert set(back.adam_tensors) == set(checkpoint.adam_tensors)

    def test_wrong_magic_rejected(self, checkpoint, tmp_path):
        ckpt_path = tmp_path / "model.ckpt"
        export.save_checkpoint(checkpoint, ckpt_path)
        with pytest.raises(bb.BadMagicError):
            export.load_bundle(ckpt_path)  # checkpoint is not a bundle


class TestFreeze:
    def test_predictions_bit_identical_to_checkpoint(self, checkpoint):
        bundle = export.freeze(checkpoint)
        batch = random_batch(checkpoint.spec)
        from_ckpt = bb.predict_probs(checkpoint.store, checkpoint.spec, batch)
        from_bundle = bb.predict_probs(bundle.store, bundle.spec, batch)
        assert np.array_equal(from_ckpt, from_bundle)

    def test_strips_optimizer_state(self, checkpoint):
        bundle = export.freeze(checkpoint)
        assert not any(n.startswith("optimizer/") for n in bundle.store.names())

    def test_labels_file_lists_disease_names_alphabetically(self, checkpoint, tmp_path):
        bundle = export.freeze(checkpoint)
        out = tmp_path / "model.bundle"
        export.save_bundle(bundle, out)
        labels_file = tmp_path / "model.bundle.labels.txt"
        text = labels_file.read_text()
        assert text.endswith("\n")
        lines = text.splitlines()
        assert lines == sorted(lines) == list(CLASS_NAMES)
        assert len(lines) == 7

    def test_frozen_file_smaller_than_checkpoint(self, checkpoint, tmp_path):
        ckpt_path = tmp_path / "model.ckpt"
        bundle_path = tmp_path / "model.bundle"
        export.save_checkpoint(checkpoint, ckpt_path)
        export.save_bundle(export.freeze(checkpoint), bundle_path)
        assert bundle_path.stat().st_size < ckpt_path.stat().st_size

    def test_incomplete_weights_error_lists_missing(self, checkpoint):
        broken = dict(checkpoint.store.entries)
        del broken["block03/pw/kernel"]
        bad = export.Checkpoint(
            store=bb.WeightStore(broken), spec=checkpoint.spec, labels=checkpoint.labels,
            hyperparams={},
        )
        with pytest.raises(bb.ShapeTableMismatchError, match="block03/pw/kernel"):
            export.freeze(bad)

    def test_label_count_must_match_classes(self, checkpoint):
        bad = export.Checkpoint(
            store=checkpoint.store, spec=checkpoint.spec, labels=["just_one"],
            hyperparams={},
        )
        with pytest.raises(ValueError, match="labels"):
            export.freeze(bad)

    def test_freeze_load_freeze_idempotent(self, checkpoint, tmp_path):
        first = tmp_path / "first.bundle"
        second = tmp_path / "second.bundle"
        export.save_bundle(export.freeze(checkpoint), first)
        loaded, _ = export.load_bundle(first)
        export.save_bundle(export.freeze(loaded), second)
        assert first.read_bytes() == second.read_bytes()


class TestOptimize:
    def test_identity_batchnorm_leaves_kernels(self, toy_spec):
        store = bb.init_weights(toy_spec, seed=3)  # identity bn stats
        bundle = export.FrozenBundle(store=store, spec=toy_spec, labels=list(CLASS_NAMES))
        folded = export.optimize(bundle)
        # scale = 1/sqrt(1 + eps) with eps=1e-3: kernels shrink by < 0.1%
        for name in store.names():
            if name.endswith("/kernel"):
                np.testing.assert_allclose(folded.store[name], store[name], atol=1e-3)
        store_eps0 = bb.WeightStore({
            k: v.copy() for k, v in store.entries.items()
        })
        # with eps forced to ~0 via variance = 1 - eps the fold is exact
        for name in store_eps0.names():
            if name.endswith("/bn/variance"):
                store_eps0.entries[name] = np.full_like(store_eps0[name], 1.0 - bb.BN_EPSILON)
        folded2 = export.optimize(export.FrozenBundle(store=store_eps0, spec=toy_spec,
                                                      labels=list(CLASS_NAMES)))
        for name in store_eps0.names():
            if name.endswith("/kernel"):
                np.testing.assert_allclose(folded2.store[name], store_eps0[name], atol=1e-6)

    def test_forward_equivalence_on_random_inputs(self, trained_head, toy_spec):
        store, _ = trained_head
        bundle = export.FrozenBundle(store=store, spec=toy_spec, labels=list(CLASS_NAMES))
        folded = export.optimize(bundle)
        batch = random_batch(toy_spec, n=16, seed=5)
        before = bb.predict_probs(bundle.store, toy_spec, batch, folded=False)
        after = bb.predict_probs(folded.store, toy_spec, batch, folded=True)
        np.testing.assert_allclose(before, after, atol=1e-5)
        assert np.array_equal(before.argmax(axis=1), after.argmax(axis=1))

    def test_tensor_count_strictly_decreases(self, toy_store, toy_spec):
        bundle = export.FrozenBundle(store=toy_store, spec=toy_spec, labels=list(CLASS_NAMES))
        folded = export.optimize(bundle)
        assert len(folded.store) < len(bundle.store)
        # 27 convolutions: each trades 4 bn tensors for 1 bias
        assert len(bundle.store) - len(folded.store) == 27 * 3

    def test_double_optimize_errors(self, toy_store, toy_spec):
        bundle = export.FrozenBundle(store=toy_store, spec=toy_spec, labels=list(CLASS_NAMES))
        folded = export.optimize(bundle)
        with pytest.raises(export.TransformError, match="no batchnorm"):
            export.optimize(folded)

    def test_batchnorm_without_conv_is_a_transform_error(self, toy_spec):
        orphan = bb.WeightStore({
            "lost/bn/gamma": np.ones(2, np.float32),
            "lost/bn/beta": np.zeros(2, np.float32),
            "lost/bn/mean": np.zeros(2, np.float32),
            "lost/bn/variance": np.ones(2, np.float32),
        })
        bundle = export.FrozenBundle(store=orphan, spec=toy_spec, labels=list(CLASS_NAMES))
        with pytest.raises(export.TransformError, match="no preceding convolution"):
            export.optimize(bundle)

    def test_optimized_bundle_round_trips(self, toy_store, toy_spec, tmp_path):
        bundle = export.FrozenBundle(store=toy_store, spec=toy_spec, labels=list(CLASS_NAMES))
        folded = export.optimize(bundle)
        path = tmp_path / "opt.bundle"
        export.save_bundle(folded, path)
        back, _ = export.load_bundle(path)
        assert back.optimized
        assert back.store.equals(folded.store)


class TestBundleStats:
    def test_size_equals_disk_and_time_positive(self, checkpoint, tmp_path):
        path = tmp_path / "model.bundle"
        export.save_bundle(export.freeze(checkpoint), path)
        stats = export.bundle_stats(path)
        assert stats.weight_size_bytes == path.stat().st_size
        assert stats.load_time_seconds > 0

    def test_full_width_bundle_size_order_of_magnitude(self, tmp_path):
        spec = bb.ModelSpec()  # full width, 224, 7 classes
        store = bb.init_weights(spec, seed=0)
        bundle = export.FrozenBundle(store=store, spec=spec, labels=list(CLASS_NAMES))
        path = tmp_path / "full.bundle"
        export.save_bundle(bundle, path)
        stats = export.bundle_stats(path)
        published = 16.823e6
        assert published / 10 < stats.weight_size_bytes < published * 10

    def test_model_id_stable_and_content_addressed(self, checkpoint, tmp_path):
        a, b = tmp_path / "a.bundle", tmp_path / "b.bundle"
        export.save_bundle(export.freeze(checkpoint), a)
        export.save_bundle(export.freeze(checkpoint), b)
        assert export.model_id(a) == export.model_id(b)
        assert len(export.model_id(a)) == 12
