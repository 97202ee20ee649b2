"""Adam updates, head training behavior, and the experiment harness."""

import json

import numpy as np
import pytest

from mobiderm import ops
from mobiderm import trainer as tr


def separable_features(n_per_class=300, dim=24, seed=0):
    """Two well-separated clusters whose direction spans every feature."""
    rng = np.random.default_rng(seed)
    center = np.full(dim, 0.8)
    a = center + rng.normal(0, 0.3, (n_per_class, dim))
    b = -center + rng.normal(0, 0.3, (n_per_class, dim))
    features = np.concatenate([a, b]).astype(np.float32)
    labels = np.array([0] * n_per_class + [1] * n_per_class, dtype=np.int64)
    return features, labels


class TestAdamStep:
    def test_zero_gradient_leaves_param(self):
        hp = tr.Hyperparams()
        theta = np.zeros(3, dtype=np.float32)
        state = tr.AdamState.zeros_like(theta)
        new_theta, new_state = tr.adam_step(theta, np.zeros(3, np.float32), state, hp)
        assert np.array_equal(new_theta, theta)
        assert new_state.t == 1

    def test_single_step_magnitude_is_learning_rate(self):
        hp = tr.Hyperparams(learning_rate=1e-4)
        theta = np.zeros(1, dtype=np.float32)
        state = tr.AdamState.zeros_like(theta)
        new_theta, _ = tr.adam_step(theta, np.full(1, 0.5, np.float32), state, hp)
        # bias-corrected m_hat / sqrt(v_hat) is exactly 1 after one step
        assert new_theta[0] == pytest.approx(-1e-4, rel=1e-6)

    def test_identical_histories_update_identically(self):
        hp = tr.Hyperparams()
        a = np.array([0.3, 0.3], dtype=np.float32)
        state_a = tr.AdamState.zeros_like(a)
        for g in (0.2, -0.4, 0.1):
            grad = np.full(2, g, np.float32)
            a, state_a = tr.adam_step(a, grad, state_a, hp)
        assert a[0] == a[1]

    def test_update_magnitude_bounded_by_lr_scale(self):
        hp = tr.Hyperparams(learning_rate=1e-4)
        rng = np.random.default_rng(0)
        theta = np.zeros(8, dtype=np.float32)
        state = tr.AdamState.zeros_like(theta)
        for _ in range(50):
            new_theta, state = tr.adam_step(theta, rng.normal(size=8).astype(np.float32),
                                            state, hp)
            assert np.max(np.abs(new_theta - theta)) <= hp.learning_rate * 1.3
            theta = new_theta

    def test_shape_mismatch_rejected(self):
        hp = tr.Hyperparams()
        theta = np.zeros(3, dtype=np.float32)
        with pytest.raises(ops.ShapeError):
            tr.adam_step(theta, np.zeros(4, np.float32), tr.AdamState.zeros_like(theta), hp)


class TestTrainHead:
    def test_separable_features_reach_99_percent(self):
        features, labels = separable_features()
        w, b, log = tr.train_head(features, labels, tr.Hyperparams(seed=0), 2)
        assert log.accuracies[-1] >= 0.99
        preds = ops.softmax(ops.dense(features, w, b)).argmax(axis=1)
        assert (preds == labels).mean() >= 0.99

    def test_zero_learning_rate_is_a_bitwise_noop(self):
        features, labels = separable_features(50)
        hp = tr.Hyperparams(learning_rate=0.0, epochs=5, seed=0)
        w, b, log = tr.train_head(features, labels, hp, 2)
        assert np.all(w == 0.0) and np.all(b == 0.0)  # zero-initialized head
        assert len(set(f"{v:.9f}" for v in log.losses)) == 1

    def test_loss_decreases_on_learnable_data(self):
        features, labels = separable_features(100, seed=3)
        _, _, log = tr.train_head(features, labels, tr.Hyperparams(seed=1), 2)
        assert log.losses[-1] < log.losses[0]
        non_monotone = sum(1 for a, b in zip(log.losses, log.losses[1:]) if b > a)
        assert non_monotone <= 2

    def test_deterministic_given_seed(self):
        features, labels = separable_features(60, seed=5)
        hp = tr.Hyperparams(epochs=3, seed=9)
        w1, b1, log1 = tr.train_head(features, labels, hp, 2)
        w2, b2, log2 = tr.train_head(features, labels, hp, 2)
        assert np.array_equal(w1, w2) and np.array_equal(b1, b2)
        assert log1.losses == log2.losses

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            tr.train_head(np.zeros((0, 4), np.float32), np.zeros(0, np.int64),
                          tr.Hyperparams(), 2)

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            tr.train_head(np.zeros((3, 4), np.float32), np.array([0, 1, 5]),
                          tr.Hyperparams(), num_classes=2)

    def test_epoch_count_logged(self):
        features, labels = separable_features(40, seed=6)
        hp = tr.Hyperparams(epochs=7, seed=0)
        _, _, log = tr.train_head(features, labels, hp, 2)
        assert len(log.losses) == 7 == len(log.accuracies)


class TestFeatureScaler:
    def test_fold_reproduces_standardized_logits(self):
        rng = np.random.default_rng(0)
        features = (rng.random((50, 12)) * 1e-6).astype(np.float32)
        scaler = tr.FeatureScaler.fit(features)
        w = rng.normal(size=(12, 3)).astype(np.float32)
        b = rng.normal(size=3).astype(np.float32)
        folded_w, folded_b = tr.fold_scaler_into_head(w, b, scaler)
        direct = ops.dense(scaler.transform(features), w, b)
        folded = ops.dense(features, folded_w, folded_b)
        np.testing.assert_allclose(direct, folded, atol=1e-4)

    def test_dead_features_get_unit_scale(self):
        features = np.zeros((10, 4), dtype=np.float32)
        features[:, 0] = np.linspace(0, 1, 10)
        scaler = tr.FeatureScaler.fit(features)
        assert np.all(scaler.scale[1:] == 1.0) or np.all(scaler.scale[1:] > 0)
        assert np.all(np.isfinite(scaler.transform(features)))


class TestExperimentArm:
    def test_known_labels(self):
        assert tr.ExperimentArm("A").sampling == "undersample"
        assert tr.ExperimentArm("B").sampling == "imbalanced"
        assert tr.ExperimentArm("C").sampling == "oversample"
        arm_d = tr.ExperimentArm("D")
        assert arm_d.sampling == "oversample" and arm_d.augmented

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError):
            tr.ExperimentArm("E")


class TestRunExperiment:
    REPORT_FIELDS = {"arm", "seed", "accuracy", "per_class_accuracy", "confusion",
                     "normalized", "class_names", "config"}

    @pytest.mark.parametrize("arm", ["A", "B"])
    def test_arms_complete_with_all_report_fields(self, arm, tiny_corpus, toy_spec, toy_store):
        hp = tr.Hyperparams(epochs=2, seed=0)
        result = tr.run_experiment(tiny_corpus, arm, toy_spec, toy_store, hp)
        assert set(result.metrics) == self.REPORT_FIELDS
        assert result.metrics["arm"] == arm
        assert 0.0 <= result.metrics["accuracy"] <= 1.0
        assert len(result.metrics["per_class_accuracy"]) == 7
        assert np.asarray(result.metrics["confusion"]).shape == (7, 7)
        assert result.metrics["config"]["hyperparams"]["epochs"] == 2

    def test_backbone_frozen_through_training(self, tiny_corpus, toy_spec, toy_store):
        snapshot = {k: v.copy() for k, v in toy_store.entries.items() if not k.startswith("head/")}
        hp = tr.Hyperparams(epochs=2, seed=0)
        tr.run_experiment(tiny_corpus, "D", toy_spec, toy_store, hp)
        for name, before in snapshot.items():
            assert np.array_equal(toy_store[name], before), name

    def test_arm_d_metrics_json_byte_identical(self, tiny_corpus, toy_spec, toy_store):
        hp = tr.Hyperparams(epochs=2, seed=0)
        a = tr.run_experiment(tiny_corpus, "D", toy_spec, toy_store, hp)
        b = tr.run_experiment(tiny_corpus, "D", toy_spec, toy_store, hp)
        assert a.metrics_json().encode() == b.metrics_json().encode()

    def test_sampling_counts_flow_through(self, tiny_corpus, toy_spec, toy_store):
        hp = tr.Hyperparams(epochs=1, seed=0)
        result = tr.run_experiment(tiny_corpus, "C", toy_spec, toy_store, hp)
        # 20 per class, balanced: oversampling changes nothing
        assert result.metrics["config"]["train_size"] == 7 * 16
        assert result.metrics["config"]["test_size"] == 7 * 4

    def test_metrics_json_has_no_timing(self, tiny_corpus, toy_spec, toy_store):
        hp = tr.Hyperparams(epochs=1, seed=0)
        result = tr.run_experiment(tiny_corpus, "A", toy_spec, toy_store, hp)
        text = result.metrics_json()
        assert "wall" not in text and "time" not in text
        json.loads(text)  # well-formed
        assert result.train_log.wall_time_seconds > 0
