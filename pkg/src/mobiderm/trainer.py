"""Transfer-learning head training and the four-arm experiment harness.

The backbone stays frozen throughout: training only touches the dense head,
so for the non-augmented arms the pooled features are constant and are
extracted once. The augmented arm re-draws augmentations every epoch, which
forces a fresh pass through the frozen stack per epoch.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import augment as aug
from . import data as data_mod
from . import evaluate as eval_mod
from . import ops
from .backbone import ModelSpec, WeightStore, build_model
from .layers import Dense, LayerChain


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 1e-4
    epochs: int = 30
    batch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**d)


@dataclass
class AdamState:
    """First/second moment estimates and step counter for one parameter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, param: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(param, dtype=np.float32),
                   v=np.zeros_like(param, dtype=np.float32), t=0)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState,
              hp: Hyperparams) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected update; returns (new param, new state).

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    """
    if param.shape != grad.shape:
        raise ops.ShapeError(f"grad shape {grad.shape} != param shape {param.shape}")
    t = state.t + 1
    g = grad.astype(np.float64)
    m = hp.adam_beta1 * state.m.astype(np.float64) + (1 - hp.adam_beta1) * g
    v = hp.adam_beta2 * state.v.astype(np.float64) + (1 - hp.adam_beta2) * g * g
    m_hat = m / (1 - hp.adam_beta1**t)
    v_hat = v / (1 - hp.adam_beta2**t)
    new_param = param.astype(np.float64) - hp.learning_rate * m_hat / (np.sqrt(v_hat) + hp.adam_epsilon)
    return new_param.astype(np.float32), AdamState(m.astype(np.float32), v.astype(np.float32), t)


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature standardization fitted on training features.

    A randomly initialized frozen backbone emits features whose magnitude
    shrinks geometrically with depth, far below what lr-capped Adam steps
    can turn into useful logits. Standardizing restores a trainable scale;
    the affine map folds exactly into the dense head afterwards (see
    ``fold_scaler_into_head``), so deployed weights act on raw features.
    """

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        f = features.astype(np.float64)
        mean = f.mean(axis=0)
        std = f.std(axis=0)
        # dead features get scale 1; near-dead ones are floored relative to
        # the liveliest feature so folded weights stay bounded
        floor = max(1e-3 * float(std.max(initial=0.0)), 1e-30)
        scale = np.where(std > floor, std, np.where(std == 0.0, 1.0, floor))
        return cls(mean=mean, scale=scale)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return ((features.astype(np.float64) - self.mean) / self.scale).astype(np.float32)


def fold_scaler_into_head(weights: np.ndarray, bias: np.ndarray,
                          scaler: FeatureScaler) -> tuple[np.ndarray, np.ndarray]:
    """Reparameterize head weights trained on standardized features so they
    produce identical logits on raw features:

        W (f - mu) / s + b  ==  (W / s) f + (b - W mu / s)
    """
    w64 = weights.astype(np.float64) / scaler.scale[:, None]
    b64 = bias.astype(np.float64) - scaler.mean @ w64
    return w64.astype(np.float32), b64.astype(np.float32)


@dataclass
class TrainLog:
    """Per-epoch mean loss and train accuracy, plus wall time."""

    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)
    wall_time_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "losses": self.losses,
            "accuracies": self.accuracies,
            "wall_time_seconds": self.wall_time_seconds,
        }


class HeadTrainer:
    """Adam optimization of the softmax head over fixed-length feature rows.

    The head starts at zero: softmax regression is convex, so there is no
    symmetry to break, and a zero start means the small lr-capped Adam steps
    spend the epoch budget moving toward the solution instead of first
    unwinding a random initialization.
    """

    def __init__(self, feature_dim: int, num_classes: int, hp: Hyperparams):
        self.weights = np.zeros((feature_dim, num_classes), dtype=np.float32)
        self.bias = np.zeros(num_classes, dtype=np.float32)
        self.hp = hp
        self.num_classes = num_classes
        self._w_state = AdamState.zeros_like(self.weights)
        self._b_state = AdamState.zeros_like(self.bias)
        self._shuffle_rng = np.random.default_rng(hp.seed + 1)

    def run_epoch(self, features: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
        """One pass of shuffled mini-batches; returns (mean loss, accuracy)."""
        n = features.shape[0]
        order = self._shuffle_rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, self.hp.batch_size):
            idx = order[start : start + self.hp.batch_size]
            x, y = features[idx], labels[idx]
            onehot = ops.one_hot(y, self.num_classes)
            logits = ops.dense(x, self.weights, self.bias)
            loss, probs = ops.softmax_cross_entropy(logits, onehot)
            total_loss += loss * len(idx)
            correct += int((probs.argmax(axis=1) == y).sum())
            dlogits = ops.softmax_cross_entropy_backward(probs, onehot)
            _, dw, db = ops.dense_backward(dlogits, x, self.weights)
            self.weights, self._w_state = adam_step(self.weights, dw, self._w_state, self.hp)
            self.bias, self._b_state = adam_step(self.bias, db, self._b_state, self.hp)
        return total_loss / n, correct / n

    def adam_snapshot(self) -> dict[str, np.ndarray]:
        return {
            "optimizer/head/weights/m": self._w_state.m,
            "optimizer/head/weights/v": self._w_state.v,
            "optimizer/head/bias/m": self._b_state.m,
            "optimizer/head/bias/v": self._b_state.v,
        }

    @property
    def step_count(self) -> int:
        return self._w_state.t


def train_head(features: np.ndarray, labels: np.ndarray, hp: Hyperparams,
               num_classes: int | None = None) -> tuple[np.ndarray, np.ndarray, TrainLog]:
    """Train the softmax head on precomputed features.

    Returns (weights F x K, bias K, log). Deterministic given the seed.
    """
    features = ops.as_tensor(features)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2:
        raise ops.ShapeError(f"features must be N x F, got shape {features.shape}")
    if features.shape[0] == 0:
        raise ValueError("cannot train on an empty feature set")
    if labels.shape != (features.shape[0],):
        raise ops.ShapeError("labels must be one integer per feature row")
    k = int(labels.max()) + 1 if num_classes is None else num_classes
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label out of range [0, {k})")

    trainer = HeadTrainer(features.shape[1], k, hp)
    log = TrainLog()
    start = time.perf_counter()
    for _ in range(hp.epochs):
        loss, acc = trainer.run_epoch(features, labels)
        log.losses.append(loss)
        log.accuracies.append(acc)
    log.wall_time_seconds = time.perf_counter() - start
    return trainer.weights, trainer.bias, log


# label -> (sampling mode, preprocessing mode)
ARMS: dict[str, tuple[str, str]] = {
    "A": ("undersample", "default"),
    "B": ("imbalanced", "default"),
    "C": ("oversample", "default"),
    "D": ("oversample", "augmented"),
}


@dataclass(frozen=True)
class ExperimentArm:
    label: str

    def __post_init__(self):
        if self.label not in ARMS:
            raise ValueError(f"arm must be one of {sorted(ARMS)}, got {self.label!r}")

    @property
    def sampling(self) -> str:
        return ARMS[self.label][0]

    @property
    def preprocessing(self) -> str:
        return ARMS[self.label][1]

    @property
    def augmented(self) -> bool:
        return self.preprocessing == "augmented"


def _chain_features(chain: LayerChain, batch: np.ndarray, batch_size: int) -> np.ndarray:
    """Frozen-stack features (pooled, pre-head) in fixed batch order."""
    feature_layers = []
    for layer in chain.layers:
        if isinstance(layer, Dense):
            break
        feature_layers.append(layer)
    outs = []
    for start in range(0, batch.shape[0], batch_size):
        x = batch[start : start + batch_size]
        for layer in feature_layers:
            x = layer.forward(x)
        outs.append(x)
    return np.concatenate(outs, axis=0)


@dataclass
class ExperimentResult:
    metrics: dict
    train_log: TrainLog
    head_weights: np.ndarray
    head_bias: np.ndarray
    adam_tensors: dict[str, np.ndarray]
    adam_steps: int
    plan: data_mod.SplitPlan | None = None

    def metrics_json(self) -> str:
        return json.dumps(self.metrics, indent=2, sort_keys=True)


def run_experiment(dataset_root, arm: ExperimentArm | str, spec: ModelSpec,
                   store: WeightStore, hp: Hyperparams,
                   augmentation: aug.AugmentationConfig | None = None,
                   validation_source: str = "test",
                   resample_test: bool = True) -> ExperimentResult:
    """Run one sampling/preprocessing arm end to end and report test metrics.

    The report carries rank-1 accuracy, raw and row-normalized confusion
    matrices, per-class accuracy, the arm label, and a full config echo.
    Timing lives in the train log, not the metrics, so metrics JSON is
    byte-identical across reruns with the same seeds.
    """
    if isinstance(arm, str):
        arm = ExperimentArm(arm)
    if augmentation is None:
        augmentation = aug.AugmentationConfig()

    manifest = data_mod.scan_dataset(dataset_root)
    plan = data_mod.stratified_split(manifest, 0.8, seed=hp.seed,
                                     validation_source=validation_source)
    plan = data_mod.apply_sampling(plan, arm.sampling, seed=hp.seed,
                                   resample_test=resample_test)

    preprocess = data_mod.rescale_preprocess if arm.augmented else data_mod.default_preprocess
    chain = build_model(spec, store)

    raw_train = data_mod.load_images(plan.train, spec.input_size)
    train_labels = np.array([idx for _, idx in plan.train], dtype=np.int64)
    raw_test = data_mod.load_images(plan.test, spec.input_size)
    test_labels = np.array([idx for _, idx in plan.test], dtype=np.int64)

    test_features = _chain_features(chain, preprocess(raw_test), hp.batch_size)

    # feature scale restoration, fitted on (unaugmented) train features only
    plain_train_features = _chain_features(chain, preprocess(raw_train), hp.batch_size)
    scaler = FeatureScaler.fit(plain_train_features)

    trainer = HeadTrainer(spec.feature_dim, spec.num_classes, hp)
    log = TrainLog()
    start = time.perf_counter()
    if arm.augmented:
        for epoch in range(hp.epochs):
            warped = np.stack([
                aug.augment(raw_train[i], augmentation, aug.item_rng(hp.seed, epoch, i))
                for i in range(raw_train.shape[0])
            ])
            features = scaler.transform(_chain_features(chain, warped, hp.batch_size))
            loss, acc = trainer.run_epoch(features, train_labels)
            log.losses.append(loss)
            log.accuracies.append(acc)
    else:
        features = scaler.transform(plain_train_features)
        for _ in range(hp.epochs):
            loss, acc = trainer.run_epoch(features, train_labels)
            log.losses.append(loss)
            log.accuracies.append(acc)
    log.wall_time_seconds = time.perf_counter() - start

    # fold the scaler into the head so the weights act on raw features,
    # exactly as they will inside a frozen bundle
    head_weights, head_bias = fold_scaler_into_head(trainer.weights, trainer.bias, scaler)
    logits = ops.dense(test_features, head_weights, head_bias)
    predictions = ops.softmax(logits).argmax(axis=1)
    cm = eval_mod.confusion(predictions, test_labels, spec.num_classes,
                            class_names=plan.classes)
    metrics = {
        "arm": arm.label,
        "seed": hp.seed,
        "accuracy": eval_mod.rank1_accuracy(cm),
        "per_class_accuracy": eval_mod.per_class_accuracy(cm),
        "confusion": cm.counts.tolist(),
        "normalized": eval_mod.normalize(cm).tolist(),
        "class_names": cm.class_names,
        "config": {
            "sampling": arm.sampling,
            "preprocessing": "rescale" if arm.augmented else "default",
            "augmentation": augmentation.to_dict() if arm.augmented else None,
            "hyperparams": hp.to_dict(),
            "model": spec.to_dict(),
            "validation_source": validation_source,
            "resample_test": resample_test,
            "train_size": len(plan.train),
            "test_size": len(plan.test),
        },
    }
    return ExperimentResult(
        metrics=metrics,
        train_log=log,
        head_weights=head_weights,
        head_bias=head_bias,
        adam_tensors=trainer.adam_snapshot(),
        adam_steps=trainer.step_count,
        plan=plan,
    )
