"""Scikit-learn style estimator facade over the pipeline.

The training flow is genuinely fit/predict shaped, so these wrappers expose
it to the wider ecosystem: ``MobileNetFeatureExtractor`` is a transformer
from image batches to pooled features, ``TransferHeadClassifier`` fits the
softmax head on feature rows, and ``SkinDiseaseClassifier`` composes the
two over raw [0, 255] image batches. All follow sklearn conventions
(constructor stores hyperparameters verbatim, fitted state carries a
trailing underscore, ``get_params``/``set_params``/``clone`` work).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import data as data_mod
from . import ops
from .backbone import ModelSpec, init_weights, load_weights
from .trainer import FeatureScaler, Hyperparams, fold_scaler_into_head, train_head


def check_image_batch(X, input_size: int | None = None) -> np.ndarray:
    """Validate an N x H x W x 3 float batch (optionally of a fixed size)."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 4 or X.shape[3] != 3:
        raise ValueError(f"expected an N x H x W x 3 image batch, got shape {X.shape}")
    if input_size is not None and X.shape[1:3] != (input_size, input_size):
        raise ValueError(
            f"batch spatial size {X.shape[1:3]} != model input size {(input_size, input_size)}")
    if not np.all(np.isfinite(X)):
        raise ValueError("image batch contains non-finite values")
    return X


def check_feature_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 2:
        raise ValueError(f"expected an N x F feature matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    return X


class MobileNetFeatureExtractor(BaseEstimator, TransformerMixin):
    """Frozen depthwise-separable backbone as a batch-of-images transformer.

    Parameters
    ----------
    input_size : int, model input resolution (images must already match).
    width_multiplier : float in (0, 1], channel thinning factor.
    num_classes : int, head width the weight store is validated against.
    weights_path : optional path to a weight container; random init if None.
    seed : int, seed for random initialization when no weights are given.
    """

    def __init__(self, input_size=224, width_multiplier=1.0, num_classes=7,
                 weights_path=None, seed=0):
        self.input_size = input_size
        self.width_multiplier = width_multiplier
        self.num_classes = num_classes
        self.weights_path = weights_path
        self.seed = seed

    def fit(self, X=None, y=None):
        self.spec_ = ModelSpec(
            input_size=self.input_size,
            width_multiplier=self.width_multiplier,
            num_classes=self.num_classes,
        )
        if self.weights_path is not None:
            self.store_, self.load_stats_ = load_weights(self.weights_path, self.spec_)
        else:
            self.store_ = init_weights(self.spec_, self.seed)
            self.load_stats_ = None
        self.n_features_out_ = self.spec_.feature_dim
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "store_")
        from .backbone import extract_features

        X = check_image_batch(X, self.input_size)
        return extract_features(self.store_, self.spec_, X)


class TransferHeadClassifier(BaseEstimator, ClassifierMixin):
    """Softmax head trained with Adam over fixed feature rows.

    With ``standardize=True`` (default) the features are z-scored using
    train statistics and the affine map is folded back into the learned
    weights, so ``weights_``/``bias_`` always act on raw features.
    """

    def __init__(self, learning_rate=1e-4, epochs=30, batch_size=32,
                 adam_beta1=0.9, adam_beta2=0.999, adam_epsilon=1e-8,
                 standardize=True, seed=0):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_epsilon = adam_epsilon
        self.standardize = standardize
        self.seed = seed

    def _hyperparams(self) -> Hyperparams:
        return Hyperparams(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_epsilon=self.adam_epsilon,
            seed=self.seed,
        )

    def fit(self, X, y):
        X = check_feature_matrix(X)
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError("y must hold one label per feature row")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        encoded = encoded.astype(np.int64)
        if self.standardize:
            scaler = FeatureScaler.fit(X)
            w, b, self.train_log_ = train_head(
                scaler.transform(X), encoded, self._hyperparams(),
                num_classes=len(self.classes_))
            self.weights_, self.bias_ = fold_scaler_into_head(w, b, scaler)
        else:
            self.weights_, self.bias_, self.train_log_ = train_head(
                X, encoded, self._hyperparams(), num_classes=len(self.classes_))
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "weights_")
        X = check_feature_matrix(X)
        return ops.dense(X, self.weights_, self.bias_)

    def predict_proba(self, X) -> np.ndarray:
        return ops.softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return self.classes_[self.predict_proba(X).argmax(axis=1)]


class SkinDiseaseClassifier(BaseEstimator, ClassifierMixin):
    """End-to-end classifier over raw [0, 255] image batches.

    Composes the frozen feature extractor with the transfer-learned head;
    ``preprocessing`` selects the pixel scaling applied before the backbone
    ("default" maps to [-1, 1], "rescale" to [0, 1]).
    """

    def __init__(self, input_size=224, width_multiplier=1.0, weights_path=None,
                 preprocessing="default", learning_rate=1e-4, epochs=30,
                 batch_size=32, seed=0):
        self.input_size = input_size
        self.width_multiplier = width_multiplier
        self.weights_path = weights_path
        self.preprocessing = preprocessing
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _preprocess(self, X):
        if self.preprocessing not in data_mod.PREPROCESSORS:
            raise ValueError(f"unknown preprocessing {self.preprocessing!r}")
        return data_mod.PREPROCESSORS[self.preprocessing](X)

    def fit(self, X, y):
        X = check_image_batch(X, self.input_size)
        y = np.asarray(y)
        classes = np.unique(y)
        self.extractor_ = MobileNetFeatureExtractor(
            input_size=self.input_size,
            width_multiplier=self.width_multiplier,
            num_classes=len(classes),
            weights_path=self.weights_path,
            seed=self.seed,
        ).fit()
        features = self.extractor_.transform(self._preprocess(X))
        self.head_ = TransferHeadClassifier(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
        ).fit(features, y)
        self.classes_ = self.head_.classes_
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "head_")
        X = check_image_batch(X, self.input_size)
        features = self.extractor_.transform(self._preprocess(X))
        return self.head_.predict_proba(features)

    def predict(self, X) -> np.ndarray:
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
