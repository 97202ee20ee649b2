"""Skin disease classification pipeline.

A depthwise-separable CNN with a transfer-learned softmax head, dataset
sampling and augmentation experiment arms, confusion-matrix evaluation,
input-gradient saliency maps, a freeze/optimize deployment chain, and an
HTTP classification service.
"""

from .augment import AffineTransform, AugmentationConfig, apply_transform, sample_transform
from .backbone import (
    BundleStats,
    ModelSpec,
    WeightStore,
    build_model,
    extract_features,
    init_weights,
    load_weights,
    param_shapes,
    predict_probs,
    save_weights,
)
from .data import (
    DatasetManifest,
    SplitPlan,
    apply_sampling,
    default_preprocess,
    load_image,
    rescale_preprocess,
    scan_dataset,
    stratified_split,
)
from .estimators import (
    MobileNetFeatureExtractor,
    SkinDiseaseClassifier,
    TransferHeadClassifier,
    check_image_batch,
)
from .evaluate import ConfusionMatrix, confusion, normalize, per_class_accuracy, rank1_accuracy
from .export import Checkpoint, FrozenBundle, freeze, load_bundle, optimize, save_bundle
from .saliency import SaliencyMap, render_heatmap
from .trainer import ExperimentArm, Hyperparams, TrainLog, adam_step, run_experiment, train_head

__version__ = "0.1.0"

__all__ = [
    "AffineTransform",
    "AugmentationConfig",
    "BundleStats",
    "Checkpoint",
    "ConfusionMatrix",
    "DatasetManifest",
    "ExperimentArm",
    "FrozenBundle",
    "Hyperparams",
    "MobileNetFeatureExtractor",
    "ModelSpec",
    "SaliencyMap",
    "SkinDiseaseClassifier",
    "SplitPlan",
    "TrainLog",
    "TransferHeadClassifier",
    "WeightStore",
    "adam_step",
    "apply_sampling",
    "apply_transform",
    "build_model",
    "check_image_batch",
    "confusion",
    "default_preprocess",
    "extract_features",
    "freeze",
    "init_weights",
    "load_bundle",
    "load_image",
    "load_weights",
    "normalize",
    "optimize",
    "param_shapes",
    "per_class_accuracy",
    "predict_probs",
    "rank1_accuracy",
    "render_heatmap",
    "rescale_preprocess",
    "run_experiment",
    "sample_transform",
    "save_bundle",
    "save_weights",
    "scan_dataset",
    "stratified_split",
    "train_head",
]
