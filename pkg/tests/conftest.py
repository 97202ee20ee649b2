"""Shared fixtures: toy model configuration and a small synthetic corpus."""

import numpy as np
import pytest

from mobiderm import backbone as bb
from mobiderm import synthetic

TOY_SPEC = bb.ModelSpec(input_size=32, width_multiplier=0.25, num_classes=7)


@pytest.fixture(scope="session")
def toy_spec():
    return TOY_SPEC


@pytest.fixture(scope="session")
def toy_store():
    return bb.init_weights(TOY_SPEC, seed=0)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """20 images per class at 32 x 32: enough to exercise every arm quickly."""
    root = tmp_path_factory.mktemp("corpus")
    synthetic.generate_corpus(root, per_class=20, size=32, seed=0)
    return root


@pytest.fixture(scope="session")
def trained_head(toy_spec, toy_store, tiny_corpus):
    """One fast arm-B experiment shared by export/serve/cli tests."""
    from mobiderm.trainer import Hyperparams, run_experiment

    hp = Hyperparams(epochs=3, seed=0)
    result = run_experiment(tiny_corpus, "B", toy_spec, toy_store, hp)
    entries = dict(toy_store.entries)
    entries["head/weights"] = result.head_weights
    entries["head/bias"] = result.head_bias
    return bb.WeightStore(entries), result


@pytest.fixture()
def sample_image_file(tmp_path):
    from PIL import Image

    rng = np.random.default_rng(0)
    raw = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    path = tmp_path / "sample.png"
    Image.fromarray(raw).save(path)
    return path
