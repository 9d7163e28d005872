"""Part-based text-image person retrieval at desk scale.

Configurations and synthetic specs are plain dicts; missing keys take the
defaults and unknown keys raise ``ValueError``.
"""

import json

import numpy as np

from . import _core
from ._core import (
    Checkpoint,
    ConfigError,
    Dataset,
    IoError,
    LabelError,
    NumericError,
    ShapeError,
    cosine_similarity,
    match_probabilities,
)

__all__ = [
    "Checkpoint",
    "ConfigError",
    "Dataset",
    "IoError",
    "LabelError",
    "NumericError",
    "ShapeError",
    "cmpm_loss",
    "cosine_similarity",
    "default_config",
    "default_spec",
    "embed",
    "evaluate",
    "generate",
    "gradcheck",
    "load_checkpoint",
    "load_dataset",
    "lr_schedule",
    "match_probabilities",
    "reference_config",
    "topk_accuracy",
    "train",
]


def _dump(value):
    return json.dumps(value or {})


def default_config():
    return json.loads(_core.default_config_json())


def reference_config():
    return json.loads(_core.reference_config_json())


def default_spec():
    return json.loads(_core.default_spec_json())


def generate(spec=None):
    """Builds the synthetic dataset described by ``spec``."""
    return _core.generate(_dump(spec))


def load_dataset(path):
    return _core.load_dataset(str(path))


def load_checkpoint(path):
    return _core.load_checkpoint(str(path))


def train(dataset, config=None):
    """Returns ``(history, checkpoint)``; history holds one dict per epoch."""
    return _core.train(_dump(config), dataset)


def evaluate(checkpoint, dataset, split="test"):
    return _core.evaluate(checkpoint, dataset, split)


def embed(checkpoint, dataset, split="test"):
    """Global image and text vectors of a split, with their identities."""
    return _core.embed(checkpoint, dataset, split)


def gradcheck(step=1e-5, tolerance=1e-4, seed=3):
    return _core.gradcheck(step, tolerance, seed)


def lr_schedule(epoch, config=None):
    return _core.lr_schedule(epoch, _dump(config))


def cmpm_loss(img, txt, image_ids, text_ids, epsilon=1e-8):
    """Bidirectional matching loss of ``[N, C]`` image and text vectors."""
    return _core.cmpm_loss(np.asarray(img), np.asarray(txt), list(image_ids), list(text_ids), epsilon)


def topk_accuracy(sims, query_ids, gallery_ids, ks=(1, 5, 10)):
    return _core.topk_accuracy(np.asarray(sims), list(query_ids), list(gallery_ids), list(ks))
