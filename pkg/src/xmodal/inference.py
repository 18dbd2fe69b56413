"""Image-modal and text-modal class probabilities in the inference space.

A class distribution is the softmax of temperature-scaled cosine similarities
between a unit query vector and the class prompt embeddings. The text modality
averages the per-caption distributions of the retrieved captions, with equal
weights. Entropy uses the natural logarithm with 0*ln(0) = 0, and confidence
is 1 - H(P)/ln(C), so a uniform distribution scores 0 and a one-hot scores 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatchError, EmptyCaptionsError
from .store import ClassSet


@dataclass
class InferenceConfig:
    inference_space: str
    temperature: float = 100.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


@dataclass
class Prediction:
    """A class distribution with its entropy and raw modal confidence."""

    probs: np.ndarray
    entropy: float
    confidence: float

    @property
    def predicted_class(self) -> int:
        return int(np.argmax(self.probs))


def entropy_nat(probs: np.ndarray) -> float:
    """Shannon entropy in nats; zero-probability terms contribute nothing."""
    p = np.asarray(probs, dtype=np.float64)
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return float(-terms.sum())


def prediction_from_probs(probs: np.ndarray) -> Prediction:
    p = np.asarray(probs, dtype=np.float64)
    h = entropy_nat(p)
    confidence = 1.0 - h / np.log(p.shape[0])
    return Prediction(probs=p, entropy=h, confidence=float(confidence))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _class_logits(vectors: np.ndarray, classes: ClassSet, config: InferenceConfig) -> np.ndarray:
    mat = classes.matrix(config.inference_space)
    v = np.asarray(vectors, dtype=np.float64)
    if v.shape[-1] != mat.space.dim:
        raise DimMismatchError(
            f"vector dim {v.shape[-1]} != inference space dim {mat.space.dim}"
        )
    return config.temperature * (v @ mat.data.T.astype(np.float64))


def image_modal_probability(query_image, classes: ClassSet, config: InferenceConfig) -> Prediction:
    """Class distribution of a single query image embedding."""
    q = np.asarray(query_image, dtype=np.float64).reshape(-1)
    return prediction_from_probs(softmax(_class_logits(q, classes, config)))


def text_modal_probability(
    caption_embeddings, classes: ClassSet, config: InferenceConfig
) -> Prediction:
    """Equal-weight average of the K per-caption class distributions."""
    embs = np.asarray(caption_embeddings, dtype=np.float64)
    if embs.ndim == 1:
        embs = embs[None, :]
    if embs.shape[0] == 0:
        raise EmptyCaptionsError("text-modal probability needs at least one caption embedding")
    per_caption = softmax(_class_logits(embs, classes, config))
    return prediction_from_probs(per_caption.mean(axis=0))
