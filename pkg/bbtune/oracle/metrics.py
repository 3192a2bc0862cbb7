"""Losses and scores over class probabilities."""
import logging
import math
from typing import Sequence

import numpy as np
from django.conf import settings

from bbtune.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)


def _floor():
    return getattr(settings, "PROBABILITY_FLOOR", 1e-12)


def average_class_probabilities(probs, token_lists: Sequence[Sequence[int]], normalize=True) -> np.ndarray:
    """Per class, the mean mask-position probability of the class's tokens.

    ``probs`` is batch x vocabulary; the result is batch x classes.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim == 1:
        probs = probs[None, :]
    columns = []
    for c, tokens in enumerate(token_lists):
        if len(tokens) == 0:
            raise InvalidParameterError(f"class {c} has no verbalizer tokens")
        columns.append(probs[:, list(tokens)].mean(axis=1))
    scores = np.stack(columns, axis=1)
    if normalize:
        totals = scores.sum(axis=1, keepdims=True)
        if np.any(totals <= 0):
            raise InvalidParameterError("verbalizer tokens carry zero probability mass")
        scores = scores / totals
    return scores


def cross_entropy(scores, label: int) -> float:
    """``-log(scores[label])`` for one normalized score vector."""
    if getattr(scores, "normalized", True) is False:
        raise InvalidParameterError("cross entropy needs normalized class scores")
    values = np.asarray(getattr(scores, "probabilities", scores), dtype=float)
    if not 0 <= label < values.shape[0]:
        raise InvalidParameterError(f"label {label} outside {values.shape[0]} classes")
    p = float(values[label])
    floor = _floor()
    if p < floor:
        logger.warning(f"Clamping probability {p:.3g} of label {label} to {floor:g}")
        p = floor
    return -math.log(p)


def mean_cross_entropy(class_probs, labels) -> float:
    class_probs = np.asarray(class_probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if class_probs.shape[0] == 0:
        raise InvalidParameterError("cross entropy of an empty batch")
    picked = class_probs[np.arange(labels.shape[0]), labels]
    floor = _floor()
    if np.any(picked < floor):
        logger.warning(f"Clamping {int(np.sum(picked < floor))} label probabilities to {floor:g}")
        picked = np.maximum(picked, floor)
    return float(-np.mean(np.log(picked)))


def batch_loss(probs, token_lists, labels) -> float:
    return mean_cross_entropy(average_class_probabilities(probs, token_lists), labels)


def _check_pair(predictions, labels):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise InvalidParameterError(f"{predictions.shape[0]} predictions for {labels.shape[0]} labels")
    if predictions.size == 0:
        raise InvalidParameterError("metrics of an empty batch")
    return predictions, labels


def accuracy(predictions, labels) -> float:
    predictions, labels = _check_pair(predictions, labels)
    return float(np.mean(predictions == labels))


def f1_binary(predictions, labels, positive: int = 1) -> float:
    predictions, labels = _check_pair(predictions, labels)
    true_positive = int(np.sum((predictions == positive) & (labels == positive)))
    predicted = int(np.sum(predictions == positive))
    actual = int(np.sum(labels == positive))
    precision = true_positive / predicted if predicted else 0.0
    recall = true_positive / actual if actual else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)
