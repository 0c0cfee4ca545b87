"""Base classifiers and the accuracy metric."""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError

# (train_x, train_labels, test_x) -> labels; samples are columns
BaseClassifier = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

_CHUNK = 2048


def nn_classify(train_x: np.ndarray, train_labels, test_x: np.ndarray) -> np.ndarray:
    """1-nearest-neighbour labels under Euclidean distance.

    Ties resolve to the lowest training index.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    test_x = np.asarray(test_x, dtype=np.float64)
    train_labels = np.asarray(train_labels)
    if train_x.ndim != 2 or test_x.ndim != 2 or train_x.shape[1] == 0:
        raise DataError("nn_classify needs non-empty 2-D train and test matrices")
    if train_x.shape[0] != test_x.shape[0]:
        raise DataError(
            f"dimension mismatch: train has {train_x.shape[0]} features, test has {test_x.shape[0]}")
    if train_labels.shape[0] != train_x.shape[1]:
        raise DataError(f"{train_labels.shape[0]} labels for {train_x.shape[1]} training samples")
    out = np.empty(test_x.shape[1], dtype=train_labels.dtype)
    for start in range(0, test_x.shape[1], _CHUNK):
        block = test_x[:, start:start + _CHUNK]
        d = cdist(block.T, train_x.T, "sqeuclidean")
        out[start:start + _CHUNK] = train_labels[np.argmin(d, axis=1)]
    return out


def accuracy(predicted, truth) -> float:
    """Fraction of target samples whose predicted label equals the ground truth."""
    predicted = np.asarray(predicted).ravel()
    truth = np.asarray(truth).ravel()
    if predicted.size != truth.size:
        raise DataError(f"length mismatch: {predicted.size} predictions, {truth.size} labels")
    if truth.size == 0:
        raise DataError("accuracy of an empty label set is undefined")
    return int(np.sum(predicted == truth)) / truth.size
