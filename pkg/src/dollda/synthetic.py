"""Rotated-Gaussian domain-shift tasks for desk-scale experiments."""
from __future__ import annotations

import numpy as np

from .data import DaDataset
from .errors import ConfigError

CENTER_RADIUS = 3.0
PLANE_SPREAD = 1.0
NUISANCE_SPREAD = 2.0


def make_synthetic(seed: int = 0, n_per_class: int = 50, class_count: int = 3, dim: int = 20,
                   rotation_degrees: float = 30.0, noise_sigma: float = 0.5
                   ) -> tuple[DaDataset, np.ndarray]:
    """Source/target Gaussian blobs where the target is rotated in a random 2-plane.

    Class centres sit evenly on a circle of radius ``CENTER_RADIUS`` inside the
    rotation plane.  Each blob has standard deviation ``PLANE_SPREAD`` inside
    that plane and ``NUISANCE_SPREAD`` along the remaining ``dim - 2``
    directions, so raw Euclidean distances are dominated by class-irrelevant
    variation.  Target samples are fresh draws from the same blobs, rotated
    by ``rotation_degrees`` about the origin and perturbed by Gaussian noise
    of standard deviation ``noise_sigma``; zero rotation and zero noise give
    identically distributed domains.

    Returns the dataset and the target ground-truth labels (kept separate so
    that they never travel with the dataset).
    """
    if class_count < 2:
        raise ConfigError(f"synthetic tasks need at least 2 classes, got {class_count}")
    if dim < 2:
        raise ConfigError(f"synthetic tasks need dim >= 2, got {dim}")
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    plane, _ = np.linalg.qr(rng.standard_normal((dim, 2)))
    u, v = plane[:, 0], plane[:, 1]
    angles = 2.0 * np.pi * np.arange(class_count) / class_count
    centers = CENTER_RADIUS * (np.outer(u, np.cos(angles)) + np.outer(v, np.sin(angles)))

    labels = np.repeat(np.arange(1, class_count + 1), n_per_class)
    # per-sample spread: PLANE_SPREAD inside the class plane, NUISANCE_SPREAD elsewhere
    spread = NUISANCE_SPREAD * np.eye(dim) + (PLANE_SPREAD - NUISANCE_SPREAD) * (plane @ plane.T)
    xs = centers[:, labels - 1] + spread @ rng.standard_normal((dim, labels.size))
    xt = centers[:, labels - 1] + spread @ rng.standard_normal((dim, labels.size))

    theta = np.deg2rad(rotation_degrees)
    rot2 = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    rotation = np.eye(dim) + plane @ (rot2 - np.eye(2)) @ plane.T
    xt = rotation @ xt + noise_sigma * rng.standard_normal(xt.shape)

    dataset = DaDataset.from_domains(xs, labels, xt, class_count)
    return dataset, labels.copy()


def make_two_moons(seed: int = 0, n_per_class: int = 100, rotation_degrees: float = 10.0,
                   noise_sigma: float = 0.1) -> tuple[DaDataset, np.ndarray]:
    """Two interleaved half-circles in the plane; the target is a rotated copy.

    The classes are not linearly separable, which makes this a sanity task for
    the kernelised solver.  Returns the dataset and target ground truth.
    """
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    labels = np.repeat([1, 2], n_per_class)

    def draw() -> np.ndarray:
        t = rng.uniform(0.0, np.pi, size=labels.size)
        upper = np.vstack([np.cos(t), np.sin(t)])
        lower = np.vstack([1.0 - np.cos(t), 0.5 - np.sin(t)])
        pts = np.where(labels == 1, upper, lower)
        return pts + noise_sigma * rng.standard_normal(pts.shape)

    xs = draw()
    theta = np.deg2rad(rotation_degrees)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    centre = np.array([[0.5], [0.25]])
    xt = rot @ (draw() - centre) + centre
    return DaDataset.from_domains(xs, labels, xt, 2), labels.copy()
