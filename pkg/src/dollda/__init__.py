"""Discriminative label-consistent domain adaptation with MMD alignment,
repulsive class-separation terms and sparse orthogonal label regression."""
from __future__ import annotations

from .classify import BaseClassifier, accuracy, nn_classify
from .config import VARIANTS, SolverConfig
from .data import DaDataset, embed_labels, hard_labels, load_labels, load_matrix, save_labels, save_matrix
from .errors import ConfigError, DataError, DollDaError, NumericalError
from .harness import TaskReport, run_suite, run_task
from .mmd import MmdAssembly, build_assembly, build_m0, build_mc, build_repulsive
from .pipeline import FitResult, fit, fit_gram, fit_kernel
from .synthetic import make_synthetic, make_two_moons

__version__ = "0.1.0"

__all__ = [
    "BaseClassifier", "ConfigError", "DaDataset", "DataError", "DollDaError", "FitResult",
    "MmdAssembly", "NumericalError", "SolverConfig", "TaskReport", "VARIANTS", "accuracy",
    "build_assembly", "build_m0", "build_mc", "build_repulsive", "embed_labels", "fit",
    "fit_gram", "fit_kernel", "hard_labels", "load_labels", "load_matrix", "make_synthetic",
    "make_two_moons", "nn_classify", "run_suite", "run_task", "save_labels", "save_matrix",
]
