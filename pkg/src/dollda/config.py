"""Solver configuration."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .data import NORMALIZE_MODES
from .errors import ConfigError

VARIANTS = ("JDA", "OLR", "CDDA_PLUS", "JOLR_DA", "DOLL_DA")
KERNELS = ("none", "linear", "rbf")
INIT_LABELS = ("nearest_neighbor", "random")

# variants that carry the MMD alignment terms / the label regression term
ALIGNING_VARIANTS = ("JDA", "CDDA_PLUS", "JOLR_DA", "DOLL_DA")
REGRESSING_VARIANTS = ("OLR", "JOLR_DA", "DOLL_DA")
REPULSIVE_VARIANTS = ("CDDA_PLUS", "DOLL_DA")


@dataclass(frozen=True)
class SolverConfig:
    """Hyper-parameters of one fit.

    ``outer_iters`` bounds the label/M* refinement loop, ``inner_iters`` the
    number of G re-weighting passes per outer iteration, and
    ``gpi_max_iter``/``gpi_tol`` the power iteration inside each pass.
    """

    k: int = 300
    alpha: float = 1.0
    beta: float = 0.1
    outer_iters: int = 10
    inner_iters: int = 10
    gpi_tol: float = 1e-6
    gpi_max_iter: int = 100
    epsilon: float = 1e-8
    centering_delta: float = 1e-6
    variant: str = "DOLL_DA"
    kernel: str = "none"
    bandwidth: float | None = None
    init_labels: str = "nearest_neighbor"
    normalize: str = "zscore_unit"
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")
        if self.init_labels not in INIT_LABELS:
            raise ConfigError(f"unknown init_labels {self.init_labels!r}; expected one of {INIT_LABELS}")
        if self.normalize not in NORMALIZE_MODES:
            raise ConfigError(f"unknown normalize mode {self.normalize!r}; expected one of {NORMALIZE_MODES}")
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k}")
        for name in ("outer_iters", "inner_iters", "gpi_max_iter"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"alpha and beta must be >= 0, got alpha={self.alpha}, beta={self.beta}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.centering_delta > 0:
            raise ConfigError(f"centering_delta must be > 0, got {self.centering_delta}")
        if self.gpi_tol < 0:
            raise ConfigError(f"gpi_tol must be >= 0, got {self.gpi_tol}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError(f"bandwidth must be > 0 when given, got {self.bandwidth}")

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config value: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "SolverConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(d)
