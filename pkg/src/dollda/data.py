"""Feature matrices, label embedding, preprocessing and matrix file I/O.

Feature matrices are plain ``float64`` arrays laid out features x samples,
i.e. one column per sample.  Class indices are 1-based and contiguous in
``1..C`` at every public interface.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

FBIN_MAGIC = b"FMAT"
FBIN_VERSION = 1
_FBIN_HEADER = struct.Struct("<4sIQQ")

NORMALIZE_MODES = ("none", "zscore", "zscore_unit")


def as_feature_matrix(x, name: str = "x") -> np.ndarray:
    """Validate and return ``x`` as a 2-D finite float64 array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise DataError(f"{name}: expected a non-empty 2-D matrix, got shape {x.shape}")
    bad = np.argwhere(~np.isfinite(x))
    if bad.size:
        i, j = bad[0]
        raise DataError(f"{name}: non-finite entry at row {i + 1}, column {j + 1}")
    return x


@dataclass(frozen=True)
class DaDataset:
    """Source and target samples packed column-wise as ``x = [x_s, x_t]``.

    Only the source labels live here; target ground truth is kept out of
    this type on purpose so that nothing downstream of ``fit`` can see it.
    """

    x: np.ndarray
    n_source: int
    n_target: int
    source_labels: np.ndarray
    class_count: int

    def __post_init__(self):
        x = as_feature_matrix(self.x)
        labels = np.asarray(self.source_labels)
        if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
            raise DataError("source_labels must be a 1-D integer array")
        if self.n_source < 1 or self.n_target < 1:
            raise DataError(
                f"need at least one source and one target sample, got "
                f"n_source={self.n_source}, n_target={self.n_target}")
        if self.n_source + self.n_target != x.shape[1]:
            raise DataError(
                f"n_source + n_target = {self.n_source + self.n_target} does not "
                f"match the {x.shape[1]} columns of x")
        if labels.shape[0] != self.n_source:
            raise DataError(
                f"{labels.shape[0]} source labels for {self.n_source} source samples")
        if self.class_count < 1:
            raise DataError(f"class_count must be >= 1, got {self.class_count}")
        if labels.min() < 1 or labels.max() > self.class_count:
            raise DataError(f"source labels must lie in 1..{self.class_count}")
        missing = set(range(1, self.class_count + 1)) - set(labels.tolist())
        if missing:
            raise DataError(f"classes {sorted(missing)} have no source sample")
        x.setflags(write=False)
        labels = labels.astype(np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "source_labels", labels)

    @classmethod
    def from_domains(cls, xs, ys, xt, class_count: int | None = None) -> "DaDataset":
        xs = as_feature_matrix(xs, "source features")
        xt = as_feature_matrix(xt, "target features")
        if xs.shape[0] != xt.shape[0]:
            raise DataError(
                f"source has {xs.shape[0]} features but target has {xt.shape[0]}")
        ys = np.asarray(ys, dtype=np.int64).ravel()
        if class_count is None:
            class_count = int(ys.max()) if ys.size else 0
        return cls(np.hstack([xs, xt]), xs.shape[1], xt.shape[1], ys, class_count)

    @property
    def x_source(self) -> np.ndarray:
        return self.x[:, : self.n_source]

    @property
    def x_target(self) -> np.ndarray:
        return self.x[:, self.n_source:]

    def digest(self) -> str:
        """SHA-256 over the fbin encoding of ``x`` and the source labels."""
        h = hashlib.sha256()
        h.update(encode_fbin(self.x))
        h.update(struct.pack("<QQ", self.n_source, self.n_target))
        h.update(self.source_labels.astype("<i8").tobytes())
        return h.hexdigest()


def embed_labels(labels, class_count: int, k: int) -> np.ndarray:
    """One-hot encode 1-based labels and zero-pad each row to length ``k``.

    >>> embed_labels([2], 3, 5)
    array([[0., 1., 0., 0., 0.]])
    """
    if k < class_count:
        raise ConfigError(f"subspace dimension k={k} is smaller than class count C={class_count}")
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size and (labels.min() < 1 or labels.max() > class_count):
        raise DataError(f"labels must lie in 1..{class_count}")
    y = np.zeros((labels.size, k))
    y[np.arange(labels.size), labels - 1] = 1.0
    return y


def hard_labels(y: np.ndarray, class_count: int) -> np.ndarray:
    """Argmax over the first ``class_count`` columns (ties go to the lowest class)."""
    y = np.asarray(y)
    return np.argmax(y[:, :class_count], axis=1).astype(np.int64) + 1


def check_embedded_labels(y: np.ndarray, class_count: int, tol: float = 1e-9) -> None:
    """Raise :class:`DataError` unless every row of ``y`` is a padded simplex point."""
    y = np.asarray(y)
    if y.ndim != 2 or y.shape[1] < class_count:
        raise DataError(f"embedded labels must be n x k with k >= {class_count}")
    if np.any(y < 0):
        raise DataError("embedded labels contain negative entries")
    sums = y[:, :class_count].sum(axis=1)
    worst = np.max(np.abs(sums - 1.0)) if sums.size else 0.0
    if worst > tol:
        raise DataError(f"class probabilities do not sum to 1 (max deviation {worst:.3g})")
    if np.any(y[:, class_count:] != 0):
        raise DataError("padding columns of embedded labels must be exactly 0")


@dataclass(frozen=True)
class Normalizer:
    """Per-feature affine map plus optional per-sample unit scaling."""

    mode: str
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.mode == "none":
            return x.copy()
        out = (x - self.mean[:, None]) / self.scale[:, None]
        if self.mode == "zscore_unit":
            norms = np.linalg.norm(out, axis=0)
            nz = norms > 0
            out[:, nz] /= norms[nz]
        return out


def fit_normalizer(x: np.ndarray, mode: str) -> Normalizer:
    if mode not in NORMALIZE_MODES:
        raise ConfigError(f"unknown normalize mode {mode!r}; expected one of {NORMALIZE_MODES}")
    if mode == "none":
        return Normalizer("none")
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=1)
    std = x.std(axis=1)
    # zero-variance rows are only centered
    scale = np.where(std > 0, std, 1.0)
    return Normalizer(mode, mean, scale)


def normalize(x: np.ndarray, mode: str) -> np.ndarray:
    """Row-wise z-scoring (``zscore``), optionally followed by unit-norm columns."""
    return fit_normalizer(x, mode).apply(x)


# -- file formats ------------------------------------------------------------

def encode_fbin(x: np.ndarray) -> bytes:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"fbin stores 2-D matrices only, got shape {x.shape}")
    rows, cols = x.shape
    header = _FBIN_HEADER.pack(FBIN_MAGIC, FBIN_VERSION, rows, cols)
    return header + np.ascontiguousarray(x, dtype="<f8").tobytes()


def decode_fbin(buf: bytes, name: str = "<bytes>") -> np.ndarray:
    if len(buf) < _FBIN_HEADER.size:
        raise DataError(f"{name}: truncated fbin header ({len(buf)} bytes)")
    magic, version, rows, cols = _FBIN_HEADER.unpack_from(buf)
    if magic != FBIN_MAGIC:
        raise DataError(f"{name}: bad magic {magic!r}, expected {FBIN_MAGIC!r}")
    if version != FBIN_VERSION:
        raise DataError(f"{name}: unsupported fbin version {version}")
    if rows < 1 or cols < 1:
        raise DataError(f"{name}: invalid dimensions {rows}x{cols}")
    expected = _FBIN_HEADER.size + 8 * rows * cols
    if len(buf) != expected:
        raise DataError(
            f"{name}: dimension mismatch, header says {rows}x{cols} "
            f"({expected} bytes) but file has {len(buf)} bytes")
    x = np.frombuffer(buf, dtype="<f8", offset=_FBIN_HEADER.size).reshape(rows, cols)
    return as_feature_matrix(x.astype(np.float64), name)


def _read_csv(path: Path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = []
            for col, token in enumerate(line.split(","), start=1):
                try:
                    value = float(token)
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {col}: cannot parse {token.strip()!r}") from None
                if not math.isfinite(value):
                    raise DataError(f"{path}: row {lineno}, column {col}: non-finite value {token.strip()!r}")
                row.append(value)
            if rows and len(row) != len(rows[0]):
                raise DataError(
                    f"{path}: row {lineno} has {len(row)} columns, expected {len(rows[0])}")
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: empty matrix file")
    return np.array(rows, dtype=np.float64)


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "fbin"):
            raise ConfigError(f"unknown matrix format {fmt!r}")
        return fmt
    return "fbin" if path.suffix.lower() == ".fbin" else "csv"


def load_matrix(path, fmt: str | None = None) -> np.ndarray:
    """Load a matrix from ``csv`` or ``fbin`` (inferred from the suffix by default)."""
    path = Path(path)
    fmt = _infer_format(path, fmt)
    try:
        if fmt == "fbin":
            return decode_fbin(path.read_bytes(), str(path))
        return _read_csv(path)
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc


def save_matrix(x: np.ndarray, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, fmt)
    x = np.asarray(x, dtype=np.float64)
    if fmt == "fbin":
        path.write_bytes(encode_fbin(x))
        return
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.atleast_2d(x):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_labels(path) -> np.ndarray:
    """Read one integer class index per line."""
    path = Path(path)
    out = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                token = line.strip()
                if not token:
                    continue
                try:
                    value = float(token)
                except ValueError:
                    raise DataError(f"{path}: line {lineno}: cannot parse label {token!r}") from None
                if not value.is_integer():
                    raise DataError(f"{path}: line {lineno}: label {token!r} is not an integer")
                out.append(int(value))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    if not out:
        raise DataError(f"{path}: no labels found")
    return np.array(out, dtype=np.int64)


def save_labels(labels, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in np.asarray(labels, dtype=np.int64).ravel():
            fh.write(f"{v}\n")
