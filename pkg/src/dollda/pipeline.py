"""Outer optimisation loop: M* refresh, bias, projection and label updates.

The five variants share one loop.  JDA and CDDA_PLUS re-solve the
generalized eigenproblem each iteration and label the target with 1-NN in
the projected space; OLR, JOLR_DA and DOLL_DA run the label-regression
updates (e, then A by re-weighted power iteration, then soft target labels).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .classify import BaseClassifier, nn_classify
from .config import ALIGNING_VARIANTS, REGRESSING_VARIANTS, SolverConfig
from .data import (DaDataset, Normalizer, embed_labels, fit_normalizer,
                   hard_labels, load_matrix, save_matrix)
from .errors import ConfigError, DataError, NumericalError
from .gpi import (PINV_RCOND, GpiProblem, assemble_gpi, factor_centering, gershgorin_shift,
                  gpi_iterate, init_a_eigen, polar_factor, update_e, update_g)
from .mmd import assemble_m_star, build_assembly

Monitor = Callable[[str, dict], None]

# kernel spectrum below this fraction of the top eigenvalue is discarded
KERNEL_RCOND = 1e-4


# -- label update ------------------------------------------------------------

def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``v`` onto the probability simplex."""
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    m = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, m + 1)
    cond = u - css / ind > 0
    rho = m - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(v.shape[0]), rho] / (rho + 1)
    return np.maximum(v - theta[:, None], 0.0)


def update_y_target(x, a, e, class_count: int, y, n_source: int) -> np.ndarray:
    """Replace target rows of ``y`` by the simplex projection of ``A^T x_i + e``.

    Only the first ``class_count`` entries are projected; padding stays 0 and
    source rows are returned untouched.
    """
    y = np.array(y, dtype=np.float64, copy=True)
    r = (a.T @ x[:, n_source:]).T + e
    y[n_source:, :] = 0.0
    y[n_source:, :class_count] = project_simplex(r[:, :class_count])
    return y


# -- objective ---------------------------------------------------------------

def l21_norm(a: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(a, axis=1)))


def objective_value(x, a, e, y, m_star, alpha: float, beta: float) -> float:
    """Exact model objective with the true (unsmoothed) squared l2,1 norm."""
    z = a.T @ x
    resid = z.T + e[None, :] - y
    return float(np.sum(z * (z @ m_star)) + alpha * np.sum(a * a)
                 + beta * l21_norm(a) ** 2 + np.sum(resid * resid))


def smoothed_objective(x, a, e, y, m_star, alpha, beta, epsilon) -> float:
    z = a.T @ x
    resid = z.T + e[None, :] - y
    l21 = np.sum(np.sqrt(np.sum(a * a, axis=1) + epsilon))
    return float(np.sum(z * (z @ m_star)) + alpha * np.sum(a * a)
                 + beta * l21 ** 2 + np.sum(resid * resid))


def smoothed_gradient(x, a, e, y, m_star, alpha, beta, epsilon) -> np.ndarray:
    """Gradient in ``A`` of :func:`smoothed_objective` for symmetric ``M*``."""
    g = np.diag(update_g(a, epsilon))[:, None]
    resid = x.T @ a + e[None, :] - y
    return 2.0 * (x @ m_star @ x.T @ a + alpha * a + beta * g * a + x @ resid)


# -- kernels -----------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ConfigError(f"unknown kernel {self.kind!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError(f"kernel bandwidth must be > 0, got {self.bandwidth}")


def median_bandwidth(x: np.ndarray) -> float:
    d = pdist(np.asarray(x).T)
    sigma = float(np.median(d)) if d.size else 0.0
    return sigma if sigma > 0 else 1.0


def kernel_gram(x, spec: KernelSpec, y=None) -> np.ndarray:
    """Gram matrix between the columns of ``x`` (and ``y`` if given)."""
    x = np.asarray(x, dtype=np.float64)
    y = x if y is None else np.asarray(y, dtype=np.float64)
    if spec.kind == "linear":
        return x.T @ y
    sigma = spec.bandwidth if spec.bandwidth is not None else median_bandwidth(x)
    k = np.exp(-cdist(x.T, y.T, "sqeuclidean") / (2.0 * sigma * sigma))
    if y is x:
        k = (k + k.T) / 2.0
        np.fill_diagonal(k, 1.0)
    return k


def kernel_feature_map(gram: np.ndarray, rcond: float | None = None
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Truncated empirical feature map of a PSD gram matrix.

    Returns ``(phi, coef)`` with ``phi = L^{1/2} U^T`` (r x n) over the
    eigenpairs whose eigenvalue is at least ``rcond * max eigenvalue``, and
    ``coef = U L^{-1/2}`` (n x r).  For coefficients ``A = coef @ A_phi`` one
    has ``K A = phi^T A_phi`` exactly, so every quadratic form in ``K A``
    carries over to ``phi``.
    """
    rcond = KERNEL_RCOND if rcond is None else rcond
    lam, u = np.linalg.eigh(gram)
    keep = lam > rcond * max(lam[-1], 0.0)
    if not keep.any():
        raise NumericalError("kernel matrix has no positive eigenvalues")
    lam, u = lam[keep][::-1], u[:, keep][:, ::-1]
    root = np.sqrt(lam)
    return root[:, None] * u.T, u / root


def check_gram(k: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise DataError(f"kernel matrix must be square, got shape {k.shape}")
    asym = float(np.max(np.abs(k - k.T))) if k.size else 0.0
    if asym > tol:
        raise DataError(f"kernel matrix is not symmetric (max asymmetry {asym:.3g})")
    return k


# -- result ------------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    """Output of one fit.

    ``a`` is l x k (n x k in kernel mode), ``y`` the n x k embedded labels.
    ``label_trace`` holds the target labels after each outer iteration.
    """

    a: np.ndarray
    e: np.ndarray
    y: np.ndarray
    target_labels: np.ndarray
    objective_trace: list
    iterations_run: int
    skipped_classes_log: list
    label_trace: list
    config: SolverConfig
    class_count: int
    n_source: int
    source_labels: np.ndarray
    features: np.ndarray
    normalizer: Normalizer = field(default_factory=lambda: Normalizer("none"))
    train_x: np.ndarray | None = None
    bandwidth: float | None = None

    def embed(self, x_new: np.ndarray) -> np.ndarray:
        """Project new raw samples (columns) into the learned subspace."""
        x_new = self.normalizer.apply(np.asarray(x_new, dtype=np.float64))
        if self.config.kernel != "none":
            x_new = kernel_gram(self.train_x, KernelSpec(self.config.kernel, self.bandwidth), x_new)
        return self.a.T @ x_new

    def predict(self, x_new: np.ndarray) -> np.ndarray:
        """Labels for unseen target samples using the variant's own predictor."""
        z = self.embed(x_new)
        if self.config.variant in REGRESSING_VARIANTS:
            r = z.T + self.e[None, :]
            return hard_labels(r, self.class_count)
        source = self.a.T @ self.features[:, : self.n_source]
        return nn_classify(source, self.source_labels, z)

    # serialization: scalars in result.json, matrices as fbin side files
    def to_json_dict(self) -> dict:
        return {
            "variant": self.config.variant,
            "config": self.config.to_dict(),
            "class_count": self.class_count,
            "n_source": self.n_source,
            "iterations_run": self.iterations_run,
            "objective_trace": [float(v) for v in self.objective_trace],
            "target_labels": [int(v) for v in self.target_labels],
            "label_trace": [[int(v) for v in ls] for ls in self.label_trace],
            "skipped_classes_log": [sorted(int(c) for c in s) for s in self.skipped_classes_log],
            "source_labels": [int(v) for v in self.source_labels],
            "normalize": self.normalizer.mode,
            "bandwidth": self.bandwidth,
            "a": "a.fbin",
            "e": "e.fbin",
            "y": "y.fbin",
            "features": "features.fbin",
            "normalizer_mean": "normalizer_mean.fbin" if self.normalizer.mean is not None else None,
            "normalizer_scale": "normalizer_scale.fbin" if self.normalizer.scale is not None else None,
            "train_x": "train_x.fbin" if self.train_x is not None else None,
        }

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        doc = self.to_json_dict()
        save_matrix(self.a, out / "a.fbin")
        save_matrix(self.e[None, :], out / "e.fbin")
        save_matrix(self.y, out / "y.fbin")
        save_matrix(self.features, out / "features.fbin")
        if self.normalizer.mean is not None:
            save_matrix(self.normalizer.mean[None, :], out / "normalizer_mean.fbin")
            save_matrix(self.normalizer.scale[None, :], out / "normalizer_scale.fbin")
        if self.train_x is not None:
            save_matrix(self.train_x, out / "train_x.fbin")
        path = out / "result.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, out_dir) -> "FitResult":
        out = Path(out_dir)
        try:
            doc = json.loads((out / "result.json").read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read fit result in {out}: {exc}") from exc
        mode = doc["normalize"]
        if doc.get("normalizer_mean"):
            normalizer = Normalizer(mode, load_matrix(out / doc["normalizer_mean"])[0],
                                    load_matrix(out / doc["normalizer_scale"])[0])
        else:
            normalizer = Normalizer(mode)
        return cls(
            a=load_matrix(out / doc["a"]),
            e=load_matrix(out / doc["e"])[0],
            y=load_matrix(out / doc["y"]),
            target_labels=np.array(doc["target_labels"], dtype=np.int64),
            objective_trace=list(doc["objective_trace"]),
            iterations_run=doc["iterations_run"],
            skipped_classes_log=[frozenset(s) for s in doc["skipped_classes_log"]],
            label_trace=[np.array(ls, dtype=np.int64) for ls in doc["label_trace"]],
            config=SolverConfig.from_dict(doc["config"]),
            class_count=doc["class_count"],
            n_source=doc["n_source"],
            source_labels=np.array(doc["source_labels"], dtype=np.int64),
            features=load_matrix(out / doc["features"]),
            normalizer=normalizer,
            train_x=load_matrix(out / doc["train_x"]) if doc.get("train_x") else None,
            bandwidth=doc.get("bandwidth"),
        )


# -- driver ------------------------------------------------------------------

def initial_labels(x: np.ndarray, dataset: DaDataset, config: SolverConfig) -> np.ndarray:
    """Starting target pseudo-labels: 1-NN from the source, or uniform random."""
    if config.init_labels == "random":
        rng = np.random.default_rng(config.seed)
        return rng.integers(1, dataset.class_count + 1, size=dataset.n_target).astype(np.int64)
    n_s = dataset.n_source
    return nn_classify(x[:, :n_s], dataset.source_labels, x[:, n_s:]).astype(np.int64)


class _Projector:
    """Caches the SVD of ``P = F h`` used by every power-iteration step."""

    def __init__(self, features: np.ndarray, h: np.ndarray):
        p = features @ h
        u, s, vt = np.linalg.svd(p, full_matrices=False)
        keep = s > PINV_RCOND * s[0]
        self.rank = int(keep.sum())
        self.basis = vt[keep].T  # orthonormal basis of range(P^T)
        self.p = p
        self.p_pinv = (vt[keep].T / s[keep]) @ u[:, keep].T

    def stiefel_start(self, a: np.ndarray) -> np.ndarray:
        """Orthonormal ``W`` in range(P^T) closest to ``P^T A``."""
        z = self.basis.T @ (self.p.T @ a)
        return self.basis @ polar_factor(z)

    def recover(self, w: np.ndarray) -> np.ndarray:
        return self.p_pinv.T @ w

    def restrict(self, problem: GpiProblem) -> GpiProblem:
        """The same problem in range(P^T) coordinates.

        Iterating in the full space lets round-off outside the range grow by
        ``mu / (mu - lambda)`` per step, which breaks the constraint on ``A``.
        """
        b = self.basis.T @ problem.b @ self.basis
        b = (b + b.T) / 2.0
        return GpiProblem(b, self.basis.T @ problem.c, gershgorin_shift(b))


def _ridge_init(features, y, alpha, beta):
    fc = features - features.mean(axis=1, keepdims=True)
    d = features.shape[0]
    lhs = fc @ fc.T + (alpha + beta) * np.eye(d)
    return np.linalg.solve(lhs, fc @ y)


def _run(features: np.ndarray, dataset: DaDataset, config: SolverConfig,
         labels0: np.ndarray, monitor: Monitor | None,
         classifier: BaseClassifier) -> dict:
    variant = config.variant
    C = dataset.class_count
    n_s, n_t = dataset.n_source, dataset.n_target
    n = n_s + n_t
    d = features.shape[0]
    k = config.k
    if k < C:
        raise ConfigError(f"subspace dimension k={k} must be >= class count C={C}")
    if k > min(d, n):
        raise ConfigError(f"subspace dimension k={k} exceeds the usable dimension min(l={d}, n={n})")
    ys = dataset.source_labels
    emit = monitor or (lambda event, info: None)

    factor = factor_centering(n, config.centering_delta)
    h_shift = factor.h @ factor.h.T
    y = embed_labels(np.concatenate([ys, labels0]), C, k)
    source_rows = y[:n_s].copy()
    pseudo = labels0

    regressing = variant in REGRESSING_VARIANTS
    if variant in ALIGNING_VARIANTS:
        m_star = build_assembly(ys, None, C, n_target=n_t).m0
        a, _ = init_a_eigen(features, m_star, h_shift, config.alpha, k)
    else:
        m_star = np.zeros((n, n))
        a = _ridge_init(features, y, config.alpha, config.beta)

    proj = None
    if regressing:
        proj = _Projector(features, factor.h)
        if proj.rank < k:
            raise ConfigError(f"k={k} exceeds the rank {proj.rank} of the constraint metric")
        a = proj.recover(proj.stiefel_start(a))
    e = update_e(features, a, y)
    emit("init", {"a": a, "y": y, "e": e, "labels": pseudo})

    objective_trace, label_trace, skipped_log = [], [], []
    for t in range(config.outer_iters):
        assembly = build_assembly(ys, pseudo, C)
        m_star = assemble_m_star(assembly, variant)
        skipped_log.append(assembly.skipped_classes)

        if regressing:
            e = update_e(features, a, y)
            g = np.eye(d)
            for t1 in range(config.inner_iters):
                problem = assemble_gpi(features, factor.h, m_star, g, y,
                                       config.alpha, config.beta, p_pinv=proj.p_pinv)
                w, gpi_trace = gpi_iterate(proj.restrict(problem),
                                           proj.basis.T @ proj.stiefel_start(a),
                                           config.gpi_tol, config.gpi_max_iter)
                w = proj.basis @ w
                a = proj.recover(w)
                g = update_g(a, config.epsilon)
                emit("inner", {"t": t, "t1": t1, "a": a, "w": w, "gpi_trace": gpi_trace})
            e = update_e(features, a, y)
            y = update_y_target(features, a, e, C, y, n_s)
            new = hard_labels(y[n_s:], C)
        else:
            a, _ = init_a_eigen(features, m_star, h_shift, config.alpha, k)
            z = a.T @ features
            new = np.asarray(classifier(z[:, :n_s], ys, z[:, n_s:]), dtype=np.int64)
            y = embed_labels(np.concatenate([ys, new]), C, k)
            e = update_e(features, a, y)
            emit("inner", {"t": t, "t1": 0, "a": a})

        if not np.array_equal(y[:n_s], source_rows):
            raise NumericalError(f"source label rows changed at outer iteration {t}")
        obj = objective_value(features, a, e, y, m_star, config.alpha, config.beta)
        if not np.isfinite(obj):
            raise NumericalError(f"objective became non-finite at outer iteration {t}")
        objective_trace.append(obj)
        label_trace.append(new)
        emit("outer", {"t": t, "a": a, "e": e, "y": y, "labels": new, "objective": obj})
        converged = np.array_equal(new, pseudo)
        pseudo = new
        if converged:
            break

    return dict(a=a, e=e, y=y, target_labels=pseudo, objective_trace=objective_trace,
                iterations_run=len(objective_trace), skipped_classes_log=skipped_log,
                label_trace=label_trace)


def _run_gram(gram, dataset, config, labels0, monitor, classifier) -> dict:
    # solve in the empirical feature space, then map A back to kernel coefficients;
    # monitor callbacks see the feature-space quantities
    phi, coef = kernel_feature_map(gram)
    out = _run(phi, dataset, config, labels0, monitor, classifier)
    out["a"] = coef @ out["a"]
    return out


def fit(dataset: DaDataset, config: SolverConfig, monitor: Monitor | None = None,
        classifier: BaseClassifier = nn_classify) -> FitResult:
    """Run the domain-adaptation solver on packed source/target data.

    ``monitor`` receives ``(event, info)`` callbacks for ``init``, ``inner``
    and ``outer`` steps.  ``classifier`` is the base predictor used by the
    JDA and CDDA_PLUS variants.
    """
    if config.kernel != "none":
        return fit_kernel(dataset, config, monitor, classifier)
    normalizer = fit_normalizer(dataset.x, config.normalize)
    x = normalizer.apply(dataset.x)
    labels0 = initial_labels(x, dataset, config)
    out = _run(x, dataset, config, labels0, monitor, classifier)
    return FitResult(config=config, class_count=dataset.class_count, n_source=dataset.n_source,
                     source_labels=dataset.source_labels, features=x, normalizer=normalizer, **out)


def fit_kernel(dataset: DaDataset, config: SolverConfig, monitor: Monitor | None = None,
               classifier: BaseClassifier = nn_classify) -> FitResult:
    """Kernelised solver: projections are ``A^T K`` with ``A`` an n x k coefficient matrix.

    The loop runs on the truncated feature map of ``K`` (see
    :func:`kernel_feature_map`), so the ridge and sparsity penalties act on
    the feature-space projection rather than on the raw coefficients.
    """
    if config.kernel == "none":
        raise ConfigError("fit_kernel requires config.kernel to be 'linear' or 'rbf'")
    normalizer = fit_normalizer(dataset.x, config.normalize)
    x = normalizer.apply(dataset.x)
    bandwidth = None
    if config.kernel == "rbf":
        bandwidth = config.bandwidth if config.bandwidth is not None else median_bandwidth(x)
    gram = check_gram(kernel_gram(x, KernelSpec(config.kernel, bandwidth)))
    labels0 = initial_labels(x, dataset, config)
    out = _run_gram(gram, dataset, config, labels0, monitor, classifier)
    return FitResult(config=config, class_count=dataset.class_count, n_source=dataset.n_source,
                     source_labels=dataset.source_labels, features=gram, normalizer=normalizer,
                     train_x=x, bandwidth=bandwidth, **out)


def fit_gram(gram: np.ndarray, dataset: DaDataset, config: SolverConfig,
             monitor: Monitor | None = None,
             classifier: BaseClassifier = nn_classify) -> FitResult:
    """Solver on a caller-supplied symmetric gram matrix over the packed samples.

    Initial 1-NN pseudo-labels are taken in the raw space of ``dataset.x``.
    """
    gram = check_gram(gram)
    if gram.shape[0] != dataset.x.shape[1]:
        raise DataError(f"gram matrix is {gram.shape[0]}x{gram.shape[0]} for {dataset.x.shape[1]} samples")
    labels0 = initial_labels(dataset.x, dataset, config)
    out = _run_gram(gram, dataset, config, labels0, monitor, classifier)
    return FitResult(config=config, class_count=dataset.class_count, n_source=dataset.n_source,
                     source_labels=dataset.source_labels, features=gram, **out)
