"""Inner numerical kernels: eigen initialisation, generalized power iteration
on the Stiefel manifold, and the closed-form ``e`` / ``G`` updates.

The orthogonality constraint ``A^T X H X^T A = I`` is handled through the
change of variable ``W = h^T X^T A`` where ``h h^T = H + delta I``.  The
centering matrix itself is singular, hence the ``delta`` shift.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericalError

PINV_RCOND = 1e-10


def centering_matrix(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


@dataclass(frozen=True)
class CenteringFactor:
    h: np.ndarray
    delta: float

    @property
    def n(self) -> int:
        return self.h.shape[0]


def factor_centering(n: int, delta: float) -> CenteringFactor:
    """Lower-triangular ``h`` with ``h h^T = H + delta I``."""
    if n < 2:
        raise ConfigError(f"centering factorization needs n >= 2, got {n}")
    if not delta > 0:
        raise ConfigError(f"centering delta must be > 0 (H is singular), got {delta}")
    try:
        h = scipy.linalg.cholesky(centering_matrix(n) + delta * np.eye(n), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization of H + {delta}I failed: {exc}") from exc
    return CenteringFactor(h, float(delta))


def pinv(p: np.ndarray, rcond: float = PINV_RCOND) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with a relative singular-value cutoff."""
    return np.linalg.pinv(p, rcond=rcond)


@dataclass(frozen=True)
class GpiProblem:
    """``min tr(W^T B W - 2 W^T C)`` subject to ``W^T W = I``."""

    b: np.ndarray
    c: np.ndarray
    mu: float

    @property
    def b_prime(self) -> np.ndarray:
        return self.mu * np.eye(self.b.shape[0]) - self.b

    def objective(self, w: np.ndarray) -> float:
        return float(np.sum(w * (self.b @ w)) - 2.0 * np.sum(w * self.c))


def gershgorin_shift(b: np.ndarray) -> float:
    bound = float(np.max(np.sum(np.abs(b), axis=1)))
    return bound + 1e-6 * (1.0 + bound)


def _require_finite(name: str, m: np.ndarray) -> None:
    if not np.all(np.isfinite(m)):
        raise NumericalError(f"matrix {name} has non-finite entries")


def assemble_gpi(x, h, m_star, g, y, alpha: float, beta: float,
                 p_pinv: np.ndarray | None = None) -> GpiProblem:
    """Build the Stiefel least-squares problem for one A-update.

    With ``P = X h`` the quadratic form is ``B = P^+ Q (P^+)^T`` where
    ``Q = X H X^T + beta G + alpha I + X M* X^T``, and the linear term is
    ``C = P^+ X H Y``.  ``p_pinv`` may carry a cached ``P^+``.
    """
    x = np.asarray(x, dtype=np.float64)
    h = h.h if isinstance(h, CenteringFactor) else np.asarray(h)
    l, n = x.shape
    if h.shape != (n, n) or m_star.shape != (n, n) or y.shape[0] != n or g.shape != (l, l):
        raise ConfigError(
            f"inconsistent shapes: x {x.shape}, h {h.shape}, M* {m_star.shape}, "
            f"G {g.shape}, Y {y.shape}")
    if p_pinv is None:
        p_pinv = pinv(x @ h)
    xc = x - x.mean(axis=1, keepdims=True)
    q = xc @ xc.T + beta * g + alpha * np.eye(l) + x @ m_star @ x.T
    _require_finite("Q", q)
    b = p_pinv @ q @ p_pinv.T
    b = (b + b.T) / 2.0
    c = p_pinv @ (xc @ y)
    _require_finite("B", b)
    _require_finite("C", c)
    return GpiProblem(b, c, gershgorin_shift(b))


def polar_factor(z: np.ndarray) -> np.ndarray:
    """``U V^T`` from the thin SVD of ``z``; retries once on a perturbed copy."""
    try:
        u, _, vt = np.linalg.svd(z, full_matrices=False)
    except np.linalg.LinAlgError:
        rng = np.random.default_rng(0)
        z = z + 1e-12 * np.linalg.norm(z) * rng.standard_normal(z.shape)
        try:
            u, _, vt = np.linalg.svd(z, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"SVD of the power-iteration matrix failed: {exc}") from exc
    return u @ vt


def gpi_iterate(problem: GpiProblem, w0: np.ndarray, tol: float = 1e-6,
                max_iter: int = 100) -> tuple[np.ndarray, list[float]]:
    """Generalized power iteration ``W <- polar(2 B' W + 2 C)``.

    Returns the final ``W`` and the objective values, starting with ``f(w0)``.
    The trace is non-increasing because ``B' = mu I - B`` is positive definite.
    """
    w = np.asarray(w0, dtype=np.float64)
    k = w.shape[1]
    if np.linalg.norm(w.T @ w - np.eye(k)) > 1e-8:
        raise ConfigError("initial W must have orthonormal columns")
    b_prime = problem.b_prime
    f = problem.objective(w)
    trace = [f]
    for _ in range(max_iter):
        w = polar_factor(2.0 * (b_prime @ w) + 2.0 * problem.c)
        f_new = problem.objective(w)
        trace.append(f_new)
        change = abs(f - f_new)
        f = f_new
        if change <= tol * max(abs(trace[-2]), abs(f_new)):
            break
    return w, trace


def recover_a(w: np.ndarray, x: np.ndarray, h, p_pinv: np.ndarray | None = None) -> np.ndarray:
    """Minimum-norm ``A`` with ``(X h)^T A = W``."""
    if p_pinv is None:
        h = h.h if isinstance(h, CenteringFactor) else np.asarray(h)
        p_pinv = pinv(np.asarray(x) @ h)
    return p_pinv.T @ w


def update_e(x: np.ndarray, a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact minimiser of ``||X^T A + 1 e^T - Y||_F^2`` over the bias ``e``."""
    n = x.shape[1]
    return (y.sum(axis=0) - a.T @ x.sum(axis=1)) / n


def update_g(a: np.ndarray, epsilon: float) -> np.ndarray:
    """Diagonal re-weighting for the smoothed squared l2,1 norm of ``A``'s rows.

    ``g_jj = sum_i sqrt(||a^i||^2 + eps) / sqrt(||a^j||^2 + eps)``, so that
    ``2 G A`` is the gradient of ``(sum_j sqrt(||a^j||^2 + eps))^2``.
    """
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    r = np.sqrt(np.sum(a * a, axis=1) + epsilon)
    return np.diag(r.sum() / r)


def _fix_signs(v: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def init_a_eigen(x: np.ndarray, m: np.ndarray, h_mat: np.ndarray, alpha: float,
                 k: int) -> tuple[np.ndarray, np.ndarray]:
    """``k`` smallest generalized eigenpairs of ``(X M X^T + alpha I) A = X H X^T A Phi``.

    Returns ``(A, phi)`` with ``phi`` ascending and ``A^T X H X^T A = I``.
    When ``X H X^T`` is singular the problem is solved on its range.
    """
    x = np.asarray(x, dtype=np.float64)
    l = x.shape[0]
    if k > l:
        raise ConfigError(f"k={k} exceeds the feature dimension {l}")
    lhs = x @ m @ x.T + alpha * np.eye(l)
    rhs = x @ h_mat @ x.T
    lhs = (lhs + lhs.T) / 2.0
    rhs = (rhs + rhs.T) / 2.0
    if not (np.all(np.isfinite(lhs)) and np.all(np.isfinite(rhs))):
        raise NumericalError("eigen-initialisation matrices have non-finite entries")
    try:
        phi, vecs = scipy.linalg.eigh(lhs, rhs, subset_by_index=[0, k - 1])
    except (np.linalg.LinAlgError, ValueError):
        phi, vecs = _eigh_on_range(lhs, rhs, k)
    return _fix_signs(vecs), phi


def _eigh_on_range(lhs: np.ndarray, rhs: np.ndarray, k: int):
    lam, v = np.linalg.eigh(rhs)
    keep = lam > PINV_RCOND * max(lam.max(), 0.0)
    if keep.sum() < k:
        raise NumericalError(
            f"constraint matrix has rank {int(keep.sum())}, fewer than k={k} directions")
    t = v[:, keep] / np.sqrt(lam[keep])
    reduced = t.T @ lhs @ t
    try:
        phi, u = np.linalg.eigh((reduced + reduced.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigen-initialisation failed: {exc}") from exc
    return phi[:k], t @ u[:, :k]
