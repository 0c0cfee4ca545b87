from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dollda.errors import ConfigError
from dollda.gpi import (GpiProblem, assemble_gpi, centering_matrix, factor_centering,
                        gershgorin_shift, gpi_iterate, init_a_eigen, polar_factor, recover_a,
                        update_e, update_g)


def random_stiefel(rng, n, k):
    q, _ = np.linalg.qr(rng.normal(size=(n, k)))
    return q


class TestCentering:
    def test_n2_multiply_back(self):
        f = factor_centering(2, 1e-6)
        np.testing.assert_allclose(centering_matrix(2), [[0.5, -0.5], [-0.5, 0.5]])
        np.testing.assert_allclose(f.h @ f.h.T, centering_matrix(2) + 1e-6 * np.eye(2),
                                   rtol=0, atol=1e-12)

    @pytest.mark.parametrize("n", [2, 5, 17])
    def test_ones_vector(self, n):
        f = factor_centering(n, 1e-3)
        np.testing.assert_allclose(f.h @ (f.h.T @ np.ones(n)), 1e-3 * np.ones(n), atol=1e-12)

    def test_zero_delta_rejected(self):
        with pytest.raises(ConfigError):
            factor_centering(4, 0.0)

    def test_single_sample_rejected(self):
        with pytest.raises(ConfigError):
            factor_centering(1, 1e-6)


class TestAssemble:
    def test_square_identity_case(self):
        n = 4
        f = factor_centering(n, 1e-6)
        hmat = centering_matrix(n)
        p = np.linalg.inv(f.h)  # P = X h = h when X = I
        prob = assemble_gpi(np.eye(n), f, np.zeros((n, n)), np.eye(n), np.zeros((n, 2)), 0.0, 0.0)
        np.testing.assert_allclose(prob.b, p @ hmat.T @ hmat @ p.T, atol=1e-10)
        np.testing.assert_array_equal(prob.b, prob.b.T)

    def test_gershgorin_diag(self):
        b = np.diag([1.0, 2.0])
        mu = gershgorin_shift(b)
        assert mu > 2
        assert np.linalg.eigvalsh(mu * np.eye(2) - b).min() > 0

    def test_random_symmetric(self, rng):
        x = rng.normal(size=(8, 12))
        f = factor_centering(12, 1e-6)
        m = rng.normal(size=(12, 12))
        prob = assemble_gpi(x, f, m + m.T, np.eye(8), rng.random((12, 3)), 1.0, 0.1)
        assert np.linalg.norm(prob.b - prob.b.T) / np.linalg.norm(prob.b) <= 1e-12

    def test_shape_mismatch(self, rng):
        f = factor_centering(5, 1e-6)
        with pytest.raises(ConfigError, match="inconsistent"):
            assemble_gpi(rng.normal(size=(3, 5)), f, np.zeros((5, 5)), np.eye(4),
                         np.zeros((5, 2)), 1.0, 0.1)


class TestIterate:
    def test_smallest_eigenvalue(self):
        prob = GpiProblem(np.diag([1.0, 2.0, 3.0]), np.zeros((3, 1)), gershgorin_shift(np.diag([1.0, 2.0, 3.0])))
        w0 = np.ones((3, 1)) / np.sqrt(3)
        w, trace = gpi_iterate(prob, w0, tol=0.0, max_iter=2000)
        assert trace[-1] == pytest.approx(1.0, abs=1e-9)

    def test_identity_b_gives_polar_factor(self, rng):
        c = rng.normal(size=(6, 2))
        prob = GpiProblem(np.eye(6), c, gershgorin_shift(np.eye(6)))
        w, _ = gpi_iterate(prob, random_stiefel(rng, 6, 2), tol=1e-15, max_iter=50)
        u, _, vt = np.linalg.svd(c, full_matrices=False)
        np.testing.assert_allclose(w, u @ vt, atol=1e-10)

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1))
    def test_trace_non_increasing(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 15))
        k = int(rng.integers(1, n + 1))
        b = rng.normal(size=(n, n))
        b = b + b.T
        prob = GpiProblem(b, rng.normal(size=(n, k)), gershgorin_shift(b))
        w, trace = gpi_iterate(prob, random_stiefel(rng, n, k), tol=1e-10, max_iter=200)
        assert np.all(np.diff(trace) <= 1e-10 * (1.0 + np.abs(trace[:-1])))
        assert np.linalg.norm(w.T @ w - np.eye(k)) <= 1e-8

    def test_rejects_non_orthonormal_start(self):
        prob = GpiProblem(np.eye(2), np.zeros((2, 1)), 2.0)
        with pytest.raises(ConfigError):
            gpi_iterate(prob, np.ones((2, 1)))

    def test_polar_factor_orthonormal(self, rng):
        q = polar_factor(rng.normal(size=(7, 3)))
        np.testing.assert_allclose(q.T @ q, np.eye(3), atol=1e-12)


class TestRecover:
    def test_square_invertible(self, rng):
        x = rng.normal(size=(5, 5))
        h = np.linalg.cholesky(centering_matrix(5) + 0.1 * np.eye(5))
        w = random_stiefel(rng, 5, 2)
        np.testing.assert_allclose(recover_a(w, x, h), np.linalg.solve((x @ h).T, w), atol=1e-10)

    def test_full_row_rank_residual(self, rng):
        x = rng.normal(size=(4, 9))
        f = factor_centering(9, 1e-6)
        p = x @ f.h
        # W must lie in range(P^T) for an exact solution
        w = p.T @ rng.normal(size=(4, 2))
        a = recover_a(w, x, f)
        assert np.linalg.norm(p.T @ a - w) <= 1e-8 * max(1.0, np.linalg.norm(w))

    def test_least_norm_when_wide(self, rng):
        x = rng.normal(size=(9, 4))
        f = factor_centering(4, 1e-6)
        p = x @ f.h
        w = rng.normal(size=(4, 2))
        a = recover_a(w, x, f)
        oracle = np.linalg.lstsq(p.T, w, rcond=None)[0]
        np.testing.assert_allclose(a, oracle, atol=1e-10)
        # adding a null-space component can only grow the norm
        null = np.linalg.svd(p.T)[2][4:].T
        assert np.linalg.norm(a + null @ rng.normal(size=(5, 2))) > np.linalg.norm(a)


class TestUpdateE:
    def test_exact_fit_gives_zero(self, rng):
        x, a = rng.normal(size=(3, 6)), rng.normal(size=(3, 2))
        np.testing.assert_allclose(update_e(x, a, x.T @ a), 0.0, atol=1e-12)

    def test_zero_projection_gives_column_means(self, rng):
        y = rng.random((6, 3))
        np.testing.assert_allclose(update_e(rng.normal(size=(4, 6)), np.zeros((4, 3)), y),
                                   y.mean(axis=0))

    def test_finite_difference_stationarity(self, rng):
        x, a, y = rng.normal(size=(4, 7)), rng.normal(size=(4, 3)), rng.random((7, 3))
        e = update_e(x, a, y)

        def loss(ev):
            r = x.T @ a + ev[None, :] - y
            return float(np.sum(r * r))

        h = 1e-6
        grad = np.array([(loss(e + h * d) - loss(e - h * d)) / (2 * h) for d in np.eye(3)])
        assert np.linalg.norm(grad) <= 1e-6 * max(1.0, loss(e))


class TestUpdateG:
    def test_zero_a(self):
        np.testing.assert_allclose(np.diag(update_g(np.zeros((4, 2)), 1e-8)), 4.0)

    def test_dominant_row_smallest_weight(self, rng):
        a = rng.normal(size=(5, 3)) * 0.1
        a[2] *= 100
        g = np.diag(update_g(a, 1e-8))
        assert np.argmin(g) == 2

    def test_rejects_nonpositive_epsilon(self):
        with pytest.raises(ConfigError):
            update_g(np.ones((2, 2)), 0.0)

    def test_reweighting_decreases_surrogate(self, rng):
        # min ||X^T A - Y||^2 + beta (sum_j sqrt(||a^j||^2 + eps))^2 by re-weighted ridge
        x, y = rng.normal(size=(6, 20)), rng.normal(size=(20, 2))
        beta, eps = 2.0, 1e-8

        def surrogate(a):
            r = x.T @ a - y
            return float(np.sum(r * r) + beta * np.sum(np.sqrt(np.sum(a * a, axis=1) + eps)) ** 2)

        a = np.linalg.lstsq(x.T, y, rcond=None)[0]
        values = [surrogate(a)]
        for _ in range(15):
            g = update_g(a, eps)
            a = np.linalg.solve(x @ x.T + beta * g, x @ y)
            values.append(surrogate(a))
        assert np.all(np.diff(values) <= 1e-9 * np.abs(values[:-1]))


class TestInitEigen:
    def test_identity_case(self, rng):
        x = random_stiefel(rng, 5, 5)
        hmat = centering_matrix(5) + 1e-6 * np.eye(5)
        a, phi = init_a_eigen(x, hmat, hmat, 0.0, 3)
        np.testing.assert_allclose(phi, 1.0, atol=1e-8)
        a2, _ = init_a_eigen(x, hmat, hmat, 0.0, 3)
        np.testing.assert_array_equal(a, a2)

    def test_residual_and_order(self, rng):
        x = rng.normal(size=(10, 20))
        m = rng.normal(size=(20, 20))
        m = m @ m.T / 20
        hmat = centering_matrix(20) + 1e-6 * np.eye(20)
        a, phi = init_a_eigen(x, m, hmat, 1.0, 4)
        lhs = x @ m @ x.T + np.eye(10)
        rhs = x @ hmat @ x.T
        assert np.linalg.norm(lhs @ a - rhs @ a @ np.diag(phi)) <= 1e-8 * np.linalg.norm(lhs)
        assert np.all(np.diff(phi) >= 0)
        np.testing.assert_allclose(a.T @ rhs @ a, np.eye(4), atol=1e-8)

    def test_singular_metric_uses_range(self, rng):
        # more features than samples: X H X^T is rank deficient
        x = rng.normal(size=(12, 6))
        hmat = centering_matrix(6) + 1e-6 * np.eye(6)
        a, phi = init_a_eigen(x, np.zeros((6, 6)), hmat, 1.0, 3)
        np.testing.assert_allclose(a.T @ x @ hmat @ x.T @ a, np.eye(3), atol=1e-6)

    def test_k_too_large(self, rng):
        with pytest.raises(ConfigError):
            init_a_eigen(rng.normal(size=(3, 5)), np.eye(5), np.eye(5), 1.0, 4)
