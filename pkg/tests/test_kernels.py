import numpy as np
import pytest
from scipy.sparse import csr_matrix

import tile360.kernels as kernels
from tile360.kernels import project_halfspaces


def random_problem(seed, n_vars=12, n_rows=18):
    """Random consistent system A z <= b with a strictly feasible point."""
    rng = np.random.default_rng(seed)
    dense = rng.normal(size=(n_rows, n_vars))
    dense[rng.uniform(size=dense.shape) < 0.5] = 0.0
    keep = np.abs(dense).sum(axis=1) > 0
    dense = dense[keep]
    interior = rng.normal(size=n_vars)
    b = dense @ interior + rng.uniform(0.1, 1.0, size=dense.shape[0])
    a = csr_matrix(dense)
    norm2 = np.asarray(a.multiply(a).sum(axis=1)).ravel()
    return dense, a, b, norm2


def project(a, b, norm2, x, lam=None):
    return project_halfspaces(x, a.indptr, a.indices, a.data, b, norm2, lam=lam)


class TestProjection:
    def test_feasible_point_unchanged(self):
        dense, a, b, norm2 = random_problem(0)
        x = np.zeros(dense.shape[1])
        shift = dense @ x - b
        x_in = x - 0.0  # origin may violate; construct interior instead
        rng = np.random.default_rng(1)
        interior = rng.normal(size=dense.shape[1])
        b2 = dense @ interior + 0.5
        z, _lam, _s, viol = project(a, b2, norm2, interior)
        assert viol <= 1e-9
        np.testing.assert_allclose(z, interior, atol=1e-9)
        assert shift.shape == b.shape  # silence unused warnings

    def test_kkt_conditions(self):
        for seed in range(5):
            dense, a, b, norm2 = random_problem(seed)
            rng = np.random.default_rng(100 + seed)
            x = rng.normal(scale=3.0, size=dense.shape[1])
            z, lam, _sweeps, viol = project(a, b, norm2, x)
            # primal feasibility
            assert viol <= 1e-8
            # dual feasibility
            assert (lam >= 0).all()
            # stationarity: z = x - A^T lam
            np.testing.assert_allclose(z, x - dense.T @ lam, atol=1e-8)
            # complementary slackness
            slack = b - dense @ z
            assert float(np.abs(lam * slack).max()) <= 1e-6

    def test_projection_shrinks_distance(self):
        dense, a, b, norm2 = random_problem(3)
        rng = np.random.default_rng(9)
        x = rng.normal(scale=3.0, size=dense.shape[1])
        z, _lam, _s, _v = project(a, b, norm2, x)
        # any feasible point is no closer to x than the projection
        interior = np.linalg.lstsq(dense, b - 0.5, rcond=None)[0]
        if (dense @ interior <= b + 1e-9).all():
            assert np.linalg.norm(x - z) <= np.linalg.norm(x - interior) + 1e-8

    def test_warm_start_agrees(self):
        dense, a, b, norm2 = random_problem(4)
        rng = np.random.default_rng(11)
        x = rng.normal(scale=2.0, size=dense.shape[1])
        z_cold, lam, _s, _v = project(a, b, norm2, x)
        z_warm, _lam2, sweeps, _v2 = project(a, b, norm2, x, lam=lam.copy())
        np.testing.assert_allclose(z_warm, z_cold, atol=1e-8)
        assert sweeps <= 3  # warm duals should converge almost immediately

    def test_python_fallback_matches_active_backend(self):
        dense, a, b, norm2 = random_problem(6)
        rng = np.random.default_rng(13)
        x = rng.normal(scale=3.0, size=dense.shape[1])
        z, _lam, _s, _v = project(a, b, norm2, x)
        lam_py = np.zeros(b.shape[0])
        z_py, _sweeps, _viol = kernels._project_halfspaces_py(
            np.ascontiguousarray(x), a.indptr, a.indices, a.data, b, norm2,
            lam_py, 20000, 1e-11)
        np.testing.assert_allclose(z, z_py, atol=1e-10)

    def test_backend_reported(self):
        assert kernels.BACKEND in ("numba", "numpy")
