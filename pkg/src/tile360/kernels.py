"""Hot numeric kernels: cyclic dual projection onto an intersection of halfspaces.

The projected-gradient solver spends nearly all its time projecting iterates
onto {x : A x <= b} with A in CSR form (variable bounds are encoded as extra
single-entry rows).  The kernel is compiled with numba when available; setting
the environment variable ``TILE360_DISABLE_NUMBA=1`` (or a missing numba
install) selects a pure-Python/numpy implementation of the same algorithm.
``benchmarks/bench_kernels.py`` compares the two paths.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["project_halfspaces", "BACKEND"]


def _project_halfspaces_py(x, indptr, indices, data, b, norm2, lam, max_sweeps, tol):
    """Hildreth's method: coordinate ascent on the projection dual.

    Maintains z = x - A^T lam with lam >= 0; each pass updates every row's
    scalar multiplier in place.  Returns (z, sweeps_used, max_violation).
    """
    z = x.copy()
    n_rows = b.shape[0]
    # apply warm-started duals
    for r in range(n_rows):
        if lam[r] != 0.0:
            for k in range(indptr[r], indptr[r + 1]):
                z[indices[k]] -= lam[r] * data[k]
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_step = 0.0
        for r in range(n_rows):
            ax = 0.0
            for k in range(indptr[r], indptr[r + 1]):
                ax += data[k] * z[indices[k]]
            new_lam = lam[r] - (b[r] - ax) / norm2[r]
            if new_lam < 0.0:
                new_lam = 0.0
            dl = new_lam - lam[r]
            if dl != 0.0:
                for k in range(indptr[r], indptr[r + 1]):
                    z[indices[k]] -= dl * data[k]
                lam[r] = new_lam
                step = abs(dl) * np.sqrt(norm2[r])
                if step > max_step:
                    max_step = step
        if max_step < tol:
            break
    max_viol = 0.0
    for r in range(n_rows):
        ax = 0.0
        for k in range(indptr[r], indptr[r + 1]):
            ax += data[k] * z[indices[k]]
        v = ax - b[r]
        if v > max_viol:
            max_viol = v
    return z, sweeps, max_viol


_DISABLE = os.environ.get("TILE360_DISABLE_NUMBA", "") not in ("", "0")

if not _DISABLE:
    try:
        from numba import njit

        _project_halfspaces_nb = njit(cache=True)(_project_halfspaces_py)
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - exercised via env flag instead
        BACKEND = "numpy"
else:
    BACKEND = "numpy"


def project_halfspaces(x, indptr, indices, data, b, norm2, lam=None,
                       max_sweeps=20000, tol=1e-11):
    """Euclidean projection of x onto {z : A z <= b}, A given in CSR form.

    ``lam`` carries warm-started dual multipliers between calls (mutated in
    place when provided).  Returns (z, lam, sweeps, max_violation).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if lam is None:
        lam = np.zeros(b.shape[0])
    if BACKEND == "numba":
        z, sweeps, viol = _project_halfspaces_nb(
            x, indptr, indices, data, b, norm2, lam, max_sweeps, tol
        )
    else:
        z, sweeps, viol = _project_halfspaces_py(
            x, indptr, indices, data, b, norm2, lam, max_sweeps, tol
        )
    return z, lam, sweeps, viol
