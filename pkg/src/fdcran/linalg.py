"""Hermitian linear algebra helpers shared by the rate and solver code.

Log-determinants are base 2 and always evaluated on ``M + JITTER*I`` so that
exactly singular conditioning terms (zero noise blocks, rank-deficient
covariance sums) stay evaluable without materially moving any value.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

# Jitter added inside every log-det (see module docstring).
JITTER = 1e-10
_LN2 = np.log(2.0)


def is_hermitian(m: np.ndarray, tol: float = 1e-8) -> bool:
    return bool(np.all(np.abs(m - m.conj().T) <= tol * (1.0 + np.abs(m)).max()))


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def logdet2(m: np.ndarray, jitter: float = JITTER) -> float:
    """log2 det(M + jitter*I) via Cholesky.

    Raises ValueError for non-Hermitian input or if the jittered matrix is
    not positive definite.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("logdet2 expects a square matrix")
    if not is_hermitian(m):
        raise ValueError("logdet2 expects a Hermitian matrix")
    a = hermitize(m) + jitter * np.eye(m.shape[0])
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError("matrix is not positive definite after jitter") from exc
    return float(2.0 * np.sum(np.log(np.abs(np.diag(chol)))) / _LN2)


def _chol_logdet2(a: np.ndarray) -> float:
    """log2 det of an already-jittered Hermitian PD matrix (no checks)."""
    chol = np.linalg.cholesky(a)
    return float(2.0 * np.sum(np.log(np.real(np.diag(chol)))) / _LN2)


def real_embedding(m: np.ndarray) -> np.ndarray:
    """[[Re, -Im], [Im, Re]] real-symmetric embedding of a Hermitian matrix.

    For PD input, logdet2(embedding) == 2 * logdet2(m); used as a cross-check.
    """
    re, im = np.real(m), np.imag(m)
    return np.block([[re, -im], [im, re]])


def project_psd(m: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm, eigenvalues clipped at floor."""
    m = np.asarray(m)
    if not is_hermitian(m, tol=1e-6):
        raise ValueError("project_psd expects a Hermitian matrix")
    w, v = np.linalg.eigh(hermitize(m))
    w = np.maximum(w, floor)
    return hermitize((v * w) @ v.conj().T)


# -- real parameterization of Hermitian matrices -----------------------------
#
# An n x n Hermitian X maps to n^2 reals: the n diagonal entries, then
# Re X_ij and Im X_ij for i < j (row-major upper triangle).  The basis is
# E_ii, (E_ij + E_ji), i(E_ij - E_ji), so gradients pick up a factor 2 on
# off-diagonal entries.

_basis_cache: dict = {}
_triu_cache: dict = {}


def triu_pairs(n: int):
    if n not in _triu_cache:
        _triu_cache[n] = np.triu_indices(n, k=1)
    return _triu_cache[n]


def herm_param_count(n: int) -> int:
    return n * n


def herm_to_vec(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    iu, ju = triu_pairs(n)
    return np.concatenate([np.real(np.diag(x)),
                           np.real(x[iu, ju]),
                           np.imag(x[iu, ju])])


def vec_to_herm(v: np.ndarray, n: int) -> np.ndarray:
    iu, ju = triu_pairs(n)
    k = iu.size
    x = np.zeros((n, n), dtype=complex)
    x[np.arange(n), np.arange(n)] = v[:n]
    off = v[n:n + k] + 1j * v[n + k:n + 2 * k]
    x[iu, ju] = off
    x[ju, iu] = off.conj()
    return x


def grad_to_vec(g: np.ndarray) -> np.ndarray:
    """Parameter gradient of f with df = tr(G dX), G Hermitian."""
    n = g.shape[0]
    iu, ju = triu_pairs(n)
    return np.concatenate([np.real(np.diag(g)),
                           2.0 * np.real(g[iu, ju]),
                           2.0 * np.imag(g[iu, ju])])


def herm_basis(n: int) -> np.ndarray:
    """(n^2, n, n) stack of the Hermitian basis matrices, cached."""
    if n not in _basis_cache:
        k = n * n
        basis = np.zeros((k, n, n), dtype=complex)
        for a in range(n):
            basis[a, a, a] = 1.0
        iu, ju = triu_pairs(n)
        for t, (i, j) in enumerate(zip(iu, ju)):
            basis[n + t, i, j] = 1.0
            basis[n + t, j, i] = 1.0
        m = iu.size
        for t, (i, j) in enumerate(zip(iu, ju)):
            basis[n + m + t, i, j] = 1j
            basis[n + m + t, j, i] = -1j
        basis.setflags(write=False)
        _basis_cache[n] = basis
    return _basis_cache[n]
