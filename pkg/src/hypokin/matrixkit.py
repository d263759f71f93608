"""Small dense matrix kernels.

Thin wrappers over LAPACK (via numpy/scipy) with the input checks and
tolerance conventions the rest of the package relies on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, RangeError, RejectedInput


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns, orthonormal


def _finite(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise RejectedInput(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise RejectedInput("matrix has non-finite entries")
    return A


def symmetrize(A) -> np.ndarray:
    A = _finite(A)
    return 0.5 * (A + A.T)


def default_tol(A) -> float:
    """Scale-aware PSD tolerance: 1e-10 * max(1, ||A||_F)."""
    return 1e-10 * max(1.0, float(np.linalg.norm(A)))


def sym_eig(A) -> Spectrum:
    A = symmetrize(A)
    w, V = np.linalg.eigh(A)
    # fix eigenvector signs so repeated calls agree bit for bit
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return Spectrum(w, V * signs)


def min_eig(A) -> float:
    return float(np.linalg.eigvalsh(symmetrize(A))[0])


def is_psd(A, tol: float | None = None) -> tuple[bool, float]:
    A = symmetrize(A)
    if tol is None:
        tol = default_tol(A)
    if tol < 0:
        raise RejectedInput("tolerance must be nonnegative")
    lo = float(np.linalg.eigvalsh(A)[0])
    return lo >= -tol, lo


def mat_exp(A, t: float = 1.0) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)) or not np.isfinite(t):
        raise RejectedInput("non-finite input to mat_exp")
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(t * A)
    if not np.all(np.isfinite(E)):
        raise RangeError("matrix exponential overflowed")
    return E


def op_norm2(A) -> float:
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise RejectedInput("non-finite input to op_norm2")
    return float(np.linalg.norm(A, 2))


def kron(A, B) -> np.ndarray:
    return np.kron(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def spd_inv_sqrt(A) -> np.ndarray:
    spec = sym_eig(A)
    w, V = spec.eigenvalues, spec.eigenvectors
    scale = max(abs(w[-1]), np.finfo(float).tiny)
    if w[0] <= 1e-12 * scale:
        raise DomainError(f"matrix not positive definite (min eig {w[0]:.3e})")
    S = (V / np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T)
