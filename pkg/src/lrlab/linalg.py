"""Small dense linear-algebra helpers shared across modules."""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = ["op_norm", "is_hermitian", "polar_unitary", "expm_hermitian"]


def is_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    return bool(np.abs(a - a.conj().T).max(initial=0.0) <= tol * scale)


def op_norm(a) -> float:
    """Spectral norm; uses the Hermitian eigensolver when it applies."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    if is_hermitian(a):
        return float(np.abs(scipy.linalg.eigvalsh(a)).max())
    return float(np.linalg.norm(a, 2))


def polar_unitary(a: np.ndarray) -> np.ndarray:
    """Closest unitary to ``a`` in Frobenius norm (polar factor)."""
    u, _, vh = np.linalg.svd(a)
    return u @ vh


def expm_hermitian(h: np.ndarray, scale: complex) -> np.ndarray:
    """exp(scale * h) for Hermitian h via its eigendecomposition."""
    w, v = scipy.linalg.eigh(h)
    return (v * np.exp(scale * w)) @ v.conj().T
