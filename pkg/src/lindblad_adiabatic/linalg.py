"""Dense complex linear-algebra kernel.

Thin, checked wrappers around LAPACK (through :mod:`numpy.linalg`): a general
non-Hermitian eigendecomposition that reports eigenvector conditioning, and a
square root for Hermitian positive semi-definite matrices.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NegativeSpectrum, NonConvergence, NotHermitian

#: relative residual bound accepted from the eigensolver
EIG_RESIDUAL_TOL = 1e-10
#: eigenvalues of a PSD input above ``-PSD_CLIP_TOL`` are clipped to zero
PSD_CLIP_TOL = 1e-12
HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class EigenResult:
    """Eigenvalues and unit-norm right eigenvectors (as columns).

    Attributes
    ----------
    values : ndarray, shape (n,)
    right_vectors : ndarray, shape (n, n)
        Column ``k`` pairs with ``values[k]``.
    condition_estimate : float
        ``||V||_F * ||V^-1||_F``; ``inf`` when ``V`` is numerically singular.
    """

    values: np.ndarray
    right_vectors: np.ndarray
    condition_estimate: float


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D complex array."""
    A = np.asarray(M, dtype=complex)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InputError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{name} has non-finite entries")
    return A


def condition_estimate(V):
    try:
        Vinv = np.linalg.inv(V)
    except np.linalg.LinAlgError:
        return float("inf")
    if not np.all(np.isfinite(Vinv)):
        return float("inf")
    return float(np.linalg.norm(V) * np.linalg.norm(Vinv))


def eig_general(M):
    """Eigendecomposition of a general square complex matrix.

    Parameters
    ----------
    M : array_like, shape (n, n)

    Returns
    -------
    EigenResult

    Raises
    ------
    NonConvergence
        If LAPACK fails or an eigenpair residual exceeds
        ``1e-10 * max(1, ||M||_inf)``.
    """
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise InputError(f"eig_general needs a square matrix, got {A.shape}")
    try:
        values, V = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(f"eigensolver failed: {exc}") from exc
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(V))):
        raise NonConvergence("eigensolver returned non-finite output")
    V = V / np.linalg.norm(V, axis=0)
    scale = max(1.0, np.linalg.norm(A, ord=np.inf))
    residual = np.linalg.norm(A @ V - V * values, axis=0).max()
    if residual > EIG_RESIDUAL_TOL * scale:
        raise NonConvergence(f"eigenpair residual {residual:.3e} exceeds tolerance")
    return EigenResult(values, V, condition_estimate(V))


def is_hermitian(M, tol=HERMITIAN_TOL):
    A = np.asarray(M)
    return A.shape[0] == A.shape[1] and np.abs(A - A.conj().T).max() <= tol


def sqrtm_psd(H, clip_tol=PSD_CLIP_TOL, rank_floor=0.0):
    """Principal square root of a Hermitian positive semi-definite matrix.

    Eigenvalues in ``[-clip_tol, 0)`` are treated as round-off and clipped.
    Eigenvalues at or below ``rank_floor * max(eigenvalue)`` are set to zero
    before the root is taken; with ``rank_floor`` of order ``n * eps`` this
    stops unresolvable round-off from entering as ``sqrt(eps)``.
    """
    A = as_matrix(H)
    if not is_hermitian(A):
        raise NotHermitian("sqrtm_psd input is not Hermitian within 1e-10")
    w, U = np.linalg.eigh(0.5 * (A + A.conj().T))
    if w.min() < -clip_tol:
        raise NegativeSpectrum(f"smallest eigenvalue {w.min():.3e} is negative")
    w = np.clip(w, 0.0, None)
    if rank_floor > 0:
        w[w <= rank_floor * w.max()] = 0.0
    root = np.sqrt(w)
    S = (U * root) @ U.conj().T
    return 0.5 * (S + S.conj().T)
