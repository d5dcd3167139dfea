"""Dense matrix kernels for small symmetric positive-definite problems.

Every function accepts plain ``numpy`` arrays. The Lyapunov solver and the
congruence also broadcast over leading axes, which the geodesic shooting code
uses to integrate many trajectories at once.
"""

import numpy as np
from scipy.linalg import expm

from .errors import DomainError, UsageError

#: Symmetry tolerance used by the validators.
SYM_TOL = 1e-12
#: Relative eigenvalue floor below which a matrix is not treated as SPD.
SPD_RTOL = 1e-12

__all__ = [
    "as_matrix",
    "symmetrize",
    "skew_part",
    "check_spd",
    "check_sym",
    "check_skew",
    "check_transport_factor",
    "is_spd",
    "sym_sqrt",
    "sym_inv_sqrt",
    "sym_power",
    "lyapunov_solve",
    "skew_exp",
    "congruence",
    "rotation_angle",
]


def as_matrix(M, name="matrix"):
    """Return ``M`` as a square float array, raising :class:`UsageError` otherwise."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise UsageError(f"{name} must be a square 2-D array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise UsageError(f"{name} has non-finite entries")
    return M


def symmetrize(M):
    """Symmetric part ``(M + M^T) / 2`` (over the last two axes)."""
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def skew_part(M):
    """Skew-symmetric part ``(M - M^T) / 2`` (over the last two axes)."""
    return 0.5 * (M - np.swapaxes(M, -1, -2))


def _scale(M):
    return max(1.0, float(np.max(np.abs(M))))


def check_sym(M, name="matrix"):
    """Validate symmetry to :data:`SYM_TOL` (relative) and return the symmetrized copy."""
    M = as_matrix(M, name)
    if np.max(np.abs(M - M.T)) > SYM_TOL * _scale(M):
        raise DomainError(f"{name} is not symmetric")
    return symmetrize(M)


def check_skew(M, name="matrix"):
    """Validate skew-symmetry and return the exactly skew copy."""
    M = as_matrix(M, name)
    if np.max(np.abs(M + M.T)) > SYM_TOL * _scale(M):
        raise DomainError(f"{name} is not skew-symmetric")
    return skew_part(M)


def check_spd(M, name="matrix"):
    """Validate that ``M`` is symmetric positive definite.

    Eigenvalues must exceed ``SPD_RTOL`` times the largest one. Returns the
    symmetrized matrix.
    """
    S = check_sym(M, name)
    w = np.linalg.eigvalsh(S)
    if w[-1] <= 0 or w[0] <= SPD_RTOL * w[-1]:
        raise DomainError(f"{name} is not positive definite (smallest eigenvalue {w[0]:.6g})")
    return S


def is_spd(M):
    try:
        check_spd(M)
    except (DomainError, UsageError):
        return False
    return True


def check_transport_factor(M, name="factor"):
    """Validate ``det M > 0`` and return ``M`` as an array."""
    M = as_matrix(M, name)
    d = np.linalg.det(M)
    if not d > 0:
        raise DomainError(f"{name} must have positive determinant, got {d:.6g}")
    return M


def check_same_dim(*mats):
    n = {m.shape[-1] for m in mats}
    if len(n) != 1:
        raise UsageError(f"dimension mismatch: {sorted(n)}")


def sym_power(S, p, name="matrix"):
    """Real power ``S**p`` of an SPD matrix via its eigendecomposition."""
    S = np.asarray(S, dtype=float)
    w, U = np.linalg.eigh(symmetrize(S))
    if w[0] <= 0 or w[0] <= SPD_RTOL * w[-1]:
        raise DomainError(f"{name} is not positive definite (eigenvalue {w[0]:.6g})")
    return symmetrize((U * w**p) @ U.T)


def sym_sqrt(S):
    """Principal square root of an SPD matrix.

    Parameters
    ----------
    S : ndarray, shape (n, n)
        Symmetric positive definite matrix.

    Returns
    -------
    R : ndarray, shape (n, n)
        The SPD matrix with ``R @ R == S``.

    Raises
    ------
    DomainError
        If an eigenvalue of ``S`` is not positive; the message names it.
    """
    return sym_power(as_matrix(S), 0.5)


def sym_inv_sqrt(S):
    """Inverse principal square root ``S**-0.5`` of an SPD matrix."""
    return sym_power(as_matrix(S), -0.5)


def lyapunov_solve(sigma, V):
    """Solve ``A @ sigma + sigma @ A = V`` for symmetric ``A``.

    The solve happens in the eigenbasis of ``sigma``, where the equation
    decouples entrywise into ``A_ij = V_ij / (l_i + l_j)``. This is the
    operator that maps a covariance velocity to its potential-force control.

    Both arguments may carry matching leading batch axes.
    """
    sigma = np.asarray(sigma, dtype=float)
    V = np.asarray(V, dtype=float)
    if sigma.shape[-2:] != V.shape[-2:] or sigma.shape[-1] != sigma.shape[-2]:
        raise UsageError(f"dimension mismatch: {sigma.shape} vs {V.shape}")
    w, U = np.linalg.eigh(symmetrize(sigma))
    if np.any(w <= 0):
        raise DomainError(f"Lyapunov operator needs an SPD matrix (eigenvalue {w.min():.6g})")
    Ut = np.swapaxes(U, -1, -2)
    Vt = Ut @ symmetrize(V) @ U
    denom = w[..., :, None] + w[..., None, :]
    return symmetrize(U @ (Vt / denom) @ Ut)


def skew_exp(W):
    """Exponential of a skew-symmetric matrix, an element of SO(n).

    For ``n == 2`` the rotation is written down directly; otherwise the
    scaling-and-squaring Pade exponential of :func:`scipy.linalg.expm` is used.
    """
    W = check_skew(W, "generator")
    if W.shape == (2, 2):
        a = W[1, 0]
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, -s], [s, c]])
    return expm(W)


def congruence(phi, sigma):
    """Congruence action ``phi @ sigma @ phi.T``, symmetrized.

    This is how a linear map pushes forward a centered Gaussian covariance.
    Broadcasts over leading axes.
    """
    phi = np.asarray(phi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    return symmetrize(phi @ sigma @ np.swapaxes(phi, -1, -2))


def rotation_angle(theta):
    """Angle (radians) of a 2x2 rotation matrix, in ``(-pi, pi]``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (2, 2):
        raise UsageError("rotation_angle is defined for 2x2 matrices only")
    return float(np.arctan2(theta[1, 0] - theta[0, 1], theta[0, 0] + theta[1, 1]))
