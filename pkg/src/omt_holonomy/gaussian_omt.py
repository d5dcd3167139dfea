"""Closed-form optimal transport between centered Gaussians.

Covariances are identified with zero-mean Gaussian measures. The optimal
(Monge) map between two of them is linear and SPD, McCann's displacement
interpolation stays Gaussian, and everything below is explicit linear
algebra.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .numerics import (
    check_same_dim,
    check_spd,
    congruence,
    sym_inv_sqrt,
    sym_sqrt,
    symmetrize,
)

__all__ = [
    "MccannGeodesic",
    "ExtensionInterval",
    "monge_map",
    "monge_map_alt",
    "w2_squared",
    "w2",
    "mccann",
    "mccann_point",
    "mccann_velocity",
    "mccann_samples",
    "extension_interval",
    "triangle_holonomy",
    "triangle_curve",
]


def monge_map(sigma0, sigma1):
    """Optimal transport map between ``N(0, sigma0)`` and ``N(0, sigma1)``.

    Computed as ``S0^{-1/2} (S0^{1/2} S1 S0^{1/2})^{1/2} S0^{-1/2}``.

    Parameters
    ----------
    sigma0, sigma1 : ndarray, shape (n, n)
        Source and target covariances.

    Returns
    -------
    ndarray, shape (n, n)
        The SPD matrix ``T`` with ``T @ sigma0 @ T.T == sigma1``.
    """
    s0 = check_spd(sigma0, "sigma0")
    s1 = check_spd(sigma1, "sigma1")
    check_same_dim(s0, s1)
    r0 = sym_sqrt(s0)
    r0i = sym_inv_sqrt(s0)
    return symmetrize(r0i @ sym_sqrt(r0 @ s1 @ r0) @ r0i)


def monge_map_alt(sigma0, sigma1):
    """Same map as :func:`monge_map`, via ``S1^{1/2} (S1^{1/2} S0 S1^{1/2})^{-1/2} S1^{1/2}``.

    Kept as an independent route for cross-checking.
    """
    s0 = check_spd(sigma0, "sigma0")
    s1 = check_spd(sigma1, "sigma1")
    check_same_dim(s0, s1)
    r1 = sym_sqrt(s1)
    return symmetrize(r1 @ sym_inv_sqrt(r1 @ s0 @ r1) @ r1)


def w2_squared(sigma0, sigma1):
    """Squared Bures-Wasserstein distance between two centered Gaussians.

    Equal to ``trace(S0 + S1 - 2 (S0^{1/2} S1 S0^{1/2})^{1/2})``, but
    evaluated as the transport cost ``trace((I - T) S0 (I - T))`` of the
    Monge map ``T``. That form is a sum of squares, so it never goes negative
    and does not cancel catastrophically when the two covariances are close.
    """
    s0 = check_spd(sigma0, "sigma0")
    D = np.eye(s0.shape[0]) - monge_map(s0, sigma1)
    R = D @ sym_sqrt(s0)
    return float(np.sum(R * R))


def w2(sigma0, sigma1):
    """Bures-Wasserstein distance (square root of :func:`w2_squared`)."""
    return float(np.sqrt(w2_squared(sigma0, sigma1)))


@dataclass(frozen=True)
class ExtensionInterval:
    """Maximal open time interval on which a McCann geodesic can be continued.

    ``degenerate`` is set when the Monge map has a unit eigenvalue; those
    directions do not move and are left out of the bound computation.
    """

    t_min: float
    t_max: float
    degenerate: bool = False

    def __contains__(self, t):
        return self.t_min < t < self.t_max or 0.0 <= t <= 1.0


@dataclass(frozen=True)
class MccannGeodesic:
    """Displacement interpolation between ``sigma_start`` and ``sigma_end``."""

    sigma_start: np.ndarray
    sigma_end: np.ndarray
    monge: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.sigma_start.shape[0]


def mccann(sigma0, sigma1):
    """Build the :class:`MccannGeodesic` from ``sigma0`` to ``sigma1``."""
    s0 = check_spd(sigma0, "sigma0")
    s1 = check_spd(sigma1, "sigma1")
    return MccannGeodesic(s0, s1, monge_map(s0, s1))


def _unit_gap(g):
    return np.linalg.eigvalsh(g.monge) - 1.0


def extension_interval(g, unit_tol=1e-12):
    """Interval of ``t`` on which ``I + t (T - I)`` stays invertible.

    With ``T`` the Monge map and ``m`` its eigenvalues, ``I + t (T - I)`` is
    singular exactly at ``t = 1 / (1 - m)``. Eigenvalues above one (expanding
    directions) bound the interval from below, eigenvalues below one bound it
    from above. When the two covariances commute, ``m = lam**-0.5`` with
    ``lam`` the eigenvalues of ``sigma0 @ inv(sigma1)``.
    """
    gap = _unit_gap(g)
    moving = np.abs(gap) > unit_tol
    degenerate = not np.all(moving)
    t_min, t_max = -np.inf, np.inf
    for d in gap[moving]:
        t_sing = -1.0 / d  # 1 + t*d == 0
        if t_sing > 1.0:
            t_max = min(t_max, t_sing)
        elif t_sing < 0.0:
            t_min = max(t_min, t_sing)
    return ExtensionInterval(float(t_min), float(t_max), degenerate)


def _check_t(g, t):
    ext = extension_interval(g)
    if t not in ext:
        raise DomainError(f"t={t} outside the extension interval ({ext.t_min}, {ext.t_max})")


def mccann_point(g, t):
    """Covariance ``((1 - t) I + t T) # sigma_start`` at time ``t``."""
    _check_t(g, t)
    n = g.dim
    M = (1.0 - t) * np.eye(n) + t * g.monge
    return congruence(M, g.sigma_start)


def mccann_velocity(g, t):
    """Symmetric control ``A_t = (T - I)(I + t (T - I))^{-1}`` of the geodesic."""
    n = g.dim
    D = g.monge - np.eye(n)
    M = np.eye(n) + t * D
    if np.linalg.cond(M) > 1e14:
        raise DomainError(f"I + t(T - I) is singular at t={t}")
    return symmetrize(np.linalg.solve(M.T, D.T).T)


def mccann_samples(sigma0, sigma1, steps):
    """Covariances of the McCann geodesic on a uniform grid of ``steps + 1`` times."""
    g = mccann(sigma0, sigma1)
    n = g.dim
    ts = np.linspace(0.0, 1.0, steps + 1)
    M = (1.0 - ts)[:, None, None] * np.eye(n) + ts[:, None, None] * g.monge
    return ts, congruence(M, g.sigma_start)


def triangle_curve(sigma1, sigma2, sigma3, steps):
    """Closed Gaussian triangle with McCann edges, each edge taking a third of unit time.

    ``steps`` must be divisible by 3. Returns ``(times, samples)``.
    """
    if steps % 3:
        raise ValueError("steps must be a multiple of 3")
    k = steps // 3
    verts = [sigma1, sigma2, sigma3, sigma1]
    parts = []
    for i in range(3):
        _, s = mccann_samples(verts[i], verts[i + 1], k)
        parts.append(s if i == 0 else s[1:])
    return np.linspace(0.0, 1.0, steps + 1), np.concatenate(parts)


def triangle_holonomy(sigma1, sigma2, sigma3):
    """Closed-form holonomy of the McCann triangle ``1 -> 2 -> 3 -> 1``.

    Returns ``T_31 @ T_23 @ T_12``, which fixes ``sigma1`` under congruence
    and has unit determinant, but generally differs from the identity.
    """
    return monge_map(sigma3, sigma1) @ monge_map(sigma2, sigma3) @ monge_map(sigma1, sigma2)
