"""Mixing-free transportation cycles through a list of covariances.

Particles are registered across vertices through a reference covariance:
going from vertex ``i`` to vertex ``j`` must realize the composite Monge map
``T(ref -> j) @ T(i -> ref)``. Each edge is then an isoparallel transport
problem, and the closed polygon built from the solved edges has trivial
holonomy, so every particle returns to where it started.
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .connection import BundleContext, CovCurve, transition_factors
from .errors import NonConvergenceError, UsageError
from .gaussian_omt import monge_map
from .geodesics import ImtProblem, ImtSolution, imt_solve
from .numerics import check_spd, sym_inv_sqrt, sym_sqrt, symmetrize

log = logging.getLogger(__name__)

__all__ = [
    "REF_POLICIES",
    "PolygonSpec",
    "PolygonSolution",
    "registration_map",
    "edge_target",
    "resolve_reference",
    "solve_polygon",
    "ac_barycenter",
    "gm2",
    "alm_mean",
]

REF_POLICIES = ("agueh_carlier", "ando_li_mathias")


def registration_map(sigma_i, sigma_j, sigma_ref):
    """Transport ``T(ref -> j) @ T(i -> ref)`` pairing vertex ``i`` with vertex ``j``.

    Generally not symmetric, but it always pushes ``sigma_i`` to ``sigma_j``.
    """
    return monge_map(sigma_ref, sigma_j) @ monge_map(sigma_i, sigma_ref)


def edge_target(sigma_i, sigma_j, sigma_ref):
    """Prescribed parallel transport for the polygon edge ``i -> j``."""
    return registration_map(sigma_i, sigma_j, sigma_ref)


def ac_barycenter(vertices, tol=1e-12, max_iters=1000):
    """Wasserstein (Agueh-Carlier) barycenter of centered Gaussians, uniform weights.

    Fixed-point iteration
    ``S <- S^{-1/2} (mean_i (S^{1/2} S_i S^{1/2})^{1/2})^2 S^{-1/2}``
    started at the arithmetic mean; stops when consecutive iterates differ
    by less than ``tol`` in Frobenius norm.

    Raises
    ------
    NonConvergenceError
        After ``max_iters`` iterations, with the last step size.
    """
    mats = [check_spd(v, f"vertices[{k}]") for k, v in enumerate(vertices)]
    if not mats:
        raise UsageError("need at least one covariance")
    if len({m.shape for m in mats}) != 1:
        raise UsageError("covariances differ in dimension")
    if len(mats) == 1:
        return mats[0]
    S = symmetrize(np.mean(mats, axis=0))
    step = np.inf
    for _ in range(max_iters):
        r = sym_sqrt(S)
        ri = sym_inv_sqrt(S)
        M = np.mean([sym_sqrt(r @ m @ r) for m in mats], axis=0)
        S_new = symmetrize(ri @ M @ M @ ri)
        step = np.linalg.norm(S_new - S)
        S = S_new
        if step < tol:
            return S
    raise NonConvergenceError(f"barycenter did not converge (last step {step:.3g})", residual=step)


def ac_residual(S, vertices):
    """Fixed-point mismatch ``|| mean_i (S^{1/2} S_i S^{1/2})^{1/2} - S ||``."""
    r = sym_sqrt(S)
    return float(np.linalg.norm(np.mean([sym_sqrt(r @ v @ r) for v in vertices], axis=0) - S))


def gm2(sigma_i, sigma_j):
    """Geometric mean ``A^{1/2} (A^{1/2} B^{-1} A^{1/2})^{-1/2} A^{1/2}`` of two SPD matrices."""
    A = check_spd(sigma_i, "sigma_i")
    B = check_spd(sigma_j, "sigma_j")
    r = sym_sqrt(A)
    return symmetrize(r @ sym_inv_sqrt(r @ np.linalg.inv(B) @ r) @ r)


def _diameter(mats):
    return max(np.linalg.norm(a - b) for k, a in enumerate(mats) for b in mats[k + 1:])


def alm_mean(vertices, tol=1e-12, max_iters=200):
    """Ando-Li-Mathias geometric mean of ``N >= 2`` SPD matrices.

    For ``N = 2`` this is :func:`gm2`. Otherwise the tuple is repeatedly
    replaced by the means of its ``N - 1`` element sub-tuples (slot ``k``
    gets the mean of all others) until its diameter drops below ``tol``.
    """
    mats = [check_spd(v, f"vertices[{k}]") for k, v in enumerate(vertices)]
    if len(mats) < 2:
        raise UsageError("alm_mean needs at least two matrices")
    if len(mats) == 2:
        return gm2(*mats)
    N = len(mats)
    for _ in range(max_iters):
        if _diameter(mats) < tol:
            return symmetrize(np.mean(mats, axis=0))
        # slot k <- mean of the others, taken in cyclic order k+1, ..., k-1
        mats = [alm_mean([mats[(k + d) % N] for d in range(1, N)], tol, max_iters) for k in range(N)]
    raise NonConvergenceError(f"ALM iteration did not converge (diameter {_diameter(mats):.3g})",
                              residual=_diameter(mats))


def resolve_reference(vertices, ref_policy):
    """Reference covariance for a policy name or an explicit matrix."""
    if isinstance(ref_policy, str):
        if ref_policy == "agueh_carlier":
            return ac_barycenter(vertices)
        if ref_policy == "ando_li_mathias":
            return alm_mean(vertices)
        raise UsageError(f"unknown reference policy {ref_policy!r}; expected one of {REF_POLICIES} or a matrix")
    return check_spd(ref_policy, "sigma_ref")


@dataclass
class PolygonSpec:
    """Vertices of a Wasserstein polygon and how to pick the reference covariance.

    ``ref_policy`` is ``"agueh_carlier"``, ``"ando_li_mathias"`` or an
    explicit SPD matrix.
    """

    vertices: Sequence[np.ndarray]
    ref_policy: Union[str, np.ndarray] = "agueh_carlier"
    steps: int = 1000
    continuation_steps: int = 4
    tol: float = 1e-9
    max_iters: int = 50
    holonomy_tol: float = 1e-3

    def __post_init__(self):
        self.vertices = [check_spd(v, f"vertices[{k}]") for k, v in enumerate(self.vertices)]
        if len(self.vertices) < 3:
            raise UsageError("a polygon needs at least three vertices")
        if len({v.shape for v in self.vertices}) != 1:
            raise UsageError("vertices differ in dimension")


@dataclass(frozen=True)
class PolygonSolution:
    edges: list
    sigma_ref: np.ndarray
    perimeter: float
    total_holonomy: np.ndarray
    holonomy_error: float
    holonomy_ok: bool
    curve: CovCurve = field(repr=False)
    factors: np.ndarray = field(repr=False)


def _stationary_edge(problem):
    """Zero-length edge between equal vertices with identity target."""
    from .connection import HorizontalLift
    from .geodesics import GeodesicTrajectory

    n, K = problem.dim, problem.steps
    S = np.broadcast_to(problem.sigma_in, (K + 1, n, n)).copy()
    curve = CovCurve(S, velocities=np.zeros_like(S))
    factors = np.broadcast_to(problem.phi_in, (K + 1, n, n)).copy()
    zeros = np.zeros_like(S)
    lift = HorizontalLift(curve, factors, zeros, problem.ctx)
    traj = GeodesicTrajectory(np.linspace(0.0, 1.0, K + 1), factors, zeros, zeros)
    z = np.zeros((n, n))
    return ImtSolution(lift, z, z, z, 0.0, 0.0, problem, traj)


def solve_polygon(spec):
    """Solve every edge of the polygon and check that its holonomy is trivial.

    Edges run ``1 -> 2 -> ... -> N -> 1``. The perimeter is the sum of edge
    lengths; the total holonomy is the parallel transport around the
    concatenated curve, compared against the identity.

    Raises
    ------
    NonConvergenceError
        If an edge fails; the message names the edge.
    """
    verts = spec.vertices
    N = len(verts)
    sigma_ref = resolve_reference(verts, spec.ref_policy)
    ctx = BundleContext(sigma_ref)
    edges = []
    for i in range(N):
        j = (i + 1) % N
        problem = ImtProblem(
            verts[i],
            verts[j],
            edge_target(verts[i], verts[j], sigma_ref),
            ctx=ctx,
            steps=spec.steps,
            continuation_steps=spec.continuation_steps,
            tol=spec.tol,
            max_iters=spec.max_iters,
        )
        if np.linalg.norm(problem.phi_des - np.eye(problem.dim)) < 1e-14 and np.allclose(verts[i], verts[j]):
            edges.append(_stationary_edge(problem))
            continue
        try:
            sol = imt_solve(problem)
        except NonConvergenceError as exc:
            raise NonConvergenceError(f"edge {i + 1}->{j + 1}: {exc}", residual=exc.residual, stage=exc.stage) from exc
        log.info("edge %d->%d length %.6f residual %.2e", i + 1, j + 1, sol.length, sol.residual)
        edges.append(sol)
    curve = CovCurve.concatenate(e.curve for e in edges)
    factors, _ = transition_factors(curve)
    hol = factors[-1]
    err = float(np.linalg.norm(hol - np.eye(hol.shape[0])))
    ok = err < spec.holonomy_tol
    if not ok:
        log.warning("polygon holonomy deviates from identity by %.3g", err)
    return PolygonSolution(
        edges=edges,
        sigma_ref=sigma_ref,
        perimeter=float(sum(e.length for e in edges)),
        total_holonomy=hol,
        holonomy_error=err,
        holonomy_ok=ok,
        curve=curve,
        factors=factors,
    )
