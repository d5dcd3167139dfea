"""Normal sub-Riemannian geodesics and the isoparallel transport problem.

A normal geodesic is generated by a factor/costate pair ``(Phi, Lam)``. The
control ``A = -1/2 L_{Phi # sigma_ref}(Phi Lam^T + Lam Phi^T)`` drives

    dPhi/dt = A Phi,    dLam/dt = -A (Lam + 2 A Phi sigma_ref).

The symmetric and skew parts of ``Phi Lam^T`` are the covariance velocity
``Pi`` (up to sign) and a conserved skew matrix ``Omega``. Shooting on
``(Pi_0, Omega_0)`` finds the geodesic whose parallel transport is a
prescribed factor.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, logm

from .connection import BundleContext, CovCurve, HorizontalLift, curve_length, fiber_point
from .errors import DomainError, IntegrationBreakdown, NonConvergenceError, PreconditionError, UsageError
from .gaussian_omt import mccann, mccann_point, monge_map
from .numerics import (
    check_spd,
    check_transport_factor,
    congruence,
    lyapunov_solve,
    skew_part,
    sym_sqrt,
    symmetrize,
)

log = logging.getLogger(__name__)

__all__ = [
    "GeodesicState",
    "GeodesicTrajectory",
    "ImtProblem",
    "ImtSolution",
    "DET_FLOOR",
    "geodesic_control",
    "geodesic_flow",
    "hamiltonian",
    "costate_from_momenta",
    "momenta_from_costate",
    "fiber_rotation_target",
    "imt_solve",
    "geodesic_equation_residual",
    "necessary_conditions_residual",
    "isoholonomic_transform",
]

#: Determinant below which the factor is declared to have left GL+(n).
DET_FLOOR = 1e-10


@dataclass(frozen=True)
class GeodesicState:
    phi: np.ndarray
    lam: np.ndarray


@dataclass(frozen=True)
class GeodesicTrajectory:
    """Samples of a normal geodesic on the uniform grid of ``[0, 1]``."""

    times: np.ndarray
    phi: np.ndarray
    lam: np.ndarray
    controls: np.ndarray

    def state(self, k):
        return GeodesicState(self.phi[k], self.lam[k])


def _control(sigma_ref, phi, lam):
    sigma = congruence(phi, sigma_ref)
    PhiLamT = phi @ np.swapaxes(lam, -1, -2)
    return lyapunov_solve(sigma, -symmetrize(PhiLamT))


def _rhs(sigma_ref, phi, lam):
    # unchecked inline of _control; eigh reads only the lower triangle
    phiT = np.swapaxes(phi, -1, -2)
    w, U = np.linalg.eigh(phi @ sigma_ref @ phiT)
    P = phi @ np.swapaxes(lam, -1, -2)
    UT = np.swapaxes(U, -1, -2)
    Vt = UT @ (P + np.swapaxes(P, -1, -2)) @ U
    A = U @ (Vt / (-2.0 * (w[..., :, None] + w[..., None, :]))) @ UT
    Aphi = A @ phi
    return Aphi, -A @ (lam + 2.0 * Aphi @ sigma_ref), A


def geodesic_control(ctx, state):
    """Optimal control ``A`` at a factor/costate pair.

    Raises
    ------
    DomainError
        If the factor is singular, so its projection is not SPD.
    """
    phi = np.asarray(state.phi, dtype=float)
    if abs(np.linalg.det(phi)) <= DET_FLOOR:
        raise DomainError("factor is singular; its projection is not positive definite")
    return _control(ctx.sigma_ref, phi, np.asarray(state.lam, dtype=float))


def hamiltonian(ctx, phi, lam, A=None):
    """``trace(A Phi S Phi^T A + Lam^T A Phi)`` with ``S = sigma_ref``, at the optimal ``A`` by default."""
    if A is None:
        A = _control(ctx.sigma_ref, phi, lam)
    sigma = congruence(phi, ctx.sigma_ref)
    return float(np.trace(A @ sigma @ A) + np.trace(lam.T @ A @ phi))


def _integrate(sigma_ref, phi0, lam0, steps, store):
    """Batched RK4. Returns ``(phi, lam, A, broken_at)``; ``broken_at`` is NaN where no breakdown."""
    h = 1.0 / steps
    phi, lam = phi0.copy(), lam0.copy()
    batch = phi.shape[:-2]
    broken = np.full(batch, np.nan)
    if store:
        Phis, Lams, As = [phi], [lam], []
    for k in range(steps):
        k1p, k1l, A0 = _rhs(sigma_ref, phi, lam)
        k2p, k2l, _ = _rhs(sigma_ref, phi + 0.5 * h * k1p, lam + 0.5 * h * k1l)
        k3p, k3l, _ = _rhs(sigma_ref, phi + 0.5 * h * k2p, lam + 0.5 * h * k2l)
        k4p, k4l, _ = _rhs(sigma_ref, phi + h * k3p, lam + h * k3l)
        phi = phi + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        lam = lam + (h / 6.0) * (k1l + 2.0 * k2l + 2.0 * k3l + k4l)
        bad = ~(np.linalg.det(phi) > DET_FLOOR) & np.isnan(broken)
        if np.any(bad):
            broken[bad] = (k + 1) * h
            # freeze broken members so they cannot overflow the rest of the batch
            phi = np.where(bad[..., None, None], phi0, phi)
            lam = np.where(bad[..., None, None], 0.0, lam)
        if store:
            Phis.append(phi)
            Lams.append(lam)
            As.append(A0)
    if store:
        As.append(_control(sigma_ref, phi, lam))
        return np.array(Phis), np.array(Lams), np.array(As), broken
    return phi, lam, None, broken


def geodesic_flow(ctx, phi0, lam0, steps=1000):
    """Integrate the normal geodesic equations over ``[0, 1]``.

    Parameters
    ----------
    ctx : BundleContext
    phi0 : ndarray, shape (n, n)
        Initial factor, positive determinant.
    lam0 : ndarray, shape (n, n)
        Initial costate (any real matrix).
    steps : int
        Number of fixed RK4 steps.

    Returns
    -------
    GeodesicTrajectory

    Raises
    ------
    IntegrationBreakdown
        If ``det(Phi_t)`` drops below :data:`DET_FLOOR`; ``t`` is reported.
    """
    phi0 = check_transport_factor(phi0, "phi0")
    lam0 = np.asarray(lam0, dtype=float)
    if lam0.shape != phi0.shape or phi0.shape[0] != ctx.dim:
        raise UsageError("phi0, lam0 and the context must share a dimension")
    phi, lam, A, broken = _integrate(ctx.sigma_ref, phi0, lam0, steps, store=True)
    if not np.isnan(broken):
        raise IntegrationBreakdown(f"factor became singular at t={float(broken):.6g}", t=float(broken))
    return GeodesicTrajectory(np.linspace(0.0, 1.0, steps + 1), phi, lam, A)


def costate_from_momenta(phi0, pi0, omega0):
    """Costate whose momenta at ``phi0`` are ``pi0`` (symmetric) and ``omega0`` (skew).

    Inverts ``Pi = -sym(Phi Lam^T)`` and ``Omega = skew(Phi Lam^T)``.
    """
    phi0 = np.asarray(phi0, dtype=float)
    M = -np.asarray(pi0, dtype=float) - np.asarray(omega0, dtype=float)
    return np.linalg.solve(phi0, M.T).T  # M @ inv(phi0).T


def momenta_from_costate(phi, lam):
    """``(Pi, Omega)`` of a factor/costate pair."""
    P = np.asarray(phi) @ np.swapaxes(np.asarray(lam), -1, -2)
    return -symmetrize(P), skew_part(P)


def _unpack(p, n):
    """Parameter vector -> (Pi, Omega); shapes (..., n, n)."""
    iu = np.triu_indices(n)
    su = np.triu_indices(n, 1)
    m = len(iu[0])
    Pi = np.zeros(p.shape[:-1] + (n, n))
    Pi[..., iu[0], iu[1]] = p[..., :m]
    Pi = Pi + np.swapaxes(np.triu(Pi, 1), -1, -2)
    Om = np.zeros_like(Pi)
    Om[..., su[0], su[1]] = p[..., m:]
    return Pi, Om - np.swapaxes(Om, -1, -2)


def _pack(Pi, Om):
    n = Pi.shape[-1]
    iu = np.triu_indices(n)
    su = np.triu_indices(n, 1)
    return np.concatenate([Pi[iu], Om[su]])


@dataclass
class ImtProblem:
    """Isoparallel transport: endpoints plus a prescribed parallel transport.

    ``phi_des`` must push ``sigma_in`` onto ``sigma_fn``. Solver settings have
    working defaults.
    """

    sigma_in: np.ndarray
    sigma_fn: np.ndarray
    phi_des: np.ndarray
    ctx: BundleContext = None
    steps: int = 1000
    continuation_steps: int = 4
    tol: float = 1e-9
    max_iters: int = 50
    phi_in: np.ndarray = None

    def __post_init__(self):
        self.sigma_in = check_spd(self.sigma_in, "sigma_in")
        self.sigma_fn = check_spd(self.sigma_fn, "sigma_fn")
        self.phi_des = check_transport_factor(self.phi_des, "phi_des")
        n = self.sigma_in.shape[0]
        if self.sigma_fn.shape[0] != n or self.phi_des.shape[0] != n:
            raise UsageError("sigma_in, sigma_fn and phi_des must share a dimension")
        if self.ctx is None:
            self.ctx = BundleContext.identity(n)
        if self.ctx.dim != n:
            raise UsageError("context dimension differs from the problem")
        res = np.linalg.norm(congruence(self.phi_des, self.sigma_in) - self.sigma_fn)
        if res > 1e-8 * max(1.0, np.linalg.norm(self.sigma_fn)):
            raise PreconditionError(f"phi_des does not push sigma_in to sigma_fn (residual {res:.3g})", residual=res)
        if self.phi_in is None:
            self.phi_in = fiber_point(self.ctx, self.sigma_in)
        self.phi_in = check_transport_factor(self.phi_in, "phi_in")
        off = np.linalg.norm(congruence(self.phi_in, self.ctx.sigma_ref) - self.sigma_in)
        if off > 1e-8 * np.linalg.norm(self.sigma_in):
            raise PreconditionError(f"phi_in does not lie over sigma_in (residual {off:.3g})", residual=off)
        if self.steps < 1 or self.continuation_steps < 1 or self.max_iters < 1:
            raise UsageError("steps, continuation_steps and max_iters must be positive")

    @property
    def dim(self):
        return self.sigma_in.shape[0]


@dataclass(frozen=True)
class ImtSolution:
    """Solved isoparallel curve with its shooting data.

    ``length`` is the Otto length of the covariance curve, ``residual`` the
    Frobenius norm of ``Phi_1 - phi_des @ phi_in`` at the terminal stage.
    """

    lift: HorizontalLift
    lambda0: np.ndarray
    pi0: np.ndarray
    omega: np.ndarray
    length: float
    residual: float
    problem: ImtProblem = field(repr=False)
    trajectory: GeodesicTrajectory = field(repr=False)
    iterations: int = 0

    @property
    def curve(self):
        return self.lift.curve

    @property
    def transport(self):
        """Realized parallel transport ``Phi_1 @ inv(Phi_0)``."""
        f = self.lift.factors
        return f[-1] @ np.linalg.inv(f[0])


def fiber_rotation_target(sigma_in, sigma_fn, theta, ctx=None, phi_in=None):
    """Parallel transport that ends ``theta`` away from the McCann endpoint along the fiber.

    The McCann lift from ``phi_in`` ends at ``T @ phi_in`` (``T`` the Monge
    map). Acting on the right by ``theta``, an element of the isotropy group
    of ``sigma_ref``, moves that endpoint within its fiber to
    ``T @ phi_in @ theta``; the matching transport is
    ``T @ phi_in @ theta @ inv(phi_in)``.
    """
    sigma_in = check_spd(sigma_in, "sigma_in")
    n = sigma_in.shape[0]
    ctx = BundleContext.identity(n) if ctx is None else ctx
    if phi_in is None:
        phi_in = fiber_point(ctx, sigma_in)
    theta = np.asarray(theta, dtype=float)
    if np.linalg.norm(congruence(theta, ctx.sigma_ref) - ctx.sigma_ref) > 1e-10 * np.linalg.norm(ctx.sigma_ref):
        raise PreconditionError("theta does not fix sigma_ref")
    T = monge_map(sigma_in, sigma_fn)
    return T @ phi_in @ theta @ np.linalg.inv(phi_in)


def _mccann_momenta(sigma_in, sigma_fn):
    """Covariance velocity at ``t = 0`` of the McCann geodesic."""
    A0 = monge_map(sigma_in, sigma_fn) - np.eye(sigma_in.shape[0])
    return A0 @ sigma_in + sigma_in @ A0


def _shoot(problem, p):
    """Terminal factors for a batch of parameter vectors; NaN where the flow broke down."""
    Pi, Om = _unpack(p, problem.dim)
    phi0 = np.broadcast_to(problem.phi_in, Pi.shape).copy()
    M = -Pi - Om
    lam0 = np.swapaxes(np.linalg.solve(phi0, np.swapaxes(M, -1, -2)), -1, -2)
    phi1, _, _, broken = _integrate(problem.ctx.sigma_ref, phi0, lam0, problem.steps, store=False)
    phi1 = np.where(np.isnan(broken)[..., None, None], phi1, np.nan)
    return phi1


def _levenberg_marquardt(problem, p, target, stage):
    """Damped Gauss-Newton with forward-difference Jacobian. Returns ``(p, residual, iters)``."""
    m = p.size
    mu = 1e-3
    F = (_shoot(problem, p[None])[0] - target).ravel()
    r = np.linalg.norm(F) if np.all(np.isfinite(F)) else np.inf
    if not np.isfinite(r):
        raise NonConvergenceError(f"stage {stage}: flow breaks down at the initial guess", residual=r, stage=stage)
    it = 0
    while r > problem.tol and it < problem.max_iters:
        it += 1
        step = 1e-6 * (1.0 + np.linalg.norm(p))
        P = p[None, :] + step * np.eye(m)
        Fj = (_shoot(problem, P) - target).reshape(m, -1)
        J = ((Fj - F[None, :]) / step).T
        if not np.all(np.isfinite(J)):
            raise NonConvergenceError(f"stage {stage}: Jacobian evaluation left GL+(n)", residual=r, stage=stage)
        JtJ, JtF = J.T @ J, J.T @ F
        while True:
            delta = np.linalg.solve(JtJ + mu * np.eye(m), -JtF)
            Fn = (_shoot(problem, (p + delta)[None])[0] - target).ravel()
            rn = np.linalg.norm(Fn) if np.all(np.isfinite(Fn)) else np.inf
            if rn < r:
                p, F, r = p + delta, Fn, rn
                mu = max(mu / 10.0, 1e-12)
                break
            mu *= 10.0
            if mu > 1e12:
                raise NonConvergenceError(
                    f"stage {stage}: damping exhausted with residual {r:.3g}", residual=r, stage=stage
                )
        log.debug("stage %d iter %d residual %.3e mu %.1e", stage, it, r, mu)
    if r > problem.tol:
        raise NonConvergenceError(
            f"stage {stage}: no convergence in {problem.max_iters} iterations (best residual {r:.3g})",
            residual=r,
            stage=stage,
        )
    return p, r, it


#: Monge maps closer than this to the identity make the McCann start degenerate.
_DEGENERATE_TOL = 1e-6
#: Eigenvalue ratio of the auxiliary endpoint used when the start is degenerate.
_AUX_STRETCH = 2.25


def _auxiliary_endpoint(sigma_in):
    n = sigma_in.shape[0]
    r = sym_sqrt(sigma_in)
    E = np.diag([_AUX_STRETCH ** (1 - 2 * (k % 2)) for k in range(n)])
    return symmetrize(r @ E @ r)


def _continuation_targets(problem):
    """Initial momenta and the sequence of terminal factors to hit, ending at ``phi_des @ phi_in``.

    Regular case: the holonomy gap ``G = phi_des @ inv(T)`` is switched on
    along ``exp(s log G)``. When ``sigma_fn`` is (numerically) ``sigma_in``
    the McCann start is a constant curve whose Jacobian misses every
    rotation, so the same fiber rotation is first realized towards an
    auxiliary endpoint, which is then walked back along a McCann geodesic.
    """
    n, m = problem.dim, problem.continuation_steps
    phi_in = problem.phi_in
    T = monge_map(problem.sigma_in, problem.sigma_fn)
    final = problem.phi_des @ phi_in
    gap = problem.phi_des @ np.linalg.inv(T)
    grid = np.linspace(0.0, 1.0, m + 1)[1:]
    if np.linalg.norm(gap - np.eye(n)) <= 1e-14:
        return _mccann_momenta(problem.sigma_in, problem.sigma_fn), [final]
    if np.linalg.norm(T - np.eye(n)) > _DEGENERATE_TOL:
        log_gap = np.real(logm(gap))
        targets = [expm(s * log_gap) @ T @ phi_in for s in grid[:-1]] + [final]
        return _mccann_momenta(problem.sigma_in, problem.sigma_fn), targets
    # fiber rotation relative to the McCann endpoint, kept fixed during the endpoint walk
    rot = np.linalg.solve(T @ phi_in, final)
    aux = _auxiliary_endpoint(problem.sigma_in)
    T_aux = monge_map(problem.sigma_in, aux)
    log_gap = np.real(logm(T_aux @ phi_in @ rot @ np.linalg.inv(T_aux @ phi_in)))
    targets = [expm(s * log_gap) @ T_aux @ phi_in for s in grid]
    g = mccann(aux, problem.sigma_fn)
    for tau in grid[:-1]:
        targets.append(monge_map(problem.sigma_in, mccann_point(g, tau)) @ phi_in @ rot)
    targets.append(final)
    return _mccann_momenta(problem.sigma_in, aux), targets


def imt_solve(problem, initial=None):
    """Solve an isoparallel transport problem by shooting with continuation.

    The unknowns are the initial momenta ``(Pi_0, Omega_0)``. Starting from
    the McCann geodesic (``Omega_0 = 0``), the holonomy gap
    ``G = phi_des @ inv(T)`` is switched on along ``exp(s log G) @ T`` for
    ``s`` on a uniform grid of ``continuation_steps`` stages; each stage is
    solved by Levenberg-Marquardt on the terminal factor mismatch. Loops
    (``sigma_fn == sigma_in``) are reached through an auxiliary endpoint, see
    :func:`_continuation_targets`.

    Parameters
    ----------
    problem : ImtProblem
    initial : tuple of ndarray, optional
        ``(Pi_0, Omega_0)`` to start from; the problem is then solved in one
        stage without continuation.

    Returns
    -------
    ImtSolution

    Raises
    ------
    NonConvergenceError
        If a stage fails; ``stage`` and the best residual are attached.
    """
    n = problem.dim
    pi0, targets = _continuation_targets(problem)
    p = _pack(pi0, np.zeros((n, n)))
    if initial is not None:
        p = _pack(symmetrize(np.asarray(initial[0], float)), skew_part(np.asarray(initial[1], float)))
        targets = targets[-1:]
    total_iters = 0
    first = 0 if len(targets) == 1 else 1
    for stage, target in enumerate(targets, start=first):
        p, _, it = _levenberg_marquardt(problem, p, target, stage)
        total_iters += it
    Pi0, Om0 = _unpack(p, n)
    lam0 = costate_from_momenta(problem.phi_in, Pi0, Om0)
    traj = geodesic_flow(problem.ctx, problem.phi_in, lam0, problem.steps)
    sigmas = congruence(traj.phi, problem.ctx.sigma_ref)
    vel = traj.controls @ sigmas + sigmas @ traj.controls
    curve = CovCurve(sigmas, velocities=vel)
    lift = HorizontalLift(curve, traj.phi, traj.controls, problem.ctx)
    residual = float(np.linalg.norm(traj.phi[-1] - problem.phi_des @ problem.phi_in))
    return ImtSolution(
        lift=lift,
        lambda0=lam0,
        pi0=Pi0,
        omega=Om0,
        length=curve_length(problem.ctx, curve),
        residual=residual,
        problem=problem,
        trajectory=traj,
        iterations=total_iters,
    )


def geodesic_equation_residual(samples, omega):
    """Max interior Frobenius residual of the isoparallel geodesic equation.

    With ``L = L_S(dS)``, the equation reads
    ``ddS - (S L^2 + L^2 S) = Omega L - L Omega``. Both derivatives come from
    second-order centred differences of ``samples`` on the uniform grid.
    """
    S = np.asarray(samples, dtype=float)
    K = S.shape[0] - 1
    if K < 2:
        raise UsageError("need at least three samples")
    h = 1.0 / K
    Si = S[1:-1]
    dS = (S[2:] - S[:-2]) / (2.0 * h)
    ddS = (S[2:] - 2.0 * Si + S[:-2]) / h**2
    L = lyapunov_solve(Si, dS)
    L2 = L @ L
    lhs = ddS - (Si @ L2 + L2 @ Si)
    rhs = omega @ L - L @ omega
    return float(np.max(np.linalg.norm(lhs - rhs, axis=(1, 2))))


def necessary_conditions_residual(solution):
    """Residual of the first-order optimality equation along a solved curve."""
    return geodesic_equation_residual(solution.curve.samples, solution.omega)


def isoholonomic_transform(solution, theta):
    """Rotate a solved curve pointwise by ``theta``.

    ``theta`` must be orthogonal with unit determinant and fix ``sigma_in``;
    the rotated curve then has the same length and solves the rotated
    problem, whose conserved skew momentum is ``theta @ omega @ theta.T``.

    Raises
    ------
    PreconditionError
        If ``theta`` is not in the isotropy group of ``sigma_in``.
    """
    theta = np.asarray(theta, dtype=float)
    s_in = solution.problem.sigma_in
    n = s_in.shape[0]
    res = max(
        np.linalg.norm(theta @ theta.T - np.eye(n)),
        np.linalg.norm(congruence(theta, s_in) - s_in) / np.linalg.norm(s_in),
        abs(np.linalg.det(theta) - 1.0),
    )
    if res > 1e-10:
        raise PreconditionError(f"theta is not a rotation fixing sigma_in (residual {res:.3g})", residual=res)
    return solution.curve.congruent(theta)
