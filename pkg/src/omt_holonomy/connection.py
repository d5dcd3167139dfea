"""The principal bundle of transport factors over covariances.

A factor ``Phi`` (a matrix with positive determinant) projects to the
covariance ``Phi @ sigma_ref @ Phi.T``. Horizontal motion is motion with a
symmetric generator ``dPhi @ inv(Phi)``, i.e. transport by potential forces.
Lifting a covariance curve horizontally yields particle state-transition
matrices; the end-to-end factor is the parallel transport, and for closed
curves it is the holonomy.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

from .errors import PreconditionError, UsageError
from .numerics import (
    check_spd,
    check_transport_factor,
    congruence,
    lyapunov_solve,
    sym_inv_sqrt,
    sym_sqrt,
    symmetrize,
)

__all__ = [
    "BundleContext",
    "CovCurve",
    "HorizontalLift",
    "LOOP_TOL",
    "project",
    "fiber_point",
    "horizontal_lift",
    "transition_factors",
    "parallel_transport",
    "otto_metric",
    "sr_metric",
    "curve_length",
    "lift_length",
    "l2_distance",
    "bracket_span_rank",
    "curve_velocities",
]

#: Relative closure tolerance for treating a curve as a loop.
LOOP_TOL = 1e-8
#: Stencil width used for derivatives and midpoint interpolation.
_STENCIL = 5


@dataclass(frozen=True)
class BundleContext:
    """Reference covariance defining the projection ``Phi -> Phi # sigma_ref``."""

    sigma_ref: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigma_ref", check_spd(self.sigma_ref, "sigma_ref"))

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @property
    def dim(self):
        return self.sigma_ref.shape[0]


@dataclass(frozen=True)
class CovCurve:
    """A covariance curve sampled on the uniform grid ``t_k = k / K``.

    Parameters
    ----------
    samples : ndarray, shape (K + 1, n, n)
        SPD covariance samples.
    breaks : tuple of int
        Interior sample indices where the curve may have a corner (for
        example the vertices of a polygon). Derivatives are never taken
        across a break.
    velocities : ndarray, shape (K + 1, n, n), optional
        Exact time derivatives, used instead of finite differences when given.
        At a break this is the derivative of the segment ending there.
    break_velocities : ndarray, shape (len(breaks), n, n), optional
        Derivatives of the segments starting at each break.
    """

    samples: np.ndarray
    breaks: tuple = ()
    velocities: np.ndarray = field(default=None, repr=False)
    break_velocities: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 3 or s.shape[1] != s.shape[2] or s.shape[0] < 2:
            raise UsageError(f"samples must have shape (K+1, n, n) with K >= 1, got {s.shape}")
        w = np.linalg.eigvalsh(symmetrize(s))
        if np.any(w[:, 0] <= 0):
            k = int(np.argmin(w[:, 0]))
            raise PreconditionError(f"sample {k} is not positive definite", residual=float(w[k, 0]))
        object.__setattr__(self, "samples", symmetrize(s))
        br = tuple(sorted(set(int(b) for b in self.breaks)))
        if any(b <= 0 or b >= s.shape[0] - 1 for b in br):
            raise UsageError("breaks must be interior sample indices")
        object.__setattr__(self, "breaks", br)
        if self.velocities is not None:
            v = np.asarray(self.velocities, dtype=float)
            if v.shape != s.shape:
                raise UsageError("velocities must match samples in shape")
            object.__setattr__(self, "velocities", symmetrize(v))
            bv = self.break_velocities
            if bv is None:
                bv = v[list(br)] if br else np.zeros((0,) + s.shape[1:])
            bv = np.asarray(bv, dtype=float)
            if bv.shape != (len(br),) + s.shape[1:]:
                raise UsageError("break_velocities must hold one matrix per break")
            object.__setattr__(self, "break_velocities", symmetrize(bv))

    @property
    def steps(self):
        return self.samples.shape[0] - 1

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def grid(self):
        return np.linspace(0.0, 1.0, self.steps + 1)

    @property
    def h(self):
        return 1.0 / self.steps

    def segments(self):
        """``(start, stop)`` index pairs of the smooth pieces, inclusive of both ends."""
        cuts = (0,) + self.breaks + (self.steps,)
        return list(zip(cuts[:-1], cuts[1:]))

    def is_closed(self, rtol=LOOP_TOL):
        s0, sK = self.samples[0], self.samples[-1]
        return np.linalg.norm(sK - s0) <= rtol * np.linalg.norm(s0)

    @classmethod
    def from_function(cls, fn, steps, velocity=None):
        """Sample ``fn(t)`` (and optionally ``velocity(t)``) on the uniform grid."""
        ts = np.linspace(0.0, 1.0, steps + 1)
        samples = np.array([fn(t) for t in ts])
        vel = None if velocity is None else np.array([velocity(t) for t in ts])
        return cls(samples, velocities=vel)

    @classmethod
    def concatenate(cls, curves):
        """Join curves end to start, each piece keeping its own number of steps.

        The joined curve is reparameterized onto ``[0, 1]``; junctions become
        breaks. Exact velocities, if every piece has them, are rescaled.
        """
        curves = list(curves)
        if not curves:
            raise UsageError("nothing to concatenate")
        for a, b in zip(curves[:-1], curves[1:]):
            if np.linalg.norm(a.samples[-1] - b.samples[0]) > 1e-8 * np.linalg.norm(b.samples[0]):
                raise UsageError("consecutive curves do not meet")
        total = sum(c.steps for c in curves)
        exact = all(c.velocities is not None for c in curves)
        samples, vel, breaks, outgoing = [curves[0].samples[:1]], [], [], []
        if exact:
            vel.append(curves[0].velocities[:1] * total / curves[0].steps)
        pos = 0
        for idx, c in enumerate(curves):
            scale = total / c.steps  # piece runs over steps/total of unit time
            if idx:
                breaks.append(pos)
                if exact:
                    outgoing.append(c.velocities[0] * scale)
            breaks.extend(pos + b for b in c.breaks)
            samples.append(c.samples[1:])
            if exact:
                outgoing.extend(c.break_velocities * scale)
                vel.append(c.velocities[1:] * scale)
            pos += c.steps
        samples = np.concatenate(samples)
        if not exact:
            return cls(samples, breaks=tuple(breaks))
        order = np.argsort(breaks)
        bv = np.array(outgoing)[order] if breaks else None
        return cls(samples, tuple(sorted(breaks)), np.concatenate(vel), bv)

    def congruent(self, theta):
        """Pointwise congruence ``theta # samples``."""
        if self.velocities is None:
            return CovCurve(congruence(theta, self.samples), self.breaks)
        return CovCurve(
            congruence(theta, self.samples),
            self.breaks,
            congruence(theta, self.velocities),
            congruence(theta, self.break_velocities),
        )


@dataclass(frozen=True)
class HorizontalLift:
    """Horizontal lift of ``curve`` through the factor ``factors[0]``."""

    curve: CovCurve
    factors: np.ndarray
    controls: np.ndarray
    ctx: BundleContext = None


@lru_cache(maxsize=None)
def _weights(offsets, x0, m):
    """Weights ``w`` with ``sum w_i f(offsets_i) ~ f^(m)(x0)`` on a unit grid."""
    x = np.asarray(offsets, dtype=float) - x0
    p = len(x)
    V = np.vander(x, p, increasing=True).T
    rhs = np.zeros(p)
    rhs[m] = float(np.prod(np.arange(1, m + 1)))
    return np.linalg.solve(V, rhs)


def _stencil(i, lo, hi, width):
    """Integer offsets (relative to i) of a width-point stencil inside [lo, hi]."""
    width = min(width, hi - lo + 1)
    start = min(max(i - width // 2, lo), hi - width + 1)
    return tuple(range(start - i, start - i + width))


def _apply(X, offsets, w, idx):
    """``sum_j w_j X[idx + offsets_j]`` for an array of indices."""
    return sum(wj * X[idx + o] for wj, o in zip(w, offsets))


def _segment_derivative(S, h, m, width=_STENCIL):
    """``m``-th derivative of uniformly sampled ``S`` with ``width``-point stencils."""
    n = len(S)
    out = np.empty_like(S)
    width = min(width, n)
    half = width // 2
    lo, hi = half, n - (width - half)  # interior indices use the centred stencil
    if hi >= lo:
        off = tuple(range(-half, width - half))
        idx = np.arange(lo, hi + 1)
        out[idx] = _apply(S, off, _weights(off, 0.0, m), idx)
    for i in [*range(0, min(lo, n)), *range(max(hi + 1, lo), n)]:
        off = _stencil(i, 0, n - 1, width)
        out[i] = _apply(S, off, _weights(off, 0.0, m), i)
    return out / h**m


def _segment_midpoints(X, width=4):
    """Values at ``k + 1/2`` interpolated from samples ``X[k]`` with ``width``-point polynomials."""
    n = len(X)
    width = min(width, n)
    out = np.empty((n - 1,) + X.shape[1:])
    back = width // 2 - 1
    for_all = tuple(range(-back, width - back))
    lo, hi = back, n - width + back  # k range where the centred window fits
    if hi >= lo:
        idx = np.arange(lo, hi + 1)
        out[idx] = _apply(X, for_all, _weights(for_all, 0.5, 0), idx)
    for k in [*range(0, min(lo, n - 1)), *range(max(hi + 1, lo), n - 1)]:
        start = min(max(k - back, 0), n - width)
        off = tuple(range(start - k, start - k + width))
        out[k] = _apply(X, off, _weights(off, 0.5, 0), k)
    return out


def _segment_velocity(curve, a, b):
    if curve.velocities is not None:
        v = curve.velocities[a:b + 1].copy()
        if a in curve.breaks:
            v[0] = curve.break_velocities[curve.breaks.index(a)]
        return v
    return symmetrize(_segment_derivative(curve.samples[a:b + 1], curve.h, 1))


def curve_velocities(curve):
    """Time derivative of the curve at every sample.

    Uses exact velocities when the curve carries them, otherwise fourth-order
    finite differences computed separately on each smooth segment. At a break
    the value from the segment ending there is reported.
    """
    out = np.empty_like(curve.samples)
    for a, b in curve.segments():
        out[a:b + 1] = _segment_velocity(curve, a, b)
    return out


def _segment_controls(curve):
    """Per segment: (controls at samples, controls at midpoints)."""
    out = []
    for a, b in curve.segments():
        A = lyapunov_solve(curve.samples[a:b + 1], _segment_velocity(curve, a, b))
        out.append((A, symmetrize(_segment_midpoints(A))))
    return out


def transition_factors(curve):
    """Solve ``dPhi/dt = A_t Phi`` with ``Phi_0 = I`` along ``curve``.

    Returns ``(factors, controls)`` on the sample grid. Fixed-step classical
    Runge-Kutta; controls at half steps are interpolated to fourth order.
    """
    n, h = curve.dim, curve.h
    factors = np.empty((curve.steps + 1, n, n))
    controls = np.empty_like(factors)
    phi = np.eye(n)
    factors[0] = phi
    for (a, b), (A, Am) in zip(curve.segments(), _segment_controls(curve)):
        controls[a:b + 1] = A
        for j in range(b - a):
            A0, A1, Ah = A[j], A[j + 1], Am[j]
            k1 = A0 @ phi
            k2 = Ah @ (phi + 0.5 * h * k1)
            k3 = Ah @ (phi + 0.5 * h * k2)
            k4 = A1 @ (phi + h * k3)
            phi = phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            factors[a + j + 1] = phi
    return factors, controls


def project(ctx, phi):
    """Bundle projection ``phi # sigma_ref``."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape[-1] != ctx.dim:
        raise UsageError("factor and reference covariance differ in dimension")
    return congruence(phi, ctx.sigma_ref)


def fiber_point(ctx, sigma):
    """A canonical factor above ``sigma``: ``sigma^{1/2} sigma_ref^{-1/2}``."""
    return sym_sqrt(sigma) @ sym_inv_sqrt(ctx.sigma_ref)


def horizontal_lift(ctx, curve, phi_in=None, tol=1e-8):
    """Horizontal lift of ``curve`` starting at ``phi_in``.

    Parameters
    ----------
    ctx : BundleContext
    curve : CovCurve
    phi_in : ndarray, optional
        Initial factor in the fiber above ``curve.samples[0]``; defaults to
        :func:`fiber_point`.
    tol : float
        Relative tolerance for the fiber membership check.

    Raises
    ------
    PreconditionError
        If ``phi_in`` does not project onto the first sample.
    """
    if curve.dim != ctx.dim:
        raise UsageError("curve and context differ in dimension")
    s0 = curve.samples[0]
    if phi_in is None:
        phi_in = fiber_point(ctx, s0)
    phi_in = check_transport_factor(phi_in, "phi_in")
    res = np.linalg.norm(project(ctx, phi_in) - s0) / max(1.0, np.linalg.norm(s0))
    if res > tol:
        raise PreconditionError(f"phi_in is off the initial fiber (residual {res:.3g})", residual=res)
    trans, controls = transition_factors(curve)
    return HorizontalLift(curve, trans @ phi_in, controls, ctx)


def parallel_transport(ctx, curve):
    """End-to-end transport factor of ``curve`` (``Phi_1`` with ``Phi_0 = I``).

    The horizontal ODE is linear, so this single matrix transports every
    point of the initial fiber.
    """
    trans, _ = transition_factors(curve)
    return trans[-1]


def otto_metric(sigma, v1, v2):
    """Wasserstein-Otto inner product of two tangent vectors at ``sigma``."""
    a1 = lyapunov_solve(sigma, v1)
    a2 = lyapunov_solve(sigma, v2)
    return float(np.trace(a1 @ sigma @ a2))


def sr_metric(ctx, dphi1, dphi2):
    """Sub-Riemannian inner product ``trace(dphi1 @ sigma_ref @ dphi2.T)``."""
    return float(np.trace(np.asarray(dphi1) @ ctx.sigma_ref @ np.asarray(dphi2).T))


def _trapezoid(values, h):
    return h * (values.sum() - 0.5 * (values[0] + values[-1]))


def curve_length(ctx, curve):
    """Otto length of a covariance curve (composite trapezoid rule per segment).

    ``ctx`` is accepted for symmetry with the lifted quantities; the base
    metric does not depend on the reference covariance.
    """
    total = 0.0
    for a, b in curve.segments():
        S = curve.samples[a:b + 1]
        A = lyapunov_solve(S, _segment_velocity(curve, a, b))
        sq = np.einsum("kij,kjl,kli->k", A, S, A)
        total += _trapezoid(np.sqrt(np.maximum(sq, 0.0)), curve.h)
    return float(total)


def lift_length(lift):
    """Sub-Riemannian length of a lifted curve, computed from its factors.

    Uses ``dPhi = A Phi`` at each sample and the context's reference
    covariance, so it exercises the bundle metric rather than the base one.
    """
    dphi = lift.controls @ lift.factors
    sq = np.einsum("kij,jl,kil->k", dphi, lift.ctx.sigma_ref, dphi)
    sp = np.sqrt(np.maximum(sq, 0.0))
    return float(sum(_trapezoid(sp[a:b + 1], lift.curve.h) for a, b in lift.curve.segments()))


def l2_distance(ctx, phi1, phi2):
    """Distance of the flat metric extending the sub-Riemannian one to all directions."""
    D = np.asarray(phi1, dtype=float) - np.asarray(phi2, dtype=float)
    return float(np.sqrt(max(0.0, np.trace(D @ ctx.sigma_ref @ D.T))))


def _sym_basis(n):
    basis = []
    for i, j in combinations_with_replacement(range(n), 2):
        E = np.zeros((n, n))
        E[i, j] = E[j, i] = 1.0
        basis.append(E)
    return basis


def bracket_span_rank(n):
    """Dimension of the span of symmetric matrices and their commutators.

    Equal to ``n**2`` exactly when the horizontal distribution generates the
    whole tangent space with a single layer of brackets.
    """
    if n < 2:
        raise UsageError("bracket_span_rank needs n >= 2")
    basis = _sym_basis(n)
    vecs = [B.ravel() for B in basis]
    for i, B in enumerate(basis):
        for C in basis[i + 1:]:
            vecs.append((B @ C - C @ B).ravel())
    return int(np.linalg.matrix_rank(np.array(vecs)))
