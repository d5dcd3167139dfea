"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

import cases
import oracles
from cases import OMEGA, SIGMA_FN, SIGMA_IN, THETA, VERTICES
from omt_holonomy import (
    BundleContext,
    CovCurve,
    bracket_span_rank,
    congruence,
    curve_length,
    fiber_point,
    geodesic_equation_residual,
    hamiltonian,
    horizontal_lift,
    isoholonomic_transform,
    l2_distance,
    lift_length,
    mccann_samples,
    monge_map,
    monge_map_alt,
    necessary_conditions_residual,
    parallel_transport,
    rotation_angle,
    skew_exp,
    transition_factors,
    triangle_curve,
    triangle_holonomy,
    w2,
    ac_barycenter,
    alm_mean,
)


def _fiber_rotation(sol):
    T = monge_map(sol.problem.sigma_in, sol.problem.sigma_fn)
    return np.linalg.solve(T @ sol.problem.phi_in, sol.lift.factors[-1])


def test_criterion_1_monge_suite(criterion):
    rng = np.random.default_rng(1)
    push = alt = 0.0
    for k in range(1000):
        n = (2, 3, 5)[k % 3]
        a, b = oracles.random_spd(rng, n), oracles.random_spd(rng, n)
        T = monge_map(a, b)
        push = max(push, np.linalg.norm(T @ a @ T.T - b))
        alt = max(alt, np.linalg.norm(T - monge_map_alt(a, b)))
    axioms = 0.0
    for k in range(1000):
        n = (2, 3, 5)[k % 3]
        a, b, c = (oracles.random_spd(rng, n) for _ in range(3))
        dab, dbc, dac = w2(a, b), w2(b, c), w2(a, c)
        axioms = max(axioms, w2(a, a), abs(dab - w2(b, a)), dac - dab - dbc, -dab)
    ok = push < 1e-10 and alt < 1e-10 and axioms < 1e-10
    criterion(1, "Monge maps and W2 metric", ok,
              f"pushforward {push:.1e}, two forms {alt:.1e}, metric axiom violation {axioms:.1e}")


def test_criterion_2_lift_equals_monge(criterion):
    rng = np.random.default_rng(2)
    pairs = [(SIGMA_IN, SIGMA_FN)] + [(oracles.random_spd(rng, n), oracles.random_spd(rng, n)) for n in (2, 3, 5)]
    worst, ratios = 0.0, []
    for s0, s1 in pairs:
        ctx = BundleContext.identity(s0.shape[0])
        T = monge_map(s0, s1)

        def err(K):
            return np.linalg.norm(parallel_transport(ctx, CovCurve(mccann_samples(s0, s1, K)[1])) - T)

        worst = max(worst, err(1000))
        # coarse grids, where truncation rather than round-off dominates
        ratios.append(err(100) / err(200))
    ok = worst < 1e-6 and min(ratios) >= 8
    criterion(2, "parallel transport along McCann = Monge map", ok,
              f"max error {worst:.1e} at K=1000, min halving ratio {min(ratios):.1f}")


def test_criterion_3_length_equals_distance(criterion):
    rng = np.random.default_rng(3)
    pairs = [(SIGMA_IN, SIGMA_FN)] + [(oracles.random_spd(rng, n), oracles.random_spd(rng, n)) for n in (2, 3, 5)]
    gap = max(abs(curve_length(None, CovCurve(mccann_samples(a, b, 2000)[1])) - w2(a, b)) for a, b in pairs)
    criterion(3, "Otto length of McCann curves = W2", gap < 1e-5, f"max gap {gap:.1e} at K=2000")


def test_criterion_4_triangle_holonomy(criterion):
    K = 3000
    _, S = triangle_curve(*VERTICES, K)
    factors, _ = transition_factors(CovCurve(S, breaks=(K // 3, 2 * K // 3)))
    Th = factors[-1]
    closed = triangle_holonomy(*VERTICES)
    gap = np.linalg.norm(Th - closed)
    fix = np.linalg.norm(congruence(Th, VERTICES[0]) - VERTICES[0])
    det = abs(np.linalg.det(Th) - 1.0)
    mixing = np.linalg.norm(Th - np.eye(2))
    ok = gap < 1e-6 and fix < 1e-6 and det < 1e-6 and mixing > 0.01
    criterion(4, "triangle holonomy", ok,
              f"ODE vs closed form {gap:.1e}, isotropy {fix:.1e}, |det-1| {det:.1e}, |Theta-I| {mixing:.3f}")


def test_criterion_5_imt_reproduction(criterion):
    t0 = time.perf_counter()
    sol = cases.isoparallel(1000)
    t_iso = time.perf_counter() - t0
    fiber = _fiber_rotation(sol)
    angle = rotation_angle(fiber)
    t0 = time.perf_counter()
    loop = cases.isoholonomic(1000)
    t_hol = time.perf_counter() - t0
    closure = np.linalg.norm(loop.curve.samples[-1] - np.eye(2))
    tracer = loop.lift.factors[-1] @ np.array([1.0, 0.0])
    tracer_angle = np.arctan2(tracer[1], tracer[0])
    ok = (
        sol.residual < 1e-6
        and abs(abs(angle) - 0.5) < 1e-4
        and np.allclose(fiber, THETA, atol=1e-4)
        and loop.residual < 1e-6
        and closure < 1e-6
        and abs(abs(tracer_angle) - 0.5) < 1e-4
        and max(t_iso, t_hol) < 60
    )
    criterion(5, "isoparallel and isoholonomic transport", ok,
              f"residual {sol.residual:.1e}, fiber rotation {abs(angle):.6f} rad = {np.degrees(abs(angle)):.2f} deg, "
              f"loop closure {closure:.1e}, tracer rotation {abs(tracer_angle):.6f} rad, "
              f"solve times {t_iso:.0f}s/{t_hol:.0f}s")


def test_criterion_6_necessary_conditions(criterion):
    sol = cases.isoparallel(2000)
    res = necessary_conditions_residual(sol)
    _, S = mccann_samples(SIGMA_IN, SIGMA_FN, 2000)
    t = np.linspace(0.0, 1.0, 2001)[:, None, None]
    bumped = S + 0.5 * np.sin(np.pi * t) ** 2 * np.eye(2)
    neg = geodesic_equation_residual(bumped, np.zeros((2, 2)))
    ok = res < 1e-3 and neg > 0.1 and sol.residual < 1e-6
    criterion(6, "necessary optimality conditions", ok,
              f"solved curve {res:.1e} at K=2000, perturbed curve {neg:.2f}")


def test_criterion_7_barycenters(criterion):
    t0 = time.perf_counter()
    ac = ac_barycenter(VERTICES)
    alm = alm_mean(VERTICES)
    dt = time.perf_counter() - t0
    ac_ref = np.array([[1.154, -0.193], [-0.193, 0.741]])
    alm_ref = np.array([[0.864, -0.178], [-0.178, 0.622]])
    e_ac, e_alm = np.abs(ac - ac_ref).max(), np.abs(alm - alm_ref).max()
    ok = e_ac < 2e-3 and e_alm < 2e-3 and dt < 1.0
    criterion(7, "Agueh-Carlier and Ando-Li-Mathias references", ok,
              f"entrywise gaps {e_ac:.1e} / {e_alm:.1e}, {dt * 1e3:.0f} ms")


def test_criterion_8_polygon_perimeters(criterion):
    ac = cases.polygon("agueh_carlier")
    alm = cases.polygon("ando_li_mathias")
    hol = max(ac.holonomy_error, alm.holonomy_error)
    ok = abs(ac.perimeter - 3.567) <= 0.02 and abs(alm.perimeter - 3.573) <= 0.02 and hol < 1e-3
    criterion(8, "mixing-free polygon perimeters", ok,
              f"AC {ac.perimeter:.4f} (3.567), ALM {alm.perimeter:.4f} (3.573), |Par - I| {hol:.1e}")


def test_criterion_9_structure(criterion):
    ranks = [bracket_span_rank(n) for n in (2, 3, 4)]

    sol = cases.isoparallel(1000)
    ctx, tr = sol.problem.ctx, sol.trajectory
    H = [hamiltonian(ctx, p, l) for p, l in zip(tr.phi, tr.lam)]
    drift = float(np.ptp(H))

    ref = ((2.0, 0.3), (0.3, 1.0))
    invariance = abs(cases.isoholonomic(1000, ref).length - cases.isoholonomic(1000).length)

    rng = np.random.default_rng(9)
    worst, ratio = -np.inf, 0.0
    for k in range(100):
        n = (2, 3)[k % 2]
        ctx = BundleContext(oracles.random_spd(rng, n, cond=10))
        a, b = oracles.random_spd(rng, n), oracles.random_spd(rng, n)
        S = mccann_samples(a, b, 200)[1]
        if k % 4 >= 2:
            # McCann lifts are straight in factor space, where the bound is tight; bend half of them
            S = S + 0.3 * np.sin(np.pi * np.linspace(0.0, 1.0, 201))[:, None, None] ** 2 * np.eye(n)
        lift = horizontal_lift(ctx, CovCurve(S))
        d_r, length = l2_distance(ctx, lift.factors[0], lift.factors[-1]), lift_length(lift)
        worst = max(worst, d_r - length)
        # upper bound constant is unspecified; only recorded
        ratio = max(ratio, length / np.sqrt(d_r))

    loop = cases.isoholonomic(1000)
    fam = [curve_length(None, isoholonomic_transform(loop, skew_exp(np.array([[0.0, -a], [a, 0.0]]))))
           for a in np.linspace(0.0, np.pi, 8, endpoint=False)]
    spread = float(np.ptp(fam))

    ok = ranks == [4, 9, 16] and drift < 1e-8 and invariance < 1e-6 and worst <= 1e-10 and spread < 1e-10
    criterion(9, "structural properties", ok,
              f"bracket ranks {ranks}, H drift {drift:.1e}, reference invariance {invariance:.1e}, "
              f"max d_R - length {worst:.2e} (length/sqrt(d_R) <= {ratio:.2f}), family length spread {spread:.1e}")
