import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cases import TRIANGLE_HOLONOMY, VERTICES
from omt_holonomy import (
    DomainError,
    congruence,
    extension_interval,
    mccann,
    mccann_point,
    mccann_samples,
    mccann_velocity,
    monge_map,
    monge_map_alt,
    triangle_curve,
    triangle_holonomy,
    w2,
    w2_squared,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.sampled_from([2, 3, 5])


@given(seeds, dims)
@settings(max_examples=80, deadline=None)
def test_monge_map_against_oracle(seed, n):
    rng = np.random.default_rng(seed)
    s0, s1 = oracles.random_spd(rng, n), oracles.random_spd(rng, n)
    T = monge_map(s0, s1)
    assert np.allclose(T, T.T)
    assert np.all(np.linalg.eigvalsh(T) > 0)
    assert np.allclose(T, oracles.monge(s0, s1), rtol=1e-8, atol=1e-9)
    assert np.isclose(w2_squared(s0, s1), oracles.w2_squared(s0, s1), rtol=1e-8, atol=1e-10)


def test_monge_identity_and_inverse(rng):
    s0, s1 = oracles.random_spd(rng, 3), oracles.random_spd(rng, 3)
    assert np.allclose(monge_map(s0, s0), np.eye(3), atol=1e-12)
    assert np.allclose(monge_map(s1, s0) @ monge_map(s0, s1), np.eye(3), atol=1e-10)
    assert w2_squared(s0, s0) == pytest.approx(0.0, abs=1e-12)


def test_commuting_case_closed_forms():
    s0, s1 = np.diag([1.0, 4.0]), np.diag([9.0, 1.0])
    assert np.allclose(monge_map(s0, s1), np.diag([3.0, 0.5]))
    assert w2_squared(s0, s1) == pytest.approx((1 - 3) ** 2 + (2 - 1) ** 2)
    ext = extension_interval(mccann(s0, s1))
    # singular where 1 + t (m - 1) = 0 for m in {3, 0.5}
    assert ext.t_min == pytest.approx(-0.5)
    assert ext.t_max == pytest.approx(2.0)
    # same bounds from lam = eig(s0 inv(s1)), m = lam^-1/2
    lam = np.linalg.eigvals(s0 @ np.linalg.inv(s1)).real
    assert sorted(1.0 / (1.0 - lam**-0.5)) == pytest.approx([ext.t_min, ext.t_max])


def test_mccann_endpoints_and_domain(rng):
    s0, s1 = oracles.random_spd(rng, 3), oracles.random_spd(rng, 3)
    g = mccann(s0, s1)
    assert np.allclose(mccann_point(g, 0.0), s0)
    assert np.allclose(mccann_point(g, 1.0), s1, atol=1e-10)
    ext = extension_interval(g)
    assert ext.t_min < 0.0 and ext.t_max > 1.0
    if np.isfinite(ext.t_max):
        with pytest.raises(DomainError):
            mccann_point(g, ext.t_max + 0.1)
        inside = mccann_point(g, 0.5 * (1.0 + ext.t_max))
        assert np.all(np.linalg.eigvalsh(inside) > 0)
    if np.isfinite(ext.t_min):
        with pytest.raises(DomainError):
            mccann_point(g, ext.t_min - 0.1)


def test_degenerate_interval_flag():
    g = mccann(np.diag([1.0, 2.0]), np.diag([1.0, 8.0]))
    ext = extension_interval(g)
    assert ext.degenerate
    assert ext.t_min == pytest.approx(-1.0) and ext.t_max == np.inf


def test_mccann_velocity_is_log_derivative(rng):
    s0, s1 = oracles.random_spd(rng, 2), oracles.random_spd(rng, 2)
    g = mccann(s0, s1)
    t, h = 0.37, 1e-5
    dS = (mccann_point(g, t + h) - mccann_point(g, t - h)) / (2 * h)
    A = mccann_velocity(g, t)
    S = mccann_point(g, t)
    assert np.allclose(A, A.T)
    assert np.allclose(A @ S + S @ A, dS, atol=1e-7)


def test_mccann_samples_grid(rng):
    s0, s1 = oracles.random_spd(rng, 2), oracles.random_spd(rng, 2)
    ts, S = mccann_samples(s0, s1, 10)
    assert ts.shape == (11,) and S.shape == (11, 2, 2)
    assert np.allclose(S[-1], s1)


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_w2_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (oracles.random_spd(rng, 3) for _ in range(3))
    assert w2(a, c) <= w2(a, b) + w2(b, c) + 1e-10
    assert w2(a, b) == pytest.approx(w2(b, a), abs=1e-10)


def test_alt_form_agrees(rng):
    s0, s1 = oracles.random_spd(rng, 5), oracles.random_spd(rng, 5)
    assert np.allclose(monge_map(s0, s1), monge_map_alt(s0, s1), atol=1e-10)


def test_triangle_holonomy_frozen():
    Th = triangle_holonomy(*VERTICES)
    assert np.allclose(Th, TRIANGLE_HOLONOMY, atol=1e-12)
    assert np.allclose(congruence(Th, VERTICES[0]), VERTICES[0], atol=1e-12)
    assert np.linalg.det(Th) == pytest.approx(1.0)


def test_triangle_curve_is_closed():
    ts, S = triangle_curve(*VERTICES, 30)
    assert len(ts) == 31
    assert np.allclose(S[0], S[-1]) and np.allclose(S[10], VERTICES[1]) and np.allclose(S[20], VERTICES[2])
    with pytest.raises(ValueError):
        triangle_curve(*VERTICES, 31)
