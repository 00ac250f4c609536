import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ektau import equations as eq
from ektau import surface as sf
from ektau.space import SpaceParams
from conftest import GRID, TWISTED, euclidean_sphere, small_sphere


def frame_points(surface, n=30, seed=0, min_sin=1e-2):
    uv = sf.sample_frame_points(surface, n, np.random.default_rng(seed), min_cos=0.05, min_sin=min_sin, min_grad=1e-6)
    d = sf.point_data(surface, uv[:, 0], uv[:, 1])
    return d.take(np.abs(np.sin(d.phi)) > 1e-2)


def tangent(d, seed=1):
    t = np.random.default_rng(seed).uniform(0, 2 * np.pi, len(d.E))
    return np.cos(t)[:, None] * d.eps1 + np.sin(t)[:, None] * d.eps2


@pytest.mark.parametrize("P", GRID)
def test_dtheta_identity_holds(P):
    s = small_sphere(P.k, P.tau)
    d = frame_points(s)
    assert eq.residual_eq1(s, d, tangent(d)).max_relative < 1e-6


@pytest.mark.parametrize("P", GRID)
def test_alpha_e2_holds_only_with_the_plus_tau_sign(P):
    s = small_sphere(P.k, P.tau)
    d = frame_points(s)
    X = tangent(d)
    assert eq.residual_alpha_e2(s, d, X, sign=+1).max_relative < 1e-6
    other = eq.residual_alpha_e2(s, d, X, sign=-1).max_relative
    if P.tau == 0:
        assert other < 1e-6
    else:
        assert other > 1e-2


@pytest.mark.parametrize("P", GRID)
def test_frame_components_of_alpha(P):
    d = frame_points(small_sphere(P.k, P.tau))
    for rep in eq.residual_alpha_frame(d):
        assert rep.max_relative < 1e-10
    np.testing.assert_allclose(
        eq.alpha22_from_frame(d.grad_theta_norm, d.phi, P.tau, d.K_e), d.alpha22, rtol=1e-9
    )


@pytest.mark.parametrize("P", GRID)
def test_alpha_against_v_and_Jv(P):
    d = frame_points(small_sphere(P.k, P.tau))
    for rep in (*eq.residual_eq2_eq3(d), *eq.residual_eq4_eq6(d)):
        assert rep.max_relative < 1e-9, rep.equation
    assert max(r.max_relative for r in eq.residual_eq2_eq3(d, corrected=False)) > 1e-2


@pytest.mark.parametrize("P", GRID)
def test_connection_form_expressions(P):
    s = small_sphere(P.k, P.tau)
    d = frame_points(s, n=20)
    for rep in eq.residual_eq5_eq7(s, d):
        assert rep.max_relative < 1e-6, rep.equation


@pytest.mark.parametrize("P", GRID)
def test_phi_transport_equations_match_differenced_phi(P):
    s = small_sphere(P.k, P.tau)
    d = frame_points(s, n=20)
    for direction in ("v", "Jv"):
        assert eq.residual_ode(s, d, direction).max_relative < 1e-4
        flipped = eq.residual_ode(s, d, direction, sign=-1).max_relative
        assert (flipped < 1e-4) if P.tau == 0 else (flipped > 1e-3)


def test_phi_is_constant_on_the_euclidean_sphere():
    s = euclidean_sphere()
    d = frame_points(s, n=10)
    np.testing.assert_allclose(eq.ode_rhs_v(s, d), 0.0, atol=1e-8)
    np.testing.assert_allclose(eq.ode_rhs_Jv(s, d), 0.0, atol=1e-8)


@pytest.mark.parametrize("P", GRID)
def test_phi_constraint(P):
    d = frame_points(small_sphere(P.k, P.tau))
    res = eq.fact3_quadratic(d)
    assert res.identity.max_relative < 1e-9
    assert res.linear_form.max_relative < 1e-9
    assert all(len(r) <= 2 for r in res.roots)
    assert np.all(res.phi_is_root)
    if P.tau != 0:
        assert eq.fact3_quadratic(d, b_sign=+1).linear_form.max_relative > 1e-3


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_sincos_roots_solve_the_equation(A, B, C):
    assume(np.hypot(A, B) > 1e-6)
    roots = eq.sincos_roots(A, B, C)
    assert len(roots) <= 2
    for r in roots:
        assert abs(A * np.sin(r) + B * np.cos(r) + C) < 1e-9 * (1 + abs(A) + abs(B) + abs(C))
        assert -np.pi <= r <= np.pi
    if abs(C) < 0.99 * np.hypot(A, B):
        assert len(roots) == 2
    if abs(C) > 1.01 * np.hypot(A, B):
        assert len(roots) == 0


def test_sincos_roots_degenerate_cases():
    with pytest.raises(eq.InconsistentData):
        eq.sincos_roots(0.0, 0.0, 0.0)
    assert eq.sincos_roots(0.0, 0.0, 1.0).size == 0
    np.testing.assert_allclose(eq.sincos_roots(1.0, 0.0, -1.0), [np.pi / 2])


def test_solve_theta():
    P = SpaceParams(0, 0.5)
    # K = K_e + tau^2 + (k - 4 tau^2) nu^2 with nu = 0.6
    K = 3.0 + 0.25 - 1.0 * 0.36
    np.testing.assert_allclose(eq.solve_theta(K, 3.0, P), [-0.6, 0.6])
    np.testing.assert_allclose(eq.solve_theta(3.25, 3.0, P), [0.0])
    with pytest.raises(eq.InconsistentData):
        eq.solve_theta(10.0, 3.0, P)
    with pytest.raises(eq.DegenerateSpace):
        eq.solve_theta(1.0, 1.0, SpaceParams(1, 0.5))


@pytest.mark.parametrize("P", [p for p in GRID if not p.degenerate])
def test_gauss_inversion_recovers_nu_up_to_sign(P):
    s = small_sphere(P.k, P.tau)
    uv = sf.sample_interior(s, 5, np.random.default_rng(9))
    d = sf.fundamental_forms(s, uv)
    for K, K_e, g in zip(d.K, d.K_e, d.g):
        roots = eq.solve_theta(K, K_e, P, tol=1e-6)
        assert np.min(np.abs(roots - g)) < 1e-4


def vertical_point(surface):
    uv = sf.sample_interior(surface, 400, np.random.default_rng(0))
    return uv[np.argmin(np.abs(sf.point_data(surface, uv[:, 0], uv[:, 1]).g))]


def test_vertical_section_of_the_euclidean_sphere_is_a_great_circle():
    s = euclidean_sphere()
    res = eq.lemma1_check(s, vertical_point(s))
    assert abs(res.k_C - 0.5) < 1e-6
    assert abs(res.dg_xi + 0.5) < 1e-6
    assert res.submersion


@pytest.mark.parametrize("P", GRID)
def test_dg_of_xi_is_minus_the_section_curvature(P):
    s = small_sphere(P.k, P.tau)
    res = eq.lemma1_check(s, vertical_point(s))
    assert res.k_C > 0
    assert res.signed_residual < 1e-6
    np.testing.assert_allclose(res.stated_residual, 2 * res.k_C, rtol=1e-6)


def test_lemma1_check_needs_a_vertical_point():
    s = euclidean_sphere()
    hp = sf.find_horizontal_points(s)
    with pytest.raises(Exception):
        eq.lemma1_check(s, hp.points[0])


@pytest.mark.parametrize("P", [p for p in GRID if not p.degenerate])
def test_horizontal_point_jacobian(P):
    s = small_sphere(P.k, P.tau)
    for q in sf.find_horizontal_points(s).points:
        res = eq.lemma2_check(s, q)
        assert res.derived_error < 1e-6
        np.testing.assert_allclose(res.det, res.K_e + P.tau**2, rtol=1e-6)
        assert res.det > 0
        if P.tau != 0:
            assert res.stated_error > 0.5


def test_lemma2_check_needs_a_horizontal_point():
    with pytest.raises(ValueError):
        eq.lemma2_check(small_sphere(0, 0.5), np.array([0.3, 0.2]))


def test_alpha_e2_refuses_vertical_points():
    s = small_sphere(0, 0.5)
    uv = vertical_point(s)
    uv = np.array([uv])
    d = sf.point_data(s, uv[:, 0], uv[:, 1])
    with pytest.raises(eq.SingularConfiguration):
        eq.residual_alpha_e2(s, d, d.eps1, min_sin=0.05)


def test_residual_report_rows():
    d = frame_points(small_sphere(0, 0.5), n=3)
    rows = list(eq.residual_eq4_eq6(d)[0].rows("s"))
    assert len(rows) == len(d.E)
    assert set(rows[0]) == {"equation", "surface", "u", "v", "left", "right", "abs_residual", "scale", "rel_residual"}
