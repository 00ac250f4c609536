import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ektau import examples as ex
from ektau import surface as sf
from ektau.space import IsometryDescriptor, SpaceParams
from conftest import GRID, small_sphere


def grid_data(surface, n=9):
    (u0, u1), (v0, v1) = surface.domain
    U, V = np.meshgrid(np.linspace(u0, u1, n), np.linspace(v0 * 0.95, v1 * 0.95, n), indexing="ij")
    return sf.point_data(surface, U.ravel(), V.ravel())


def test_euclidean_round_sphere_has_constant_extrinsic_curvature():
    s = ex.coordinate_sphere(SpaceParams(0, 0), (0, 0, 0), 2.0)
    rep = ex.convexity_report(s)
    assert rep.min_K_e == pytest.approx(0.25, abs=1e-10)
    # at an umbilic the eigenvalue split is sqrt of rounding noise
    assert rep.max_lambda1 == pytest.approx(0.5, abs=1e-7)


@pytest.mark.parametrize("k", [0, -1])
def test_small_twisted_spheres_are_strictly_convex(k):
    rep = ex.convexity_report(ex.coordinate_sphere(SpaceParams(k, 0.5), (0, 0, 0), 0.1))
    assert rep.strictly_convex
    assert rep.min_lambda2 > 0.5


@pytest.mark.parametrize("P", GRID)
def test_convex_spheres_have_two_horizontal_points(P):
    s = small_sphere(P.k, P.tau)
    assert ex.convexity_report(s).convex
    assert sf.find_horizontal_points(s).count == 2


@pytest.mark.parametrize("P", GRID)
def test_vertical_planes(P):
    s = ex.vertical_plane(P, (0.1, 0.05), (1.0, 0.5))
    d = grid_data(s)
    np.testing.assert_allclose(d.K_e, -P.tau**2, atol=1e-10)
    np.testing.assert_allclose(sf.intrinsic_curvature(s, np.column_stack([d.pos[:, 0] * 0, d.pos[:, 2]])), 0.0, atol=1e-5)
    if P.tau == 0:
        np.testing.assert_allclose(d.II, 0.0, atol=1e-10)
    else:
        assert np.abs(d.II).max() > 0.1


def test_vertical_plane_is_the_preimage_of_a_base_geodesic():
    P = SpaceParams(-1, 0.5)
    s = ex.vertical_plane(P, (0.1, 0.05), (1.0, 0.5))
    pos = s.position(np.array([0.0, 0.0, 0.3]), np.array([0.0, 0.4, 0.0]))
    # moving along the fibre keeps the base point
    np.testing.assert_allclose(pos[0, :2], pos[1, :2], atol=1e-15)
    assert pos[1, 2] - pos[0, 2] == pytest.approx(0.4)
    np.testing.assert_allclose(pos[0, :2], (0.1, 0.05), atol=1e-15)


def test_graph_surface():
    s = ex.graph(SpaceParams(0, 0), (1.0, 0.0, 1.0, 0.0, 0.0))
    d = sf.point_data(s, np.array([0.0]), np.array([0.0]))
    # z = x^2 + y^2 at the origin: both principal curvatures 2
    np.testing.assert_allclose([d.lambda1[0], d.lambda2[0]], [2.0, 2.0], atol=1e-10)


def test_custom_expression_matches_the_builtin_sphere():
    P = SpaceParams(0, 0.5)
    custom = ex.custom_expression(
        P, "0.1*cos(v)*cos(u)", "0.1*cos(v)*sin(u)", "0.1*sin(v)",
        domain=((-np.pi, np.pi), (-1.5, 1.5)), periodic_u=True, scale=0.1,
    )
    d = grid_data(custom)
    np.testing.assert_allclose(np.linalg.norm(d.pos, axis=1), 0.1, atol=1e-15)
    builtin = ex.coordinate_sphere(P, (0, 0, 0), 0.1)
    assert ex.convexity_report(custom).min_K_e == pytest.approx(ex.convexity_report(builtin).min_K_e, rel=1e-2)


@pytest.mark.parametrize(
    "text",
    ["__import__('os')", "u.real", "[u, v]", "open('x')", "w + 1", "lambda: 1", "u if v else 1"],
)
def test_custom_expression_rejects_unsafe_syntax(text):
    with pytest.raises(ValueError):
        ex.custom_expression(SpaceParams(0, 0), text, "v", "0")


def test_surface_spec_build_and_validation():
    P = SpaceParams(0, 0.5)
    s = ex.SurfaceSpec("s", "coordinate-sphere", P, {"radius": 0.1, "center": [0, 0, 0]}).build()
    assert s.name == "s" and s.meta["r"] == 0.1
    g = ex.SurfaceSpec("g", "graph", P, {"coeffs": [1, 0, 1, 0, 0]}).build()
    assert g.meta["family"] == "graph"
    with pytest.raises(ValueError):
        ex.SurfaceSpec("x", "torus", P)


def test_spec_warns_when_not_strictly_convex(caplog):
    # a Euclidean sphere of radius 2 in a space with tau = 1: K_e = 1/4 < tau^2
    ex.SurfaceSpec("big", "coordinate-sphere", SpaceParams(0, 1.0), {"radius": 2.0}).build()
    assert "not strictly convex" in caplog.text


@settings(max_examples=15, deadline=None)
@given(
    c=st.floats(-1, 1),
    beta=st.floats(-3, 3),
    t=st.floats(0, 1),
    P=st.sampled_from(GRID),
)
def test_isometric_families_preserve_the_invariants(c, beta, t, P):
    s = small_sphere(P.k, P.tau)
    fam = ex.isometric_family(s, ex.screw_path(c, beta), [t])
    d0, d1 = grid_data(s, 5), grid_data(fam.members[0], 5)
    for name in ("E", "F", "G", "K_e", "H", "theta"):
        np.testing.assert_allclose(getattr(d1, name), getattr(d0, name), atol=1e-9, err_msg=name)


def test_isometry_path_must_start_at_identity():
    s = small_sphere(0, 0.5)
    with pytest.raises(ValueError):
        ex.isometric_family(s, lambda t: [IsometryDescriptor("vertical-translation", 1.0 + t)], [0.5])


@pytest.mark.parametrize("mode", ["radial", "stretch"])
def test_perturbations_change_the_metric_at_the_amplitude_scale(mode):
    s = small_sphere(0, 0.5)
    m = ex.perturbed_family(s, mode, 1e-2, [1.0]).members[0]
    d0, d1 = grid_data(s), grid_data(m)
    I0, I1 = d0.first_form(), d1.first_form()
    rel = np.abs(I1 - I0).max() / np.abs(I0).max()
    assert 1e-3 < rel < 1e-1


@pytest.mark.parametrize("mode", ["radial", "stretch"])
def test_zero_amplitude_gives_the_same_surface(mode):
    s = small_sphere(0, 0.5)
    fam = ex.perturbed_family(s, mode, 0.0, [0.5, 1.0])
    assert fam.expected_stage is None
    d0 = grid_data(s)
    for m in fam.members:
        np.testing.assert_array_equal(grid_data(m).pos, d0.pos)


def test_perturbation_arguments():
    s = small_sphere(0, 0.5)
    assert ex.perturbed_family(s, "radial", 1e-2, [1.0]).expected_stage == "a"
    with pytest.raises(ValueError):
        ex.perturbed_family(s, "twist", 1e-2, [1.0])
    with pytest.raises(ValueError):
        ex.perturbed_family(s, "radial", -1.0, [1.0])
    with pytest.raises(ValueError):
        ex.perturbed_family(ex.vertical_plane(SpaceParams(0, 0.5)), "radial", 1e-2, [1.0])


def test_default_grid():
    assert [(P.k, P.tau) for P in ex.default_grid()] == [(-1, 0), (-1, 0.5), (0, 0.5), (1, 0.5), (1, 0)]
