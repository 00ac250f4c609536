import numpy as np
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from ektau import jets
from ektau.jets import Jet

U, V = sympy.symbols("u v")
coord = st.floats(-1.0, 1.0, allow_nan=False)


def sympy_jet(expr, u, v):
    """Value and partials up to order two, by symbolic differentiation."""
    subs = {U: u, V: v}
    parts = [expr, expr.diff(U), expr.diff(V), expr.diff(U, 2), expr.diff(U, V), expr.diff(V, 2)]
    return np.array([float(p.evalf(subs=subs)) for p in parts])


def jet_parts(j: Jet):
    return np.array([float(x) for x in (j.val, j.du, j.dv, j.duu, j.duv, j.dvv)])


CASES = [
    (lambda u, v: u * v + 3 * u**2, lambda u, v: u * v + 3 * u**2),
    (lambda u, v: jets.sin(u) * jets.exp(v), lambda u, v: sympy.sin(u) * sympy.exp(v)),
    (lambda u, v: 1.0 / (1.0 + u * u + v * v), lambda u, v: 1 / (1 + u**2 + v**2)),
    (lambda u, v: jets.sqrt(2.0 + jets.cos(u * v)), lambda u, v: sympy.sqrt(2 + sympy.cos(u * v))),
    (lambda u, v: (u - v) ** 3 / (2.0 - v), lambda u, v: (u - v) ** 3 / (2 - v)),
    (lambda u, v: 1.0 - u, lambda u, v: 1 - u),
]


@settings(max_examples=30, deadline=None)
@given(coord, coord)
def test_jets_match_symbolic_derivatives(u, v):
    ju, jv = Jet.variables(u, v)
    for fj, fs in CASES:
        np.testing.assert_allclose(jet_parts(fj(ju, jv)), sympy_jet(fs(U, V), u, v), rtol=1e-12, atol=1e-12)


def test_plain_arrays_pass_through_elementary_functions():
    x = np.linspace(0.1, 1, 5)
    np.testing.assert_allclose(jets.sin(x), np.sin(x))
    np.testing.assert_allclose(jets.sqrt(x), np.sqrt(x))


def test_jets_broadcast_over_batches():
    u = np.linspace(-1, 1, 7)
    ju, jv = Jet.variables(u, 0.5 * u)
    f = ju * jv
    np.testing.assert_allclose(f.du, 0.5 * u)
    np.testing.assert_allclose(f.duv, np.ones_like(u))


def test_stack_gives_componentwise_arrays():
    ju, jv = Jet.variables(np.array([0.2, 0.3]), np.array([0.1, -0.4]))
    val, du, dv, duu, duv, dvv = jets.stack((ju, jv, ju * jv))
    assert val.shape == (2, 3)
    np.testing.assert_allclose(du[:, 0], 1.0)
    np.testing.assert_allclose(duv[:, 2], 1.0)
