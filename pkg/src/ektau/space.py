"""The ambient space E(k, tau) in its standard global chart.

Coordinates (x, y, z) with ``lam = 1 / (1 + k (x^2 + y^2) / 4)`` and metric

    ds^2 = lam^2 (dx^2 + dy^2) + (tau lam (y dx - x dy) + dz)^2.

The fibres of the submersion onto M^2(k) are the z-lines and the unit
Killing field is xi = d/dz.  With the chart orientation (dx, dy, dz) one has
``nabla_X xi = tau X ^ xi``.

Points and vectors are plain numpy arrays whose last axis has length 3, so
every function here also works on batches of points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ektau import ode


class DomainError(ValueError):
    """Raised when a point lies outside the admissible chart."""


@dataclass(frozen=True)
class SpaceParams:
    k: float
    tau: float

    @property
    def degenerate(self) -> bool:
        """True for the space forms k = 4 tau^2."""
        return abs(self.k - 4 * self.tau**2) < 1e-12

    def label(self) -> str:
        return f"k={self.k:g},tau={self.tau:g}"


def chart_factor(params: SpaceParams, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return 1.0 + params.k * (p[..., 0] ** 2 + p[..., 1] ** 2) / 4.0


def is_admissible(params: SpaceParams, p, margin: float = 0.0) -> np.ndarray:
    return chart_factor(params, p) > margin


def check_admissible(params: SpaceParams, p) -> None:
    if not np.all(is_admissible(params, p)):
        raise DomainError(f"point outside the chart of E({params.label()})")


def _lam(params: SpaceParams, p):
    p = np.asarray(p, dtype=float)
    check_admissible(params, p)
    x, y = p[..., 0], p[..., 1]
    lam = 1.0 / chart_factor(params, p)
    lam_x = -0.5 * params.k * x * lam**2
    lam_y = -0.5 * params.k * y * lam**2
    return x, y, lam, lam_x, lam_y


def coframe(params: SpaceParams, p) -> np.ndarray:
    """Orthonormal coframe rows (lam dx, lam dy, tau lam (y dx - x dy) + dz)."""
    x, y, lam, _, _ = _lam(params, p)
    t = params.tau
    th = np.zeros(x.shape + (3, 3))
    th[..., 0, 0] = lam
    th[..., 1, 1] = lam
    th[..., 2, 0] = t * lam * y
    th[..., 2, 1] = -t * lam * x
    th[..., 2, 2] = 1.0
    return th


def _coframe_derivatives(params: SpaceParams, p) -> np.ndarray:
    """d(coframe)/dx^l, indexed [..., l, row, col]."""
    x, y, lam, lam_x, lam_y = _lam(params, p)
    t = params.tau
    d = np.zeros(x.shape + (3, 3, 3))
    d[..., 0, 0, 0] = lam_x
    d[..., 0, 1, 1] = lam_x
    d[..., 1, 0, 0] = lam_y
    d[..., 1, 1, 1] = lam_y
    d[..., 0, 2, 0] = t * lam_x * y
    d[..., 0, 2, 1] = -t * (lam + x * lam_x)
    d[..., 1, 2, 0] = t * (lam + y * lam_y)
    d[..., 1, 2, 1] = -t * x * lam_y
    return d


def metric_at(params: SpaceParams, p) -> np.ndarray:
    th = coframe(params, p)
    return np.einsum("...ai,...aj->...ij", th, th)


def metric_derivatives(params: SpaceParams, p) -> np.ndarray:
    """Partial derivatives of the metric, indexed [..., l, i, j] = d_l g_ij."""
    th = coframe(params, p)
    dth = _coframe_derivatives(params, p)
    a = np.einsum("...lai,...aj->...lij", dth, th)
    return a + np.swapaxes(a, -1, -2)


def christoffel_at(params: SpaceParams, p) -> np.ndarray:
    """Christoffel symbols of the second kind, indexed [..., i, j, k]."""
    g = metric_at(params, p)
    dg = metric_derivatives(params, p)
    # first kind: [l, j, k] = (d_j g_lk + d_k g_lj - d_l g_jk) / 2
    d_j_lk = np.einsum("...jlk->...ljk", dg)
    d_k_lj = np.einsum("...klj->...ljk", dg)
    d_l_jk = dg
    first = 0.5 * (d_j_lk + d_k_lj - d_l_jk)
    return np.einsum("...il,...ljk->...ijk", np.linalg.inv(g), first)


def inner(params: SpaceParams, p, a, b) -> np.ndarray:
    return np.einsum("...i,...ij,...j->...", a, metric_at(params, p), b)


def norm(params: SpaceParams, p, a) -> np.ndarray:
    return np.sqrt(inner(params, p, a, a))


def xi_at(params: SpaceParams, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    check_admissible(params, p)
    out = np.zeros(p.shape)
    out[..., 2] = 1.0
    return out


def cross(params: SpaceParams, p, a, b) -> np.ndarray:
    """Oriented Riemannian cross product: <a ^ b, c> = vol(a, b, c)."""
    g = metric_at(params, p)
    # sqrt(det g) = lam^2 in this chart
    vol = np.sqrt(np.linalg.det(g))[..., None]
    lowered = vol * np.cross(a, b)
    return np.linalg.solve(g, lowered[..., None])[..., 0]


def connection(params: SpaceParams, p, x, w) -> np.ndarray:
    """Gamma(x, w): the Christoffel correction for differentiating w along x."""
    return np.einsum("...ijk,...j,...k->...i", christoffel_at(params, p), x, w)


def covariant_derivative(params: SpaceParams, point, velocity, field_value, field_derivative):
    """Ambient covariant derivative of a vector field along a curve.

    The curve is given by its 1-jet (point, velocity) and the field by its
    value at the point and its ordinary derivative along the curve.
    """
    return np.asarray(field_derivative, dtype=float) + connection(params, point, velocity, field_value)


def killing_residual(params: SpaceParams, p, X, Y) -> np.ndarray:
    """<nabla_X xi, Y> + <nabla_Y xi, X>, zero for a Killing field."""
    xi = xi_at(params, p)
    zero = np.zeros_like(xi)
    nx = covariant_derivative(params, p, X, xi, zero)
    ny = covariant_derivative(params, p, Y, xi, zero)
    return inner(params, p, nx, Y) + inner(params, p, ny, X)


def xi_derivative_residual(params: SpaceParams, p, X) -> np.ndarray:
    """|nabla_X xi - tau X ^ xi|."""
    xi = xi_at(params, p)
    diff = covariant_derivative(params, p, X, xi, np.zeros_like(xi)) - params.tau * cross(params, p, X, xi)
    return norm(params, p, diff)


def geodesic_rhs(params: SpaceParams):
    def rhs(state):
        x, v = state[..., :3], state[..., 3:]
        acc = -connection(params, x, v, v)
        return np.concatenate([v, acc], axis=-1)

    return rhs


@dataclass
class GeodesicPath:
    s: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    truncated: bool


def geodesic(params: SpaceParams, p, v0, length: float, step: float) -> GeodesicPath:
    """Integrate the geodesic equation from (p, v0) with fixed-step RK4.

    The parameter is affine; with a unit initial vector it is arclength.
    Leaving the chart (or approaching its boundary) truncates the path.
    """
    v0 = np.asarray(v0, dtype=float)
    if not np.any(v0):
        raise ValueError("initial velocity must be nonzero")
    check_admissible(params, p)
    n = int(round(length / step))
    y0 = np.concatenate([np.asarray(p, dtype=float), v0])
    states, truncated = ode.integrate(
        geodesic_rhs(params), y0, step, n, valid=lambda y: bool(is_admissible(params, y[:3], 1e-6))
    )
    s = step * np.arange(len(states))
    return GeodesicPath(s, states[:, :3], states[:, 3:], truncated)


def geodesic_residual(params: SpaceParams, path: GeodesicPath) -> float:
    """Max of |x'' + Gamma(x', x')| with x'' from central differences of the path."""
    h = path.s[1] - path.s[0]
    x = path.points
    acc = (x[2:] - 2 * x[1:-1] + x[:-2]) / h**2
    vel = (x[2:] - x[:-2]) / (2 * h)
    res = acc + connection(params, x[1:-1], vel, vel)
    return float(np.max(np.abs(res)))


# -- submersion ---------------------------------------------------------------


def base_projection(params: SpaceParams, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    check_admissible(params, p)
    return p[..., :2].copy()


def base_metric(params: SpaceParams, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    lam = 1.0 / (1.0 + params.k * (q[..., 0] ** 2 + q[..., 1] ** 2) / 4.0)
    return lam[..., None, None] ** 2 * np.eye(2)


def horizontal_lift(params: SpaceParams, w, p) -> np.ndarray:
    """Horizontal vector at p projecting to the base vector w at pi(p)."""
    x, y, lam, _, _ = _lam(params, p)
    w = np.asarray(w, dtype=float)
    a, b = w[..., 0], w[..., 1]
    c = -params.tau * lam * (y * a - x * b)
    return np.stack(np.broadcast_arrays(a, b, c), axis=-1)


def base_geodesic_coefficients(params: SpaceParams, q0, w) -> tuple[float, np.ndarray]:
    """Level-set description of the base geodesic through q0 with direction w.

    Geodesics of lam^2 (dx^2 + dy^2) are the zero sets of
    ``h(q) = a (k |q|^2 / 4 - 1) + b . q``; returns (a, b) normalised so the
    Euclidean gradient of h at q0 is the unit normal of w.
    """
    q0 = np.asarray(q0, dtype=float)
    w = np.asarray(w, dtype=float)
    w = w / np.linalg.norm(w)
    n = np.array([-w[1], w[0]])
    a = float(n @ q0) / (1.0 + params.k * float(q0 @ q0) / 4.0)
    b = n - 0.5 * a * params.k * q0
    return a, b


def base_geodesic_level(params: SpaceParams, coeffs, q) -> np.ndarray:
    a, b = coeffs
    q = np.asarray(q, dtype=float)
    return a * (params.k * np.sum(q**2, axis=-1) / 4.0 - 1.0) + q @ b


# -- isometries ---------------------------------------------------------------

ISOMETRY_KINDS = ("identity", "vertical-translation", "fiber-rotation", "horizontal-translation", "pi-rotation")


class UnsupportedIsometry(ValueError):
    pass


@dataclass(frozen=True)
class IsometryDescriptor:
    """An element of the implemented isometry subgroup.

    ``amount`` is the z-shift for vertical translations, the rotation angle
    for fiber rotations about the z-axis, the axis direction angle for the
    pi-rotation about a horizontal geodesic through the origin, and unused for
    horizontal translations, which take ``shift = (a, b)``.
    """

    kind: str
    amount: float = 0.0
    shift: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ISOMETRY_KINDS:
            raise UnsupportedIsometry(f"unknown isometry kind {self.kind!r}")


@dataclass(frozen=True)
class AffineMap:
    """x -> A x + b in chart coordinates."""

    A: np.ndarray = field(default_factory=lambda: np.eye(3))
    b: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __call__(self, p):
        return np.asarray(p, dtype=float) @ self.A.T + self.b

    def then(self, other: "AffineMap") -> "AffineMap":
        """The composition ``other o self``."""
        return AffineMap(other.A @ self.A, other.A @ self.b + other.b)


def isometry_affine(params: SpaceParams, iso: IsometryDescriptor) -> AffineMap:
    """All implemented isometries are affine in the chart."""
    if iso.kind == "identity":
        return AffineMap()
    if iso.kind == "vertical-translation":
        return AffineMap(np.eye(3), np.array([0.0, 0.0, iso.amount]))
    if iso.kind == "fiber-rotation":
        c, s = np.cos(iso.amount), np.sin(iso.amount)
        return AffineMap(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), np.zeros(3))
    if iso.kind == "pi-rotation":
        c, s = np.cos(2 * iso.amount), np.sin(2 * iso.amount)
        return AffineMap(np.array([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, -1.0]]), np.zeros(3))
    if iso.kind == "horizontal-translation":
        if params.k != 0:
            raise UnsupportedIsometry("horizontal translations are implemented only for k = 0")
        a, b = iso.shift
        t = params.tau
        A = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-t * b, t * a, 1.0]])
        return AffineMap(A, np.array([a, b, 0.0]))
    raise UnsupportedIsometry(iso.kind)


def compose(params: SpaceParams, isos) -> AffineMap:
    """Affine map of ``isos[-1] o ... o isos[0]``."""
    out = AffineMap()
    for iso in isos:
        out = out.then(isometry_affine(params, iso))
    return out


def apply_isometry(params: SpaceParams, iso: IsometryDescriptor, p) -> tuple[np.ndarray, np.ndarray]:
    """Image of p and the differential (Jacobian matrix) of the isometry."""
    m = isometry_affine(params, iso)
    q = m(p)
    check_admissible(params, q)
    return q, np.broadcast_to(m.A, np.shape(q) + (3,)).copy()


def pullback_residual(params: SpaceParams, m: AffineMap, points) -> float:
    points = np.asarray(points, dtype=float)
    g_image = metric_at(params, m(points))
    pulled = np.einsum("ai,...ab,bj->...ij", m.A, g_image, m.A)
    return float(np.max(np.abs(pulled - metric_at(params, points))))


def random_points(params: SpaceParams, rng: np.random.Generator, n: int, radius: float = 1.0) -> np.ndarray:
    """Uniform samples in a chart box, kept well inside the admissible region."""
    pts = []
    while sum(len(x) for x in pts) < n:
        cand = rng.uniform(-radius, radius, size=(2 * n, 3))
        pts.append(cand[chart_factor(params, cand) > 0.25])
    return np.concatenate(pts)[:n]


def isometry_residual(params: SpaceParams, iso: IsometryDescriptor, n: int = 100, seed: int = 0) -> float:
    """Max deviation of the pulled-back metric from the metric at random points."""
    rng = np.random.default_rng(seed)
    m = isometry_affine(params, iso)
    pts = random_points(params, rng, 4 * n)
    pts = pts[is_admissible(params, m(pts), 0.25)][:n]
    return pullback_residual(params, m, pts)
