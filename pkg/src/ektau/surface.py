"""Immersed surfaces in E(k, tau): fundamental forms and the special frame.

A :class:`ParametrizedSurface` wraps a coordinate formula that is evaluated
on :class:`~ektau.jets.Jet` objects, so position and its first and second
partials are exact.  Quantities that involve derivatives of frame fields
(connection forms, intrinsic curvature) are obtained by Richardson-refined
central differences of exact pointwise fields.

Frame conventions.  The unit normal is fixed so that both principal
curvatures are positive wherever K_e > 0 (second fundamental form
``alpha(X, Y) = <nabla_X Y, N>``).  ``J X = N ^ X`` is the positive rotation
of the tangent plane, ``eps1`` is the normalised tangential part of xi,
``eps2 = J eps1`` and ``xi = cos(theta) eps1 + sin(theta) N``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ektau import continuation, jets
from ektau import space as sp
from ektau.space import SpaceParams

log = logging.getLogger(__name__)

HORIZONTAL_EPS = 1e-6
BRANCHES = ("cos_nonneg", "cos_nonpos")


class DegenerateImmersion(ValueError):
    pass


class FrameUndefined(ValueError):
    """The special frame does not exist (horizontal point or grad theta = 0)."""


@dataclass(frozen=True)
class ParametrizedSurface:
    """An immersion given by a chart formula ``(u, v) -> (x, y, z)``.

    ``formula`` must accept numpy arrays or jets and return three
    coordinate expressions.  ``scale`` is a characteristic length used to
    size finite-difference steps.
    """

    params: SpaceParams
    formula: Callable
    domain: tuple[tuple[float, float], tuple[float, float]]
    name: str = "surface"
    periodic_u: bool = False
    scale: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def position(self, u, v) -> np.ndarray:
        x, y, z = self.formula(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        return np.stack(np.broadcast_arrays(x, y, z), axis=-1)

    def jet(self, u, v) -> tuple[np.ndarray, ...]:
        """(f, f_u, f_v, f_uu, f_uv, f_vv), each of shape (..., 3)."""
        ju, jv = jets.Jet.variables(u, v)
        return jets.stack(self.formula(ju, jv))

    def transformed(self, m: sp.AffineMap, name: str | None = None) -> "ParametrizedSurface":
        """The surface ``m o f`` for an affine chart map (e.g. an isometry)."""
        base = self.formula
        A, b = m.A, m.b

        def formula(u, v):
            x = base(u, v)
            return tuple(A[i, 0] * x[0] + A[i, 1] * x[1] + A[i, 2] * x[2] + b[i] for i in range(3))

        return replace(self, formula=formula, name=name or f"{self.name}*")

    def in_domain(self, uv) -> bool:
        (u0, u1), (v0, v1) = self.domain
        u, v = uv
        return (self.periodic_u or u0 <= u <= u1) and v0 <= v <= v1


@dataclass
class SurfacePointData:
    """Pointwise geometry over a batch of parameter points.

    Frame quantities are NaN where the frame is undefined (horizontal
    points).  Tangent vectors are stored as ambient chart components.
    """

    params: SpaceParams
    uv: np.ndarray
    pos: np.ndarray
    fu: np.ndarray
    fv: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    normal: np.ndarray
    II: np.ndarray  # (..., 2, 2) in the (f_u, f_v) basis
    shape_operator: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    principal_dirs: np.ndarray  # (..., 2, 3): v1, v2 with (v1, v2, N) positive
    H: np.ndarray
    K_e: np.ndarray
    g: np.ndarray
    tangential_xi: np.ndarray
    horizontal: np.ndarray
    theta: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray
    alpha11: np.ndarray
    alpha12: np.ndarray
    alpha22: np.ndarray
    dtheta: np.ndarray  # (dtheta(eps1), dtheta(eps2))
    grad_theta: np.ndarray
    grad_theta_norm: np.ndarray
    v: np.ndarray
    Jv: np.ndarray
    phi: np.ndarray
    branch: str = "cos_nonneg"
    K: np.ndarray | None = None

    @property
    def nu(self) -> np.ndarray:
        return self.g

    def tangent_coords(self, X) -> np.ndarray:
        """Coordinates of tangent vectors X in the (f_u, f_v) basis."""
        P = self.params
        rhs = np.stack([sp.inner(P, self.pos, X, self.fu), sp.inner(P, self.pos, X, self.fv)], axis=-1)
        return np.linalg.solve(self.first_form(), rhs[..., None])[..., 0]

    def first_form(self) -> np.ndarray:
        return np.stack(
            [np.stack([self.E, self.F], axis=-1), np.stack([self.F, self.G], axis=-1)], axis=-2
        )

    def alpha(self, X, Y) -> np.ndarray:
        cx, cy = self.tangent_coords(X), self.tangent_coords(Y)
        return np.einsum("...i,...ij,...j->...", cx, self.II, cy)

    def inner(self, X, Y) -> np.ndarray:
        return sp.inner(self.params, self.pos, X, Y)

    def J(self, X) -> np.ndarray:
        return sp.cross(self.params, self.pos, self.normal, X)

    def take(self, index) -> "SurfacePointData":
        out = {}
        for name in self.__dataclass_fields__:
            val = getattr(self, name)
            out[name] = val[index] if isinstance(val, np.ndarray) else val
        return SurfacePointData(**out)


def _frame_from_tangent(P, pos, t):
    return t / sp.norm(P, pos, t)[..., None]


def point_data(
    surface: ParametrizedSurface,
    u,
    v,
    branch: str = "cos_nonneg",
    horizontal_eps: float = HORIZONTAL_EPS,
    orientation: int | None = None,
) -> SurfacePointData:
    """All pointwise geometry at the parameter points (u, v).

    ``orientation`` forces N = +-(f_u ^ f_v)/|f_u ^ f_v|; by default the
    sign is chosen pointwise so that H > 0 where K_e > 0.
    """
    if branch not in BRANCHES:
        raise ValueError(f"unknown theta branch {branch!r}")
    P = surface.params
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    f, fu, fv, fuu, fuv, fvv = surface.jet(u, v)
    sp.check_admissible(P, f)
    gm = sp.metric_at(P, f)

    def ip(a, b):
        return np.einsum("...i,...ij,...j->...", a, gm, b)

    E, F, G = ip(fu, fu), ip(fu, fv), ip(fv, fv)
    det_I = E * G - F**2
    if np.any(det_I <= 1e-14 * np.maximum(E, G) ** 2):
        raise DegenerateImmersion(f"{surface.name}: f_u and f_v are linearly dependent")
    n = sp.cross(P, f, fu, fv)
    n = n / np.sqrt(ip(n, n))[..., None]

    def second_form(nrm):
        comps = []
        for a, b, d2 in ((fu, fu, fuu), (fu, fv, fuv), (fv, fv, fvv)):
            comps.append(ip(d2 + sp.connection(P, f, a, b), nrm))
        L, M, Nn = comps
        return np.stack([np.stack([L, M], -1), np.stack([M, Nn], -1)], -2)

    II = second_form(n)
    I_inv = np.stack([np.stack([G, -F], -1), np.stack([-F, E], -1)], -2) / det_I[..., None, None]
    S = I_inv @ II
    H = 0.5 * (S[..., 0, 0] + S[..., 1, 1])
    K_e = S[..., 0, 0] * S[..., 1, 1] - S[..., 0, 1] * S[..., 1, 0]
    if orientation is None:
        flip = np.where((K_e > 0) & (H < 0), -1.0, 1.0)
    else:
        flip = np.full(H.shape, float(orientation))
    n = n * flip[..., None]
    II = II * flip[..., None, None]
    S = S * flip[..., None, None]
    H = H * flip

    disc = np.sqrt(np.maximum(H**2 - K_e, 0.0))
    lam1, lam2 = H + disc, H - disc
    # principal direction for lam1 in parameter coordinates, orthogonal complement for lam2
    a = S[..., 0, 0] - lam1[...]
    b = S[..., 0, 1]
    c = S[..., 1, 0]
    d = S[..., 1, 1] - lam1
    use_row0 = np.abs(a) + np.abs(b) >= np.abs(c) + np.abs(d)
    du = np.where(use_row0, -b, -d)
    dv = np.where(use_row0, a, c)
    umbilic = np.abs(du) + np.abs(dv) < 1e-12 * (np.abs(lam1) + 1.0)
    du = np.where(umbilic, 1.0, du)
    dv = np.where(umbilic, 0.0, dv)
    v1 = du[..., None] * fu + dv[..., None] * fv
    v1 = _frame_from_tangent(P, f, v1)
    v2 = sp.cross(P, f, n, v1)
    pdirs = np.stack([v1, v2], axis=-2)

    xi = sp.xi_at(P, f)
    g = ip(n, xi)
    txi = xi - g[..., None] * n
    cos_abs = np.sqrt(np.maximum(ip(txi, txi), 0.0))
    horizontal = cos_abs < horizontal_eps
    sgn = 1.0 if branch == "cos_nonneg" else -1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        eps1 = sgn * txi / cos_abs[..., None]
    eps1 = np.where(horizontal[..., None], np.nan, eps1)
    theta = np.arctan2(g, sgn * cos_abs)
    if branch == "cos_nonpos":
        theta = np.mod(theta, 2 * np.pi)
    theta = np.where(horizontal, np.nan, theta)
    eps2 = sp.cross(P, f, n, eps1)

    coords1 = np.linalg.solve(
        np.stack([np.stack([E, F], -1), np.stack([F, G], -1)], -2),
        np.stack([ip(eps1, fu), ip(eps1, fv)], -1)[..., None],
    )[..., 0]
    coords2 = np.linalg.solve(
        np.stack([np.stack([E, F], -1), np.stack([F, G], -1)], -2),
        np.stack([ip(eps2, fu), ip(eps2, fv)], -1)[..., None],
    )[..., 0]

    def alpha(c1, c2):
        return np.einsum("...i,...ij,...j->...", c1, II, c2)

    a11, a12, a22 = alpha(coords1, coords1), alpha(coords1, coords2), alpha(coords2, coords2)
    tau = P.tau
    dth1 = -a11
    dth2 = -a12 - tau
    grad = dth1[..., None] * eps1 + dth2[..., None] * eps2
    gnorm = np.hypot(dth1, dth2)
    with np.errstate(invalid="ignore", divide="ignore"):
        Jv = grad / gnorm[..., None]
    vv = -sp.cross(P, f, n, Jv)
    phi = np.arctan2(ip(vv, eps2), ip(vv, eps1))

    return SurfacePointData(
        params=P,
        uv=np.stack([u, v], -1),
        pos=f,
        fu=fu,
        fv=fv,
        E=E,
        F=F,
        G=G,
        normal=n,
        II=II,
        shape_operator=S,
        lambda1=lam1,
        lambda2=lam2,
        principal_dirs=pdirs,
        H=H,
        K_e=K_e,
        g=g,
        tangential_xi=txi,
        horizontal=horizontal,
        theta=theta,
        eps1=eps1,
        eps2=eps2,
        alpha11=a11,
        alpha12=a12,
        alpha22=a22,
        dtheta=np.stack([dth1, dth2], -1),
        grad_theta=grad,
        grad_theta_norm=gnorm,
        v=vv,
        Jv=Jv,
        phi=phi,
        branch=branch,
    )


# -- operation-level accessors -------------------------------------------------


def fundamental_forms(surface: ParametrizedSurface, uv, intrinsic: bool = True, **kw) -> SurfacePointData:
    uv = np.asarray(uv, dtype=float)
    data = point_data(surface, uv[..., 0], uv[..., 1], **kw)
    if intrinsic:
        data.K = intrinsic_curvature(surface, uv)
    return data


def special_frame(data: SurfacePointData) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if np.any(data.horizontal):
        raise FrameUndefined("special frame undefined at a horizontal point")
    return data.eps1, data.eps2, data.theta


def grad_theta(data: SurfacePointData) -> tuple[np.ndarray, np.ndarray]:
    special_frame(data)
    return data.grad_theta, data.grad_theta_norm


def v_and_phi(data: SurfacePointData, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    special_frame(data)
    if np.any(data.grad_theta_norm < tol):
        raise FrameUndefined("|grad theta| vanishes; v is undefined")
    return data.v, data.phi


def frame_residual(data: SurfacePointData) -> np.ndarray:
    """|xi - cos(theta) eps1 - sin(theta) N| at every point."""
    xi = sp.xi_at(data.params, data.pos)
    r = xi - np.cos(data.theta)[..., None] * data.eps1 - np.sin(data.theta)[..., None] * data.normal
    return sp.norm(data.params, data.pos, r)


def sample_interior(surface: ParametrizedSurface, n: int, rng: np.random.Generator, margin: float = 0.05) -> np.ndarray:
    (u0, u1), (v0, v1) = surface.domain
    du, dv = (u1 - u0) * margin, (v1 - v0) * margin
    if surface.periodic_u:
        du = 0.0
    return np.stack([rng.uniform(u0 + du, u1 - du, n), rng.uniform(v0 + dv, v1 - dv, n)], -1)


def sample_frame_points(
    surface: ParametrizedSurface,
    n: int,
    rng: np.random.Generator,
    min_cos: float = 1e-3,
    min_sin: float = 0.0,
    min_grad: float = 0.0,
) -> np.ndarray:
    """Random parameter points where the special frame is comfortably defined."""
    out = []
    count = 0
    for _ in range(200):
        uv = sample_interior(surface, 4 * n, rng)
        d = point_data(surface, uv[:, 0], uv[:, 1])
        ok = (
            ~d.horizontal
            & (np.abs(np.cos(d.theta)) > min_cos)
            & (np.abs(np.sin(d.theta)) >= min_sin)
            & (d.grad_theta_norm > min_grad)
        )
        out.append(uv[ok])
        count += int(ok.sum())
        if count >= n:
            break
    return np.concatenate(out)[:n]


# -- finite-difference machinery ----------------------------------------------


def directional_fd(fun: Callable, uv: np.ndarray, direction: np.ndarray, h: float) -> np.ndarray:
    """Richardson-refined central difference of ``fun`` along ``direction``.

    ``fun`` maps parameter points (..., 2) to arrays; ``direction`` holds
    parameter-space vectors of the same batch shape.
    """
    uv = np.asarray(uv, dtype=float)
    d = np.asarray(direction, dtype=float)
    h = np.asarray(h, dtype=float)

    def central(step):
        plus = fun(uv + step[..., None] * d)
        minus = fun(uv - step[..., None] * d)
        diff = plus - minus
        return diff / (2 * step.reshape(step.shape + (1,) * (diff.ndim - step.ndim)))

    d1 = central(h)
    d2 = central(h / 2)
    return (4 * d2 - d1) / 3


def fd_step(surface: ParametrizedSurface, rel: float = 1e-3, data: SurfacePointData | None = None):
    """Difference step; with ``data`` it shrinks near horizontal points, where
    frame fields vary on a length scale proportional to |cos(theta)|."""
    if data is None:
        return rel * surface.scale
    return rel * surface.scale * np.clip(np.abs(np.cos(data.theta)) / 0.2, 0.05, 1.0)


def _unit_param_direction(data: SurfacePointData, X) -> np.ndarray:
    return data.tangent_coords(X)


def fd_dtheta(surface: ParametrizedSurface, data: SurfacePointData, X, rel: float = 1e-3) -> np.ndarray:
    """dtheta(X) by differencing the theta field: the oracle for the algebraic value."""

    def theta(uv):
        d = point_data(surface, uv[..., 0], uv[..., 1], branch=data.branch)
        return d.theta

    return directional_fd(theta, data.uv, _unit_param_direction(data, X), fd_step(surface, rel, data))


def fd_g(surface: ParametrizedSurface, data: SurfacePointData, X, rel: float = 1e-3) -> np.ndarray:
    def g(uv):
        return point_data(surface, uv[..., 0], uv[..., 1]).g

    return directional_fd(g, data.uv, _unit_param_direction(data, X), fd_step(surface, rel))


def _field_covariant(surface, data, X, field_name, rel):
    """Ambient covariant derivative of a named frame field along tangent X."""
    P = surface.params

    def fieldfun(uv):
        d = point_data(surface, uv[..., 0], uv[..., 1], branch=data.branch)
        return getattr(d, field_name)

    dX = directional_fd(fieldfun, data.uv, _unit_param_direction(data, X), fd_step(surface, rel, data))
    return sp.covariant_derivative(P, data.pos, X, getattr(data, field_name), dX)


def w12(surface: ParametrizedSurface, data: SurfacePointData, X, rel: float = 1e-3) -> np.ndarray:
    """Connection form <nabla_X eps1, eps2> of the special frame."""
    return data.inner(_field_covariant(surface, data, X, "eps1", rel), data.eps2)


def w12_tilde(surface: ParametrizedSurface, data: SurfacePointData, X, rel: float = 1e-3) -> np.ndarray:
    """Connection form <nabla_X v, Jv> of the (v, Jv) frame."""
    return data.inner(_field_covariant(surface, data, X, "v", rel), data.Jv)


def first_form_derivatives(surface: ParametrizedSurface, uv) -> dict[str, np.ndarray]:
    """E, F, G and their exact first partials from the 2-jet."""
    P = surface.params
    uv = np.asarray(uv, dtype=float)
    f, fu, fv, fuu, fuv, fvv = surface.jet(uv[..., 0], uv[..., 1])
    gm = sp.metric_at(P, f)
    dg = sp.metric_derivatives(P, f)

    def ip(a, b):
        return np.einsum("...i,...ij,...j->...", a, gm, b)

    def dmetric(d, a, b):
        return np.einsum("...l,...lij,...i,...j->...", d, dg, a, b)

    return {
        "E": ip(fu, fu),
        "F": ip(fu, fv),
        "G": ip(fv, fv),
        "E_u": dmetric(fu, fu, fu) + 2 * ip(fuu, fu),
        "E_v": dmetric(fv, fu, fu) + 2 * ip(fuv, fu),
        "F_u": dmetric(fu, fu, fv) + ip(fuu, fv) + ip(fu, fuv),
        "F_v": dmetric(fv, fu, fv) + ip(fuv, fv) + ip(fu, fvv),
        "G_u": dmetric(fu, fv, fv) + 2 * ip(fuv, fv),
        "G_v": dmetric(fv, fv, fv) + 2 * ip(fvv, fv),
    }


def intrinsic_curvature(surface: ParametrizedSurface, uv, h: float = 1e-3) -> np.ndarray:
    """Gaussian curvature of the induced metric alone (Brioschi formula).

    Second derivatives of E, F, G are central differences of their exact
    first derivatives.
    """
    uv = np.asarray(uv, dtype=float)
    d = first_form_derivatives(surface, uv)
    eu = np.zeros(uv.shape)
    eu[..., 0] = 1.0
    ev = np.zeros(uv.shape)
    ev[..., 1] = 1.0
    E_vv = directional_fd(lambda q: first_form_derivatives(surface, q)["E_v"], uv, ev, h)
    G_uu = directional_fd(lambda q: first_form_derivatives(surface, q)["G_u"], uv, eu, h)
    F_uv = directional_fd(lambda q: first_form_derivatives(surface, q)["F_u"], uv, ev, h)
    E, F, G = d["E"], d["F"], d["G"]
    m1 = np.stack(
        [
            np.stack([-0.5 * E_vv + F_uv - 0.5 * G_uu, 0.5 * d["E_u"], d["F_u"] - 0.5 * d["E_v"]], -1),
            np.stack([d["F_v"] - 0.5 * d["G_u"], E, F], -1),
            np.stack([0.5 * d["G_v"], F, G], -1),
        ],
        -2,
    )
    zero = np.zeros_like(E)
    m2 = np.stack(
        [
            np.stack([zero, 0.5 * d["E_v"], 0.5 * d["G_u"]], -1),
            np.stack([0.5 * d["E_v"], E, F], -1),
            np.stack([0.5 * d["G_u"], F, G], -1),
        ],
        -2,
    )
    return (np.linalg.det(m1) - np.linalg.det(m2)) / (E * G - F**2) ** 2


def gauss_curvature_from_extrinsic(data: SurfacePointData) -> np.ndarray:
    """K_e + tau^2 + (k - 4 tau^2) nu^2 with nu = <N, xi>."""
    P = data.params
    return data.K_e + P.tau**2 + (P.k - 4 * P.tau**2) * data.g**2


def gauss_check(data: SurfacePointData, params: SpaceParams | None = None) -> np.ndarray:
    if data.K is None:
        raise ValueError("intrinsic curvature not populated; use fundamental_forms(..., intrinsic=True)")
    return np.abs(data.K - gauss_curvature_from_extrinsic(data))


# -- horizontal and vertical points ------------------------------------------


def _xi_tangent_components(surface: ParametrizedSurface, uv):
    """(<xi, f_u>, <xi, f_v>) and its exact Jacobian in (u, v)."""
    P = surface.params
    uv = np.asarray(uv, dtype=float)
    f, fu, fv, fuu, fuv, fvv = surface.jet(uv[..., 0], uv[..., 1])
    th = sp.coframe(P, f)
    dth = sp._coframe_derivatives(P, f)
    w = th[..., 2, :]
    dw = dth[..., :, 2, :]  # [l, col]
    val = np.stack([np.einsum("...i,...i", w, fu), np.einsum("...i,...i", w, fv)], -1)

    def d(a, dir_, second):
        return np.einsum("...l,...li,...i->...", dir_, dw, a) + np.einsum("...i,...i->...", w, second)

    jac = np.stack(
        [np.stack([d(fu, fu, fuu), d(fu, fv, fuv)], -1), np.stack([d(fv, fu, fuv), d(fv, fv, fvv)], -1)], -2
    )
    return val, jac


@dataclass
class HorizontalPoints:
    points: np.ndarray
    residuals: np.ndarray  # |xi ^ N| at each point
    min_separation: float
    grid_spacing: float
    skipped_seeds: int

    @property
    def count(self) -> int:
        return len(self.points)


def find_horizontal_points(surface: ParametrizedSurface, resolution: int = 40, tol: float = 1e-10) -> HorizontalPoints:
    """Zeros of xi ^ N located by Newton iteration from grid seeds.

    Seeds are grid-local minima of the tangential part of xi; Newton runs on
    (<xi, f_u>, <xi, f_v>), which vanishes exactly where xi ^ N does.
    """
    P = surface.params
    (u0, u1), (v0, v1) = surface.domain
    us = np.linspace(u0, u1, resolution, endpoint=not surface.periodic_u)
    vs = np.linspace(v0, v1, resolution)
    U, V = np.meshgrid(us, vs, indexing="ij")
    d = point_data(surface, U, V)
    c = sp.norm(P, d.pos, d.tangential_xi)
    mins = []
    for i in range(resolution):
        for j in range(resolution):
            nb = []
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ii, jj = i + di, j + dj
                    if surface.periodic_u:
                        ii %= resolution
                    if 0 <= ii < resolution and 0 <= jj < resolution:
                        nb.append(c[ii, jj])
            if c[i, j] <= min(nb) and c[i, j] < 0.5:
                mins.append((U[i, j], V[i, j]))

    def fun(x):
        return _xi_tangent_components(surface, x)[0]

    def jac(x):
        return _xi_tangent_components(surface, x)[1]

    found: list[np.ndarray] = []
    positions: list[np.ndarray] = []
    skipped = 0
    for seed in mins:
        try:
            x = continuation.newton_system(fun, jac, np.array(seed), tol=1e-14 * surface.scale)
        except (continuation.ContinuationStall, np.linalg.LinAlgError):
            skipped += 1
            log.warning("horizontal-point Newton diverged from seed %s", seed)
            continue
        if surface.periodic_u:
            x[0] = (x[0] - u0) % (u1 - u0) + u0
        if not surface.in_domain(x):
            skipped += 1
            continue
        pos = surface.position(x[0], x[1])
        if any(np.linalg.norm(pos - q) < 1e-8 * surface.scale for q in positions):
            continue
        found.append(x)
        positions.append(pos)
    pts = np.array(found).reshape(-1, 2)
    res = np.zeros(len(pts))
    if len(pts):
        dd = point_data(surface, pts[:, 0], pts[:, 1])
        res = sp.norm(P, dd.pos, sp.cross(P, dd.pos, sp.xi_at(P, dd.pos), dd.normal))
        keep = res < tol
        pts, res = pts[keep], res[keep]
    sep = np.inf
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            sep = min(sep, float(np.linalg.norm(pts[i] - pts[j])))
    spacing = max((u1 - u0), (v1 - v0)) / (resolution - 1)
    return HorizontalPoints(pts, res, sep, spacing, skipped)


@dataclass
class VerticalLocus:
    nodes: np.ndarray
    closed: bool
    g_max: float
    sign_change: np.ndarray  # per node: g on the two sides has opposite signs


def g_function(surface: ParametrizedSurface):
    def g(x):
        return float(point_data(surface, x[0], x[1]).g)

    return g


def g_batch(surface: ParametrizedSurface):
    def g(xs):
        return point_data(surface, xs[..., 0], xs[..., 1]).g

    return g


def vertical_locus(
    surface: ParametrizedSurface,
    seed,
    step: float = 0.1,
    max_steps: int = 2000,
    side_offset: float = 1e-3,
) -> VerticalLocus:
    """Trace the curve g = <N, xi> = 0 through a seed by continuation."""
    g = g_function(surface)
    gb = g_batch(surface)
    (u0, u1), _ = surface.domain
    period = (u1 - u0) if surface.periodic_u else None
    curve = continuation.trace_curve(
        g,
        np.asarray(seed, dtype=float),
        step,
        max_steps,
        tol=1e-12,
        fd_h=1e-6,
        period=(period, None),
        inside=surface.in_domain,
        batch=gb,
    )
    nodes = curve.nodes
    gvals = gb(nodes)
    e = np.eye(2) * 1e-6
    grads = np.stack([gb(nodes + e[i]) - gb(nodes - e[i]) for i in range(2)], -1)
    n = grads / np.linalg.norm(grads, axis=-1, keepdims=True)
    sides = gb(nodes + side_offset * n) * gb(nodes - side_offset * n) < 0
    return VerticalLocus(nodes, curve.closed, float(np.max(np.abs(gvals))), sides)
