"""Identities of the moving-frame calculus as numerical residuals.

Each ``residual_*`` function compares two independently computed sides of an
identity at a batch of surface points and returns a :class:`ResidualReport`.
Finite-difference quantities (dtheta, connection forms, dphi) are the
oracles; pointwise algebra from the 2-jet is the path being checked.

Sign conventions are those of :mod:`ektau.surface`.  Several identities
carry a ``sign`` argument selecting the sign of a tau-term; the default is
the one the oracles confirm, the other is kept so tests can show it fails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ektau import continuation
from ektau import space as sp
from ektau import surface as sf
from ektau.space import SpaceParams
from ektau.surface import ParametrizedSurface, SurfacePointData

TIERS = {"exact": 1e-8, "jet": 1e-5, "fd": 1e-3}

# tau-sign in alpha(X, eps2) = cot(theta) w12(X) + sign * tau <X, eps1>
ALPHA_E2_SIGN = +1
# sign of the cos(phi) coefficient in the linear constraint on phi
FACT3_B_SIGN = -1


class SingularConfiguration(ValueError):
    pass


class DegenerateSpace(ValueError):
    pass


class InconsistentData(ValueError):
    pass


@dataclass
class ResidualReport:
    equation: str
    points: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def absolute(self) -> np.ndarray:
        return np.abs(np.asarray(self.left) - np.asarray(self.right))

    @property
    def scale(self) -> np.ndarray:
        return np.maximum(np.abs(self.left), np.abs(self.right))

    @property
    def relative(self) -> np.ndarray:
        return self.absolute / np.maximum(self.scale, 1.0)

    @property
    def max_relative(self) -> float:
        return float(np.max(self.relative)) if np.size(self.relative) else 0.0

    @property
    def mean_relative(self) -> float:
        return float(np.mean(self.relative)) if np.size(self.relative) else 0.0

    def rows(self, surface_name: str = ""):
        pts = np.atleast_2d(self.points)
        left, right = np.atleast_1d(self.left), np.atleast_1d(self.right)
        ab, sc, rel = np.atleast_1d(self.absolute), np.atleast_1d(self.scale), np.atleast_1d(self.relative)
        for i in range(len(left)):
            yield {
                "equation": self.equation,
                "surface": surface_name,
                "u": float(pts[i, 0]),
                "v": float(pts[i, 1]),
                "left": float(left[i]),
                "right": float(right[i]),
                "abs_residual": float(ab[i]),
                "scale": float(sc[i]),
                "rel_residual": float(rel[i]),
            }


def _require_frame(data: SurfacePointData):
    sf.special_frame(data)


# -- dtheta and the alpha(X, eps2) relation -----------------------------------


def residual_eq1(surface: ParametrizedSurface, data: SurfacePointData, X) -> ResidualReport:
    """alpha(eps1, X) against -dtheta(X) - tau <X, eps2>, dtheta by differencing theta."""
    _require_frame(data)
    tau = data.params.tau
    left = data.alpha(data.eps1, X)
    right = -sf.fd_dtheta(surface, data, X) - tau * data.inner(X, data.eps2)
    return ResidualReport("eq1", data.uv, left, right)


def residual_alpha_e2(
    surface: ParametrizedSurface, data: SurfacePointData, X, sign: int = ALPHA_E2_SIGN, min_sin: float = 1e-3
) -> ResidualReport:
    """alpha(X, eps2) against cot(theta) w12(X) + sign * tau <eps1, X>."""
    _require_frame(data)
    if np.any(np.abs(np.sin(data.theta)) <= min_sin):
        raise SingularConfiguration("cot(theta) undefined near a vertical point")
    tau = data.params.tau
    left = data.alpha(X, data.eps2)
    right = sf.w12(surface, data, X) / np.tan(data.theta) + sign * tau * data.inner(data.eps1, X)
    return ResidualReport("alpha_e2", data.uv, left, right)


def residual_alpha_frame(data: SurfacePointData) -> tuple[ResidualReport, ResidualReport]:
    """alpha11 = |grad theta| sin(phi) and alpha12 = -|grad theta| cos(phi) - tau."""
    sf.v_and_phi(data)
    a, phi, tau = data.grad_theta_norm, data.phi, data.params.tau
    r11 = ResidualReport("alpha11", data.uv, data.alpha11, a * np.sin(phi))
    r12 = ResidualReport("alpha12", data.uv, data.alpha12, -a * np.cos(phi) - tau)
    return r11, r12


def residual_eq2_eq3(data: SurfacePointData, corrected: bool = True) -> tuple[ResidualReport, ResidualReport]:
    """alpha(v, eps1) = -tau sin(phi) and alpha(Jv, eps1) = -|grad theta| - tau cos(phi).

    With ``corrected=False`` the left sides use alpha12 in both slots; that
    reading fails and is kept only so tests can show it.
    """
    sf.v_and_phi(data)
    s, c = np.sin(data.phi), np.cos(data.phi)
    a11 = data.alpha11 if corrected else data.alpha12
    tau, a = data.params.tau, data.grad_theta_norm
    r2 = ResidualReport("eq2", data.uv, c * a11 + s * data.alpha12, -tau * s)
    r3 = ResidualReport("eq3", data.uv, -s * a11 + c * data.alpha12, -a - tau * c)
    return r2, r3


# -- the two expressions for alpha(eps2, v) and alpha(Jv, eps2) ---------------


def alpha22_from_frame(a, phi, tau, K_e):
    """alpha(eps2, eps2) from K_e = alpha11 alpha22 - alpha12^2."""
    return (K_e + (a * np.cos(phi) + tau) ** 2) / (a * np.sin(phi))


def alpha_e2_v_algebraic(a, phi, tau, K_e):
    """alpha(eps2, v) written through |grad theta|, phi, tau and K_e."""
    c = np.cos(phi)
    return -c * (a * c + tau) + (K_e + (a * c + tau) ** 2) / a


def alpha_e2_Jv_algebraic(a, phi, tau, K_e):
    """alpha(Jv, eps2) written through |grad theta|, phi, tau and K_e."""
    s, c = np.sin(phi), np.cos(phi)
    return s * (a * c + tau) + (c / s) * (K_e + (a * c + tau) ** 2) / a


def residual_eq4_eq6(data: SurfacePointData) -> tuple[ResidualReport, ResidualReport]:
    sf.v_and_phi(data)
    a, phi, tau, K_e = data.grad_theta_norm, data.phi, data.params.tau, data.K_e
    r4 = ResidualReport("eq4", data.uv, data.alpha(data.eps2, data.v), alpha_e2_v_algebraic(a, phi, tau, K_e))
    r6 = ResidualReport("eq6", data.uv, data.alpha(data.Jv, data.eps2), alpha_e2_Jv_algebraic(a, phi, tau, K_e))
    return r4, r6


def residual_eq5_eq7(
    surface: ParametrizedSurface, data: SurfacePointData, sign: int = ALPHA_E2_SIGN
) -> tuple[ResidualReport, ResidualReport]:
    """alpha(v, eps2) and alpha(Jv, eps2) via cot(theta)(w~12 - dphi) and tau-terms."""
    sf.v_and_phi(data)
    tau, phi = data.params.tau, data.phi
    cot = 1.0 / np.tan(data.theta)
    dphi_v, dphi_Jv = fd_dphi(surface, data, data.v), fd_dphi(surface, data, data.Jv)
    right5 = cot * (sf.w12_tilde(surface, data, data.v) - dphi_v) + sign * tau * np.cos(phi)
    right7 = cot * (sf.w12_tilde(surface, data, data.Jv) - dphi_Jv) - sign * tau * np.sin(phi)
    r5 = ResidualReport("eq5", data.uv, data.alpha(data.v, data.eps2), right5)
    r7 = ResidualReport("eq7", data.uv, data.alpha(data.Jv, data.eps2), right7)
    return r5, r7


# -- phi propagation equations ------------------------------------------------


def fd_dphi(surface: ParametrizedSurface, data: SurfacePointData, X, rel: float = 1e-3) -> np.ndarray:
    """dphi(X) by differencing the phi field (unwrapped across the +-pi cut)."""
    phi0 = data.phi

    def phi(uv):
        d = sf.point_data(surface, uv[..., 0], uv[..., 1], branch=data.branch)
        return phi0 + np.angle(np.exp(1j * (d.phi - phi0)))

    return sf.directional_fd(phi, data.uv, data.tangent_coords(X), sf.fd_step(surface, rel, data))


def _rhs_guard(data, phi, min_cos=1e-3, min_sin_phi=1e-8, min_grad=1e-10):
    if np.any(np.abs(np.cos(data.theta)) < min_cos):
        raise SingularConfiguration("tan(theta) blows up near a horizontal point")
    if np.any(data.grad_theta_norm < min_grad):
        raise SingularConfiguration("|grad theta| vanishes")
    if np.any(np.abs(np.sin(phi)) < min_sin_phi):
        raise SingularConfiguration("sin(phi) vanishes")


def ode_rhs_v_from(w_tilde_v, theta, a, phi, tau, K_e, sign: int = ALPHA_E2_SIGN):
    """dphi(v) from the pointwise data; ``phi`` may differ from the surface's own."""
    alpha_v_e2 = alpha_e2_v_algebraic(a, phi, tau, K_e)
    return w_tilde_v - np.tan(theta) * (alpha_v_e2 - sign * tau * np.cos(phi))


def ode_rhs_Jv_from(w_tilde_Jv, theta, a, phi, tau, K_e, sign: int = ALPHA_E2_SIGN):
    alpha_Jv_e2 = alpha_e2_Jv_algebraic(a, phi, tau, K_e)
    return w_tilde_Jv - np.tan(theta) * (alpha_Jv_e2 + sign * tau * np.sin(phi))


def ode_rhs_v(surface: ParametrizedSurface, data: SurfacePointData, phi=None, sign: int = ALPHA_E2_SIGN):
    phi = data.phi if phi is None else phi
    _rhs_guard(data, phi)
    wt = sf.w12_tilde(surface, data, data.v)
    return ode_rhs_v_from(wt, data.theta, data.grad_theta_norm, phi, data.params.tau, data.K_e, sign)


def ode_rhs_Jv(surface: ParametrizedSurface, data: SurfacePointData, phi=None, sign: int = ALPHA_E2_SIGN):
    phi = data.phi if phi is None else phi
    _rhs_guard(data, phi)
    wt = sf.w12_tilde(surface, data, data.Jv)
    return ode_rhs_Jv_from(wt, data.theta, data.grad_theta_norm, phi, data.params.tau, data.K_e, sign)


def residual_ode(
    surface: ParametrizedSurface, data: SurfacePointData, direction: str = "v", sign: int = ALPHA_E2_SIGN
) -> ResidualReport:
    """Right-hand side of the phi equation against the differenced dphi."""
    if direction == "v":
        return ResidualReport("ode_v", data.uv, ode_rhs_v(surface, data, sign=sign), fd_dphi(surface, data, data.v))
    if direction == "Jv":
        return ResidualReport("ode_Jv", data.uv, ode_rhs_Jv(surface, data, sign=sign), fd_dphi(surface, data, data.Jv))
    raise ValueError(f"direction must be 'v' or 'Jv', got {direction!r}")


# -- the linear constraint on phi ---------------------------------------------


@dataclass
class Fact3Result:
    identity: ResidualReport  # alpha11 (2H - alpha11) - alpha12^2 = K_e
    linear_form: ResidualReport  # A sin(phi) + B cos(phi) + C = 0
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    roots: list[np.ndarray]
    phi_is_root: np.ndarray


def fact3_coefficients(H, a, tau, K_e, b_sign: int = FACT3_B_SIGN):
    return 2 * H * a, b_sign * 2 * tau * a, -(a**2) - tau**2 - K_e


def sincos_roots(A: float, B: float, C: float, tol: float = 1e-14) -> np.ndarray:
    """Solutions phi in (-pi, pi] of A sin(phi) + B cos(phi) + C = 0.

    Raises when all three coefficients vanish (every phi is a solution).
    """
    R = np.hypot(A, B)
    if R < tol:
        if abs(C) < tol:
            raise InconsistentData("A = B = C = 0: every phi solves the constraint")
        return np.array([])
    s = -C / R
    if abs(s) > 1 + 1e-12:
        return np.array([])
    s = np.clip(s, -1.0, 1.0)
    delta = np.arctan2(B, A)
    base = np.arcsin(s)
    cand = np.array([base - delta, np.pi - base - delta])
    cand = np.angle(np.exp(1j * cand))
    if abs(cand[0] - cand[1]) < 1e-12 or abs(abs(cand[0] - cand[1]) - 2 * np.pi) < 1e-12:
        return cand[:1]
    return np.sort(cand)


def fact3_quadratic(data: SurfacePointData, b_sign: int = FACT3_B_SIGN, root_tol: float = 1e-6) -> Fact3Result:
    sf.v_and_phi(data)
    a, H, K_e, tau, phi = data.grad_theta_norm, data.H, data.K_e, data.params.tau, data.phi
    a11, a12 = data.alpha11, data.alpha12
    identity = ResidualReport("fact3_identity", data.uv, a11 * (2 * H - a11) - a12**2, K_e)
    A, B, C = fact3_coefficients(H, a, tau, K_e, b_sign)
    lin = ResidualReport("fact3_linear", data.uv, A * np.sin(phi) + B * np.cos(phi), -C)
    roots, hit = [], []
    for Ai, Bi, Ci, ph in zip(np.ravel(A), np.ravel(B), np.ravel(C), np.ravel(phi)):
        r = sincos_roots(Ai, Bi, Ci)
        roots.append(r)
        hit.append(bool(np.any(np.abs(np.angle(np.exp(1j * (r - ph)))) < root_tol)))
    return Fact3Result(identity, lin, A, B, C, roots, np.array(hit))


# -- Gauss-equation inversion --------------------------------------------------


def solve_theta(K: float, K_e: float, params: SpaceParams, tol: float = 1e-9) -> np.ndarray:
    """Values of nu = sin(theta) compatible with K = K_e + tau^2 + (k - 4 tau^2) nu^2."""
    if params.degenerate:
        raise DegenerateSpace("k = 4 tau^2: the Gauss equation does not determine theta")
    nu2 = (K - K_e - params.tau**2) / (params.k - 4 * params.tau**2)
    if nu2 < -tol or nu2 > 1 + tol:
        raise InconsistentData(f"nu^2 = {nu2:.6g} lies outside [0, 1]")
    nu = float(np.sqrt(np.clip(nu2, 0.0, 1.0)))
    return np.array([0.0]) if nu == 0.0 else np.array([-nu, nu])


# -- vertical points: dg(xi) against the curvature of a vertical section ------


@dataclass
class Lemma1Result:
    uv: np.ndarray
    dg_xi: float  # derivative of g = <N, xi> along xi
    k_C: float  # curvature of the section C = Sigma ^ P inside P, signed against N(p)
    grad_g_norm: float
    stated_residual: float  # |dg(xi) - k_C|
    signed_residual: float  # |dg(xi) + k_C|

    @property
    def submersion(self) -> bool:
        return self.grad_g_norm > 0


def lemma1_check(surface: ParametrizedSurface, uv, h_rel: float = 2e-3) -> Lemma1Result:
    """Compare dg_p(xi) with the curvature of the vertical normal section at p.

    P = pi^{-1}(gamma) with gamma the base geodesic through pi(p) along
    d pi(N(p)).  The section C is parametrised as a graph over the
    parameter direction of xi and solved for pointwise by Newton; its
    ambient curvature vector comes from differencing that parametrisation.
    """
    P = surface.params
    uv = np.asarray(uv, dtype=float)
    g = sf.g_function(surface)
    uv = continuation.newton_scalar(g, uv, 1e-6, 1e-13)
    d = sf.point_data(surface, uv[0], uv[1])
    if abs(d.g) > 1e-8:
        raise ValueError("lemma1_check needs a vertical point")
    xi = sp.xi_at(P, d.pos)
    d_xi = d.tangent_coords(xi)
    n_dir = np.array([-d_xi[1], d_xi[0]])
    n_dir /= np.linalg.norm(n_dir)
    coeffs = sp.base_geodesic_coefficients(P, d.pos[:2], d.normal[:2])

    def level(q):
        return float(sp.base_geodesic_level(P, coeffs, surface.position(q[0], q[1])[:2]))

    def section(t):
        base = uv + t * d_xi
        s = 0.0
        for _ in range(50):
            fval = level(base + s * n_dir)
            if abs(fval) < 1e-15:
                break
            hh = 1e-7
            deriv = (level(base + (s + hh) * n_dir) - level(base + (s - hh) * n_dir)) / (2 * hh)
            s -= fval / deriv
        return surface.position(*(base + s * n_dir))

    h = h_rel * surface.scale

    def derivs(step):
        xs = [section(j * step) for j in (-2, -1, 0, 1, 2)]
        d1 = (xs[3] - xs[1]) / (2 * step)
        d2 = (xs[3] - 2 * xs[2] + xs[1]) / step**2
        return d1, d2

    d1a, d2a = derivs(h)
    d1b, d2b = derivs(h / 2)
    x1 = (4 * d1b - d1a) / 3
    x2 = (4 * d2b - d2a) / 3
    acc = x2 + sp.connection(P, d.pos, x1, x1)
    speed2 = sp.inner(P, d.pos, x1, x1)
    T = x1 / np.sqrt(speed2)
    curv = (acc - sp.inner(P, d.pos, acc, T) * T) / speed2
    k_C = float(sp.inner(P, d.pos, curv, d.normal))
    dg = float(sf.directional_fd(lambda q: sf.point_data(surface, q[..., 0], q[..., 1]).g, uv, d_xi, 1e-3 * surface.scale))
    grad_g = continuation.fd_gradient(g, uv, 1e-6)
    return Lemma1Result(uv, dg, k_C, float(np.linalg.norm(grad_g)), abs(dg - k_C), abs(dg + k_C))


# -- horizontal points: Jacobian of the tangential part of xi ----------------


@dataclass
class Lemma2Result:
    uv: np.ndarray
    jacobian: np.ndarray  # finite-difference F'(p) in the principal frame, columns F'(p) v_i
    stated: np.ndarray  # [[tau, lambda2], [-lambda1, -tau]], det K_e - tau^2
    derived: np.ndarray  # s [[-tau, lambda2], [-lambda1, -tau]], s = sign <xi, N>
    lambda1: float
    lambda2: float
    K_e: float
    xi_sign: float

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.jacobian))

    @property
    def stated_error(self) -> float:
        return float(np.max(np.abs(self.jacobian - self.stated)))

    @property
    def derived_error(self) -> float:
        return float(np.max(np.abs(self.jacobian - self.derived)))


def lemma2_check(surface: ParametrizedSurface, uv, h_rel: float = 1e-3) -> Lemma2Result:
    """Finite-difference Jacobian of q -> (<V1, xi^N>, <V2, xi^N>) at a horizontal point.

    Because xi ^ N vanishes at p, the derivative does not depend on how the
    principal frame (v1, v2) is extended; constant chart components are used.
    """
    P = surface.params
    uv = np.asarray(uv, dtype=float)
    d = sf.point_data(surface, uv[0], uv[1])
    xi = sp.xi_at(P, d.pos)
    w = sp.cross(P, d.pos, xi, d.normal)
    if sp.norm(P, d.pos, w) > 1e-10:
        raise ValueError("lemma2_check needs a horizontal point")
    v1, v2 = d.principal_dirs[0], d.principal_dirs[1]

    def F(q):
        dd = sf.point_data(surface, q[..., 0], q[..., 1])
        W = sp.cross(P, dd.pos, sp.xi_at(P, dd.pos), dd.normal)
        return np.stack([sp.inner(P, dd.pos, v1, W), sp.inner(P, dd.pos, v2, W)], -1)

    h = h_rel * surface.scale
    cols = [sf.directional_fd(F, uv, d.tangent_coords(vi), h) for vi in (v1, v2)]
    jac = np.stack(cols, axis=-1)
    tau, l1, l2 = P.tau, float(d.lambda1), float(d.lambda2)
    s = float(np.sign(d.g))
    stated = np.array([[tau, l2], [-l1, -tau]])
    derived = s * np.array([[-tau, l2], [-l1, -tau]])
    return Lemma2Result(uv, jac, stated, derived, l1, l2, float(d.K_e), s)
