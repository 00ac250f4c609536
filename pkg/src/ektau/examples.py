"""Concrete surface families and deformation families."""

from __future__ import annotations

import ast
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ektau import jets
from ektau import space as sp
from ektau.space import IsometryDescriptor, SpaceParams
from ektau.surface import ParametrizedSurface, point_data

log = logging.getLogger(__name__)

FAMILIES = ("coordinate-sphere", "vertical-plane", "graph", "custom-expression")
POLE_MARGIN = 0.02


def _axis_basis(axis) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    helper = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    a = np.cross(helper, n)
    a /= np.linalg.norm(a)
    b = np.cross(n, a)
    return a, b, n


def coordinate_sphere(
    params: SpaceParams,
    center=(0.0, 0.0, 0.0),
    r: float = 0.1,
    axis=(1.0, 1.0, 1.0),
    name: str | None = None,
) -> ParametrizedSurface:
    """The chart sphere |p - center| = r, parametrised by longitude/latitude.

    The parametrisation axis is tilted away from the fibres by default so
    its coordinate singularities avoid both the horizontal points (near the
    z-poles) and the vertical locus (near the z-equator).
    """
    c = np.asarray(center, dtype=float)
    ea, eb, en = _axis_basis(axis)

    def formula(u, v):
        cu, su, cv, sv = jets.cos(u), jets.sin(u), jets.cos(v), jets.sin(v)
        return tuple(c[i] + r * (cv * cu * ea[i] + cv * su * eb[i] + sv * en[i]) for i in range(3))

    half = math.pi / 2 - POLE_MARGIN
    surf = ParametrizedSurface(
        params,
        formula,
        ((-math.pi, math.pi), (-half, half)),
        name=name or f"coordinate-sphere(r={r:g})",
        periodic_u=True,
        scale=r,
        meta={"family": "coordinate-sphere", "center": c.tolist(), "r": r, "axis": en.tolist()},
    )
    sp.check_admissible(params, surf.position(np.linspace(-3, 3, 7)[:, None], np.linspace(-1.5, 1.5, 7)))
    return surf


def vertical_plane(
    params: SpaceParams,
    base_point=(0.0, 0.0),
    direction=(1.0, 0.0),
    half_width: float = 0.5,
    name: str | None = None,
) -> ParametrizedSurface:
    """pi^{-1}(gamma) for the base geodesic through ``base_point`` along ``direction``.

    Parameters are (s, z): s runs along gamma (Euclidean chart length for
    lines, chart angle times radius for circles), z along the fibres.
    """
    q0 = np.asarray(base_point, dtype=float)
    w = np.asarray(direction, dtype=float)
    w = w / np.linalg.norm(w)
    a, b = sp.base_geodesic_coefficients(params, q0, w)
    if params.k == 0 or abs(a) < 1e-12:
        def curve(s):
            return q0[0] + s * w[0], q0[1] + s * w[1]
    else:
        m = -(2.0 / (a * params.k)) * b
        rho = math.sqrt(float(m @ m) + 4.0 / params.k)
        start = math.atan2(q0[1] - m[1], q0[0] - m[0])
        # orientation so that the tangent at s = 0 is +w
        tangent0 = np.array([-math.sin(start), math.cos(start)])
        orient = 1.0 if tangent0 @ w > 0 else -1.0

        def curve(s):
            ang = start + orient * s / rho
            return m[0] + rho * jets.cos(ang), m[1] + rho * jets.sin(ang)

    def formula(s, z):
        x, y = curve(s)
        return x, y, z

    return ParametrizedSurface(
        params,
        formula,
        ((-half_width, half_width), (-half_width, half_width)),
        name=name or "vertical-plane",
        scale=1.0,
        meta={"family": "vertical-plane", "base_point": q0.tolist(), "direction": w.tolist()},
    )


def graph(params: SpaceParams, coeffs=(1.0, 0.0, 1.0, 0.0, 0.0), half_width: float = 0.3, name: str | None = None):
    """z = c20 x^2 + c11 x y + c02 y^2 + c10 x + c01 y over a chart square."""
    c20, c11, c02, c10, c01 = (float(c) for c in coeffs)

    def formula(x, y):
        return x, y, c20 * x * x + c11 * x * y + c02 * y * y + c10 * x + c01 * y

    return ParametrizedSurface(
        params,
        formula,
        ((-half_width, half_width), (-half_width, half_width)),
        name=name or "graph",
        scale=half_width,
        meta={"family": "graph", "coeffs": [c20, c11, c02, c10, c01]},
    )


_ALLOWED_CALLS = {"sin": jets.sin, "cos": jets.cos, "exp": jets.exp, "sqrt": jets.sqrt}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def _compile_expression(text: str):
    tree = ast.parse(text, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValueError(f"disallowed syntax in expression {text!r}: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in {"u", "v", "pi", *_ALLOWED_CALLS}:
            raise ValueError(f"unknown name {node.id!r} in expression {text!r}")
    code = compile(tree, "<surface>", "eval")

    def evaluate(u, v):
        return eval(code, {"__builtins__": {}}, {"u": u, "v": v, "pi": math.pi, **_ALLOWED_CALLS})

    return evaluate


def custom_expression(
    params: SpaceParams,
    x: str,
    y: str,
    z: str,
    domain=((-0.5, 0.5), (-0.5, 0.5)),
    periodic_u: bool = False,
    scale: float = 1.0,
    name: str | None = None,
) -> ParametrizedSurface:
    """A surface from three coordinate expressions in u, v.

    Expressions may use + - * / **, numeric constants, ``pi`` and
    sin/cos/exp/sqrt; integer powers only.
    """
    fx, fy, fz = (_compile_expression(e) for e in (x, y, z))

    def formula(u, v):
        out = []
        for f in (fx, fy, fz):
            val = f(u, v)
            out.append(val if isinstance(val, jets.Jet) or np.ndim(val) else val + 0 * u)
        return tuple(out)

    (u0, u1), (v0, v1) = domain
    return ParametrizedSurface(
        params,
        formula,
        ((float(u0), float(u1)), (float(v0), float(v1))),
        name=name or "custom",
        periodic_u=periodic_u,
        scale=scale,
        meta={"family": "custom-expression", "x": x, "y": y, "z": z},
    )


# -- convexity report ----------------------------------------------------------


@dataclass
class ConvexityReport:
    min_K_e: float
    min_K_e_minus_tau2: float
    min_lambda2: float
    max_lambda1: float

    @property
    def convex(self) -> bool:
        return self.min_K_e > 0

    @property
    def strictly_convex(self) -> bool:
        return self.min_K_e_minus_tau2 > 0


def convexity_report(surface: ParametrizedSurface, resolution: int = 41) -> ConvexityReport:
    (u0, u1), (v0, v1) = surface.domain
    U, V = np.meshgrid(np.linspace(u0, u1, resolution), np.linspace(v0, v1, resolution), indexing="ij")
    d = point_data(surface, U, V)
    tau2 = surface.params.tau**2
    return ConvexityReport(
        float(d.K_e.min()), float((d.K_e - tau2).min()), float(d.lambda2.min()), float(d.lambda1.max())
    )


# -- configuration-level description ------------------------------------------


@dataclass
class SurfaceSpec:
    """Config-file description of one surface."""

    name: str
    family: str
    params: SpaceParams
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown surface family {self.family!r}; expected one of {FAMILIES}")

    def build(self) -> ParametrizedSurface:
        o = dict(self.options)
        if self.family == "coordinate-sphere":
            surf = coordinate_sphere(
                self.params, o.get("center", (0.0, 0.0, 0.0)), float(o.get("radius", 0.1)), o.get("axis", (1.0, 1.0, 1.0)), name=self.name
            )
            rep = convexity_report(surf)
            if not rep.strictly_convex:
                log.warning("%s is not strictly convex (min K_e - tau^2 = %.3g)", self.name, rep.min_K_e_minus_tau2)
            return surf
        if self.family == "vertical-plane":
            return vertical_plane(
                self.params, o.get("base_point", (0.0, 0.0)), o.get("direction", (1.0, 0.0)), float(o.get("half_width", 0.5)), name=self.name
            )
        if self.family == "graph":
            return graph(self.params, o.get("coeffs", (1.0, 0.0, 1.0, 0.0, 0.0)), float(o.get("half_width", 0.3)), name=self.name)
        return custom_expression(
            self.params,
            o["x"],
            o["y"],
            o["z"],
            domain=o.get("domain", ((-0.5, 0.5), (-0.5, 0.5))),
            periodic_u=bool(o.get("periodic_u", False)),
            scale=float(o.get("scale", 1.0)),
            name=self.name,
        )


# -- deformation families ------------------------------------------------------


@dataclass
class Family:
    reference: ParametrizedSurface
    members: list[ParametrizedSurface]
    ts: list[float]
    expected_stage: str | None  # first pipeline stage expected to fail, None if congruent
    isometries: list[list[IsometryDescriptor]] | None = None


def isometric_family(surface: ParametrizedSurface, iso_path, ts) -> Family:
    """Members ``h_t o f`` for an isometry path t -> [descriptors] with h_0 = id."""
    P = surface.params
    start = sp.compose(P, iso_path(0.0))
    if not (np.allclose(start.A, np.eye(3)) and np.allclose(start.b, 0)):
        raise ValueError("isometry path must start at the identity")
    members, isos = [], []
    for t in ts:
        chain = list(iso_path(t))
        members.append(surface.transformed(sp.compose(P, chain), name=f"{surface.name}@t={t:g}"))
        isos.append(chain)
    return Family(surface, members, list(ts), None, isos)


def vertical_translation_path(c: float):
    return lambda t: [IsometryDescriptor("vertical-translation", t * c)]


def fiber_rotation_path(beta: float):
    return lambda t: [IsometryDescriptor("fiber-rotation", t * beta)]


def screw_path(c: float, beta: float):
    return lambda t: [IsometryDescriptor("fiber-rotation", t * beta), IsometryDescriptor("vertical-translation", t * c)]


PERTURBATION_MODES = {"radial": "a", "stretch": "a"}


def perturbed_family(surface: ParametrizedSurface, mode: str, amplitude: float, ts) -> Family:
    """Negative controls: deformations that break the isometric hypothesis.

    ``radial`` moves a coordinate sphere along its radius by
    ``amplitude * t * r * d_x d_y``; ``stretch`` scales the chart z-offset by
    ``1 + amplitude * t``.  Both change the induced metric, so the expected
    failing stage is (a).
    """
    if mode not in PERTURBATION_MODES:
        raise ValueError(f"unknown perturbation mode {mode!r}")
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    meta = surface.meta
    members = []
    for t in ts:
        eps = amplitude * t
        if mode == "radial":
            if meta.get("family") != "coordinate-sphere":
                raise ValueError("radial perturbation needs a coordinate sphere")
            c = np.asarray(meta["center"])
            base = surface.formula
            r = meta["r"]

            def formula(u, v, base=base, eps=eps, c=c, r=r):
                x = base(u, v)
                d = [(x[i] - c[i]) / r for i in range(3)]
                factor = 1.0 + eps * d[0] * d[1]
                return tuple(c[i] + (x[i] - c[i]) * factor for i in range(3))
        else:
            base = surface.formula
            cz = float(np.mean(surface.position(0.0, 0.0)[2])) if meta.get("family") != "coordinate-sphere" else meta["center"][2]

            def formula(u, v, base=base, eps=eps, cz=cz):
                x = base(u, v)
                return x[0], x[1], cz + (x[2] - cz) * (1.0 + eps)

        members.append(
            ParametrizedSurface(
                surface.params, formula, surface.domain, f"{surface.name}~{mode}@t={t:g}", surface.periodic_u, surface.scale, dict(meta)
            )
        )
    expected = PERTURBATION_MODES[mode] if amplitude > 0 else None
    return Family(surface, members, list(ts), expected)


def default_grid() -> list[SpaceParams]:
    return [SpaceParams(-1, 0), SpaceParams(-1, 0.5), SpaceParams(0, 0.5), SpaceParams(1, 0.5), SpaceParams(1, 0)]
