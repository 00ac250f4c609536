"""The residual suite run by ``ektau verify``: every identity on every configured surface."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from ektau import equations as eq
from ektau import examples as ex
from ektau import space as sp
from ektau import surface as sf
from ektau.equations import ResidualReport
from ektau.surface import ParametrizedSurface

log = logging.getLogger(__name__)

# tier of each check: "exact" for pointwise algebra on exact jets, "jet" where one
# side comes from finite differences of exact fields, "fd" for nested differences
CHECK_TIERS = {
    "killing": "exact",
    "xi_derivative": "exact",
    "frame": "exact",
    "gauss": "jet",
    "eq1": "jet",
    "alpha_e2": "jet",
    "alpha11": "exact",
    "alpha12": "exact",
    "eq2": "exact",
    "eq3": "exact",
    "eq4": "exact",
    "eq6": "exact",
    "eq5": "jet",
    "eq7": "jet",
    "ode_v": "jet",
    "ode_Jv": "jet",
    "fact3_identity": "exact",
    "fact3_linear": "exact",
    "fact3_root": "exact",
    "horizontal_count": "exact",
    "dg_xi_vertical": "fd",
    "horizontal_jacobian": "jet",
    "vertical_plane_K_e": "exact",
    "vertical_plane_K": "jet",
    "vertical_plane_totally_geodesic": "exact",
}


@dataclass
class SuiteRow:
    surface: str
    k: float
    tau: float
    check: str
    tier: str
    n_points: int
    max_residual: float
    tolerance: float
    passed: bool
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "surface": self.surface,
            "k": self.k,
            "tau": self.tau,
            "check": self.check,
            "tier": self.tier,
            "n_points": self.n_points,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "note": self.note,
        }


class _Collector:
    def __init__(self, surface: ParametrizedSurface, tiers: dict[str, float]):
        self.surface = surface
        self.tiers = tiers
        self.rows: list[SuiteRow] = []

    def add(self, check: str, value: float, n: int, note: str = ""):
        tier = CHECK_TIERS[check]
        tol = self.tiers[tier]
        value = float(value)
        P = self.surface.params
        passed = bool(np.isfinite(value) and value < tol)
        self.rows.append(SuiteRow(self.surface.name, P.k, P.tau, check, tier, n, value, tol, passed, note))

    def report(self, rep: ResidualReport, check: str | None = None):
        self.add(check or rep.equation, rep.max_relative, int(np.size(rep.left)))


def _random_tangent(data, rng):
    t = rng.uniform(0, 2 * np.pi, size=np.shape(data.E))
    X = np.cos(t)[..., None] * data.fu / np.sqrt(data.E)[..., None] + np.sin(t)[..., None] * data.fv / np.sqrt(data.G)[..., None]
    return X / data.inner(X, X)[..., None] ** 0.5


def ambient_checks(params, rng, n: int, tiers) -> list[SuiteRow]:
    p = sp.random_points(params, rng, n)
    X, Y = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    out = []
    for check, val in (
        ("killing", np.max(np.abs(sp.killing_residual(params, p, X, Y)))),
        ("xi_derivative", np.max(sp.xi_derivative_residual(params, p, X))),
    ):
        tier = CHECK_TIERS[check]
        tol = tiers[tier]
        out.append(SuiteRow("ambient", params.k, params.tau, check, tier, n, float(val), tol, bool(val < tol)))
    return out


def surface_checks(surface: ParametrizedSurface, rng, n: int, tiers, locus_points: int = 4) -> list[SuiteRow]:
    c = _Collector(surface, tiers)
    P = surface.params
    fam = surface.meta.get("family")

    uv = sf.sample_interior(surface, n, rng)
    data = sf.fundamental_forms(surface, uv)
    finite = ~data.horizontal
    c.add("frame", np.max(sf.frame_residual(data.take(finite))), int(finite.sum()))
    c.add("gauss", np.max(sf.gauss_check(data) / np.maximum(1, np.abs(data.K))), n)

    if fam == "vertical-plane":
        c.add("vertical_plane_K_e", np.max(np.abs(data.K_e + P.tau**2)), n)
        c.add("vertical_plane_K", np.max(np.abs(data.K)), n)
        if P.tau == 0:
            c.add("vertical_plane_totally_geodesic", np.max(np.abs(data.II)), n)
        return c.rows

    pts = sf.sample_frame_points(surface, n, rng, min_cos=1e-2, min_sin=1e-2, min_grad=1e-6)
    if len(pts) == 0:
        log.info("%s: no points with a defined (v, Jv) frame; frame identities skipped", surface.name)
        return c.rows
    d = sf.point_data(surface, pts[:, 0], pts[:, 1])
    X = _random_tangent(d, rng)
    c.report(eq.residual_eq1(surface, d, X))
    c.report(eq.residual_alpha_e2(surface, d, X, min_sin=1e-2))
    for rep in (*eq.residual_alpha_frame(d), *eq.residual_eq2_eq3(d), *eq.residual_eq4_eq6(d)):
        c.report(rep)
    safe = (np.abs(np.sin(d.phi)) > 1e-2)
    ds = d.take(safe)
    for rep in eq.residual_eq5_eq7(surface, ds):
        c.report(rep)
    c.report(eq.residual_ode(surface, ds, "v"))
    c.report(eq.residual_ode(surface, ds, "Jv"))
    fact = eq.fact3_quadratic(d)
    c.report(fact.identity)
    c.report(fact.linear_form)
    roots_ok = np.array([len(r) <= 2 for r in fact.roots]) & fact.phi_is_root
    c.add("fact3_root", float(np.sum(~roots_ok)), len(roots_ok), "count of points whose phi is not a root")

    if fam == "coordinate-sphere":
        hp = sf.find_horizontal_points(surface)
        c.add("horizontal_count", abs(hp.count - 2), 1, f"found {hp.count}")
        if not P.degenerate:
            errs = [eq.lemma2_check(surface, q).derived_error for q in hp.points]
            c.add("horizontal_jacobian", max(errs) if errs else np.inf, len(errs))
        c.add("dg_xi_vertical", _dg_xi_vertical(surface, locus_points), locus_points)
    return c.rows


def _dg_xi_vertical(surface, n_points: int) -> float:
    """Worst |dg(xi) + k_C| over points spread along the vertical locus."""
    uv = sf.sample_interior(surface, 400, np.random.default_rng(0))
    g = sf.point_data(surface, uv[:, 0], uv[:, 1]).g
    seed = uv[np.argmin(np.abs(g))]
    locus = sf.vertical_locus(surface, seed)
    idx = np.linspace(0, len(locus.nodes) - 1, n_points, endpoint=False).astype(int)
    return max(eq.lemma1_check(surface, locus.nodes[i]).signed_residual for i in idx)


def run_suite(
    surfaces: list[ParametrizedSurface],
    spaces: list[sp.SpaceParams],
    tiers: dict[str, float],
    samples: int = 100,
    seed: int = 0,
) -> list[SuiteRow]:
    """All checks, ordered by space then surface.  Deterministic for a fixed seed."""
    rows: list[SuiteRow] = []
    for i, P in enumerate(spaces):
        rows.extend(ambient_checks(P, np.random.default_rng([seed, i]), samples, tiers))
    for j, surf in enumerate(surfaces):
        t0 = time.perf_counter()
        rows.extend(surface_checks(surf, np.random.default_rng([seed, 1000 + j]), samples, tiers))
        log.info("checked %s (k=%g, tau=%g) in %.1fs", surf.name, surf.params.k, surf.params.tau, time.perf_counter() - t0)
    return rows


def default_surfaces(params: sp.SpaceParams) -> list[ParametrizedSurface]:
    return [
        ex.coordinate_sphere(params, (0.05, -0.03, 0.02), 0.1, name=f"sphere[{params.label()}]"),
        ex.vertical_plane(params, (0.1, 0.05), (1.0, 0.5), name=f"vertical-plane[{params.label()}]"),
    ]
