"""Integral curves of v and Jv, propagation of phi, and the congruence test.

The unit fields v = -J grad(theta)/|grad(theta)| and Jv are pulled back to
the parameter domain and integrated with fixed-step RK4.  Along the way the
angle phi can be carried by its transport equation, using only the data a
second immersion with the same metric, K_e and theta would share.  Many
trajectories are marched together so each RK4 stage costs two batched
evaluations of the surface data.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ektau import equations as eq
from ektau import ode
from ektau import space as sp
from ektau import surface as sf
from ektau.surface import ParametrizedSurface

log = logging.getLogger(__name__)

DIRECTIONS = ("v", "Jv")
VERDICTS = ("congruent", "not-congruent", "hypotheses-violated")
STAGES = ("a", "b", "c", "d", "e", "f", "g")
STAGE_NAMES = {
    "a": "induced metric",
    "b": "extrinsic curvature",
    "c": "theta",
    "d": "mean curvature at the three points",
    "e": "phi at the seed",
    "f": "phi propagation and second fundamental form",
    "g": "witness isometry",
}


class PreconditionError(ValueError):
    """The three comparison points are unusable (coincident, horizontal or critical)."""


def _wrap(angle):
    return np.angle(np.exp(1j * np.asarray(angle)))


# -- trajectories ----------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    direction: str
    step: float
    sense: int
    s: np.ndarray
    uv: np.ndarray
    phi_direct: np.ndarray
    phi_propagated: np.ndarray | None = None
    truncated: bool = False
    reason: str | None = None
    speed_error: float = 0.0

    @property
    def deviation(self) -> np.ndarray:
        if self.phi_propagated is None:
            raise ValueError("phi has not been propagated along this trajectory")
        return np.abs(_wrap(self.phi_propagated - self.phi_direct))

    @property
    def length(self) -> float:
        return float(self.s[-1] - self.s[0])

    def rows(self) -> list[dict]:
        prop = self.phi_propagated if self.phi_propagated is not None else np.full(len(self.s), np.nan)
        return [
            {"s": s, "u": uv[0], "v": uv[1], "phi_direct": pd, "phi_propagated": pp}
            for s, uv, pd, pp in zip(self.s, self.uv, self.phi_direct, prop)
        ]


@dataclass
class _MarchSettings:
    branch: str = "cos_nonneg"
    min_cos: float = 1e-2
    min_grad: float = 1e-8
    min_sin_phi: float = 1e-8
    fd_rel: float = 1e-3
    max_param_step: float = 0.05
    max_substeps: int = 256


def _field_rhs(surface, settings, propagate):
    """Batched right-hand side of (u, v[, phi]) for a set of trajectories."""
    P = surface.params

    def rhs(states, is_v, senses):
        uv = states[:, :2]
        inside = np.array([surface.in_domain(x) for x in uv])
        data = sf.point_data(surface, uv[:, 0], uv[:, 1], branch=settings.branch)
        field_ = np.where(is_v[:, None], data.v, data.Jv)
        with np.errstate(all="ignore"):
            coords = data.tangent_coords(field_)
        ok = (
            inside
            & (np.abs(np.cos(data.theta)) > settings.min_cos)
            & (data.grad_theta_norm > settings.min_grad)
            & np.all(np.isfinite(coords), axis=-1)
        )
        out = np.zeros_like(states)
        out[:, :2] = coords * senses[:, None]
        if not propagate:
            return out, ok
        phi = states[:, 2]
        ok &= np.abs(np.sin(phi)) > settings.min_sin_phi
        h = np.nan_to_num(sf.fd_step(surface, settings.fd_rel, data), nan=settings.fd_rel * surface.scale)
        offsets = np.array([1.0, -1.0, 0.5, -0.5])[:, None] * h[None, :]
        stencil = uv[None] + offsets[..., None] * np.nan_to_num(coords)[None]
        sd = sf.point_data(surface, stencil[..., 0].ravel(), stencil[..., 1].ravel(), branch=settings.branch)
        vs = sd.v.reshape(4, -1, 3)
        hh = h[:, None]
        dv = (4 * (vs[2] - vs[3]) / hh - (vs[0] - vs[1]) / (2 * hh)) / 3
        cov = sp.covariant_derivative(P, data.pos, field_, data.v, dv)
        wt = data.inner(cov, data.Jv)
        with np.errstate(all="ignore"):
            rv = eq.ode_rhs_v_from(wt, data.theta, data.grad_theta_norm, phi, P.tau, data.K_e)
            rj = eq.ode_rhs_Jv_from(wt, data.theta, data.grad_theta_norm, phi, P.tau, data.K_e)
        out[:, 2] = np.where(is_v, rv, rj) * senses
        ok &= np.isfinite(out[:, 2])
        return out, ok

    return rhs


def march(
    surface: ParametrizedSurface,
    starts,
    directions,
    senses,
    length: float,
    step: float,
    phi0=None,
    **settings,
) -> list[TrajectoryRecord]:
    """Integrate several trajectories at once with RK4.

    ``directions`` holds "v" or "Jv" per trajectory, ``senses`` +1 or -1
    (forward or backward in arclength).  When ``phi0`` is given, phi is
    propagated along each curve.  A trajectory stops, flagged as truncated,
    when it leaves the domain, approaches a horizontal point
    (|cos theta| <= min_cos) or a critical point of theta.
    """
    cfg = _MarchSettings(**settings)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    m = len(starts)
    directions = list(directions)
    if any(d not in DIRECTIONS for d in directions):
        raise ValueError(f"directions must be drawn from {DIRECTIONS}")
    if step <= 0 or length < 0:
        raise ValueError("step must be positive and length nonnegative")
    is_v = np.array([d == "v" for d in directions])
    senses = np.asarray(senses, dtype=float).reshape(m)
    propagate = phi0 is not None
    y = np.zeros((m, 3))
    y[:, :2] = starts
    if propagate:
        y[:, 2] = np.asarray(phi0, dtype=float).reshape(m)
    rhs = _field_rhs(surface, cfg, propagate)

    n_steps = int(round(length / step))
    history = [y.copy()]
    counts = np.ones(m, dtype=int)
    active = np.ones(m, dtype=bool)
    reasons: list[str | None] = [None] * m

    _, ok0 = rhs(y, is_v, senses)
    for i in np.flatnonzero(~ok0):
        active[i] = False
        reasons[i] = "singular start"
    for _ in range(n_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ya, fv, fs = y[idx], is_v[idx], senses[idx]
        new, good = _rk4_substepped(rhs, ya, fv, fs, step, cfg)
        inside = np.array([surface.in_domain(x) for x in new[:, :2]])
        good &= inside & np.all(np.isfinite(new), axis=-1)
        y_next = y.copy()
        y_next[idx[good]] = new[good]
        for pos in np.flatnonzero(~good):
            active[idx[pos]] = False
            reasons[idx[pos]] = "left domain" if not inside[pos] else "singular field"
        counts[idx[good]] += 1
        y = y_next
        history.append(y.copy())
    hist = np.stack(history)

    records = []
    for j in range(m):
        path = hist[: counts[j], j]
        records.append(_finish(surface, cfg, directions[j], step, int(senses[j]), path, propagate, reasons[j]))
    return records


def _rk4_substepped(rhs, y, is_v, senses, step, cfg):
    """One RK4 step of size ``step``, split where the parameter-space speed is large.

    Near a coordinate singularity of the parametrization the pulled-back
    field is large although the curve is smooth on the surface; splitting
    keeps each substep below ``max_param_step`` in the parameter domain.
    """
    k1, ok = rhs(y, is_v, senses)
    speed = np.linalg.norm(np.nan_to_num(k1[:, :2], nan=0.0, posinf=0.0), axis=-1)
    n_sub = int(np.clip(np.ceil(np.max(speed) * step / cfg.max_param_step), 1, cfg.max_substeps))
    h = step / n_sub
    good = ok.copy()
    for i in range(n_sub):
        if i:
            k1, ok = rhs(y, is_v, senses)
            good &= ok
        k2, ok2 = rhs(y + 0.5 * h * k1, is_v, senses)
        k3, ok3 = rhs(y + 0.5 * h * k2, is_v, senses)
        k4, ok4 = rhs(y + h * k3, is_v, senses)
        good &= ok2 & ok3 & ok4
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y, good


def _finish(surface, cfg, direction, step, sense, path, propagate, reason):
    data = sf.point_data(surface, path[:, 0], path[:, 1], branch=cfg.branch)
    chords = sp.norm(surface.params, data.pos[:-1], np.diff(data.pos, axis=0)) if len(path) > 1 else np.zeros(0)
    # chord/step = 1 - O(kappa^2 step^2) for a unit-speed curve
    speed_error = float(np.max(np.abs(chords / step - 1))) if chords.size else 0.0
    return TrajectoryRecord(
        direction=direction,
        step=step,
        sense=sense,
        s=sense * step * np.arange(len(path)),
        uv=path[:, :2].copy(),
        phi_direct=data.phi,
        phi_propagated=path[:, 2].copy() if propagate else None,
        truncated=reason is not None,
        reason=reason,
        speed_error=speed_error,
    )


def integral_curve(
    surface: ParametrizedSurface, start, direction: str = "v", length: float = 1.0, step: float = 1e-2, **settings
) -> TrajectoryRecord:
    """Trajectory of the unit field v or Jv from ``start``; negative length runs backwards."""
    sense = 1 if length >= 0 else -1
    return march(surface, [start], [direction], [sense], abs(length), step, **settings)[0]


def propagate_phi(surface: ParametrizedSurface, trajectory: TrajectoryRecord, phi0=None, **settings) -> TrajectoryRecord:
    """Re-run ``trajectory`` carrying phi by its transport equation.

    ``phi0`` defaults to the surface's own phi at the start (self-test mode).
    The returned record holds both the propagated and the directly computed phi.
    """
    phi0 = trajectory.phi_direct[0] if phi0 is None else phi0
    n = len(trajectory.s) - 1
    return march(
        surface,
        [trajectory.uv[0]],
        [trajectory.direction],
        [trajectory.sense],
        n * trajectory.step,
        trajectory.step,
        phi0=[phi0],
        **settings,
    )[0]


@dataclass
class ConvergenceMeasurement:
    steps: tuple[float, float, float]
    endpoints: np.ndarray
    errors: tuple[float, float]
    order: float


def convergence_order(
    surface: ParametrizedSurface, start, direction: str, length: float, step: float, propagate: bool = True, **settings
) -> ConvergenceMeasurement:
    """Observed RK4 order from endpoints at steps h, h/2, h/4."""
    steps = (step, step / 2, step / 4)
    phi0 = None
    if propagate:
        phi0 = [sf.point_data(surface, start[0], start[1]).phi]
    ends = []
    for h in steps:
        rec = march(surface, [start], [direction], [1], length, h, phi0=phi0, **settings)[0]
        if rec.truncated:
            raise eq.SingularConfiguration(f"trajectory truncated ({rec.reason}) during convergence measurement")
        end = rec.uv[-1]
        if propagate:
            end = np.append(end, rec.phi_propagated[-1])
        ends.append(end)
    ends = np.array(ends)
    e1 = float(np.linalg.norm(ends[0] - ends[1]))
    e2 = float(np.linalg.norm(ends[1] - ends[2]))
    return ConvergenceMeasurement(steps, ends, (e1, e2), ode.observed_order(ends[0], ends[1], ends[2]))


# -- congruence test -------------------------------------------------------------


@dataclass(frozen=True)
class RigidityTolerances:
    metric: float = 1e-8
    K_e: float = 1e-8
    theta: float = 1e-8
    H: float = 1e-8
    phi_seed: float = 1e-6
    propagation: float = 1e-5
    alpha: float = 1e-5
    curvature: float = 1e-5
    witness: float = 1e-9
    min_grad: float = 1e-6
    min_cos: float = 1e-3


@dataclass(frozen=True)
class NetParams:
    """Trajectory net around the seed; lengths and steps in units of surface.scale."""

    n_curves: int = 8
    length: float = 3.0
    step: float = 0.025
    min_cos: float = 0.05
    sample_resolution: int = 12
    horizontal_radius: float = 0.1


@dataclass
class StageResult:
    stage: str
    passed: bool
    value: float
    tolerance: float
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"stage": self.stage, "name": STAGE_NAMES[self.stage], **_jsonable(asdict(self))}


@dataclass
class CongruenceVerdict:
    member: str
    verdict: str
    failed_stage: str | None
    stages: list[StageResult]
    alpha_discrepancy: float
    propagation_discrepancy: float
    theta_sign: int | None
    seed: tuple[float, float]
    witness: list[dict] | None = None
    alignment: dict | None = None
    coverage: float = 0.0
    truncated_trajectories: int = 0

    def stage(self, name: str) -> StageResult | None:
        return next((s for s in self.stages if s.stage == name), None)

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "stages"}
        out["stages"] = [s.to_dict() for s in sorted(self.stages, key=lambda s: s.stage)]
        return _jsonable(out)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def comparison_grid(surface: ParametrizedSurface, resolution: int, margin: float = 0.05) -> np.ndarray:
    """Deterministic tensor grid over the parameter domain (endpoint-free in periodic u)."""
    (u0, u1), (v0, v1) = surface.domain
    if surface.periodic_u:
        us = u0 + (u1 - u0) * (np.arange(resolution) + 0.5) / resolution
    else:
        du = margin * (u1 - u0)
        us = np.linspace(u0 + du, u1 - du, resolution)
    dv = margin * (v1 - v0)
    vs = np.linspace(v0 + dv, v1 - dv, resolution)
    U, V = np.meshgrid(us, vs, indexing="ij")
    return np.column_stack([U.ravel(), V.ravel()])


def _rel(diff, ref) -> float:
    diff = np.abs(np.asarray(diff))
    if diff.size == 0:
        return 0.0
    return float(np.max(diff) / max(1.0, float(np.max(np.abs(ref)))))


def check_three_points(reference: ParametrizedSurface, three_points, tol: RigidityTolerances | None = None):
    """Validate the comparison points; returns the index of the seed among them."""
    tol = tol or RigidityTolerances()
    pts = np.asarray(three_points, dtype=float)
    if pts.shape != (3, 2):
        raise PreconditionError("exactly three parameter points (u, v) are required")
    pos = reference.position(pts[:, 0], pts[:, 1])
    for i in range(3):
        for j in range(i + 1, 3):
            if np.linalg.norm(pos[i] - pos[j]) < 1e-9 * reference.scale:
                raise PreconditionError(f"points {i} and {j} coincide on the surface")
    if not all(reference.in_domain(p) for p in pts):
        raise PreconditionError("a comparison point lies outside the parameter domain")
    d = sf.point_data(reference, pts[:, 0], pts[:, 1])
    horizontal = d.horizontal | (np.abs(np.cos(d.theta)) <= tol.min_cos)
    if np.any(horizontal):
        raise PreconditionError(f"point {int(np.flatnonzero(horizontal)[0])} is a horizontal point of the reference")
    usable = d.grad_theta_norm > tol.min_grad
    if not np.any(usable):
        raise PreconditionError("grad theta vanishes at all three points")
    seed = int(np.flatnonzero(usable)[0])
    return seed


def _net(member, seed_uv, phi0, branch, net: NetParams):
    """Propagate phi over an n x n net of v- and Jv-curves through the seed."""
    L, h = net.length * member.scale, net.step * member.scale
    settings = dict(branch=branch, min_cos=net.min_cos)
    spines = march(
        member, [seed_uv] * 4, ["Jv", "Jv", "v", "v"], [1, -1, 1, -1], L / 2, h, phi0=[phi0] * 4, **settings
    )
    starts, phis, dirs = [], [], []
    half = net.n_curves // 2
    for spine_pair, cross in (((spines[0], spines[1]), "v"), ((spines[2], spines[3]), "Jv")):
        stations = []
        for k, rec in enumerate(spine_pair):
            count = half if k == 0 else net.n_curves - half - 1
            n = len(rec.s)
            for j in range(1, count + 1):
                i = min(n - 1, round(j * (n - 1) / max(count, 1)))
                stations.append((rec.uv[i], rec.phi_propagated[i]))
        stations.insert(0, (np.asarray(seed_uv, dtype=float), phi0))
        for uv, ph in stations:
            starts.append(uv)
            phis.append(ph)
            dirs.append(cross)
    m = len(starts)
    curves = march(
        member,
        starts * 2,
        dirs * 2,
        [1] * m + [-1] * m,
        L / 2,
        h,
        phi0=phis * 2,
        **settings,
    )
    return spines + curves


def _frame_at(data):
    return data.pos, data.eps1, data.normal


def _witness(reference, member, seed_uv, theta_sign, tol: RigidityTolerances, grid):
    """Try to write an isometry h with h o member = reference inside the implemented subgroup."""
    P = reference.params
    dm = sf.point_data(member, seed_uv[0], seed_uv[1])
    dr = sf.point_data(reference, seed_uv[0], seed_uv[1])
    p_m, e_m, n_m = (np.asarray(x, dtype=float) for x in _frame_at(dm))
    p_r, e_r, n_r = (np.asarray(x, dtype=float) for x in _frame_at(dr))
    chain: list[sp.IsometryDescriptor] = []
    if theta_sign < 0:
        chain.append(sp.IsometryDescriptor("pi-rotation", 0.0))
    pre = sp.compose(P, chain)
    q, en, nn = pre(p_m), pre.A @ e_m, pre.A @ n_m

    def ang(w):
        return float(np.arctan2(w[1], w[0]))

    if P.k == 0:
        ref_vec, cur_vec = (n_r, nn) if np.hypot(*n_r[:2]) > 1e-6 else (e_r, en)
        beta = ang(ref_vec) - ang(cur_vec)
    elif np.hypot(*q[:2]) > 1e-12 or np.hypot(*p_r[:2]) > 1e-12:
        beta = ang(p_r) - ang(q)
    else:
        beta = ang(n_r) - ang(nn) if np.hypot(*n_r[:2]) > 1e-6 else ang(e_r) - ang(en)
    beta = float(_wrap(beta))
    negligible = 1e-13 * max(1.0, reference.scale)
    if abs(beta) > 1e-13:
        chain.append(sp.IsometryDescriptor("fiber-rotation", beta))
    q = sp.compose(P, chain)(p_m)
    if P.k == 0 and np.hypot(*(p_r[:2] - q[:2])) > negligible:
        shift = (float(p_r[0] - q[0]), float(p_r[1] - q[1]))
        chain.append(sp.IsometryDescriptor("horizontal-translation", shift=shift))
        q = sp.compose(P, chain)(p_m)
    if abs(p_r[2] - q[2]) > negligible:
        chain.append(sp.IsometryDescriptor("vertical-translation", float(p_r[2] - q[2])))
    h = sp.compose(P, chain)
    moved = h(member.position(grid[:, 0], grid[:, 1]))
    target = reference.position(grid[:, 0], grid[:, 1])
    err = float(np.max(np.linalg.norm(moved - target, axis=-1)))
    alignment = {
        "member_point": p_m,
        "reference_point": p_r,
        "member_eps1": e_m,
        "reference_eps1": e_r,
        "member_normal": n_m,
        "reference_normal": n_r,
        "position_error": err,
    }
    ok = err < tol.witness * max(1.0, reference.scale)
    descriptors = [{"kind": d.kind, "amount": d.amount, "shift": list(d.shift)} for d in chain] if ok else None
    return ok, err, descriptors, _jsonable(alignment)


def congruence_test(
    reference: ParametrizedSurface,
    family,
    three_points,
    tol: RigidityTolerances | None = None,
    net: NetParams | None = None,
) -> list[CongruenceVerdict]:
    """Decide, member by member, whether ``family`` is congruent to ``reference``.

    Stages (a), (b) and (d) check the hypotheses: equal induced metric and
    K_e over a sample grid, equal H at the three points.  Stage (c) matches
    theta up to sign; each sign is then tried in turn through (e) phi at the
    seed and (f) phi propagation over a trajectory net plus a direct
    comparison of the second fundamental form.  Stage (g) builds a witness
    isometry when one exists in the implemented subgroup.
    """
    tol = tol or RigidityTolerances()
    net = net or NetParams()
    seed_index = check_three_points(reference, three_points, tol)
    pts = np.asarray(three_points, dtype=float)
    seed_uv = pts[seed_index]
    grid = comparison_grid(reference, net.sample_resolution)
    ref_grid = sf.point_data(reference, grid[:, 0], grid[:, 1])
    ref_pts = sf.point_data(reference, pts[:, 0], pts[:, 1])
    ref_seed = ref_pts.take(seed_index)
    members = family.members if hasattr(family, "members") else list(family)
    return [
        _test_member(reference, g, pts, seed_index, seed_uv, grid, ref_grid, ref_pts, ref_seed, tol, net)
        for g in members
    ]


def _hypothesis_stages(reference, member, pts, grid, ref_grid, ref_pts, tol):
    d = sf.point_data(member, grid[:, 0], grid[:, 1])
    I_ref, I_m = ref_grid.first_form(), d.first_form()
    a = StageResult("a", False, _rel(I_m - I_ref, I_ref), tol.metric)
    a.passed = a.value < tol.metric
    b = StageResult("b", False, _rel(d.K_e - ref_grid.K_e, ref_grid.K_e), tol.K_e)
    b.passed = b.value < tol.K_e
    dp = sf.point_data(member, pts[:, 0], pts[:, 1])
    dH = np.abs(dp.H - ref_pts.H)
    dd = StageResult("d", False, _rel(dH, ref_pts.H), tol.H, {"H_reference": ref_pts.H, "H_member": dp.H})
    dd.passed = dd.value < tol.H
    return d, [a, b, dd]


def _theta_stage(reference, member, seed_uv, d_grid, ref_grid, sign, tol):
    ok_pts = (~ref_grid.horizontal) & (~d_grid.horizontal)
    value = _rel(d_grid.g[ok_pts] - sign * ref_grid.g[ok_pts], 1.0)
    detail = {"sign": sign}
    passed = value < tol.theta
    P = reference.params
    if P.degenerate:
        detail["gauss_inversion"] = "degenerate space: theta compared directly"
    else:
        dm = sf.point_data(member, seed_uv[0], seed_uv[1])
        K = float(sf.intrinsic_curvature(member, np.asarray(seed_uv)[None])[0])
        try:
            roots = eq.solve_theta(K, float(dm.K_e), P, tol=1e-6)
            # compared in nu^2 so the square root does not amplify FD noise near nu = 0
            miss = float(abs(roots[-1] ** 2 - float(dm.g) ** 2))
            detail.update(gauss_roots=roots, gauss_miss=miss)
            passed = passed and miss < tol.curvature
        except eq.InconsistentData as exc:
            detail["gauss_inversion"] = str(exc)
            passed = False
    return StageResult("c", passed, value, tol.theta, detail)


def _test_member(reference, member, pts, seed_index, seed_uv, grid, ref_grid, ref_pts, ref_seed, tol, net):
    name = member.name
    d_grid, hyp = _hypothesis_stages(reference, member, pts, grid, ref_grid, ref_pts, tol)
    failed = next((s for s in hyp if not s.passed), None)
    seed = (float(seed_uv[0]), float(seed_uv[1]))
    if failed is not None:
        return CongruenceVerdict(name, "hypotheses-violated", failed.stage, hyp, np.nan, np.nan, None, seed)

    # the sign that matches at the seed is tried first
    g_seed = float(sf.point_data(member, seed_uv[0], seed_uv[1]).g)
    order = sorted((1, -1), key=lambda s: abs(g_seed - s * float(ref_seed.g)))
    best: tuple[int, list[StageResult], dict] | None = None
    for sign in order:
        stages = list(hyp)
        c = _theta_stage(reference, member, seed_uv, d_grid, ref_grid, sign, tol)
        stages.append(c)
        extra: dict = {}
        if c.passed:
            e = _phi_seed_stage(member, seed_uv, ref_seed, tol)
            stages.append(e)
            if e.passed:
                f, extra = _propagation_stage(reference, member, seed_uv, ref_seed, grid, ref_grid, d_grid, tol, net)
                stages.append(f)
        reached = len(stages)
        if best is None or reached > len(best[1]) or (reached == len(best[1]) and stages[-1].passed):
            best = (sign, stages, extra)
        if stages[-1].passed and stages[-1].stage == "f":
            break
    sign, stages, extra = best
    last = stages[-1]
    if not (last.passed and last.stage == "f"):
        failing = next(s for s in stages if not s.passed)
        return CongruenceVerdict(
            name, "not-congruent", failing.stage, stages,
            extra.get("alpha", np.nan), extra.get("propagation", np.nan), sign, seed,
            coverage=extra.get("coverage", 0.0), truncated_trajectories=extra.get("truncated", 0),
        )
    ok, err, witness, alignment = _witness(reference, member, seed_uv, sign, tol, grid)
    gstage = StageResult("g", True, err, tol.witness * max(1.0, reference.scale), {"representable": ok})
    stages.append(gstage)
    return CongruenceVerdict(
        name, "congruent", None, stages, extra["alpha"], extra["propagation"], sign, seed,
        witness=witness, alignment=None if ok else alignment,
        coverage=extra["coverage"], truncated_trajectories=extra["truncated"],
    )


def _phi_seed_stage(member, seed_uv, ref_seed, tol):
    dm = sf.point_data(member, seed_uv[0], seed_uv[1])
    fact = eq.fact3_quadratic(dm)
    roots = fact.roots[0]
    phi_ref = float(ref_seed.phi)
    miss_ref = float(np.min(np.abs(_wrap(roots - phi_ref)))) if roots.size else np.inf
    value = float(np.abs(_wrap(dm.phi - phi_ref)))
    passed = value < tol.phi_seed and miss_ref < tol.phi_seed
    return StageResult("e", passed, value, tol.phi_seed, {"roots": roots, "phi_reference": phi_ref, "phi_member": dm.phi})


def _propagation_stage(reference, member, seed_uv, ref_seed, grid, ref_grid, d_grid, tol, net):
    records = _net(member, seed_uv, float(ref_seed.phi), "cos_nonneg", net)
    nodes = np.concatenate([r.uv for r in records])
    prop = np.concatenate([r.phi_propagated for r in records])
    ref_nodes = sf.point_data(reference, nodes[:, 0], nodes[:, 1])
    prop_err = float(np.max(np.abs(_wrap(prop - ref_nodes.phi))))

    # second fundamental forms in the shared parameter basis
    hp = sf.find_horizontal_points(reference, resolution=24)
    ring = _horizontal_ring(hp, reference, net.horizontal_radius)
    sample = np.concatenate([grid, nodes, ring]) if len(ring) else np.concatenate([grid, nodes])
    r_all = sf.point_data(reference, sample[:, 0], sample[:, 1])
    m_all = sf.point_data(member, sample[:, 0], sample[:, 1])
    alpha = _rel(m_all.II - r_all.II, r_all.II)
    coverage = _coverage(reference, grid, nodes)
    truncated = sum(r.truncated for r in records)
    passed = prop_err < tol.propagation and alpha < tol.alpha
    detail = {
        "propagation_error": prop_err,
        "alpha_discrepancy": alpha,
        "net_nodes": int(len(nodes)),
        "horizontal_samples": int(len(ring)),
        "coverage": coverage,
        "truncated_trajectories": truncated,
    }
    return StageResult("f", passed, max(prop_err, alpha), min(tol.propagation, tol.alpha), detail), {
        "alpha": alpha,
        "propagation": prop_err,
        "coverage": coverage,
        "truncated": truncated,
    }


def _horizontal_ring(hp, surface, radius, n: int = 8) -> np.ndarray:
    """Parameter points on small rings around the horizontal points."""
    out = []
    (u0, u1), (v0, v1) = surface.domain
    rad = radius * min(u1 - u0, v1 - v0) / (2 * np.pi)
    for c in hp.points:
        for t in 2 * np.pi * np.arange(n) / n:
            p = c + rad * np.array([np.cos(t), np.sin(t)])
            if surface.in_domain(p):
                out.append(p)
    return np.array(out).reshape(-1, 2)


def _coverage(surface, grid, nodes) -> float:
    """Fraction of grid points within one grid spacing of a net node (in the parameter domain)."""
    (u0, u1), (v0, v1) = surface.domain
    scale = np.array([u1 - u0, v1 - v0])
    g, n = grid / scale, nodes / scale
    res = int(round(np.sqrt(len(grid))))
    reach = 1.0 / max(res - 1, 1)
    d = g[:, None, :] - n[None, :, :]
    if surface.periodic_u:
        d[..., 0] = (d[..., 0] + 0.5) % 1.0 - 0.5
    near = np.min(np.linalg.norm(d, axis=-1), axis=1) < reach
    return float(np.mean(near))
