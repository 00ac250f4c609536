"""``ektau`` command line: verify | analyze | rigidity | examples."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ektau import config as cfg
from ektau import examples as ex
from ektau import reconstruct as rc
from ektau import space as sp
from ektau import suite
from ektau import surface as sf

log = logging.getLogger("ektau")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

ANALYZE_COLUMNS = (
    "u", "v", "x", "y", "z", "E", "F", "G", "H", "K_e", "K", "g",
    "theta", "phi", "grad_theta_norm", "lambda1", "lambda2", "horizontal_flag",
)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header])


def write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


# -- verify ------------------------------------------------------------------------


def cmd_verify(conf: cfg.RunConfig) -> int:
    surfaces = [s.build() for s in conf.surface_specs()]
    rows = suite.run_suite(surfaces, conf.spaces, conf.tolerances, conf.samples, conf.seed)
    header = list(rows[0].as_dict()) if rows else []
    write_csv(conf.out / "verify.csv", header, [r.as_dict() for r in rows])
    failed = [r for r in rows if not r.passed]
    lines = [f"{len(rows) - len(failed)}/{len(rows)} checks passed"]
    for r in failed:
        lines.append(
            f"FAIL {r.check} on {r.surface} (k={r.k:g}, tau={r.tau:g}): "
            f"residual {r.max_residual:.3e} >= {r.tier} tolerance {r.tolerance:.1e}"
        )
    summary = "\n".join(lines) + "\n"
    (conf.out / "verify_summary.txt").write_text(summary, encoding="utf-8")
    sys.stdout.write(summary)
    return EXIT_FAIL if failed else EXIT_OK


# -- analyze -----------------------------------------------------------------------


def analyze_rows(surface: sf.ParametrizedSurface, resolution: int) -> list[dict]:
    uv = rc.comparison_grid(surface, resolution)
    d = sf.point_data(surface, uv[:, 0], uv[:, 1])
    K = sf.intrinsic_curvature(surface, uv)
    cols = {
        "u": uv[:, 0], "v": uv[:, 1], "x": d.pos[:, 0], "y": d.pos[:, 1], "z": d.pos[:, 2],
        "E": d.E, "F": d.F, "G": d.G, "H": d.H, "K_e": d.K_e, "K": K, "g": d.g,
        "theta": d.theta, "phi": d.phi, "grad_theta_norm": d.grad_theta_norm,
        "lambda1": d.lambda1, "lambda2": d.lambda2, "horizontal_flag": d.horizontal,
    }
    return [{c: cols[c][i] for c in ANALYZE_COLUMNS} for i in range(len(uv))]


def cmd_analyze(conf: cfg.RunConfig, name: str) -> int:
    specs = conf.surface_specs(name)
    if not specs:
        raise cfg.ConfigError(f"no configured surface named {name!r}")
    for spec in specs:
        path = conf.out / f"analyze_{_slug(spec.name)}.csv"
        write_csv(path, ANALYZE_COLUMNS, analyze_rows(spec.build(), conf.analyze_resolution))
        print(f"wrote {path}")
    return EXIT_OK


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_=." else "_" for c in name).strip("_")


# -- rigidity ----------------------------------------------------------------------


def build_family(kind: str, reference: sf.ParametrizedSurface, rs: cfg.RigiditySettings) -> ex.Family:
    if kind == "self":
        return ex.Family(reference, [reference], [0.0], None)
    if kind == "vertical-translation":
        return ex.isometric_family(reference, ex.vertical_translation_path(rs.translation), rs.ts)
    if kind == "fiber-rotation":
        return ex.isometric_family(reference, ex.fiber_rotation_path(rs.rotation), rs.ts)
    if kind == "screw":
        return ex.isometric_family(reference, ex.screw_path(rs.translation, rs.rotation), rs.ts)
    return ex.perturbed_family(reference, kind, rs.amplitude, rs.ts)


def cmd_rigidity(conf: cfg.RunConfig, families: list[str] | None = None, three_points=None) -> int:
    rs = conf.rigidity
    families = families or rs.families
    bad = [f for f in families if f not in cfg.FAMILY_KINDS]
    if bad:
        raise cfg.ConfigError(f"unknown families {bad}; expected from {cfg.FAMILY_KINDS}")
    three = three_points if three_points is not None else rs.three_points
    spec = next(s for s, _ in conf.surfaces if s.name == rs.reference)
    label = f"{spec.name}[{rs.space.label()}]"
    reference = ex.SurfaceSpec(label, spec.family, rs.space, dict(spec.options)).build()
    report: dict = {
        "reference": label,
        "space": {"k": rs.space.k, "tau": rs.space.tau},
        "three_points": [list(p) for p in three],
        "families": [],
    }
    status = EXIT_OK
    try:
        rc.check_three_points(reference, three, rs.tolerances)
    except rc.PreconditionError as exc:
        report["error"] = {"kind": "precondition", "message": str(exc)}
        write_json(conf.out / "rigidity.json", report)
        print(f"precondition error: {exc}")
        return EXIT_FAIL
    for kind in families:
        fam = build_family(kind, reference, rs)
        verdicts = rc.congruence_test(reference, fam, three, rs.tolerances, conf.net)
        entries = []
        for t, v in zip(fam.ts, verdicts):
            entry = v.to_dict()
            entry["t"] = t
            entries.append(entry)
            if v.verdict != "congruent":
                status = EXIT_FAIL
            stage = f" at stage ({v.failed_stage}) {rc.STAGE_NAMES[v.failed_stage]}" if v.failed_stage else ""
            print(f"{kind} t={t:g}: {v.verdict}{stage}")
        report["families"].append({"family": kind, "expected_stage": fam.expected_stage, "members": entries})
    write_json(conf.out / "rigidity.json", rc._jsonable(report))
    return status


# -- examples ----------------------------------------------------------------------


def cmd_examples(conf: cfg.RunConfig) -> int:
    listing = {"families": list(ex.FAMILIES), "deformations": list(cfg.FAMILY_KINDS), "surfaces": []}
    print("surface families: " + ", ".join(ex.FAMILIES))
    print("deformation families: " + ", ".join(cfg.FAMILY_KINDS))
    for spec in conf.surface_specs():
        surf = spec.build()
        rep = ex.convexity_report(surf, conf.convexity_resolution)
        entry = {
            "name": spec.name,
            "family": spec.family,
            "k": spec.params.k,
            "tau": spec.params.tau,
            "min_K_e": rep.min_K_e,
            "min_K_e_minus_tau2": rep.min_K_e_minus_tau2,
            "min_lambda2": rep.min_lambda2,
            "max_lambda1": rep.max_lambda1,
            "strictly_convex": rep.strictly_convex,
        }
        listing["surfaces"].append(entry)
        print(
            f"{spec.name}: min K_e {rep.min_K_e:.6g}, min K_e - tau^2 {rep.min_K_e_minus_tau2:.6g}, "
            f"strictly convex: {'yes' if rep.strictly_convex else 'no'}"
        )
    write_json(conf.out / "examples.json", rc._jsonable(listing))
    return EXIT_OK


# -- entry point -------------------------------------------------------------------


def _tier_override(text: str) -> tuple[str, float]:
    try:
        tier, value = text.split("=", 1)
        return tier.strip(), float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected TIER=VALUE, got {text!r}") from exc


def _three_points(text: str):
    try:
        pts = [tuple(float(x) for x in p.split(",")) for p in text.split(";")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'u,v;u,v;u,v', got {text!r}") from exc
    if len(pts) != 3 or any(len(p) != 2 for p in pts):
        raise argparse.ArgumentTypeError("expected exactly three points 'u,v;u,v;u,v'")
    return pts


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML file merged over the packaged defaults")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument(
        "--tolerance-tier", type=_tier_override, action="append", default=[], metavar="TIER=VALUE",
        help="override a tolerance tier (exact, jet, fd); repeatable",
    )
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="ektau", description="Surface geometry and rigidity checks in E(k, tau).")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="run the residual suite over every configured surface")
    a = sub.add_parser("analyze", parents=[common], help="dump pointwise fields of a surface as CSV")
    a.add_argument("surface", help="surface name, with or without the [k=..,tau=..] suffix")
    r = sub.add_parser("rigidity", parents=[common], help="run the congruence test on deformation families")
    r.add_argument("--family", action="append", help=f"one of {', '.join(cfg.FAMILY_KINDS)}; repeatable")
    r.add_argument("--three-points", type=_three_points, help="'u,v;u,v;u,v'")
    sub.add_parser("examples", parents=[common], help="list surface families and convexity reports")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides: dict = {}
    if args.out is not None:
        overrides["out"] = str(args.out)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.tolerance_tier:
        overrides["tolerances"] = dict(args.tolerance_tier)
    try:
        conf = cfg.load(args.config, overrides)
        if args.command == "verify":
            return cmd_verify(conf)
        if args.command == "analyze":
            return cmd_analyze(conf, args.surface)
        if args.command == "rigidity":
            return cmd_rigidity(conf, args.family, args.three_points)
        return cmd_examples(conf)
    except cfg.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (sp.DomainError, sf.DegenerateImmersion) as exc:
        print(f"config error: surface is not valid in this space: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
