"""Run configuration: TOML files merged over the packaged defaults."""

from __future__ import annotations

import copy
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import tomli

from ektau.examples import FAMILIES, SurfaceSpec
from ektau.reconstruct import NetParams, RigidityTolerances
from ektau.space import SpaceParams

FAMILY_KINDS = ("self", "vertical-translation", "fiber-rotation", "screw", "radial", "stretch")
TOP_KEYS = {"seed", "out", "tolerances", "grid", "net", "rigidity", "surfaces"}
GRID_KEYS = {"spaces", "samples", "analyze_resolution", "convexity_resolution"}
RIGIDITY_KEYS = {"reference", "space", "families", "translation", "rotation", "amplitude", "ts", "three_points", "tolerances"}


class ConfigError(ValueError):
    pass


def load_defaults() -> dict:
    text = resources.files("ektau").joinpath("defaults.toml").read_text(encoding="utf-8")
    return tomli.loads(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class RigiditySettings:
    reference: str
    space: SpaceParams
    families: list[str]
    translation: float
    rotation: float
    amplitude: float
    ts: list[float]
    three_points: list[tuple[float, float]]
    tolerances: RigidityTolerances


@dataclass
class RunConfig:
    seed: int
    out: Path
    tolerances: dict[str, float]
    spaces: list[SpaceParams]
    samples: int
    analyze_resolution: int
    convexity_resolution: int
    net: NetParams
    rigidity: RigiditySettings
    surfaces: list[tuple[SurfaceSpec, bool]]  # (spec, pinned to its own space)

    def surface_specs(self, name: str | None = None) -> list[SurfaceSpec]:
        """Every configured surface instantiated in its space(s), optionally filtered by name."""
        out = []
        for spec, pinned in self.surfaces:
            spaces = [spec.params] if pinned else self.spaces
            for P in spaces:
                label = f"{spec.name}[{P.label()}]"
                if name is None or name in (spec.name, label):
                    out.append(SurfaceSpec(label, spec.family, P, dict(spec.options)))
        return out


def _space(val, where: str) -> SpaceParams:
    try:
        k, tau = (float(x) for x in val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected [k, tau], got {val!r}") from exc
    return SpaceParams(k, tau)


def _check_keys(table: dict, allowed: set[str], where: str):
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def _dataclass_from(cls, table: dict, where: str):
    names = {f.name for f in fields(cls)}
    _check_keys(table, names, where)
    try:
        return cls(**{k: type(getattr(cls(), k))(v) for k, v in table.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse(raw: dict) -> RunConfig:
    """Validate a merged configuration table."""
    _check_keys(raw, TOP_KEYS, "top level")
    tol = raw["tolerances"]
    _check_keys(tol, {"exact", "jet", "fd"}, "[tolerances]")
    try:
        tol = {k: float(v) for k, v in tol.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[tolerances]: {exc}") from exc
    if any(not v > 0 for v in tol.values()):
        raise ConfigError("[tolerances]: every tolerance must be positive")

    grid = raw["grid"]
    _check_keys(grid, GRID_KEYS, "[grid]")
    spaces = [_space(s, "[grid].spaces") for s in grid["spaces"]]
    if not spaces:
        raise ConfigError("[grid].spaces is empty")

    net = _dataclass_from(NetParams, raw["net"], "[net]")
    rig = raw["rigidity"]
    _check_keys(rig, RIGIDITY_KEYS, "[rigidity]")
    rtol = _dataclass_from(RigidityTolerances, rig["tolerances"], "[rigidity.tolerances]")
    if any(not getattr(rtol, f.name) > 0 for f in fields(rtol)):
        raise ConfigError("[rigidity.tolerances]: every tolerance must be positive")
    families = rig["families"]
    if isinstance(families, str):
        families = [families]
    bad = [f for f in families if f not in FAMILY_KINDS]
    if bad:
        raise ConfigError(f"[rigidity].families: unknown {bad}; expected from {FAMILY_KINDS}")
    try:
        three = [(float(u), float(v)) for u, v in rig["three_points"]]
        settings = RigiditySettings(
            str(rig["reference"]),
            _space(rig["space"], "[rigidity].space"),
            list(families),
            float(rig["translation"]),
            float(rig["rotation"]),
            float(rig["amplitude"]),
            [float(t) for t in rig["ts"]],
            three,
            rtol,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[rigidity]: {exc}") from exc

    surfaces = []
    names = set()
    for i, entry in enumerate(raw["surfaces"]):
        entry = dict(entry)
        try:
            name, family = str(entry.pop("name")), str(entry.pop("family"))
        except KeyError as exc:
            raise ConfigError(f"[[surfaces]] #{i}: missing {exc}") from exc
        if family not in FAMILIES:
            raise ConfigError(f"[[surfaces]] {name}: unknown family {family!r}")
        if name in names:
            raise ConfigError(f"[[surfaces]]: duplicate name {name!r}")
        names.add(name)
        pinned = "space" in entry
        P = _space(entry.pop("space"), f"[[surfaces]] {name}.space") if pinned else spaces[0]
        if "radius" in entry and not float(entry["radius"]) > 0:
            raise ConfigError(f"[[surfaces]] {name}: radius must be positive")
        surfaces.append((SurfaceSpec(name, family, P, entry), pinned))
    if settings.reference not in names:
        raise ConfigError(f"[rigidity].reference {settings.reference!r} is not a configured surface")

    try:
        seed = int(raw["seed"])
        samples = int(grid["samples"])
        res = int(grid["analyze_resolution"])
        cres = int(grid["convexity_resolution"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if samples < 1 or res < 2 or cres < 2:
        raise ConfigError("[grid]: sample counts must be positive and resolutions at least 2")
    return RunConfig(seed, Path(raw["out"]), tol, spaces, samples, res, cres, net, settings, surfaces)


def load(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides``."""
    raw = load_defaults()
    if path is not None:
        try:
            with open(path, "rb") as fh:
                user = tomli.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        raw = _merge(raw, user)
    if overrides:
        raw = _merge(raw, overrides)
    try:
        return parse(raw)
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from exc
