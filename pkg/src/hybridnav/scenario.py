"""Scenario files and seeded random worlds.

A scenario is a YAML mapping::

    dimension: 2
    target: [0, 0]
    obstacles:
      - {center: [2, 0], radius: 1}
    starts: [[5, 0.3], [4, -2]]      # or {random: 10}
    controller: {gamma: 1.5, c_phi: 0.9, mode_map: zeno_free, ...}
    sensor: {resolution: 0.5, max_range: 2.0, margin: 0.1}     # degrees, m
    drive: {v_max: 0.31, omega_max: 1.9, k_v: 0.1, p: 1, heading: 0,
            robot_radius: 0.17, safety_margin: 0.13}              # m
    run: {dt: 0.001, t_max: 60, e_c: 0.01, seed: 0}
    variants: [known-map, sensor-based]

The unicycle variant inflates the obstacles seen by the controller by
``robot_radius + safety_margin`` and reports clearance for the robot's disc.

Angles in the file are degrees. Every default that gets filled in is listed
in ``Scenario.defaults_applied``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .diffdrive import DriveParams
from .executor import RunConfig
from .sensor import ScanConfig2D, ScanConfig3D, SensorError
from .world import Workspace, WorkspaceError, build_workspace

VARIANTS = ("known-map", "sensor-based", "unicycle", "original-maps", "original-choice")

CONTROLLER_DEFAULTS = {
    "gamma": 1.5, "epsilon": None, "active_range": None, "vd_distance": None,
    "c_phi": 0.9, "vd_range_factor": 1.25, "mode_map": "zeno_free",
    "choice_map": "continuity", "vd_plane": "entry",
}
RUN_DEFAULTS = {"dt": 1e-3, "t_max": 60.0, "e_c": 1e-2, "seed": 0, "jump_budget": None}
SENSOR_DEFAULTS = {"resolution": 0.5, "polar_resolution": 1.0, "max_range": 2.0,
                   "margin": 0.1}
DRIVE_DEFAULTS = {"v_max": 0.31, "omega_max": 1.9, "k_v": 0.1, "p": 1, "heading": 0.0,
                  "robot_radius": 0.17, "safety_margin": 0.13}


class ScenarioError(ValueError):
    """Malformed or invalid scenario; ``violations`` lists the problems."""

    def __init__(self, message, violations=()):
        self.violations = list(violations)
        super().__init__(message)


@dataclass
class Scenario:
    dimension: int
    centers: np.ndarray
    radii: np.ndarray
    target: np.ndarray
    starts: list
    controller: dict = field(default_factory=lambda: dict(CONTROLLER_DEFAULTS))
    run: dict = field(default_factory=lambda: dict(RUN_DEFAULTS))
    sensor: dict | None = None
    drive: dict | None = None
    variants: list = field(default_factory=lambda: ["known-map"])
    defaults_applied: list = field(default_factory=list)
    name: str = "scenario"

    def workspace(self, sensor_range: float | None = None) -> Workspace:
        c = self.controller
        return build_workspace(self.centers, self.radii, self.target, gamma=c["gamma"],
                               epsilon=c["epsilon"], active_range=c["active_range"],
                               vd_distance=c["vd_distance"], c_phi=c["c_phi"],
                               vd_range_factor=c["vd_range_factor"],
                               sensor_range=sensor_range)

    def scan_config(self):
        s = {**SENSOR_DEFAULTS, **(self.sensor or {})}
        if self.dimension == 2:
            return ScanConfig2D(s["resolution"], s["max_range"])
        return ScanConfig3D(s["polar_resolution"], s["resolution"], s["max_range"])

    def run_config(self, variant: str = "known-map") -> RunConfig:
        r = self.run
        kw = dict(dt=r["dt"], t_max=r["t_max"], e_c=r["e_c"], jump_budget=r["jump_budget"])
        if variant == "sensor-based":
            s = {**SENSOR_DEFAULTS, **(self.sensor or {})}
            kw.update(mode="sensor-based", scan=self.scan_config(), margin=s["margin"])
        if variant == "unicycle":
            d = {**DRIVE_DEFAULTS, **(self.drive or {})}
            kw.update(kinematics="unicycle",
                      drive=DriveParams(d["v_max"], d["omega_max"], d["k_v"], int(d["p"])),
                      heading=math.radians(d["heading"]),
                      dilation=d["robot_radius"] + d["safety_margin"],
                      body_radius=d["robot_radius"])
        return RunConfig(**kw)

    def controller_options(self, variant: str = "known-map") -> dict:
        c = self.controller
        opts = dict(mode_map=c["mode_map"], choice_map=c["choice_map"],
                    vd_plane=c["vd_plane"])
        if variant == "original-maps":
            opts.update(mode_map="original", choice_map="original")
        if variant == "original-choice":
            opts.update(choice_map="original")
        return opts

    def metadata(self) -> dict:
        """Parameters echoed into output files, including applied defaults."""
        ctl = {k: v for k, v in self.controller.items()}
        ws = self.workspace()
        derived = [{"label": o.label, "active_range": o.active_range,
                    "vd_distance": o.vd_distance, "aperture_deg": math.degrees(o.aperture)}
                   for o in ws.obstacles]
        return {"name": self.name, "dimension": self.dimension,
                "controller": ctl, "epsilon": ws.epsilon, "obstacles": derived,
                "run": dict(self.run),
                "sensor": self.sensor, "drive": self.drive,
                "variants": list(self.variants),
                "defaults_applied": list(self.defaults_applied),
                "integrator": "rk4-fixed-step with bisection event location"}


def _vec(value, n, where):
    try:
        arr = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: expected a list of {n} numbers") from None
    if arr.size != n or not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{where}: expected {n} finite numbers, got {value!r}")
    return arr


def _section(raw, key, defaults, applied, optional=False):
    sec = raw.get(key)
    if sec is None:
        if optional:
            return None
        sec = {}
    if not isinstance(sec, dict):
        raise ScenarioError(f"{key}: expected a mapping")
    unknown = set(sec) - set(defaults)
    if unknown:
        raise ScenarioError(f"{key}: unknown field(s) {sorted(unknown)}")
    out = dict(defaults)
    out.update(sec)
    applied.extend(f"{key}.{k}" for k in defaults if k not in sec)
    return out


def random_points(rng, n, count, centers, radii, box, margin):
    out = []
    while len(out) < count:
        p = rng.uniform(-box, box, n)
        if len(radii) == 0 or np.all(np.linalg.norm(p - centers, axis=1) - radii > margin):
            out.append(p)
    return out


def parse_scenario(raw: dict, name: str = "scenario") -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping")
    applied: list[str] = []
    if "dimension" not in raw:
        raise ScenarioError("dimension: missing")
    n = raw["dimension"]
    if not isinstance(n, int) or n < 2:
        raise ScenarioError("dimension: expected an integer >= 2")
    if "target" not in raw:
        raise ScenarioError("target: missing")
    target = _vec(raw["target"], n, "target")
    obs = raw.get("obstacles") or []
    if not isinstance(obs, list):
        raise ScenarioError("obstacles: expected a list")
    centers, radii = [], []
    for i, o in enumerate(obs):
        if not isinstance(o, dict) or "center" not in o or "radius" not in o:
            raise ScenarioError(f"obstacles[{i}]: needs center and radius")
        centers.append(_vec(o["center"], n, f"obstacles[{i}].center"))
        try:
            radii.append(float(o["radius"]))
        except (TypeError, ValueError):
            raise ScenarioError(f"obstacles[{i}].radius: expected a number") from None
    centers = np.array(centers).reshape(len(radii), n)
    radii = np.array(radii)

    controller = _section(raw, "controller", CONTROLLER_DEFAULTS, applied)
    run = _section(raw, "run", RUN_DEFAULTS, applied)
    sensor = _section(raw, "sensor", SENSOR_DEFAULTS, applied, optional=True)
    drive = _section(raw, "drive", DRIVE_DEFAULTS, applied, optional=True)
    variants = raw.get("variants", ["known-map"])
    if "variants" not in raw:
        applied.append("variants")
    if isinstance(variants, str):
        variants = [variants]
    for v in variants:
        if v not in VARIANTS:
            raise ScenarioError(f"variants: unknown variant {v!r}")
    if "sensor-based" in variants and sensor is None:
        sensor = dict(SENSOR_DEFAULTS)
        applied.extend(f"sensor.{k}" for k in SENSOR_DEFAULTS)
    if "unicycle" in variants and drive is None:
        drive = dict(DRIVE_DEFAULTS)
        applied.extend(f"drive.{k}" for k in DRIVE_DEFAULTS)

    starts_raw = raw.get("starts")
    if starts_raw is None:
        raise ScenarioError("starts: missing")
    if isinstance(starts_raw, dict):
        count = int(starts_raw.get("random", 0))
        box = float(starts_raw.get("box", 5.0))
        rng = np.random.default_rng(run["seed"])
        starts = random_points(rng, n, count, centers, radii, box, 0.05)
    else:
        if len(starts_raw) and np.isscalar(starts_raw[0]):
            starts_raw = [starts_raw]
        starts = [_vec(s, n, f"starts[{i}]") for i, s in enumerate(starts_raw)]
    if not starts:
        raise ScenarioError("starts: at least one start is required")

    sc = Scenario(n, centers, radii, target, starts, controller, run, sensor, drive,
                  list(variants), applied, name)
    _validate(sc)
    return sc


def _validate(sc: Scenario):
    try:
        ws = sc.workspace()
    except WorkspaceError as exc:
        raise ScenarioError(f"invalid workspace: {exc}", exc.violations) from None
    except ValueError as exc:
        raise ScenarioError(f"invalid controller parameters: {exc}") from None
    bad = [i for i, s in enumerate(sc.starts) if ws.clearance(s) < 0]
    if bad:
        raise ScenarioError(f"starts {bad} lie inside an obstacle")
    try:
        for v in sc.variants:
            sc.run_config(v)
        if sc.sensor is not None:
            sc.scan_config()
    except (ValueError, SensorError) as exc:
        raise ScenarioError(f"invalid run settings: {exc}") from None
    if "unicycle" in sc.variants and sc.dimension != 2:
        raise ScenarioError("unicycle variant needs dimension 2")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown"
        raise ScenarioError(f"{path}: parse error at {where}: {exc.problem}") from None
    return parse_scenario(raw, name=path.stem)


def random_world(rng, n: int, *, count: tuple[int, int] = (3, 10), box: float = 5.0,
                 radius: tuple[float, float] = (0.3, 1.0), min_gap: float = 0.2,
                 target_margin: float = 0.2):
    """Random disjoint balls in ``[-box, box]^n`` with a free target.

    Returns ``(centers, radii, target)``.
    """
    b = int(rng.integers(count[0], count[1] + 1))
    C, R = [], []
    tries = 0
    while len(C) < b:
        tries += 1
        if tries > 10000:
            break
        c = rng.uniform(-box, box, n)
        r = rng.uniform(*radius)
        if all(np.linalg.norm(c - c2) - r - r2 > min_gap for c2, r2 in zip(C, R)):
            C.append(c)
            R.append(r)
    C, R = np.array(C), np.array(R)
    target = random_points(rng, n, 1, C, R, box, target_margin)[0]
    return C, R, target
