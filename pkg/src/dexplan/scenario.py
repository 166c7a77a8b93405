"""Scenario files: one structured document describing a whole planning task.

Sections: object, environment, robot, start, goal, mechanics, rrt, search,
budget, plus a name and a seed. Loading validates the entire document at
once and reports every violation together; unknown keys only warn, so files
stay forward compatible. The normalized dictionary (every default filled
in) is the canonical form: it is hashed, embedded into trajectory files,
and can rebuild the task without the original file.
"""

from __future__ import annotations

import copy
import hashlib
import json
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ParseError, ValidationError
from .mechanics import MechanicsConfig
from .robot import SphereFingerRobot
from .se3 import DistanceWeights, Pose
from .task import GoalRegion, ManipulationTask, RrtParams
from .world import (
    Box,
    Cylinder,
    EnvBody,
    EnvironmentModel,
    HalfSpace,
    ObjectModel,
    Sphere,
    SurfacePoint,
    load_mesh,
    sample_surface_points,
)

_SECTIONS = ("name", "seed", "object", "environment", "robot", "start",
             "goal", "mechanics", "rrt", "search", "budget")
_MODELS = ("quasistatic", "quasidynamic", "force_closure")
_REQUIRED = object()


@dataclass
class SearchSettings:
    eta1: float = 0.1
    eta2: float = 0.1
    feasibility_option: int = 2
    level2_iterations: int = 60
    level2_stop_on_success: bool = False
    rrt_iters: int | None = 100
    probe_targets: int = 3


@dataclass
class BudgetSettings:
    seconds: float | None = 10.0
    iterations: int | None = None
    stop_on_success: bool = True


class _Collector:
    def __init__(self):
        self.violations: list[str] = []

    def err(self, field: str, message: str) -> None:
        self.violations.append(f"{field}: {message}")

    def raise_if_any(self) -> None:
        if self.violations:
            raise ValidationError(self.violations)


def _warn_unknown(section: str, given: dict, known) -> None:
    for key in given:
        if key not in known:
            warnings.warn(f"unknown key {section}.{key} ignored", stacklevel=4)


def _number(col, section: dict, field: str, default=_REQUIRED, lo=None,
            hi=None, integer=False, optional=False):
    value = section.get(field.split(".")[-1], default)
    if value is _REQUIRED:
        col.err(field, "required")
        return None
    if value is None:
        if optional:
            return None
        col.err(field, "must be a number")
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        col.err(field, f"must be a number, got {value!r}")
        return None
    if integer and int(value) != value:
        col.err(field, f"must be an integer, got {value!r}")
        return None
    if lo is not None and value < lo:
        col.err(field, f"must be >= {lo}, got {value!r}")
        return None
    if hi is not None and value > hi:
        col.err(field, f"must be <= {hi}, got {value!r}")
        return None
    return int(value) if integer else float(value)


def _bool(col, section: dict, field: str, default):
    value = section.get(field.split(".")[-1], default)
    if not isinstance(value, bool):
        col.err(field, f"must be true or false, got {value!r}")
        return default
    return value


def _vec(col, value, field: str, n: int):
    if not isinstance(value, (list, tuple)) or len(value) != n or \
            any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        col.err(field, f"must be a list of {n} numbers, got {value!r}")
        return None
    return [float(v) for v in value]


def _pose7(col, value, field: str):
    """A pose as 7 numbers (x y z qw qx qy qz); 3 numbers mean no rotation."""
    if isinstance(value, (list, tuple)) and len(value) == 3:
        p = _vec(col, value, field, 3)
        return None if p is None else p + [1.0, 0.0, 0.0, 0.0]
    if isinstance(value, (list, tuple)) and len(value) == 7:
        v = _vec(col, value, field, 7)
        if v is not None and all(abs(q) < 1e-12 for q in v[3:]):
            col.err(field, "quaternion part is all zeros")
            return None
        return v
    col.err(field, f"must be 3 or 7 numbers, got {value!r}")
    return None


def _norm_shape(col, value, field: str, base_dir):
    if not isinstance(value, dict) or "type" not in value:
        col.err(field, f"must be a mapping with a 'type', got {value!r}")
        return None
    kind = value["type"]
    out = {"type": kind}
    if kind == "box":
        size = _vec(col, value.get("size"), f"{field}.size", 3)
        if size is not None and min(size) <= 0:
            col.err(f"{field}.size", "extents must be positive")
        out["size"] = size
        _warn_unknown(field, value, ("type", "size"))
    elif kind == "sphere":
        out["radius"] = _number(col, value, f"{field}.radius", lo=1e-12)
        _warn_unknown(field, value, ("type", "radius"))
    elif kind == "cylinder":
        out["radius"] = _number(col, value, f"{field}.radius", lo=1e-12)
        out["height"] = _number(col, value, f"{field}.height", lo=1e-12)
        _warn_unknown(field, value, ("type", "radius", "height"))
    elif kind == "halfspace":
        _warn_unknown(field, value, ("type",))
    elif kind == "mesh":
        path = value.get("path")
        if not isinstance(path, str):
            col.err(f"{field}.path", "required for mesh shapes")
        elif not (Path(base_dir or ".") / path).exists():
            col.err(f"{field}.path", f"file not found: {path}")
        out["path"] = path
        _warn_unknown(field, value, ("type", "path"))
    else:
        col.err(f"{field}.type",
                f"must be box, sphere, cylinder, halfspace, or mesh, got {kind!r}")
        return None
    return out


def _build_shape(spec: dict, base_dir):
    kind = spec["type"]
    if kind == "box":
        return Box(tuple(spec["size"]))
    if kind == "sphere":
        return Sphere(spec["radius"])
    if kind == "cylinder":
        return Cylinder(spec["radius"], spec["height"])
    if kind == "halfspace":
        return HalfSpace()
    return load_mesh(str(Path(base_dir or ".") / spec["path"]))


def _norm_object(col, doc: dict, base_dir):
    sec = doc.get("object")
    if not isinstance(sec, dict):
        col.err("object", "section required")
        return {"shape": None, "mass": None, "surface_points": 40,
                "surface_seed": 0}
    _warn_unknown("object", sec, ("shape", "mass", "surface_points",
                                  "surface_seed"))
    out = {
        "shape": _norm_shape(col, sec.get("shape"), "object.shape", base_dir),
        "mass": _number(col, sec, "object.mass", lo=1e-12),
        "surface_seed": _number(col, sec, "object.surface_seed", default=0,
                                lo=0, integer=True),
    }
    pts = sec.get("surface_points", 40)
    if isinstance(pts, int) and not isinstance(pts, bool) and pts >= 1:
        out["surface_points"] = pts
    elif isinstance(pts, list) and pts:
        norm = []
        for i, entry in enumerate(pts):
            pair = entry if isinstance(entry, (list, tuple)) else [None]
            if len(pair) != 2:
                col.err(f"object.surface_points[{i}]",
                        "must be [position, normal]")
                continue
            p = _vec(col, pair[0], f"object.surface_points[{i}].position", 3)
            n = _vec(col, pair[1], f"object.surface_points[{i}].normal", 3)
            if p is not None and n is not None:
                norm.append([p, n])
        out["surface_points"] = norm
    else:
        col.err("object.surface_points",
                f"must be a positive count or a list of points, got {pts!r}")
        out["surface_points"] = 40
    return out


def _norm_environment(col, doc: dict, base_dir):
    sec = doc.get("environment", [])
    if sec is None:
        sec = []
    if not isinstance(sec, list):
        col.err("environment", "must be a list of bodies")
        return []
    out = []
    for i, body in enumerate(sec):
        if not isinstance(body, dict):
            col.err(f"environment[{i}]", "must be a mapping")
            continue
        _warn_unknown(f"environment[{i}]", body, ("shape", "pose", "name"))
        shape = _norm_shape(col, body.get("shape"), f"environment[{i}].shape",
                            base_dir)
        pose = _pose7(col, body.get("pose", [0, 0, 0]),
                      f"environment[{i}].pose")
        name = body.get("name", "")
        if not isinstance(name, str):
            col.err(f"environment[{i}].name", "must be a string")
            name = ""
        out.append({"shape": shape, "pose": pose, "name": name})
    return out


def _norm_robot(col, doc: dict):
    sec = doc.get("robot", {})
    if not isinstance(sec, dict):
        col.err("robot", "must be a mapping")
        sec = {}
    _warn_unknown("robot", sec, ("fingers", "fingertip_radius", "patch_radius",
                                 "workspaces", "fingertip_goals"))
    out = {
        "fingers": _number(col, sec, "robot.fingers", default=2, lo=1,
                           integer=True),
        "fingertip_radius": _number(col, sec, "robot.fingertip_radius",
                                    default=0.05, lo=1e-12),
        "patch_radius": _number(col, sec, "robot.patch_radius", default=0.02,
                                lo=0.0),
    }
    n = out["fingers"] or 1
    ws = sec.get("workspaces")
    if ws is None:
        out["workspaces"] = None
    elif isinstance(ws, list) and len(ws) == n:
        norm = []
        for i, w in enumerate(ws):
            if w is None:
                norm.append(None)
                continue
            if not isinstance(w, dict):
                col.err(f"robot.workspaces[{i}]",
                        "must be null or {center, radius}")
                norm.append(None)
                continue
            _warn_unknown(f"robot.workspaces[{i}]", w, ("center", "radius"))
            norm.append({
                "center": _vec(col, w.get("center"),
                               f"robot.workspaces[{i}].center", 3),
                "radius": _number(col, w, f"robot.workspaces[{i}].radius",
                                  lo=1e-12),
            })
        out["workspaces"] = norm
    else:
        col.err("robot.workspaces", "must list one entry per finger")
        out["workspaces"] = None
    goals = sec.get("fingertip_goals")
    if goals is None:
        out["fingertip_goals"] = None
    elif isinstance(goals, list) and len(goals) == n:
        out["fingertip_goals"] = [
            None if g is None else _vec(col, g, f"robot.fingertip_goals[{i}]", 3)
            for i, g in enumerate(goals)]
    else:
        col.err("robot.fingertip_goals", "must list one entry per finger")
        out["fingertip_goals"] = None
    return out


def _norm_goal(col, doc: dict):
    sec = doc.get("goal")
    if not isinstance(sec, dict):
        col.err("goal", "section required")
        return {"center": None, "tolerance": None,
                "weights": {"translation": 1.0, "rotation": 1.0}}
    _warn_unknown("goal", sec, ("center", "tolerance", "weights"))
    weights = sec.get("weights", {})
    if not isinstance(weights, dict):
        col.err("goal.weights", "must be a mapping")
        weights = {}
    _warn_unknown("goal.weights", weights, ("translation", "rotation"))
    return {
        "center": _pose7(col, sec.get("center"), "goal.center"),
        "tolerance": _number(col, sec, "goal.tolerance", lo=1e-12),
        "weights": {
            "translation": _number(col, weights, "goal.weights.translation",
                                   default=1.0, lo=0.0),
            "rotation": _number(col, weights, "goal.weights.rotation",
                                default=1.0, lo=0.0),
        },
    }


def _norm_mechanics(col, doc: dict):
    sec = doc.get("mechanics", {})
    if not isinstance(sec, dict):
        col.err("mechanics", "must be a mapping")
        sec = {}
    _warn_unknown("mechanics", sec, ("model", "mu_env", "mu_mnp", "cone_edges",
                                     "timestep", "gravity"))
    model = sec.get("model", "quasistatic")
    if model not in _MODELS:
        col.err("mechanics.model", f"must be one of {', '.join(_MODELS)}")
        model = "quasistatic"
    gravity = sec.get("gravity", [0.0, 0.0, -9.81])
    return {
        "model": model,
        "mu_env": _number(col, sec, "mechanics.mu_env", default=0.5, lo=0.0,
                          hi=2.0),
        "mu_mnp": _number(col, sec, "mechanics.mu_mnp", default=0.8, lo=0.0,
                          hi=2.0),
        "cone_edges": _number(col, sec, "mechanics.cone_edges", default=4,
                              lo=3, integer=True),
        "timestep": _number(col, sec, "mechanics.timestep", default=0.1,
                            lo=1e-12),
        "gravity": _vec(col, gravity, "mechanics.gravity", 3),
    }


def _norm_rrt(col, doc: dict):
    sec = doc.get("rrt", {})
    if not isinstance(sec, dict):
        col.err("rrt", "must be a mapping")
        sec = {}
    _warn_unknown("rrt", sec, ("extend_length", "p_sample", "position_bounds",
                               "max_iters", "weights"))
    bounds = sec.get("position_bounds", [[-3.0, -3.0, -3.0], [3.0, 3.0, 3.0]])
    lo = hi = None
    if isinstance(bounds, (list, tuple)) and len(bounds) == 2:
        lo = _vec(col, bounds[0], "rrt.position_bounds[0]", 3)
        hi = _vec(col, bounds[1], "rrt.position_bounds[1]", 3)
        if lo is not None and hi is not None and any(a >= b for a, b in zip(lo, hi)):
            col.err("rrt.position_bounds", "lower bound must be below upper")
    else:
        col.err("rrt.position_bounds", "must be [low, high] corner lists")
    weights = sec.get("weights", {})
    if not isinstance(weights, dict):
        col.err("rrt.weights", "must be a mapping")
        weights = {}
    _warn_unknown("rrt.weights", weights, ("translation", "rotation"))
    return {
        "extend_length": _number(col, sec, "rrt.extend_length", default=0.5,
                                 lo=1e-12),
        "p_sample": _number(col, sec, "rrt.p_sample", default=0.5, lo=0.0,
                            hi=1.0),
        "position_bounds": [lo, hi],
        "max_iters": _number(col, sec, "rrt.max_iters", default=2000, lo=1,
                             integer=True),
        "weights": {
            "translation": _number(col, weights, "rrt.weights.translation",
                                   default=1.0, lo=0.0),
            "rotation": _number(col, weights, "rrt.weights.rotation",
                                default=1.0, lo=0.0),
        },
    }


def _norm_search(col, doc: dict):
    sec = doc.get("search", {})
    if not isinstance(sec, dict):
        col.err("search", "must be a mapping")
        sec = {}
    _warn_unknown("search", sec, ("eta1", "eta2", "feasibility_option",
                                  "level2_iterations", "level2_stop_on_success",
                                  "rrt_iters", "probe_targets"))
    option = _number(col, sec, "search.feasibility_option", default=2,
                     integer=True)
    if option not in (1, 2, None):
        col.err("search.feasibility_option", "must be 1 or 2")
        option = 2
    return {
        "eta1": _number(col, sec, "search.eta1", default=0.1, lo=0.0),
        "eta2": _number(col, sec, "search.eta2", default=0.1, lo=0.0),
        "feasibility_option": option,
        "level2_iterations": _number(col, sec, "search.level2_iterations",
                                     default=60, lo=1, integer=True),
        "level2_stop_on_success": _bool(col, sec,
                                        "search.level2_stop_on_success", False),
        "rrt_iters": _number(col, sec, "search.rrt_iters", default=100, lo=0,
                             integer=True, optional=True),
        "probe_targets": _number(col, sec, "search.probe_targets", default=3,
                                 lo=0, integer=True),
    }


def _norm_budget(col, doc: dict):
    sec = doc.get("budget", {})
    if not isinstance(sec, dict):
        col.err("budget", "must be a mapping")
        sec = {}
    _warn_unknown("budget", sec, ("seconds", "iterations", "stop_on_success"))
    out = {
        "seconds": _number(col, sec, "budget.seconds", default=10.0, lo=1e-9,
                           optional=True),
        "iterations": _number(col, sec, "budget.iterations", default=None,
                              lo=1, integer=True, optional=True),
        "stop_on_success": _bool(col, sec, "budget.stop_on_success", True),
    }
    if out["seconds"] is None and out["iterations"] is None:
        col.err("budget", "needs a time or an iteration limit")
    return out


@dataclass
class ScenarioConfig:
    """Validated, fully defaulted scenario; `raw` is the canonical dict."""

    raw: dict
    base_dir: str | None = None

    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def search_settings(self) -> SearchSettings:
        return SearchSettings(**self.raw["search"])

    def budget_settings(self) -> BudgetSettings:
        return BudgetSettings(**self.raw["budget"])

    def build_task(self) -> ManipulationTask:
        """Fresh task instance (own caches) built from the normalized form."""
        r = self.raw
        shape = _build_shape(r["object"]["shape"], self.base_dir)
        pts = r["object"]["surface_points"]
        if isinstance(pts, int):
            points = sample_surface_points(
                shape, pts, np.random.default_rng(r["object"]["surface_seed"]))
        else:
            points = [SurfacePoint(tuple(p), tuple(n)) for p, n in pts]
        obj = ObjectModel(shape, mass=r["object"]["mass"],
                          surface_points=points)
        env = EnvironmentModel([
            EnvBody(_build_shape(b["shape"], self.base_dir),
                    Pose(b["pose"][:3], b["pose"][3:]), b["name"])
            for b in r["environment"]])
        ws = r["robot"]["workspaces"]
        workspaces = [] if ws is None else [
            None if w is None else EnvBody(Sphere(w["radius"]),
                                           Pose(w["center"]))
            for w in ws]
        robot = SphereFingerRobot(
            n_fingers=r["robot"]["fingers"],
            fingertip_radius=r["robot"]["fingertip_radius"],
            patch_radius=r["robot"]["patch_radius"],
            workspaces=workspaces)
        goals = r["robot"]["fingertip_goals"]
        goal = GoalRegion(
            Pose(r["goal"]["center"][:3], r["goal"]["center"][3:]),
            tolerance=r["goal"]["tolerance"],
            weights=DistanceWeights(**r["goal"]["weights"]))
        mech = MechanicsConfig(model=r["mechanics"]["model"],
                               mu_env=r["mechanics"]["mu_env"],
                               mu_mnp=r["mechanics"]["mu_mnp"],
                               cone_edges=r["mechanics"]["cone_edges"],
                               timestep=r["mechanics"]["timestep"],
                               gravity=tuple(r["mechanics"]["gravity"]))
        rrt = RrtParams(extend_length=r["rrt"]["extend_length"],
                        p_sample=r["rrt"]["p_sample"],
                        position_bounds=(tuple(r["rrt"]["position_bounds"][0]),
                                         tuple(r["rrt"]["position_bounds"][1])),
                        weights=DistanceWeights(**r["rrt"]["weights"]),
                        max_iters=r["rrt"]["max_iters"])
        return ManipulationTask(
            obj=obj, env=env, robot=robot, mechanics=mech,
            x_start=Pose(r["start"][:3], r["start"][3:]),
            goal=goal, rrt=rrt,
            feasibility_option=r["search"]["feasibility_option"],
            fingertip_goals=None if goals is None else [
                None if g is None else np.asarray(g, dtype=float)
                for g in goals],
            eta1=r["search"]["eta1"], eta2=r["search"]["eta2"])


def config_from_dict(doc: dict, name: str | None = None,
                     base_dir: str | None = None) -> ScenarioConfig:
    """Validate and normalize a parsed scenario document.

    Every violation is collected before raising, so one load reports them
    all. Unknown keys warn instead of failing.
    """
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a mapping")
    col = _Collector()
    _warn_unknown("scenario", doc, _SECTIONS)
    raw_name = doc.get("name", name or "scenario")
    if not isinstance(raw_name, str) or not raw_name:
        col.err("name", "must be a non-empty string")
        raw_name = "scenario"
    raw = {
        "name": raw_name,
        "seed": _number(col, doc, "seed", default=0, lo=0, integer=True),
        "object": _norm_object(col, doc, base_dir),
        "environment": _norm_environment(col, doc, base_dir),
        "robot": _norm_robot(col, doc),
        "start": _pose7(col, doc.get("start"), "start") if "start" in doc
                 else col.err("start", "section required"),
        "goal": _norm_goal(col, doc),
        "mechanics": _norm_mechanics(col, doc),
        "rrt": _norm_rrt(col, doc),
        "search": _norm_search(col, doc),
        "budget": _norm_budget(col, doc),
    }
    col.raise_if_any()
    return ScenarioConfig(raw=raw, base_dir=base_dir)


def load_config(path) -> ScenarioConfig:
    """Load and validate one scenario file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    return _parse_text(text, name=p.stem, base_dir=str(p.parent))


def _parse_text(text: str, name: str, base_dir: str | None) -> ScenarioConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ParseError(f"bad scenario syntax{where}: {e}") from e
    return config_from_dict(doc, name=name, base_dir=base_dir)


def packaged_scenarios() -> list[str]:
    """Names of the scenario files shipped inside the package."""
    root = resources.files("dexplan").joinpath("data/scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_scenario(name_or_path) -> ScenarioConfig:
    """A scenario by file path, or by packaged name (e.g. 'card')."""
    p = Path(name_or_path)
    if p.exists():
        return load_config(p)
    try:
        text = resources.files("dexplan").joinpath(
            f"data/scenarios/{name_or_path}.yaml").read_text()
    except (FileNotFoundError, OSError):
        raise ParseError(
            f"no file {name_or_path!r} and no packaged scenario of that name "
            f"(available: {', '.join(packaged_scenarios())})") from None
    return _parse_text(text, name=str(name_or_path), base_dir=None)
