"""Plan files: the JSON artifact a planning run produces.

A file holds the object trajectory with per-step contact modes and finger
controls, plus a meta block embedding the run seed, the full normalized
scenario, and its hash. The steps alone form the payload; timing and other
run metadata never leak into it, so two runs of the same seeded scenario
yield byte-identical payloads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError
from .level3 import evaluate_path
from .modes import CsMode, enumerate_cs_modes
from .se3 import Pose
from .trajectory import ContactSchedule, ObjectTrajectory, TrajStep
from .world import detect_contacts

FORMAT = "dexplan-plan"
VERSION = 1


@dataclass
class PlanStep:
    t: int
    pose: list          # x y z qw qx qy qz
    mode: str           # contact mode of the motion leaving this step
    fingers: dict       # finger id -> {surface_point, position, force}

    def to_dict(self) -> dict:
        return {"t": self.t, "pose": list(self.pose), "mode": self.mode,
                "fingers": {str(k): v for k, v in sorted(self.fingers.items())}}


@dataclass
class TrajectoryFile:
    steps: list
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.steps)

    def payload_bytes(self) -> bytes:
        """Canonical serialization of the steps only; meta excluded."""
        blob = json.dumps([s.to_dict() for s in self.steps], sort_keys=True,
                          separators=(",", ":"))
        return blob.encode()

    def to_dict(self) -> dict:
        return {"format": FORMAT, "version": VERSION, "meta": self.meta,
                "steps": [s.to_dict() for s in self.steps]}


def write_trajectory(tf: TrajectoryFile, path) -> None:
    Path(path).write_text(json.dumps(tf.to_dict(), indent=2, sort_keys=True))


def read_trajectory(path) -> TrajectoryFile:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ParseError(f"{path} is not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise ParseError(f"unsupported plan version {doc.get('version')!r}")
    steps = []
    for i, s in enumerate(doc.get("steps", [])):
        try:
            steps.append(PlanStep(
                t=int(s["t"]), pose=[float(v) for v in s["pose"]],
                mode=str(s["mode"]),
                fingers={int(k): v for k, v in s["fingers"].items()}))
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"step {i} is malformed: {e}") from e
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise ParseError("meta must be a mapping")
    return TrajectoryFile(steps=steps, meta=meta)


def _schedule_from_steps(steps) -> ContactSchedule:
    assignments = []
    for s in steps:
        assignments.append(tuple(sorted(
            (finger, int(info["surface_point"]))
            for finger, info in s.fingers.items())))
    relocations = 0
    for prev, cur in zip(assignments, assignments[1:]):
        relocations += len(set(cur) - set(prev))
    return ContactSchedule(assignments=assignments, relocations=relocations)


def validate_trajectory(tf: TrajectoryFile, config=None) -> list:
    """Re-check a plan file from scratch; returns the list of problems.

    The embedded scenario is revalidated and rebuilt, env contacts are
    re-detected at every pose, each step's mode must exist in the mode
    enumeration there, and the whole schedule must pass the contact force
    solver with positive reward. An empty list means the file stands.
    """
    from .scenario import config_from_dict

    problems: list = []
    if not tf.steps:
        return ["file contains no steps"]
    if config is None:
        embedded = tf.meta.get("config")
        if not isinstance(embedded, dict):
            return ["meta.config missing: cannot rebuild the task"]
        try:
            config = config_from_dict(embedded)
        except Exception as e:
            return [f"embedded config invalid: {e}"]
        stamped = tf.meta.get("config_hash")
        if stamped and stamped != config.config_hash():
            problems.append("config_hash does not match the embedded config")
    task = config.build_task()
    n_points = len(task.obj.surface_points)

    poses = []
    for s in tf.steps:
        if len(s.pose) != 7:
            problems.append(f"step {s.t}: pose must have 7 numbers")
            return problems
        poses.append(Pose(s.pose[:3], s.pose[3:]))

    start_gap = max(abs(a - b) for a, b in
                    zip(poses[0].as_tuple(), task.x_start.as_tuple()))
    if start_gap > 1e-9:
        problems.append("step 0 pose differs from the scenario start")
    if not task.goal.contains(poses[-1]):
        problems.append("final pose is outside the goal region")

    steps = []
    for s, x in zip(tf.steps, poses):
        contacts = detect_contacts(task.obj, x, task.env)
        if len(s.mode) != len(contacts):
            problems.append(
                f"step {s.t}: mode {s.mode!r} has {len(s.mode)} digits but "
                f"{len(contacts)} contacts were detected")
            continue
        mode = CsMode.from_string(s.mode)
        if mode not in enumerate_cs_modes(contacts, x):
            problems.append(f"step {s.t}: mode {s.mode!r} is not a feasible "
                            "contact mode at this pose")
        for finger, info in s.fingers.items():
            if not 0 <= finger < task.robot.n_fingers:
                problems.append(f"step {s.t}: finger {finger} out of range")
            idx = int(info.get("surface_point", -1))
            if not 0 <= idx < n_points:
                problems.append(f"step {s.t}: surface point {idx} out of range")
        steps.append(TrajStep(x=x, contacts=contacts, mode=mode))
    if problems:
        return problems

    trajectory = ObjectTrajectory(steps)
    schedule = _schedule_from_steps(tf.steps)
    reward, _ = evaluate_path(task, trajectory, schedule)
    if reward <= 0.0:
        problems.append("a step fails the contact force check")
    return problems
