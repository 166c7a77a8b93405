"""Feasibility predicates shared by the rollout and the contact planner.

A finger assignment is a tuple of (finger id, surface point index) pairs into
the object's sampled surface points. All checks are pure given the task.
"""

from __future__ import annotations

import numpy as np

from .mechanics import (
    env_blocks,
    force_closure,
    generalized_mass,
    gravity_wrench,
    quasidynamic_solve,
    quasistatic_solve,
)
from .modes import CsMode, contact_signature
from .robot import patch_blocks
from .se3 import Pose, transform_point
from .world import ContactPoint


def placement_ok(task, x: Pose, finger: int, sp_index: int) -> bool:
    """Kinematic reach plus fingertip collision for one finger contact."""
    sp = task.obj.surface_points[sp_index]
    p = transform_point(x, sp.pos())
    n_out = x.rotation() @ sp.nrm()
    return task.robot.ik_feasible(finger, p) and task.robot.fingertip_collision_free(
        finger, p, n_out, task.env, task.obj, x)


def assignment_ok(task, x: Pose, assignments) -> bool:
    if len({f for f, _ in assignments}) != len(assignments):
        return False
    return all(placement_ok(task, x, f, i) for f, i in assignments)


def model_blocks(task, x: Pose, contacts, mode: CsMode, assignments):
    cfg = task.mechanics
    blocks = env_blocks(contacts, mode, x, cfg.mu_env)
    blocks += patch_blocks(task.robot, assignments, task.obj.surface_points,
                           x, cfg.mu_mnp, frame="world")
    return blocks


def _closure_key(task, contacts, mode: CsMode, assignments, x: Pose):
    return (tuple(sorted(assignments)), str(mode),
            contact_signature(contacts, x) if contacts else ())


def motion_force_ok(task, x: Pose, contacts, mode: CsMode, v, assignments) -> bool:
    """Can the maintained contacts plus the given fingers drive this motion?"""
    cfg = task.mechanics
    if cfg.model == "force_closure":
        key = _closure_key(task, contacts, mode, assignments, x)
        cache = task.caches.setdefault("closure", {})
        if key not in cache:
            blocks = env_blocks(contacts, mode, x, cfg.mu_env)
            blocks += patch_blocks(task.robot, assignments, task.obj.surface_points,
                                   x, cfg.mu_mnp, frame="object")
            cache[key] = force_closure(blocks, cfg.cone_edges,
                                       torque_scale=task.scale())
        return cache[key]
    blocks = model_blocks(task, x, contacts, mode, assignments)
    f_ext = gravity_wrench(task.obj.mass, cfg.gravity)
    if cfg.model == "quasistatic" or v is None or np.linalg.norm(v) < 1e-12:
        return quasistatic_solve(blocks, f_ext, cfg, return_forces=False) is not None
    m = generalized_mass(task.obj.mass, task.obj.inertia, x)
    return quasidynamic_solve(np.asarray(v, float), blocks, f_ext, m, cfg,
                              return_forces=False) is not None


def static_hold_ok(task, x: Pose, contacts, assignments) -> bool:
    """Stationary balance with every touching environment contact active."""
    mode = CsMode.all_maintain(len(contacts))
    cfg = task.mechanics
    if cfg.model == "force_closure":
        return motion_force_ok(task, x, contacts, mode, None, assignments)
    blocks = model_blocks(task, x, contacts, mode, assignments)
    f_ext = gravity_wrench(task.obj.mass, cfg.gravity)
    return quasistatic_solve(blocks, f_ext, cfg, return_forces=False) is not None


def contact_set_ok(task, x: Pose, contacts, mode: CsMode, v, assignments) -> bool:
    """Kinematics, collision, and force condition together."""
    return assignment_ok(task, x, assignments) and motion_force_ok(
        task, x, contacts, mode, v, assignments)


def exists_finger_witness(task, x: Pose, contacts, mode: CsMode, v, rng,
                          tries: int = 20, include_empty: bool = True):
    """Search for any finger assignment making the motion force-feasible.

    Returns the assignment tuple (possibly empty) or None. The empty set is
    checked first so environment-supported motions never cost samples.
    """
    if include_empty and motion_force_ok(task, x, contacts, mode, v, ()):
        return ()
    n = task.robot.n_fingers
    candidates = task.obj.surface_points
    if not candidates:
        return None
    for k in range(tries):
        size = 1 + k % n
        fingers = rng.permutation(n)[:size]
        assignment = []
        used = set()
        for f in fingers:
            idx = task.robot.sample_contact(int(f), candidates, x, task.env,
                                            task.obj, rng, max_tries=10)
            if idx is None or idx in used:
                assignment = None
                break
            used.add(idx)
            assignment.append((int(f), idx))
        if not assignment:
            continue
        assignment = tuple(sorted(assignment))
        if motion_force_ok(task, x, contacts, mode, v, assignment):
            return assignment
    return None
