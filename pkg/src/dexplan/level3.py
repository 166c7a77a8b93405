"""Path evaluation: per-step force solving, trajectory features, and the
logistic reward map.

A plan only ever earns a positive reward if every step's force solve
succeeds; among feasible plans the reward prefers short, direct paths with
few finger changes, few environment contact switches, and grasps near the
object center. The shipped reward weights are fitted from a labeled feature
table kept in the package data, so the default model is reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .checks import model_blocks
from .errors import DegenerateLabels
from .mechanics import (
    block_forces,
    generalized_mass,
    gravity_wrench,
    quasidynamic_solve,
    quasistatic_solve,
)
from .modes import CsMode
from .se3 import DistanceWeights, pose_distance, pose_log, transform_point
from .trajectory import ContactSchedule, ObjectTrajectory

LABEL_COLUMNS = ("path_size", "travel_ratio", "finger_ratio", "env_changes",
                 "centroid", "reward")


@dataclass
class FeatureVector:
    path_size: float
    travel_distance_ratio: float
    finger_change_ratio: float
    env_contact_changes: float
    grasp_centroid_distance: float

    def vector(self) -> np.ndarray:
        v = np.array([self.path_size, self.travel_distance_ratio,
                      self.finger_change_ratio, self.env_contact_changes,
                      self.grasp_centroid_distance], dtype=float)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError(f"malformed feature vector {v}")
        return v


@dataclass
class RewardModel:
    weights: np.ndarray  # all >= 0 so reward never rises with any feature
    bias: float

    def reward(self, features: FeatureVector) -> float:
        z = self.bias - float(self.weights @ features.vector())
        return float(expit(z))


def compute_features(task, trajectory, schedule, path_size=None) -> FeatureVector:
    """Trajectory descriptors the reward model scores.

    path_size defaults to the number of trajectory steps; callers tracking
    the pose-tree depth may pass that instead.
    """
    w = DistanceWeights()
    steps = trajectory.steps
    direct = pose_distance(steps[0].x, steps[-1].x, w)
    travel = trajectory.travel_distance(w)
    ratio = travel / direct if direct > 1e-9 else 1.0
    n = len(steps)
    scale = task.scale()
    centroid_terms = []
    for step, assigned in zip(steps, schedule.assignments):
        if not assigned:
            continue
        pts = [transform_point(step.x, task.obj.surface_points[i].pos())
               for _, i in assigned]
        centroid_terms.append(np.linalg.norm(np.mean(pts, axis=0) - step.x.position) / scale)
    return FeatureVector(
        path_size=float(path_size if path_size is not None else n),
        travel_distance_ratio=float(ratio),
        finger_change_ratio=schedule.relocations / n,
        env_contact_changes=float(trajectory.mode_changes()),
        grasp_centroid_distance=float(np.mean(centroid_terms)) if centroid_terms else 0.0,
    )


# ---------------------------------------------------------------------------
# per-step force solving and controls


def solve_step_forces(task, trajectory: ObjectTrajectory, t: int, assignments):
    """Force solution for step t of the trajectory, or None if infeasible.

    The step's departing mode governs which environment contacts push; the
    last step must hold still under all its touching contacts.
    """
    step = trajectory[t]
    cfg = task.mechanics
    last = t == len(trajectory) - 1
    mode = CsMode.all_maintain(len(step.contacts)) if last else step.mode
    blocks = model_blocks(task, step.x, step.contacts, mode, assignments)
    if cfg.model == "force_closure":
        from .checks import motion_force_ok

        ok = motion_force_ok(task, step.x, step.contacts, mode, None, assignments)
        return (blocks, np.zeros(sum(_edge_count(cfg, b) for b in blocks))) if ok else None
    f_ext = gravity_wrench(task.obj.mass, cfg.gravity)
    if cfg.model == "quasistatic" or last:
        lam = quasistatic_solve(blocks, f_ext, cfg)
    else:
        v = pose_log(step.x, trajectory[t + 1].x) / cfg.timestep
        m = generalized_mass(task.obj.mass, task.obj.inertia, step.x)
        lam = quasidynamic_solve(v, blocks, f_ext, m, cfg)
    return (blocks, lam) if lam is not None else None


def _edge_count(cfg, block) -> int:
    return 1 if block.mu <= 0 else cfg.cone_edges


def solve_controls(task, trajectory: ObjectTrajectory, t: int, assignments):
    """Robot control for step t: finger world targets plus contact forces."""
    solved = solve_step_forces(task, trajectory, t, assignments)
    if solved is None:
        return None
    blocks, lam = solved
    per_block = block_forces(blocks, lam, task.mechanics.cone_edges)
    step = trajectory[t]
    control = {}
    for finger, sp_index in assignments:
        sp = task.obj.surface_points[sp_index]
        target = transform_point(step.x, sp.pos())
        force = np.zeros(3)
        for block, f in zip(blocks, per_block):
            if block.owner == ("finger", finger):
                force += f
        control[finger] = {"position": [float(c) for c in target],
                           "force": [float(c) for c in force],
                           "surface_point": int(sp_index)}
    return control


def evaluate_path(task, trajectory: ObjectTrajectory, schedule: ContactSchedule,
                  model: "RewardModel | None" = None, path_size: int | None = None):
    """Reward for a complete plan; zero unless every step solves.

    Returns (reward, controls) where controls is a per-step list of finger
    targets and forces, or (0.0, None) on the first infeasible step.
    """
    model = model or default_reward_model()
    if len(schedule) != len(trajectory):
        raise ValueError("schedule must cover every trajectory step")
    controls = []
    for t in range(len(trajectory)):
        u = solve_controls(task, trajectory, t, schedule.assignments[t])
        if u is None:
            return 0.0, None
        controls.append(u)
    features = compute_features(task, trajectory, schedule, path_size)
    # expit saturates to exactly 0.0 for very large feature loads; a feasible
    # path must still score positive, so floor it
    reward = max(model.reward(features), 1e-6)
    return reward, controls


# ---------------------------------------------------------------------------
# reward model fitting


def fit_reward_model(features: list, labels: list) -> RewardModel:
    """Maximum-likelihood logistic fit with nonnegative feature weights."""
    y = np.asarray(labels, dtype=float)
    if len(set(np.round(y, 12))) < 2:
        raise DegenerateLabels("labels carry no contrast to fit against")
    x = np.vstack([f.vector() for f in features])

    def nll(theta):
        w, b = theta[:-1], theta[-1]
        z = b - x @ w
        # stable log(1+exp(±z))
        log_p = -np.logaddexp(0.0, -z)
        log_q = -np.logaddexp(0.0, z)
        return -float(np.sum(y * log_p + (1 - y) * log_q))

    def grad(theta):
        w, b = theta[:-1], theta[-1]
        d = expit(b - x @ w) - y  # dNLL/dz per row
        return np.concatenate([-x.T @ d, [np.sum(d)]])

    theta0 = np.concatenate([np.full(x.shape[1], 0.1), [1.0]])
    bounds = [(0.0, None)] * x.shape[1] + [(None, None)]
    res = minimize(nll, theta0, jac=grad, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 500})
    return RewardModel(weights=res.x[:-1].copy(), bias=float(res.x[-1]))


def load_labeled_features(path=None):
    if path is None:
        ref = resources.files("dexplan").joinpath("data/reward_labels.csv")
        text = ref.read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = list(csv.DictReader(text.splitlines()))
    feats, labels = [], []
    for row in rows:
        feats.append(FeatureVector(
            path_size=float(row["path_size"]),
            travel_distance_ratio=float(row["travel_ratio"]),
            finger_change_ratio=float(row["finger_ratio"]),
            env_contact_changes=float(row["env_changes"]),
            grasp_centroid_distance=float(row["centroid"])))
        labels.append(float(row["reward"]))
    return feats, labels


_default_model: RewardModel | None = None


def default_reward_model() -> RewardModel:
    global _default_model
    if _default_model is None:
        _default_model = fit_reward_model(*load_labeled_features())
    return _default_model
