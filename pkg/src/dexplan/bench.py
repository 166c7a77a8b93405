"""Timing harness for the contact planner against the per-step baseline.

The workload is a cube slid across a frictionless table: the table cannot
drag the cube along, so some finger must push at every moving step and the
planners have real work to do. Grid cells scale the number of candidate
surface points and trajectory steps; each cell reports median wall time
over several seeds for both planners on identical inputs.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .level2 import per_step_baseline_plan, plan_contacts
from .mechanics import MechanicsConfig
from .modes import CsMode
from .robot import SphereFingerRobot
from .se3 import Pose
from .task import GoalRegion, ManipulationTask, RrtParams
from .trajectory import ObjectTrajectory, TrajStep
from .world import (Box, EnvBody, EnvironmentModel, HalfSpace, ObjectModel,
                    detect_contacts, sample_surface_points)

DEFAULT_GRID = ((10, 20), (10, 100), (10, 200), (20, 200))


def bench_task(n_points: int, point_seed: int = 0) -> ManipulationTask:
    shape = Box((0.2, 0.2, 0.2))
    points = sample_surface_points(shape, n_points,
                                   np.random.default_rng(point_seed))
    obj = ObjectModel(shape, mass=0.1, surface_points=points)
    robot = SphereFingerRobot(n_fingers=2, fingertip_radius=0.03,
                              patch_radius=0.015)
    return ManipulationTask(
        obj=obj,
        env=EnvironmentModel([EnvBody(HalfSpace(), name="table")]),
        robot=robot,
        mechanics=MechanicsConfig(model="quasidynamic", mu_env=0.0,
                                  mu_mnp=0.8),
        x_start=Pose([0.0, 0.0, 0.1]),
        goal=GoalRegion(Pose([1.0, 0.0, 0.1]), tolerance=0.15),
        rrt=RrtParams(position_bounds=((-0.5, -0.5, 0.0), (1.5, 0.5, 0.8))))


def bench_trajectory(task: ManipulationTask, n_steps: int,
                     dx: float = 0.1) -> ObjectTrajectory:
    """L-shaped resting slide: half the steps along +x, then a turn to +y.

    The turn forces the pusher to change faces mid-trajectory, so even one
    finger needs a scheduled relocation and prefix placements can dead-end.
    """
    half = (n_steps + 1) // 2
    positions = [(i * dx, 0.0) for i in range(half)]
    positions += [((half - 1) * dx, j * dx) for j in range(1, n_steps - half + 1)]
    steps = []
    for px, py in positions:
        x = Pose([px, py, 0.1])
        contacts = detect_contacts(task.obj, x, task.env)
        steps.append(TrajStep(x, contacts, CsMode.all_maintain(len(contacts))))
    return ObjectTrajectory(steps)


@dataclass
class BenchRow:
    steps: int
    points: int
    ours_s: float
    baseline_s: float

    @property
    def size(self) -> str:
        return f"{self.points}^{self.steps}"

    @property
    def speedup(self) -> float:
        return self.baseline_s / self.ours_s if self.ours_s > 0 else float("inf")


def time_cell(n_steps: int, n_points: int, seed: int,
              iterations: int = 400) -> tuple:
    """(ours_s, baseline_s) for one seed; both runs must produce a valid plan."""
    task = bench_task(n_points)
    traj = bench_trajectory(task, n_steps)

    t0 = time.monotonic()
    ours = plan_contacts(task, traj, iterations, np.random.default_rng(seed),
                         stop_on_success=True)
    ours_s = time.monotonic() - t0
    if ours.best_reward <= 0 or not ours.checker.schedule_valid(
            ours.best_schedule.assignments):
        raise RuntimeError(
            f"relocation planner failed cell {n_points}^{n_steps} seed {seed}")

    task = bench_task(n_points)
    traj = bench_trajectory(task, n_steps)
    t0 = time.monotonic()
    base = per_step_baseline_plan(task, traj, iterations,
                                  np.random.default_rng(seed),
                                  stop_on_success=True)
    base_s = time.monotonic() - t0
    if base.best_reward <= 0 or not base.checker.schedule_valid(
            base.best_schedule.assignments):
        raise RuntimeError(
            f"baseline planner failed cell {n_points}^{n_steps} seed {seed}")
    return ours_s, base_s


def run_grid(grid=DEFAULT_GRID, n_seeds: int = 10,
             iterations: int = 400, report=None) -> list:
    rows = []
    for n_steps, n_points in grid:
        ours_times, base_times = [], []
        for seed in range(n_seeds):
            ours_s, base_s = time_cell(n_steps, n_points, seed, iterations)
            ours_times.append(ours_s)
            base_times.append(base_s)
        row = BenchRow(steps=n_steps, points=n_points,
                       ours_s=statistics.median(ours_times),
                       baseline_s=statistics.median(base_times))
        if report is not None:
            report(row)
        rows.append(row)
    return rows


def write_csv(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["size", "ours_s", "baseline_s"])
        for row in rows:
            writer.writerow([row.size, f"{row.ours_s:.6f}",
                             f"{row.baseline_s:.6f}"])
