"""Run a scenario end to end: search until the budget runs out, then turn
the best plan into a trajectory file plus run statistics."""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .level1 import PoseSearch, PoseSearchParams
from .level3 import compute_features
from .scenario import ScenarioConfig
from .trajfile import PlanStep, TrajectoryFile

_UNSET = object()


@dataclass
class RunStats:
    success: bool
    wall_time: float
    iterations: int
    nodes_in_tree: int
    reward: float = 0.0
    solution_found_time: float | None = None
    solution_length: int | None = None
    travel_distance_ratio: float | None = None
    finger_relocations: int | None = None
    env_contact_changes: int | None = None
    grasp_centroid_distance: float | None = None


def plan(config: ScenarioConfig, seed: int | None = None,
         budget_seconds=_UNSET, budget_iterations=_UNSET,
         stop_on_success: bool | None = None, model=None):
    """Plan one scenario run.

    Returns (trajectory_file, stats); the file is None when no plan was
    found. Budget arguments override the scenario's own budget section;
    passing budget_seconds=None disables the clock entirely, which makes
    the run deterministic for a fixed seed and iteration cap.
    """
    budget = config.budget_settings()
    seconds = budget.seconds if budget_seconds is _UNSET else budget_seconds
    iter_cap = budget.iterations if budget_iterations is _UNSET else budget_iterations
    stop = budget.stop_on_success if stop_on_success is None else stop_on_success
    if seed is None:
        seed = config.seed

    settings = config.search_settings()
    task = config.build_task()
    params = PoseSearchParams(
        level2_iterations=settings.level2_iterations,
        level2_stop_on_success=settings.level2_stop_on_success,
        rrt_iters=settings.rrt_iters,
        probe_targets=settings.probe_targets)
    search = PoseSearch(task, rng=np.random.default_rng(seed), params=params,
                        model=model)

    t0 = time.monotonic()
    found_at = None
    while True:
        if iter_cap is not None and search.iterations >= iter_cap:
            break
        if seconds is not None and time.monotonic() - t0 >= seconds:
            break
        search.run_iteration()
        if search.best is not None and found_at is None:
            found_at = time.monotonic() - t0
        if search.best is not None and stop:
            break
    wall = time.monotonic() - t0

    if search.best is None:
        return None, RunStats(success=False, wall_time=wall,
                              iterations=search.iterations,
                              nodes_in_tree=len(search.tree.nodes))

    best = search.best
    features = compute_features(task, best.trajectory, best.schedule)
    stats = RunStats(
        success=True, wall_time=wall, iterations=search.iterations,
        nodes_in_tree=len(search.tree.nodes), reward=best.reward,
        solution_found_time=found_at,
        solution_length=len(best.trajectory),
        travel_distance_ratio=features.travel_distance_ratio,
        finger_relocations=best.schedule.relocations,
        env_contact_changes=features.env_contact_changes,
        grasp_centroid_distance=features.grasp_centroid_distance)

    steps = []
    for t in range(len(best.trajectory)):
        step = best.trajectory[t]
        steps.append(PlanStep(
            t=t, pose=[float(v) for v in step.x.as_tuple()],
            mode=step.mode_string(), fingers=dict(best.controls[t])))
    meta = {
        "scenario": config.name, "seed": int(seed),
        "config_hash": config.config_hash(), "config": config.to_dict(),
        "reward": float(best.reward), "iterations": int(search.iterations),
        "wall_time_s": wall, "solution_found_s": found_at,
    }
    return TrajectoryFile(steps=steps, meta=meta), stats


def stats_over_seeds(config: ScenarioConfig, n_seeds: int = 20,
                     first_seed: int | None = None, workers: int = 1,
                     **plan_kwargs) -> list:
    """One RunStats per seed, seeds counting up from the scenario's own."""
    base = config.seed if first_seed is None else first_seed
    seeds = range(base, base + n_seeds)
    if workers > 1:
        # build_task() gives every run its own caches, so threads are safe
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(
                lambda s: plan(config, seed=s, **plan_kwargs)[1], seeds))
    else:
        runs = [plan(config, seed=s, **plan_kwargs)[1] for s in seeds]
    return runs


def summarize(runs: list) -> dict:
    """Aggregate per-seed stats into the numbers worth reporting."""
    done = [r for r in runs if r.success]
    out = {
        "runs": len(runs),
        "successes": len(done),
        "success_rate": len(done) / len(runs) if runs else 0.0,
    }
    def med(values):
        vals = [v for v in values if v is not None]
        return statistics.median(vals) if vals else None
    out["median_solve_time_s"] = med([r.solution_found_time for r in done])
    out["median_wall_time_s"] = med([r.wall_time for r in runs])
    out["median_solution_length"] = med([r.solution_length for r in done])
    out["median_travel_distance_ratio"] = med(
        [r.travel_distance_ratio for r in done])
    out["median_finger_relocations"] = med(
        [r.finger_relocations for r in done])
    out["median_env_contact_changes"] = med(
        [r.env_contact_changes for r in done])
    return out


_METRICS = (
    ("solution_found_s", "solution_found_time"),
    ("solution_length", "solution_length"),
    ("travel_distance_ratio", "travel_distance_ratio"),
    ("finger_relocations", "finger_relocations"),
    ("env_contact_changes", "env_contact_changes"),
    ("grasp_centroid_distance", "grasp_centroid_distance"),
    ("reward", "reward"),
)


def aggregate_table(runs: list) -> list:
    """(metric, mean, std, median) rows over the successful runs."""
    done = [r for r in runs if r.success]
    rows = []
    for label, attr in _METRICS:
        vals = [getattr(r, attr) for r in done
                if getattr(r, attr) is not None]
        if not vals:
            rows.append((label, None, None, None))
            continue
        rows.append((label, statistics.fmean(vals),
                     statistics.pstdev(vals) if len(vals) > 1 else 0.0,
                     statistics.median(vals)))
    return rows
