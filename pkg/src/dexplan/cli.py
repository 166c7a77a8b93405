"""Command line driver.

Exit codes: 0 on success, 2 when planning or a content check fails, 3 when
a scenario or file cannot be loaded.
"""

from __future__ import annotations

import csv
import math
import sys

import click
import numpy as np

from . import bench as bench_mod
from .errors import ParseError, ValidationError
from .modes import enumerate_cs_modes
from .planner import aggregate_table, plan as run_plan, stats_over_seeds, summarize
from .scenario import load_scenario, packaged_scenarios
from .se3 import Pose
from .trajfile import read_trajectory, validate_trajectory, write_trajectory
from .world import detect_contacts

_CONFIG_ERROR, _PLAN_ERROR = 3, 2


def _setup(path):
    try:
        return load_scenario(path)
    except (ParseError, ValidationError) as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(_CONFIG_ERROR)


def _read(path):
    try:
        return read_trajectory(path)
    except ParseError as e:
        click.echo(f"cannot load trajectory: {e}", err=True)
        sys.exit(_CONFIG_ERROR)


@click.group()
@click.version_option(package_name="dexplan")
def main():
    """Hierarchical contact-mode planning for dexterous manipulation."""


@main.command("scenarios")
def scenarios_cmd():
    """List the scenario names shipped with the package."""
    for name in packaged_scenarios():
        click.echo(name)


@main.command("plan")
@click.option("--setup", required=True, help="Scenario file or packaged name.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--budget-s", type=float, default=None,
              help="Override the wall-clock budget in seconds.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the trajectory file here.")
def plan_cmd(setup, seed, budget_s, out):
    """Plan one scenario run and report the outcome."""
    config = _setup(setup)
    kwargs = {}
    if budget_s is not None:
        kwargs["budget_seconds"] = budget_s
    tf, stats = run_plan(config, seed=seed, **kwargs)
    click.echo(f"scenario {config.name}  seed "
               f"{config.seed if seed is None else seed}")
    if tf is None:
        click.echo(f"no plan found ({stats.iterations} iterations, "
                   f"{stats.nodes_in_tree} nodes, {stats.wall_time:.1f}s)")
        sys.exit(_PLAN_ERROR)
    click.echo(f"solved in {stats.solution_found_time:.2f}s: "
               f"{stats.solution_length} steps, reward {stats.reward:.3f}, "
               f"{stats.finger_relocations} finger relocations, "
               f"travel ratio {stats.travel_distance_ratio:.2f}")
    if out:
        write_trajectory(tf, out)
        click.echo(f"wrote {out}")


@main.command("stats")
@click.option("--setup", required=True)
@click.option("--runs", type=int, default=20, show_default=True)
@click.option("--budget-s", type=float, default=None)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="Write one row per run here.")
@click.option("--threads", type=int, default=1, show_default=True)
def stats_cmd(setup, runs, budget_s, csv_path, threads):
    """Planning statistics over consecutive seeds."""
    config = _setup(setup)
    kwargs = {}
    if budget_s is not None:
        kwargs["budget_seconds"] = budget_s
    results = stats_over_seeds(config, n_seeds=runs, workers=threads, **kwargs)
    if csv_path:
        _write_runs_csv(config, results, csv_path)
        click.echo(f"wrote {csv_path}")
    agg = summarize(results)
    click.echo(f"scenario {config.name}: {agg['successes']}/{agg['runs']} "
               f"solved (rate {agg['success_rate']:.2f})")
    click.echo(f"{'metric':<24}{'mean':>10}{'std':>10}{'median':>10}")
    for label, mean, std, median in aggregate_table(results):
        if mean is None:
            click.echo(f"{label:<24}{'-':>10}{'-':>10}{'-':>10}")
        else:
            click.echo(f"{label:<24}{mean:>10.3f}{std:>10.3f}{median:>10.3f}")
    if agg["successes"] == 0:
        sys.exit(_PLAN_ERROR)


def _write_runs_csv(config, results, path):
    fields = ["seed", "success", "solution_found_s", "wall_s", "iterations",
              "nodes_in_tree", "solution_length", "travel_distance_ratio",
              "finger_relocations", "env_contact_changes",
              "grasp_centroid_distance", "reward"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for i, r in enumerate(results):
            writer.writerow([
                config.seed + i, int(r.success),
                "" if r.solution_found_time is None else f"{r.solution_found_time:.4f}",
                f"{r.wall_time:.4f}", r.iterations, r.nodes_in_tree,
                "" if r.solution_length is None else r.solution_length,
                "" if r.travel_distance_ratio is None else f"{r.travel_distance_ratio:.4f}",
                "" if r.finger_relocations is None else r.finger_relocations,
                "" if r.env_contact_changes is None else r.env_contact_changes,
                "" if r.grasp_centroid_distance is None else f"{r.grasp_centroid_distance:.4f}",
                f"{r.reward:.6f}"])


@main.command("bench-level2")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), required=True)
@click.option("--seeds", type=int, default=10, show_default=True)
@click.option("--iterations", type=int, default=400, show_default=True)
def bench_cmd(csv_path, seeds, iterations):
    """Time the relocation planner against the per-step baseline."""
    def report(row):
        click.echo(f"{row.size:>8}: ours {row.ours_s:.3f}s, "
                   f"baseline {row.baseline_s:.3f}s ({row.speedup:.1f}x)")
    try:
        rows = bench_mod.run_grid(n_seeds=seeds, iterations=iterations,
                                  report=report)
    except RuntimeError as e:
        click.echo(f"benchmark failed: {e}", err=True)
        sys.exit(_PLAN_ERROR)
    bench_mod.write_csv(rows, csv_path)
    click.echo(f"wrote {csv_path}")


@main.command("modes")
@click.option("--setup", required=True)
@click.option("--pose", nargs=7, type=float, required=True,
              metavar="X Y Z QW QX QY QZ")
def modes_cmd(setup, pose):
    """Enumerate contact modes of the object at a pose."""
    config = _setup(setup)
    task = config.build_task()
    x = Pose(list(pose[:3]), list(pose[3:]))
    contacts = detect_contacts(task.obj, x, task.env)
    click.echo(f"{len(contacts)} environment contacts")
    for i, c in enumerate(contacts):
        p = np.asarray(c.position)
        click.echo(f"  contact {i}: ({p[0]:+.3f}, {p[1]:+.3f}, {p[2]:+.3f})")
    feasible = enumerate_cs_modes(contacts, x)
    click.echo(f"{len(feasible)} feasible contact modes")
    for mode in feasible:
        click.echo(f"  {mode or '(free)'}")


@main.command("validate")
@click.argument("trajectory", type=click.Path(exists=True, dir_okay=False))
def validate_cmd(trajectory):
    """Re-check a trajectory file from scratch."""
    tf = _read(trajectory)
    problems = validate_trajectory(tf)
    if problems:
        for p in problems:
            click.echo(f"FAIL {p}")
        sys.exit(_PLAN_ERROR)
    click.echo(f"ok: {len(tf.steps)} steps, scenario "
               f"{tf.meta.get('scenario', '?')}, seed {tf.meta.get('seed', '?')}")


@main.command("inspect")
@click.argument("trajectory", type=click.Path(exists=True, dir_okay=False))
@click.option("--svg", type=click.Path(dir_okay=False), default=None,
              help="Write a pose-trace drawing here.")
def inspect_cmd(trajectory, svg):
    """Print a step table for a trajectory file."""
    tf = _read(trajectory)
    if not tf.steps:
        click.echo("trajectory file has no steps", err=True)
        sys.exit(_PLAN_ERROR)
    meta = tf.meta
    click.echo(f"scenario {meta.get('scenario', '?')}  seed {meta.get('seed', '?')}  "
               f"reward {meta.get('reward', float('nan')):.3f}")
    click.echo(f"{'t':>3} {'position':<26} {'mode':<12} fingers")
    for s in tf.steps:
        pos = "({:+.3f}, {:+.3f}, {:+.3f})".format(*s.pose[:3])
        parts = []
        for finger in sorted(s.fingers):
            info = s.fingers[finger]
            mag = math.hypot(*info["force"])
            parts.append(f"{finger}@p{info['surface_point']} |f|={mag:.2f}")
        click.echo(f"{s.t:>3} {pos:<26} {s.mode or '(free)':<12} "
                   f"{', '.join(parts) if parts else '-'}")
    if svg:
        with open(svg, "w") as fh:
            fh.write(_pose_trace_svg(tf))
        click.echo(f"wrote {svg}")


def _pose_trace_svg(tf) -> str:
    """Static side-by-side top (xy) and front (xz) traces of the poses."""
    xs = [s.pose[0] for s in tf.steps]
    ys = [s.pose[1] for s in tf.steps]
    zs = [s.pose[2] for s in tf.steps]

    def panel(ax, us, vs, label, off_x):
        lo_u, hi_u = min(us), max(us)
        lo_v, hi_v = min(vs), max(vs)
        span = max(hi_u - lo_u, hi_v - lo_v, 1e-6)
        pad = 0.1 * span
        scale = 320.0 / (span + 2 * pad)
        def sx(u):
            return off_x + 40 + (u - lo_u + pad) * scale
        def sy(v):
            return 360 - (v - lo_v + pad) * scale
        pts = " ".join(f"{sx(u):.1f},{sy(v):.1f}" for u, v in zip(us, vs))
        dots = "".join(
            f'<circle cx="{sx(u):.1f}" cy="{sy(v):.1f}" r="3" class="s"/>'
            for u, v in zip(us, vs))
        return (f'<g><text x="{off_x + 180}" y="20" text-anchor="middle" '
                f'class="t">{label}</text>'
                f'<polyline points="{pts}" class="p"/>{dots}'
                f'<circle cx="{sx(us[0]):.1f}" cy="{sy(vs[0]):.1f}" r="5" class="a"/>'
                f'<circle cx="{sx(us[-1]):.1f}" cy="{sy(vs[-1]):.1f}" r="5" class="b"/>'
                f'</g>')

    return (
        '<svg xmlns="http://www.w3.org/2000/svg" width="800" height="400" '
        'viewBox="0 0 800 400">'
        '<style>.p{fill:none;stroke:#456;stroke-width:2}'
        '.s{fill:#456}.a{fill:#2a2}.b{fill:#c33}'
        '.t{font:14px sans-serif;fill:#333}</style>'
        '<rect width="800" height="400" fill="#fff"/>'
        + panel(0, xs, ys, "top view (x, y)", 0)
        + panel(1, xs, zs, "front view (x, z)", 400)
        + "</svg>")


if __name__ == "__main__":
    main()
