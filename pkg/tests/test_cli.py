"""Exit codes and output surfaces of the command line driver."""

import copy
import json

import yaml
from click.testing import CliRunner

import dexplan.bench as bench_mod
from dexplan.bench import BenchRow
from dexplan.cli import main
from dexplan.trajfile import write_trajectory


def runner():
    return CliRunner()


def write_setup(tmp_path, doc, name="setup.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def quick_doc():
    return {
        "name": "quick",
        "object": {"shape": {"type": "box", "size": [1, 1, 1]}, "mass": 1.0},
        "environment": [{"shape": {"type": "halfspace"}}],
        "robot": {"fingers": 2, "fingertip_radius": 0.2, "patch_radius": 0.1},
        "start": [0, 0, 0.5],
        "goal": {"center": [0, 0, 0.5], "tolerance": 0.3},
        "search": {"level2_iterations": 40, "level2_stop_on_success": True},
    }


def test_scenarios_lists_packaged_names():
    result = runner().invoke(main, ["scenarios"])
    assert result.exit_code == 0
    names = set(result.output.split())
    assert {"card", "bookshelf", "peg", "flip", "inhand",
            "cube-slide"} <= names


def test_plan_roundtrip_through_validate(tmp_path):
    setup = write_setup(tmp_path, quick_doc())
    out = str(tmp_path / "run.traj.json")
    result = runner().invoke(
        main, ["plan", "--setup", setup, "--seed", "3", "--out", out])
    assert result.exit_code == 0, result.output
    assert "solved in" in result.output and f"wrote {out}" in result.output

    check = runner().invoke(main, ["validate", out])
    assert check.exit_code == 0, check.output
    assert check.output.startswith("ok:")
    assert "seed 3" in check.output


def test_plan_config_error_exits_3(tmp_path):
    doc = quick_doc()
    del doc["object"]["mass"]
    result = runner().invoke(
        main, ["plan", "--setup", write_setup(tmp_path, doc)])
    assert result.exit_code == 3
    assert "object.mass" in result.output


def test_plan_failure_exits_2(tmp_path):
    doc = quick_doc()
    doc["goal"] = {"center": [3, 0, 0.5], "tolerance": 0.1}
    doc["search"]["rrt_iters"] = 2
    doc["budget"] = {"iterations": 2, "stop_on_success": True}
    result = runner().invoke(
        main, ["plan", "--setup", write_setup(tmp_path, doc)])
    assert result.exit_code == 2
    assert "no plan found" in result.output


def test_validate_rejects_tampered_file(tmp_path, card_plan):
    tf, _ = card_plan
    bad = copy.deepcopy(tf)
    bad.steps[-1].pose[0] += 0.4
    path = str(tmp_path / "bad.traj.json")
    write_trajectory(bad, path)
    result = runner().invoke(main, ["validate", path])
    assert result.exit_code == 2
    assert "FAIL" in result.output


def test_validate_unreadable_file_exits_3(tmp_path):
    path = tmp_path / "junk.json"
    path.write_text("{not json")
    result = runner().invoke(main, ["validate", str(path)])
    assert result.exit_code == 3


def test_inspect_table_and_svg(tmp_path, card_plan):
    tf, _ = card_plan
    path = str(tmp_path / "plan.traj.json")
    write_trajectory(tf, path)
    svg_path = tmp_path / "trace.svg"
    result = runner().invoke(main, ["inspect", path, "--svg", str(svg_path)])
    assert result.exit_code == 0, result.output
    assert "scenario card" in result.output
    # one table line per step
    lines = [l for l in result.output.splitlines() if l.strip()[:1].isdigit()]
    assert len(lines) == len(tf.steps)
    svg = svg_path.read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def test_inspect_svg_is_deterministic(tmp_path, card_plan):
    tf, _ = card_plan
    path = str(tmp_path / "plan.traj.json")
    write_trajectory(tf, path)
    outs = []
    for name in ("a.svg", "b.svg"):
        p = tmp_path / name
        runner().invoke(main, ["inspect", path, "--svg", str(p)])
        outs.append(p.read_text())
    assert outs[0] == outs[1]


def test_inspect_empty_trajectory_exits_2(tmp_path):
    path = tmp_path / "empty.traj.json"
    path.write_text(json.dumps(
        {"format": "dexplan-plan", "version": 1, "meta": {}, "steps": []}))
    result = runner().invoke(main, ["inspect", str(path)])
    assert result.exit_code == 2


def test_modes_prints_contact_modes():
    result = runner().invoke(
        main, ["modes", "--setup", "card",
               "--pose", "0", "0", "0.025", "1", "0", "0", "0"])
    assert result.exit_code == 0, result.output
    assert "environment contacts" in result.output
    assert "feasible contact modes" in result.output


def test_stats_csv(tmp_path):
    setup = write_setup(tmp_path, quick_doc())
    csv_path = tmp_path / "runs.csv"
    result = runner().invoke(
        main, ["stats", "--setup", setup, "--runs", "2",
               "--csv", str(csv_path)])
    assert result.exit_code == 0, result.output
    assert "2/2 solved" in result.output
    rows = csv_path.read_text().splitlines()
    assert rows[0].startswith("seed,success,")
    assert len(rows) == 3


def test_stats_all_failures_exit_2(tmp_path):
    doc = quick_doc()
    doc["goal"] = {"center": [3, 0, 0.5], "tolerance": 0.1}
    doc["search"]["rrt_iters"] = 2
    doc["budget"] = {"iterations": 2, "stop_on_success": True}
    result = runner().invoke(
        main, ["stats", "--setup", write_setup(tmp_path, doc), "--runs", "2"])
    assert result.exit_code == 2
    assert "0/2 solved" in result.output


def test_bench_writes_csv(tmp_path, monkeypatch):
    rows = [BenchRow(steps=10, points=20, ours_s=0.5, baseline_s=3.0)]
    seen = {}

    def fake_grid(grid=bench_mod.DEFAULT_GRID, n_seeds=10, iterations=400,
                  report=None):
        seen["n_seeds"] = n_seeds
        if report:
            for row in rows:
                report(row)
        return rows

    monkeypatch.setattr(bench_mod, "run_grid", fake_grid)
    csv_path = tmp_path / "bench.csv"
    result = runner().invoke(
        main, ["bench-level2", "--csv", str(csv_path), "--seeds", "4"])
    assert result.exit_code == 0, result.output
    assert seen["n_seeds"] == 4
    assert "6.0x" in result.output
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "size,ours_s,baseline_s"
    assert lines[1].startswith("20^10,")


def test_version_flag():
    result = runner().invoke(main, ["--version"])
    assert result.exit_code == 0
