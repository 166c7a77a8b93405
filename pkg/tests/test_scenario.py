"""Scenario loading, validation, and task construction."""

import math
import warnings

import numpy as np
import pytest

from dexplan.errors import ParseError, ValidationError
from dexplan.scenario import (config_from_dict, load_config, load_scenario,
                              packaged_scenarios)
from dexplan.world import Box, HalfSpace, Sphere


def minimal_card_doc():
    return {
        "name": "mini-card",
        "object": {"shape": {"type": "box", "size": [0.6, 0.4, 0.05]},
                   "mass": 0.2},
        "environment": [{"shape": {"type": "halfspace"}, "name": "table"}],
        "robot": {"fingers": 2, "fingertip_radius": 0.05,
                  "patch_radius": 0.02},
        "start": [0, 0, 0.025],
        "goal": {"center": [0.5, 0, 0.025], "tolerance": 0.12},
    }


def test_minimal_card_round_trip():
    cfg = config_from_dict(minimal_card_doc())
    task = cfg.build_task()
    assert task.robot.n_fingers == 2
    assert isinstance(task.env.bodies[0].shape, HalfSpace)
    assert isinstance(task.obj.shape, Box)
    assert task.obj.shape.size[2] == pytest.approx(0.05)
    assert task.goal.tolerance == pytest.approx(0.12)
    # defaults filled in
    assert cfg.raw["mechanics"]["model"] == "quasistatic"
    assert cfg.raw["seed"] == 0
    assert cfg.raw["budget"]["seconds"] == pytest.approx(10.0)


def test_missing_mass_names_the_field():
    doc = minimal_card_doc()
    del doc["object"]["mass"]
    with pytest.raises(ValidationError) as err:
        config_from_dict(doc)
    assert any(v.startswith("object.mass") for v in err.value.violations)


def test_all_violations_reported_together():
    doc = minimal_card_doc()
    del doc["object"]["mass"]
    doc["goal"]["tolerance"] = -1
    doc["mechanics"] = {"mu_env": 3.5}
    with pytest.raises(ValidationError) as err:
        config_from_dict(doc)
    fields = {v.split(":")[0] for v in err.value.violations}
    assert {"object.mass", "goal.tolerance", "mechanics.mu_env"} <= fields


def test_unknown_key_warns_not_errors():
    doc = minimal_card_doc()
    doc["extra"] = 1
    doc["robot"]["colour"] = "red"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cfg = config_from_dict(doc)
    messages = [str(w.message) for w in caught]
    assert any("extra" in m for m in messages)
    assert any("robot.colour" in m for m in messages)
    assert cfg.name == "mini-card"


def test_friction_bounds_enforced():
    for mu in (-0.1, 2.5):
        doc = minimal_card_doc()
        doc["mechanics"] = {"mu_env": mu}
        with pytest.raises(ValidationError) as err:
            config_from_dict(doc)
        assert any("mechanics.mu_env" in v for v in err.value.violations)


def test_pose_shorthand_and_full_form():
    doc = minimal_card_doc()
    doc["start"] = [1, 2, 3, 0.7071068, 0, 0.7071068, 0]
    cfg = config_from_dict(doc)
    task = cfg.build_task()
    assert np.allclose(task.x_start.position, [1, 2, 3])
    assert abs(task.x_start.quaternion[0] - math.sqrt(0.5)) < 1e-6
    # 3 numbers mean identity rotation
    short = config_from_dict(minimal_card_doc()).build_task()
    assert np.allclose(short.x_start.quaternion, [1, 0, 0, 0])


def test_bad_pose_rejected():
    doc = minimal_card_doc()
    doc["start"] = [1, 2]
    with pytest.raises(ValidationError) as err:
        config_from_dict(doc)
    assert any(v.startswith("start") for v in err.value.violations)


def test_config_hash_stable_and_sensitive(tmp_path):
    a = config_from_dict(minimal_card_doc())
    b = config_from_dict(minimal_card_doc())
    assert a.config_hash() == b.config_hash()
    # the normalized dict re-validates to the same hash
    assert config_from_dict(a.to_dict()).config_hash() == a.config_hash()
    doc = minimal_card_doc()
    doc["goal"]["tolerance"] = 0.2
    assert config_from_dict(doc).config_hash() != a.config_hash()


def test_build_task_returns_fresh_instances():
    cfg = config_from_dict(minimal_card_doc())
    t1, t2 = cfg.build_task(), cfg.build_task()
    assert t1 is not t2
    assert t1.caches is not t2.caches
    # surface sampling is seeded independently of the run seed
    p1 = [sp.position for sp in t1.obj.surface_points]
    p2 = [sp.position for sp in t2.obj.surface_points]
    assert p1 == p2


def test_workspace_and_fingertip_goal_shorthand():
    doc = minimal_card_doc()
    doc["robot"]["workspaces"] = [{"center": [0.3, 0, 0], "radius": 0.4}, None]
    doc["robot"]["fingertip_goals"] = [[0.1, 0, 0.2], None]
    task = config_from_dict(doc).build_task()
    assert isinstance(task.robot.workspaces[0].shape, Sphere)
    assert task.robot.workspaces[1] is None
    assert np.allclose(task.fingertip_goals[0], [0.1, 0, 0.2])
    assert task.fingertip_goals[1] is None


def test_workspace_count_must_match_fingers():
    doc = minimal_card_doc()
    doc["robot"]["workspaces"] = [{"center": [0, 0, 0], "radius": 0.4}]
    doc["robot"]["fingers"] = 2
    with pytest.raises(ValidationError) as err:
        config_from_dict(doc)
    assert any("robot.workspaces" in v for v in err.value.violations)


def test_yaml_file_loading_and_syntax_error(tmp_path):
    good = tmp_path / "ok.yaml"
    good.write_text(
        "object: {shape: {type: box, size: [1, 1, 1]}, mass: 1}\n"
        "start: [0, 0, 0.5]\n"
        "goal: {center: [1, 0, 0.5], tolerance: 0.1}\n")
    cfg = load_config(good)
    assert cfg.name == "ok"

    bad = tmp_path / "bad.yaml"
    bad.write_text("object: [unclosed\n")
    with pytest.raises(ParseError):
        load_config(bad)


def test_budget_must_have_some_limit():
    doc = minimal_card_doc()
    doc["budget"] = {"seconds": None}
    with pytest.raises(ValidationError) as err:
        config_from_dict(doc)
    assert any(v.startswith("budget") for v in err.value.violations)


def test_packaged_scenarios_load_and_build():
    names = packaged_scenarios()
    assert {"card", "bookshelf", "peg", "flip", "inhand",
            "cube-slide"} <= set(names)
    for name in names:
        cfg = load_scenario(name)
        task = cfg.build_task()
        assert task.obj.mass > 0
        assert task.goal.tolerance > 0


def test_unknown_scenario_name_is_a_parse_error():
    with pytest.raises(ParseError) as err:
        load_scenario("no-such-scenario")
    assert "card" in str(err.value)


def test_mesh_path_must_exist(tmp_path):
    doc = minimal_card_doc()
    doc["object"]["shape"] = {"type": "mesh", "path": "missing.obj"}
    with pytest.raises(ValidationError) as err:
        config_from_dict(doc, base_dir=str(tmp_path))
    assert any("object.shape.path" in v for v in err.value.violations)
