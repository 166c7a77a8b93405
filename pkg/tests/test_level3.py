"""Trajectory features, the logistic reward map, and per-step force solving."""

import math

import numpy as np
import pytest

from dexplan.errors import DegenerateLabels
from dexplan.level3 import (
    FeatureVector,
    RewardModel,
    compute_features,
    default_reward_model,
    evaluate_path,
    fit_reward_model,
    load_labeled_features,
    solve_step_forces,
)
from dexplan.mechanics import MechanicsConfig
from dexplan.modes import CsMode
from dexplan.robot import SphereFingerRobot
from dexplan.se3 import Pose
from dexplan.task import GoalRegion, ManipulationTask, RrtParams
from dexplan.trajectory import ContactSchedule, ObjectTrajectory, TrajStep
from dexplan.world import (
    Box,
    EnvBody,
    EnvironmentModel,
    HalfSpace,
    ObjectModel,
    SurfacePoint,
    detect_contacts,
)

# face-center surface points of the unit cube, indexed for readability
PX, NX, PZ, NZ, PY, NY = range(6)


def cube_task(model="quasistatic", mu_env=0.5):
    shape = Box((1.0, 1.0, 1.0))
    pts = [
        SurfacePoint((0.5, 0, 0), (1, 0, 0)),
        SurfacePoint((-0.5, 0, 0), (-1, 0, 0)),
        SurfacePoint((0, 0, 0.5), (0, 0, 1)),
        SurfacePoint((0, 0, -0.5), (0, 0, -1)),
        SurfacePoint((0, 0.5, 0), (0, 1, 0)),
        SurfacePoint((0, -0.5, 0), (0, -1, 0)),
    ]
    obj = ObjectModel(shape, mass=1.0, surface_points=pts)
    return ManipulationTask(
        obj=obj,
        env=EnvironmentModel([EnvBody(HalfSpace())]),
        robot=SphereFingerRobot(n_fingers=2, fingertip_radius=0.1, patch_radius=0.05),
        mechanics=MechanicsConfig(model=model, mu_env=mu_env, mu_mnp=0.8),
        x_start=Pose([0, 0, 0.5], [1, 0, 0, 0]),
        goal=GoalRegion(Pose([2, 0, 0.5], [1, 0, 0, 0]), tolerance=0.1),
        rrt=RrtParams(extend_length=0.5, p_sample=0.5,
                      position_bounds=((-3, -3, 0), (3, 3, 3))),
    )


def free_steps(positions):
    """Steps floating in the air: no contacts, empty modes."""
    return [TrajStep(Pose(list(p), [1, 0, 0, 0]), [], CsMode.all_maintain(0))
            for p in positions]


def resting_step(task, pos, mode=None):
    x = Pose(list(pos), [1, 0, 0, 0])
    contacts = detect_contacts(task.obj, x, task.env)
    assert contacts, "fixture expected the cube to touch the floor"
    m = mode if mode is not None else CsMode.all_maintain(len(contacts))
    return TrajStep(x, contacts, m)


def empty_schedule(n):
    return ContactSchedule(assignments=[() for _ in range(n)], relocations=0)


# --- feature arithmetic ------------------------------------------------------


def test_straight_line_travel_ratio_is_one():
    task = cube_task()
    traj = ObjectTrajectory(free_steps([(0, 0, 2), (1, 0, 2), (2, 0, 2)]))
    f = compute_features(task, traj, empty_schedule(3))
    assert f.path_size == 3.0
    assert f.travel_distance_ratio == pytest.approx(1.0)
    assert f.finger_change_ratio == 0.0
    assert f.env_contact_changes == 0.0
    assert f.grasp_centroid_distance == 0.0


def test_out_and_back_travel_ratio():
    # 0 -> 1 -> 0 -> 1 travels 3 units for a net displacement of 1
    task = cube_task()
    traj = ObjectTrajectory(free_steps([(0, 0, 2), (1, 0, 2), (0, 0, 2), (1, 0, 2)]))
    f = compute_features(task, traj, empty_schedule(4))
    assert f.travel_distance_ratio == pytest.approx(3.0)


def test_closed_loop_uses_degenerate_ratio_convention():
    task = cube_task()
    traj = ObjectTrajectory(free_steps([(0, 0, 2), (1, 0, 2), (0, 0, 2)]))
    f = compute_features(task, traj, empty_schedule(3))
    assert f.travel_distance_ratio == 1.0


def test_finger_change_ratio_and_path_size_override():
    task = cube_task()
    traj = ObjectTrajectory(free_steps([(0, 0, 2), (1, 0, 2), (2, 0, 2), (3, 0, 2)]))
    sched = empty_schedule(4)
    sched.relocations = 2
    f = compute_features(task, traj, sched, path_size=9)
    assert f.path_size == 9.0
    assert f.finger_change_ratio == pytest.approx(0.5)


def test_env_contact_changes_counts_mode_string_switches():
    task = cube_task()
    steps = free_steps([(0, 0, 2), (1, 0, 2), (2, 0, 2), (3, 0, 2)])
    steps[0].mode = CsMode.from_string("00")
    steps[1].mode = CsMode.from_string("0+")
    steps[2].mode = CsMode.from_string("0+")
    steps[3].mode = CsMode.from_string("0")
    f = compute_features(task, ObjectTrajectory(steps), empty_schedule(4))
    assert f.env_contact_changes == 2.0


def test_antipodal_grasp_centroid_is_zero():
    task = cube_task()
    traj = ObjectTrajectory(free_steps([(0, 0, 2), (1, 0, 2)]))
    sched = ContactSchedule(assignments=[((0, PX), (1, NX)), ((0, PX), (1, NX))])
    f = compute_features(task, traj, sched)
    assert f.grasp_centroid_distance == pytest.approx(0.0, abs=1e-12)


def test_single_finger_centroid_normalized_by_object_size():
    # unit cube has characteristic length 1, face center sits 0.5 away
    task = cube_task()
    traj = ObjectTrajectory(free_steps([(0, 0, 2), (4, -2, 7)]))
    sched = ContactSchedule(assignments=[((0, PX),), ()])
    f = compute_features(task, traj, sched)
    assert f.grasp_centroid_distance == pytest.approx(0.5)


def test_centroid_averages_only_steps_with_fingers():
    task = cube_task()
    traj = ObjectTrajectory(free_steps([(0, 0, 2), (1, 0, 2), (2, 0, 2)]))
    sched = ContactSchedule(assignments=[((0, PX),), (), ((0, PZ), (1, NZ))])
    f = compute_features(task, traj, sched)
    assert f.grasp_centroid_distance == pytest.approx((0.5 + 0.0) / 2)


def test_malformed_feature_vector_rejected():
    with pytest.raises(ValueError):
        FeatureVector(3, -0.1, 0, 0, 0).vector()
    with pytest.raises(ValueError):
        FeatureVector(3, float("nan"), 0, 0, 0).vector()


# --- reward map --------------------------------------------------------------


def test_reward_matches_hand_computed_sigmoid():
    m = RewardModel(weights=np.array([0.1, 0.2, 0.3, 0.05, 0.4]), bias=1.5)
    phi = FeatureVector(2, 1.0, 0.5, 1, 0.25)
    z = 1.5 - (0.1 * 2 + 0.2 * 1.0 + 0.3 * 0.5 + 0.05 * 1 + 0.4 * 0.25)
    expected = 1.0 / (1.0 + math.exp(-z))
    assert expected == pytest.approx(0.6899744811276125, abs=1e-12)
    assert m.reward(phi) == pytest.approx(expected, abs=1e-12)


def test_reward_strictly_between_zero_and_one():
    m = RewardModel(weights=np.full(5, 0.5), bias=0.0)
    for scale in (0.0, 1.0, 10.0):
        r = m.reward(FeatureVector(scale, scale, scale, scale, scale))
        assert 0.0 <= r <= 1.0


# --- fitting -----------------------------------------------------------------


def test_fit_separates_single_feature_labels():
    feats, labels = [], []
    for fr in (0.0, 0.05, 0.1, 0.15, 0.2, 0.25):
        feats.append(FeatureVector(3, 1.0, fr, 1, 0.1))
        labels.append(1.0)
    for fr in (0.75, 0.8, 0.85, 0.9, 0.95, 1.0):
        feats.append(FeatureVector(3, 1.0, fr, 1, 0.1))
        labels.append(0.0)
    model = fit_reward_model(feats, labels)
    assert model.weights[2] > 0
    preds = [model.reward(f) for f in feats]
    assert all(p > 0.5 for p in preds[:6])
    assert all(p < 0.5 for p in preds[6:])


def test_fit_constant_labels_raise():
    feats = [FeatureVector(i, 1.0, 0, 0, 0.1) for i in range(1, 7)]
    with pytest.raises(DegenerateLabels):
        fit_reward_model(feats, [0.7] * 6)


def test_fit_clamps_anti_monotone_feature_to_zero():
    # labels improve as env_changes grows; the nonnegativity bound must win
    feats, labels = [], []
    for e in range(8):
        feats.append(FeatureVector(3, 1.0, 0.1, e, 0.1))
        labels.append(e / 7.0)
    model = fit_reward_model(feats, labels)
    assert model.weights[3] == pytest.approx(0.0, abs=1e-9)


# --- shipped model -----------------------------------------------------------


def test_default_model_weights_nonnegative():
    m = default_reward_model()
    assert np.all(m.weights >= 0)
    assert default_reward_model() is m


def test_default_model_reference_feature_vector_scores_above_half():
    r = default_reward_model().reward(FeatureVector(6, 1.0, 1.0, 2, 0.2))
    assert 0.5 < r <= 1.0


def test_default_model_extra_relocation_scores_strictly_lower():
    m = default_reward_model()
    base = m.reward(FeatureVector(6, 1.0, 1 / 6, 2, 0.2))
    more = m.reward(FeatureVector(6, 1.0, 2 / 6, 2, 0.2))
    assert more < base


def test_default_model_never_rewards_any_feature_increase():
    m = default_reward_model()
    base = FeatureVector(5, 1.2, 0.2, 1, 0.2)
    r0 = m.reward(base)
    bumps = [
        FeatureVector(8, 1.2, 0.2, 1, 0.2),
        FeatureVector(5, 2.0, 0.2, 1, 0.2),
        FeatureVector(5, 1.2, 0.8, 1, 0.2),
        FeatureVector(5, 1.2, 0.2, 4, 0.2),
        FeatureVector(5, 1.2, 0.2, 1, 0.9),
    ]
    for b in bumps:
        assert m.reward(b) <= r0


def test_label_table_loads_with_contrast():
    feats, labels = load_labeled_features()
    assert len(feats) >= 20
    assert all(0.0 < y < 1.0 for y in labels)
    assert max(labels) - min(labels) > 0.5


# --- per-step force solving and evaluation -----------------------------------


def test_resting_cube_needs_no_fingers():
    task = cube_task()
    traj = ObjectTrajectory([resting_step(task, (0, 0, 0.5))])
    reward, controls = evaluate_path(task, traj, empty_schedule(1))
    assert reward > 0
    assert controls == [{}]


def test_floating_cube_without_fingers_scores_zero():
    task = cube_task()
    traj = ObjectTrajectory(free_steps([(0, 0, 2)]))
    reward, controls = evaluate_path(task, traj, empty_schedule(1))
    assert reward == 0.0
    assert controls is None


def test_floating_cube_held_by_antipodal_fingers():
    task = cube_task()
    traj = ObjectTrajectory(free_steps([(0, 0, 2)]))
    sched = ContactSchedule(assignments=[((0, PX), (1, NX))])
    reward, controls = evaluate_path(task, traj, sched)
    assert reward > 0
    u = controls[0]
    assert set(u) == {0, 1}
    assert u[0]["position"] == pytest.approx([0.5, 0, 2])
    assert u[1]["position"] == pytest.approx([-0.5, 0, 2])
    # the two finger forces alone must carry the weight
    total = np.array(u[0]["force"]) + np.array(u[1]["force"])
    assert total == pytest.approx([0, 0, 9.81], abs=1e-3)


def test_finger_force_torque_balance_recomputed_from_blocks():
    task = cube_task()
    x = Pose([0, 0, 2], [1, 0, 0, 0])
    traj = ObjectTrajectory([TrajStep(x, [], CsMode.all_maintain(0))])
    solved = solve_step_forces(task, traj, 0, ((0, PX), (1, NX)))
    assert solved is not None
    blocks, lam = solved
    from dexplan.mechanics import block_forces

    per_block = block_forces(blocks, lam, task.mechanics.cone_edges)
    net_force = np.zeros(3)
    net_torque = np.zeros(3)
    for b, f in zip(blocks, per_block):
        net_force += f
        net_torque += np.cross(np.asarray(b.position, dtype=float), f)
    assert net_force == pytest.approx([0, 0, 9.81], abs=1e-3)
    assert net_torque == pytest.approx([0, 0, 0], abs=1e-3)


def test_quasidynamic_push_needs_the_finger():
    task = cube_task(model="quasidynamic", mu_env=0.0)
    steps = [resting_step(task, (0, 0, 0.5)), resting_step(task, (0.5, 0, 0.5))]
    traj = ObjectTrajectory(steps)
    bare, _ = evaluate_path(task, traj, empty_schedule(2))
    assert bare == 0.0
    sched = ContactSchedule(assignments=[((0, NX),), ()])
    reward, controls = evaluate_path(task, traj, sched)
    assert reward > 0
    push = np.array(controls[0][0]["force"])
    assert push[0] > 1.0  # pushes the cube toward +x
    assert controls[1] == {}


def test_force_closure_model_accepts_patch_grasp_only():
    task = cube_task(model="force_closure")
    traj = ObjectTrajectory(free_steps([(0, 0, 2)]))
    assert evaluate_path(task, traj, empty_schedule(1))[0] == 0.0
    sched = ContactSchedule(assignments=[((0, PX), (1, NX))])
    reward, controls = evaluate_path(task, traj, sched)
    assert reward > 0
    # closure checking proves existence without solving magnitudes
    assert np.allclose(controls[0][0]["force"], 0.0)


def test_schedule_length_mismatch_rejected():
    task = cube_task()
    traj = ObjectTrajectory(free_steps([(0, 0, 2), (1, 0, 2)]))
    with pytest.raises(ValueError):
        evaluate_path(task, traj, empty_schedule(3))


def test_evaluation_is_deterministic():
    task = cube_task()
    traj = ObjectTrajectory(free_steps([(0, 0, 2), (1, 0, 2)]))
    sched = ContactSchedule(assignments=[((0, PX), (1, NX))] * 2, relocations=0)
    first = evaluate_path(task, traj, sched)
    second = evaluate_path(task, traj, sched)
    assert first[0] == second[0]
    assert repr(first[1]) == repr(second[1])
