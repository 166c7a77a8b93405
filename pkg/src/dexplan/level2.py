"""Contact relocation planning over a fixed object trajectory.

The pose-level search hands down an object trajectory; this level decides
which fingers touch where and when they move. A state is (timestep, active
finger assignment). An action relocates some fingers at a chosen timestep
that the current assignment can feasibly ride to, so one relocation can
cover many object motion steps. The same bandit tree as the pose level
drives selection, with actions sampled on demand because relocations cannot
be enumerated.

A per-step baseline planner is included for benchmarking: it must commit a
full contact set at every timestep. Both planners accept exactly the
schedules that ScheduleChecker.schedule_valid accepts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .checks import assignment_ok, contact_set_ok, model_blocks, static_hold_ok
from .level3 import evaluate_path
from .mcts import SearchParams, Tree
from .mechanics import gravity_wrench, relocation_force_check
from .modes import CsMode
from .se3 import pose_log, transform_point
from .trajectory import ContactSchedule


@dataclass
class ContactPlanParams:
    k_actions: int = 5        # newly sampled actions per node visit
    eta: float = 0.1
    max_rejects: int = 50     # rejection budget per expansion
    detach_prob: float = 0.25
    pair_prob: float = 0.2    # chance an action relocates two fingers at once

    def __post_init__(self):
        if self.k_actions < 1:
            raise ValueError("need at least one sampled action per visit")


@dataclass(frozen=True)
class RelocationAction:
    """Relocate `moves` fingers once the object reaches step t_c.

    Each move is (finger id, new surface point index or None); None detaches
    the finger, and a finger not currently active is simply added. An empty
    move set rides the current contacts to t_c unchanged.
    """

    t_c: int
    moves: tuple

    def changed_fingers(self):
        return tuple(f for f, _ in self.moves)


def apply_relocation(active, action: RelocationAction):
    new = dict(active)
    for f, idx in action.moves:
        if idx is None:
            new.pop(f, None)
        else:
            new[f] = idx
    return tuple(sorted(new.items()))


def count_relocations(assignments) -> int:
    """Finger changes across consecutive steps; initial placement is free."""
    changes = 0
    for prev, cur in zip(assignments, assignments[1:]):
        pm, cm = dict(prev), dict(cur)
        changes += sum(1 for f in set(pm) | set(cm) if pm.get(f) != cm.get(f))
    return changes


def relocation_time_weight(t_c: int, t_max: int) -> float:
    """Later relocations weigh more; riding to the horizon weighs most."""
    w = 0.5 / (t_max - t_c + 1)
    return 0.5 + w if t_c == t_max else w


def auxiliary_goal_weight(points, references, scale: float) -> float:
    """Multiplier favoring new fingertip placements near their targets.

    points is [(finger, world point)]; the multiplier is exp(-2 d) with d the
    mean distance to the per-finger reference over the characteristic length,
    so it is 1 at d = 0 and decays monotonically.
    """
    ds = [np.linalg.norm(np.asarray(p, dtype=float) - np.asarray(references[f], dtype=float))
          for f, p in points
          if f < len(references) and references[f] is not None]
    if not ds:
        return 1.0
    return float(math.exp(-2.0 * float(np.mean(ds)) / scale))


class ScheduleChecker:
    """Memoized feasibility predicates over one trajectory.

    Shared by the relocation planner, the per-step baseline, and the
    schedule validity definition itself, so all three agree exactly.
    """

    def __init__(self, task, trajectory):
        self.task = task
        self.traj = trajectory
        self.T = len(trajectory) - 1
        self._step: dict = {}
        self._presence: dict = {}
        self._tmax: dict = {}
        self._hold: dict = {}
        self._path: dict = {}

    def _motion(self, t: int):
        step = self.traj[t]
        if t == self.T:
            return step.x, step.contacts, CsMode.all_maintain(len(step.contacts)), None
        v = None
        if self.task.mechanics.model == "quasidynamic":
            v = pose_log(step.x, self.traj[t + 1].x) / self.task.mechanics.timestep
        return step.x, step.contacts, step.mode, v

    def step_ok(self, t: int, assignment) -> bool:
        """Kinematics, collision, and the step's force condition together."""
        key = (t, assignment)
        if key not in self._step:
            x, contacts, mode, v = self._motion(t)
            self._step[key] = contact_set_ok(self.task, x, contacts, mode, v,
                                             assignment)
        return self._step[key]

    def presence_ok(self, t: int, assignment) -> bool:
        """Fingers can touch their points at step t: reach and collision only.

        Weaker than step_ok — a set handing the object over at step t must
        still be placeable there, but the incoming set drives that step's
        motion, so no force condition applies to the outgoing one.
        """
        key = (t, assignment)
        if key not in self._presence:
            self._presence[key] = assignment_ok(self.task, self.traj[t].x,
                                                assignment)
        return self._presence[key]

    def t_max(self, t: int, assignment) -> int:
        """Largest step the assignment can carry the object to, from t.

        The set must drive every intermediate step's motion and still be
        placeable at the arrival step; whoever holds the object after a
        relocation owns the arrival step's force condition.
        """
        key = (t, assignment)
        if key not in self._tmax:
            tm = t
            s = t + 1
            while s <= self.T and self.presence_ok(s, assignment):
                tm = s
                if not self.step_ok(s, assignment):
                    break
                s += 1
            self._tmax[key] = tm
        return self._tmax[key]

    def hold_without(self, t: int, remaining) -> bool:
        """Static hold at step t by the fingers that are not relocating."""
        key = (t, remaining)
        if key not in self._hold:
            step = self.traj[t]
            cfg = self.task.mechanics
            if cfg.model == "force_closure":
                ok = static_hold_ok(self.task, step.x, step.contacts, remaining)
            else:
                mode = CsMode.all_maintain(len(step.contacts))
                blocks = model_blocks(self.task, step.x, step.contacts, mode,
                                      remaining)
                ok = relocation_force_check(
                    blocks, gravity_wrench(self.task.obj.mass, cfg.gravity), cfg)
            self._hold[key] = ok
        return self._hold[key]

    def _world_pair(self, t: int, sp_index: int):
        sp = self.task.obj.surface_points[sp_index]
        x = self.traj[t].x
        return transform_point(x, sp.pos()), x.rotation() @ sp.nrm()

    def finger_path_ok(self, t: int, finger: int, old_idx, new_idx) -> bool:
        """Collision-free fingertip travel at step t; adds and detaches only
        need the approach along the contact normal to be clear."""
        key = (t, finger, old_idx, new_idx)
        if key in self._path:
            return self._path[key]
        frm = self._world_pair(t, old_idx) if old_idx is not None else None
        to = self._world_pair(t, new_idx) if new_idx is not None else None
        frm = frm if frm is not None else to
        to = to if to is not None else frm
        ok = True if frm is None else self.task.robot.relocation_path_exists(
            finger, frm, to, self.task.env, self.task.obj, self.traj[t].x)
        self._path[key] = ok
        return ok

    def relocation_ok(self, t: int, old, new) -> bool:
        """Fingers change from old to new while the object rests at step t."""
        old_map, new_map = dict(old), dict(new)
        changed = {f for f in set(old_map) | set(new_map)
                   if old_map.get(f) != new_map.get(f)}
        if not changed:
            return True
        remaining = tuple(p for p in old if p[0] not in changed)
        if not self.hold_without(t, remaining):
            return False
        return all(self.finger_path_ok(t, f, old_map.get(f), new_map.get(f))
                   for f in changed)

    def schedule_valid(self, assignments) -> bool:
        """The one acceptance predicate: every step feasible with its set,
        the outgoing set still placeable at each handover step, a static hold
        by the fingers that stay put, and reachable fingertip travel."""
        if len(assignments) != self.T + 1:
            return False
        if not self.step_ok(0, assignments[0]):
            return False
        for t in range(1, self.T + 1):
            if not self.step_ok(t, assignments[t]):
                return False
            prev = assignments[t - 1]
            if prev != assignments[t]:
                if not self.presence_ok(t, prev):
                    return False
                if not self.relocation_ok(t, prev, assignments[t]):
                    return False
        return True


# ---------------------------------------------------------------------------
# planners


class _TreePlanner:
    """Shared descend-to-terminal search loop over (timestep, fingers) states."""

    def __init__(self, task, trajectory, rng, params=None, model=None):
        self.task = task
        self.traj = trajectory
        self.rng = rng
        self.params = params or ContactPlanParams()
        self.model = model
        self.checker = ScheduleChecker(task, trajectory)
        self.T = self.checker.T
        self.tree = Tree(SearchParams(eta=self.params.eta), root_key=(-1, ()))
        self.tree.node(self.tree.root).data.update(t=-1, active=(), raw={})
        self.best_reward = 0.0
        self.best_schedule = None
        self.best_controls = None
        self.iterations = 0

    def state(self, nid: int):
        d = self.tree.node(nid).data
        return d["t"], d["active"]

    def run_iteration(self) -> float:
        """One descent: sample actions on the way down, evaluate at t = T."""
        nid = self.tree.root
        path = [nid]
        while True:
            node = self.tree.node(nid)
            if node.data["t"] == self.T:
                reward = self._terminal_reward(nid, path)
                break
            self._expand(nid)
            if not node.edges:
                reward = 0.0  # dead end: nothing feasible below this state
                break
            edge = self.tree.select_action(nid)
            if edge.child is None:
                t_child, active_child = self._child_state(node, edge.action)
                cid = self.tree.new_node(key=(t_child, active_child),
                                         terminal=t_child == self.T)
                self.tree.node(cid).data.update(t=t_child, active=active_child,
                                                raw={})
                edge.child = cid
            nid = edge.child
            path.append(nid)
        self.tree.backpropagate(path, reward)
        self.iterations += 1
        return reward

    def _terminal_reward(self, nid: int, path) -> float:
        node = self.tree.node(nid)
        if "reward" not in node.data:
            schedule = self.schedule_for(path)
            reward, controls = evaluate_path(self.task, self.traj, schedule,
                                             self.model)
            node.data["reward"] = reward
            if reward > self.best_reward:
                self.best_reward = reward
                self.best_schedule = schedule
                self.best_controls = controls
        return node.data["reward"]

    def schedule_for(self, path) -> ContactSchedule:
        """Per-step assignments from the states on a root path."""
        states = [self.state(nid) for nid in path]
        assignments = []
        si = 0
        for t in range(self.T + 1):
            while si + 1 < len(states) and states[si + 1][0] <= t:
                si += 1
            assignments.append(states[si][1])
        return ContactSchedule(assignments=assignments,
                               relocations=count_relocations(assignments))

    def _merge(self, nid: int, action, weight: float) -> None:
        node = self.tree.node(nid)
        node.data["raw"][action] = weight
        self.tree.add_edge(nid, action, 0.0)

    def _renormalize(self, nid: int) -> None:
        node = self.tree.node(nid)
        raw = node.data["raw"]
        total = sum(raw.values())
        for edge in node.edges:
            edge.prior = raw[edge.action] / total

    def _sample_point(self, finger: int, t: int, taken):
        idx = self.task.robot.sample_contact(finger, self.task.obj.surface_points,
                                             self.traj[t].x, self.task.env,
                                             self.task.obj, self.rng, max_tries=10)
        if idx is None or idx in taken:
            return None
        return idx

    def _sample_assignment(self, t: int, max_fingers=None):
        """Fresh full assignment at step t with a random finger count."""
        n = self.task.robot.n_fingers
        hi = n if max_fingers is None else max_fingers
        count = int(self.rng.integers(0, hi + 1))
        taken, pairs = set(), []
        for f in self.rng.permutation(n)[:count]:
            idx = self._sample_point(int(f), t, taken)
            if idx is None:
                return None
            taken.add(idx)
            pairs.append((int(f), idx))
        return tuple(sorted(pairs))


class ContactPlanner(_TreePlanner):
    """Bandit search over finger relocation sequences."""

    def _child_state(self, node, action: RelocationAction):
        return action.t_c, apply_relocation(node.data["active"], action)

    def action_feasible(self, t: int, active, action: RelocationAction) -> bool:
        """Rejection predicate: the new set works at t_c and, past the
        initial placement, the handover itself is feasible."""
        new = apply_relocation(active, action)
        if t >= 0 and action.moves and new == active:
            return False  # no-op disguised as a relocation
        if not self.checker.step_ok(action.t_c, new):
            return False
        if t < 0:
            return True  # initial placement: the object starts here already
        return self.checker.relocation_ok(action.t_c, active, new)

    def _propose_initial(self):
        pairs = self._sample_assignment(0)
        if pairs is None:
            return None
        return RelocationAction(t_c=0, moves=pairs)

    def _propose(self, t: int, active, t_max: int):
        t_c = int(self.rng.integers(t + 1, t_max + 1))
        active_map = dict(active)
        pool = sorted(active_map) + [f for f in range(self.task.robot.n_fingers)
                                     if f not in active_map]
        if not pool:
            return None
        count = 2 if len(pool) > 1 and self.rng.random() < self.params.pair_prob else 1
        chosen = [int(f) for f in self.rng.permutation(pool)[:count]]
        taken = {i for f, i in active if f not in chosen}
        moves = []
        for f in chosen:
            if f in active_map and self.rng.random() < self.params.detach_prob:
                moves.append((f, None))
                continue
            idx = self._sample_point(f, t_c, taken)
            if idx is None:
                return None
            taken.add(idx)
            moves.append((f, idx))
        return RelocationAction(t_c=t_c, moves=tuple(sorted(moves)))

    def _weight(self, t: int, action: RelocationAction, t_max: int) -> float:
        w = 1.0 if t < 0 else relocation_time_weight(action.t_c, t_max)
        refs = self.task.fingertip_goals
        if refs:
            pts = [(f, transform_point(self.traj[action.t_c].x,
                                       self.task.obj.surface_points[i].pos()))
                   for f, i in action.moves if i is not None]
            w *= auxiliary_goal_weight(pts, refs, self.task.scale())
        return w

    def _expand(self, nid: int) -> None:
        node = self.tree.node(nid)
        t, active = node.data["t"], node.data["active"]
        raw = node.data["raw"]
        added = 0
        t_max = self.checker.t_max(t, active) if t >= 0 else 0
        if t >= 0:
            if t_max == self.T:
                ride = RelocationAction(t_c=self.T, moves=())
                if ride not in raw and self.action_feasible(t, active, ride):
                    self._merge(nid, ride, self._weight(t, ride, t_max))
                    added += 1
            if t_max == t:
                # stuck contacts: no timestep left to relocate at
                if added:
                    self._renormalize(nid)
                return
        for _ in range(self.params.k_actions):
            for _ in range(self.params.max_rejects):
                action = (self._propose_initial() if t < 0
                          else self._propose(t, active, t_max))
                if action is None or action in raw:
                    continue
                if not self.action_feasible(t, active, action):
                    continue
                self._merge(nid, action, self._weight(t, action, t_max))
                added += 1
                break
        if added:
            self._renormalize(nid)


class PerStepPlanner(_TreePlanner):
    """Benchmark baseline: every action commits the full set for step t + 1.

    The tree is as deep as the trajectory regardless of how rarely contacts
    change; validity matches the relocation planner exactly.
    """

    def _child_state(self, node, action):
        return node.data["t"] + 1, action

    def action_feasible(self, t: int, active, new) -> bool:
        if not self.checker.step_ok(t + 1, new):
            return False
        if t < 0 or new == active:
            return True
        return (self.checker.presence_ok(t + 1, active)
                and self.checker.relocation_ok(t + 1, active, new))

    def _expand(self, nid: int) -> None:
        node = self.tree.node(nid)
        t, active = node.data["t"], node.data["active"]
        raw = node.data["raw"]
        added = 0
        for _ in range(self.params.k_actions):
            for _ in range(self.params.max_rejects):
                new = self._sample_assignment(t + 1)
                if new is None or new in raw:
                    continue
                if not self.action_feasible(t, active, new):
                    continue
                self._merge(nid, new, 1.0)
                added += 1
                break
        if added:
            self._renormalize(nid)


def plan_contacts(task, trajectory, iterations: int, rng, params=None,
                  model=None, stop_on_success: bool = False) -> ContactPlanner:
    """Run the relocation search; the planner carries its best schedule."""
    planner = ContactPlanner(task, trajectory, rng, params, model)
    for _ in range(iterations):
        planner.run_iteration()
        if stop_on_success and planner.best_reward > 0:
            break
    return planner


def per_step_baseline_plan(task, trajectory, iterations: int, rng, params=None,
                           model=None, stop_on_success: bool = False) -> PerStepPlanner:
    """Benchmark baseline run with the same budget semantics."""
    planner = PerStepPlanner(task, trajectory, rng, params, model)
    for _ in range(iterations):
        planner.run_iteration()
        if stop_on_success and planner.best_reward > 0:
            break
    return planner


def mean_fingertip_gap(task, trajectory, assignment, references=None) -> float:
    """Mean distance of the given fingertips to their reference targets."""
    refs = task.fingertip_goals if references is None else references
    x = trajectory[len(trajectory) - 1].x
    ds = [np.linalg.norm(transform_point(x, task.obj.surface_points[i].pos())
                         - np.asarray(refs[f], dtype=float))
          for f, i in assignment
          if refs is not None and f < len(refs) and refs[f] is not None]
    return float(np.mean(ds)) if ds else math.nan
