"""Goal-biased RRT over object poses whose extensions follow contact modes.

The tree persists for the lifetime of a planning run: every rollout adds to
it, and queries are rooted at the pose-level expansion node. An extension
integrates the constrained twist in substeps, projecting the pose back onto
the maintained contacts after each one, and stops early when a contact not
present at the start shows up.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checks import exists_finger_witness, motion_force_ok
from .errors import PenetrationTooDeep, ProjectionDiverged, TooManyContacts
from .mechanics import velocity_under_mode
from .modes import CsMode, ModeConstraints, contact_rows, contact_signature, enumerate_cs_modes
from .se3 import Pose, cross3, integrate, pose_distance, random_quaternion, transform_point
from .world import DEFAULT_CONTACT_TOL, body_signed_distance, detect_contacts

_MATCH_TOL = 1e-3
_DUPLICATE_TOL = 1e-9
_ZERO_TWIST = 1e-8


@dataclass
class RrtNode:
    x: Pose
    contacts: list
    mode_from_parent: CsMode | None = None
    parent: int | None = None
    robot_contacts: tuple | None = None  # option-1 tracked finger set


class RrtTree:
    def __init__(self, weights):
        self.weights = weights
        self.nodes: list[RrtNode] = []
        self.goal_ids: list[int] = []
        self.children: dict = {}
        # packed copies of every node pose so nearest() stays one numpy pass
        self._pos = np.empty((64, 3))
        self._quat = np.empty((64, 4))

    def __len__(self) -> int:
        return len(self.nodes)

    def add(self, x: Pose, contacts, mode=None, parent=None,
            robot_contacts=None) -> int:
        n = len(self.nodes)
        if n == self._pos.shape[0]:
            self._pos = np.vstack([self._pos, np.empty_like(self._pos)])
            self._quat = np.vstack([self._quat, np.empty_like(self._quat)])
        self._pos[n] = x.position
        self._quat[n] = x.quaternion
        self.nodes.append(RrtNode(x, list(contacts), mode, parent, robot_contacts))
        if parent is not None:
            self.children.setdefault(parent, []).append(n)
        return n

    def nearest(self, x: Pose) -> int | None:
        n = len(self.nodes)
        if n == 0:
            return None
        dt = np.linalg.norm(self._pos[:n] - x.position, axis=1)
        dot = np.minimum(np.abs(self._quat[:n] @ np.asarray(x.quaternion)), 1.0)
        d = self.weights.translation * dt + self.weights.rotation * 2.0 * np.arccos(dot)
        return int(np.argmin(d))  # first minimum: lowest id wins ties

    def ensure(self, x: Pose, contacts) -> int:
        nid = self.nearest(x)
        if nid is not None and pose_distance(self.nodes[nid].x, x, self.weights) <= _DUPLICATE_TOL:
            return nid
        return self.add(x, contacts)

    def path_ids(self, nid: int) -> list[int]:
        ids = []
        cur = nid
        while cur is not None:
            ids.append(cur)
            cur = self.nodes[cur].parent
        ids.reverse()
        return ids


def sample_random_object_pose(x_goal: Pose, params, rng) -> Pose:
    if rng.random() < params.p_sample:
        return x_goal
    lo, hi = (np.asarray(b, dtype=float) for b in params.position_bounds)
    position = lo + rng.random(3) * (hi - lo)
    return Pose(position, random_quaternion(rng))


def _match_reference(contact, refs, x_ref: Pose, x_cur: Pose):
    """Index of the reference contact this one continues, else None.

    Matches by body plus either a stable world position (environment corner
    contacts) or a stable object-frame anchor (face contacts that slide).
    """
    anchor = x_cur.rotation().T @ (contact.position - x_cur.position)
    for i, ref in enumerate(refs):
        if ref.body_id != contact.body_id:
            continue
        if np.linalg.norm(ref.position - contact.position) <= _MATCH_TOL:
            return i
        ref_anchor = x_ref.rotation().T @ (ref.position - x_ref.position)
        if np.linalg.norm(ref_anchor - anchor) <= _MATCH_TOL:
            return i
    return None


def project_to_contacts_maintained(task, x: Pose, maintained, tol: float,
                                   max_iter: int = 20) -> Pose:
    """Gauss-Newton drive of the maintained contacts' gaps to zero.

    Each maintained contact is tracked by its object-frame anchor; the
    residual is the signed distance of the anchor to its environment body.
    """
    if not maintained:
        return x
    bodies = [task.env.bodies[c.body_id] for c in maintained]
    anchors = [np.asarray(c.object_point, dtype=float) for c in maintained]
    for _ in range(max_iter):
        gaps = np.empty(len(maintained))
        rows = np.empty((len(maintained), 6))
        for i, (body, anchor) in enumerate(zip(bodies, anchors)):
            p = transform_point(x, anchor)
            d, n = body_signed_distance(body, p)
            gaps[i] = d
            rows[i, :3] = n
            rows[i, 3:] = cross3(p - x.position, n)
        if np.max(np.abs(gaps)) <= tol:
            return x
        step, *_ = np.linalg.lstsq(rows, -gaps, rcond=None)
        x = integrate(x, step, 1.0)
    raise ProjectionDiverged(
        f"contact projection stalled above tol {tol:g}")


def _reduced_constraints(mode: CsMode, refs, matched, x: Pose):
    """Constraint rows for the reference signs evaluated at current contacts.

    matched maps reference index -> current ContactPoint; separating
    references that already left contribute nothing.
    """
    eq_contacts, ineq_contacts = [], []
    for i, sign in enumerate(mode.signs):
        cur = matched.get(i)
        if cur is None:
            continue
        (eq_contacts if sign == 0 else ineq_contacts).append(cur)
    eq = contact_rows(eq_contacts, x) if eq_contacts else np.zeros((0, 6))
    ineq = contact_rows(ineq_contacts, x) if ineq_contacts else np.zeros((0, 6))
    return ModeConstraints(eq=eq, ineq=ineq), eq_contacts


def _classify(task, x: Pose, contacts, refs, x_ref: Pose):
    """Split current contacts into (matched map, new contacts)."""
    matched, fresh = {}, []
    for c in contacts:
        i = _match_reference(c, refs, x_ref, x)
        if i is None:
            fresh.append(c)
        else:
            matched[i] = c
    return matched, fresh


def extend_with_contact_mode(task, x_near: Pose, contacts_near, mode: CsMode,
                             x_rand: Pose, witness, rng):
    """Advance from x_near toward x_rand under one contact mode.

    Returns (pose, contacts, witness, hit_new_contact) for the furthest
    valid pose, or None if no progress was possible. The extension stops at
    the first contact that was not present at x_near, at a vanishing
    constrained velocity, or after covering the extension length.
    """
    params = task.rrt
    h_nom = params.substep()
    tol = params.projection_tol(task.scale())
    x_now, contacts_now = x_near, list(contacts_near)
    advanced, moved = 0.0, False
    separated: set = set()
    max_substeps = max(4 * int(round(params.extend_length / h_nom)) + 4, 8)

    for _ in range(max_substeps):
        if advanced >= params.extend_length - 1e-12:
            break
        matched, fresh = _classify(task, x_now, contacts_now, contacts_near, x_near)
        if fresh:
            return (x_now, contacts_now, witness, True) if moved else None
        missing_maintained = [i for i, s in enumerate(mode.signs)
                              if s == 0 and i not in matched]
        if missing_maintained:
            break
        if any(i in separated for i in matched):
            break  # a separating contact came back: mode violated
        separated |= {i for i, s in enumerate(mode.signs)
                      if s != 0 and i not in matched}
        constraints, eq_contacts = _reduced_constraints(mode, contacts_near, matched, x_now)
        v = velocity_under_mode(x_now, x_rand, constraints)
        speed = float(np.linalg.norm(v))
        if speed < _ZERO_TWIST:
            break
        if witness is None or not motion_force_ok(task, x_now, contacts_now,
                                                  _current_mode(mode, matched, contacts_now),
                                                  v, witness):
            witness = exists_finger_witness(task, x_now, contacts_now,
                                            _current_mode(mode, matched, contacts_now),
                                            v, rng)
            if witness is None:
                break
        h = min(h_nom, (params.extend_length - advanced) / speed)
        step = _substep(task, x_now, v, h, eq_contacts, tol)
        if step is None:
            break
        x_now, contacts_now, h_used = step
        advanced += speed * h_used
        moved = True
    if not moved:
        return None
    return x_now, contacts_now, witness, False


def _current_mode(mode: CsMode, matched, contacts_now) -> CsMode:
    """Mode signs re-indexed onto the currently detected contact list."""
    by_key = {c.key(): i for i, c in enumerate(contacts_now)}
    signs = [0] * len(contacts_now)
    for ref_i, cur in matched.items():
        signs[by_key[cur.key()]] = mode.signs[ref_i]
    return CsMode(tuple(signs))


def _substep(task, x: Pose, v, h: float, maintained, tol: float):
    """One integrate-project-detect step with impact bisection.

    Halves the step while a newly violated (deep) contact appears, so the
    returned pose touches any new contact within the detection shell.
    """
    for _ in range(9):
        x_try = integrate(x, v, h)
        try:
            x_try = project_to_contacts_maintained(task, x_try, maintained, tol)
        except ProjectionDiverged:
            return None
        try:
            contacts_try = detect_contacts(task.obj, x_try, task.env)
        except PenetrationTooDeep:
            h *= 0.5
            continue
        deepest = min((c.signed_distance for c in contacts_try), default=0.0)
        if deepest < -DEFAULT_CONTACT_TOL:
            h *= 0.5
            continue
        return x_try, contacts_try, h
    return None


def feasible_modes(task, x: Pose, contacts, x_rand: Pose, rng,
                   stored: tuple | None = None):
    """Enumerated modes at x that admit motion toward x_rand with a feasible
    contact-force witness. Returns [(mode, witness assignment)]."""
    try:
        modes = _enumerate_cached(task, x, contacts)
    except TooManyContacts:
        return []
    out = []
    for mode in modes:
        constraints = _constraints_for(mode, contacts, x)
        v = velocity_under_mode(x, x_rand, constraints)
        if np.linalg.norm(v) < _ZERO_TWIST:
            continue
        witness = _mode_witness(task, x, contacts, mode, v, rng, stored)
        if witness is not None:
            out.append((mode, witness))
    return out


def _mode_witness(task, x, contacts, mode, v, rng, stored):
    if task.feasibility_option == 1 and stored is not None:
        if motion_force_ok(task, x, contacts, mode, v, stored):
            return stored
    return exists_finger_witness(task, x, contacts, mode, v, rng)


def _constraints_for(mode: CsMode, contacts, x: Pose):
    from .modes import mode_constraints

    return mode_constraints(mode, contacts, x)


def _enumerate_cached(task, x: Pose, contacts):
    key = contact_signature(contacts, x)
    cache = task.caches.setdefault("modes", {})
    if key not in cache:
        cache[key] = enumerate_cs_modes(contacts, x)
    return cache[key]


def rrt_explore(task, tree: RrtTree, x_current: Pose, m_selected: CsMode, rng,
                max_iters: int | None = None):
    """One rollout: grow the shared tree until a pose in the goal region is
    connected to x_current with m_selected as the first hop.

    Returns the path as [(pose, contacts, mode_from_parent)] or None.
    """
    params = task.rrt
    budget = max_iters if max_iters is not None else params.max_iters
    contacts_cur = detect_contacts(task.obj, x_current, task.env)
    cur_id = tree.ensure(x_current, contacts_cur)
    if task.goal.contains(x_current):
        return [(x_current, contacts_cur, None)]
    path = _existing_solution(tree, cur_id, m_selected)
    if path is not None:
        return path

    for it in range(budget):
        if it == 0:
            x_rand, near = task.goal.center, cur_id
        else:
            x_rand = sample_random_object_pose(task.goal.center, params, rng)
            near = tree.nearest(x_rand)
        node = tree.nodes[near]
        if near == cur_id:
            witness = _mode_witness_at(task, node, m_selected, x_rand, rng)
            if witness is None:
                continue
            mode_list = [(m_selected, witness)]
        else:
            mode_list = feasible_modes(task, node.x, node.contacts, x_rand, rng,
                                       stored=node.robot_contacts)
        for mode, witness in mode_list:
            ext = extend_with_contact_mode(task, node.x, node.contacts, mode,
                                           x_rand, witness, rng)
            if ext is None:
                continue
            x_new, contacts_new, witness_new, _ = ext
            if _duplicate_extension(tree, near, mode, x_new):
                continue
            nid = tree.add(x_new, contacts_new, mode, near,
                           robot_contacts=witness_new if task.feasibility_option == 1 else None)
            if task.goal.contains(x_new):
                tree.goal_ids.append(nid)
                path = _path_through(tree, nid, cur_id, m_selected)
                if path is not None:
                    return path
    return None


def _duplicate_extension(tree: RrtTree, parent: int, mode: CsMode, x_new: Pose) -> bool:
    """True when this parent already has an equivalent child via this mode."""
    for nid in tree.children.get(parent, ()):
        node = tree.nodes[nid]
        if node.mode_from_parent == mode \
                and pose_distance(node.x, x_new, tree.weights) <= 1e-6:
            return True
    return False


def _mode_witness_at(task, node: RrtNode, mode: CsMode, x_rand: Pose, rng):
    if len(mode) != len(node.contacts):
        return None
    constraints = _constraints_for(mode, node.contacts, node.x)
    v = velocity_under_mode(node.x, x_rand, constraints)
    if np.linalg.norm(v) < _ZERO_TWIST:
        return None
    return _mode_witness(task, node.x, node.contacts, mode, v, rng,
                         node.robot_contacts)


def _existing_solution(tree: RrtTree, cur_id: int, m_selected: CsMode):
    for gid in tree.goal_ids:
        path = _path_through(tree, gid, cur_id, m_selected)
        if path is not None:
            return path
    return None


def _path_through(tree: RrtTree, goal_id: int, cur_id: int, m_selected: CsMode):
    ids = tree.path_ids(goal_id)
    if cur_id not in ids:
        return None
    i = ids.index(cur_id)
    if i + 1 >= len(ids):
        return None
    if tree.nodes[ids[i + 1]].mode_from_parent != m_selected:
        return None
    out = []
    for j, nid in enumerate(ids[i:]):
        node = tree.nodes[nid]
        out.append((node.x, node.contacts, None if j == 0 else node.mode_from_parent))
    return out
