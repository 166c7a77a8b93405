"""Pose-level search: a bandit tree over interleaved object poses and
contact modes.

A pose node's actions each pick a contact mode that is feasible there; the
mode node below either commits to an already explored next pose or selects
explore-new, which asks the shared RRT for a fresh motion under that mode.
Solution paths coming back from the RRT are grafted into the tree as
alternating mode and pose nodes, and each terminal pose is priced once by
the contact-level search over the object trajectory leading to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .level2 import ContactPlanParams, plan_contacts
from .mcts import SearchParams, Tree
from .modes import CsMode
from .rrt import RrtTree, feasible_modes, rrt_explore, sample_random_object_pose
from .se3 import Pose, pose_distance
from .task import GoalRegion, ManipulationTask
from .trajectory import ContactSchedule, ObjectTrajectory, trajectory_from_path
from .world import detect_contacts

POSE = "pose"
MODE = "mode"
SOLVED_VALUE_ESTIMATE = 0.1
_SAME_POSE_TOL = 1e-9


@dataclass(frozen=True)
class SelectMode:
    mode: CsMode


@dataclass(frozen=True)
class GoChild:
    node_id: int


@dataclass(frozen=True)
class ExploreNew:
    pass


EXPLORE_NEW = ExploreNew()


@dataclass
class L1State:
    x: Pose
    nodetype: str                   # POSE or MODE
    mode: CsMode | None = None      # present iff nodetype == MODE
    env_contacts: list = field(default_factory=list)


def is_terminal(state: L1State, goal: GoalRegion) -> bool:
    """Goal membership of the state's pose; the region boundary counts."""
    return goal.contains(state.x)


def level1_value_estimate(node) -> float:
    """0.1 once any contact-level search has succeeded through this node."""
    return SOLVED_VALUE_ESTIMATE if node.data.get("l2_success") else 0.0


def mode_priors(modes, previous_mode):
    """Action probabilities favoring the mode of the previous motion.

    The previous mode keeps probability 0.5 and the others split the rest
    evenly; without a usable previous mode the distribution is uniform.
    """
    m = len(modes)
    if m == 0:
        return []
    if m == 1:
        return [1.0]
    if previous_mode is not None and previous_mode in modes:
        rest = 0.5 / (m - 1)
        return [0.5 if mode == previous_mode else rest for mode in modes]
    return [1.0 / m] * m


def feasible_mode_actions(task, x: Pose, contacts, previous_mode, rng,
                          probe_targets: int = 3):
    """Contact modes the object can actually move under at x, with priors.

    A mode qualifies when it admits a constrained velocity toward a target
    together with a finger placement able to drive it. The goal center is
    probed first; if that direction is fully blocked, a few random targets
    stand in so detour modes are not lost.
    """
    found: list[CsMode] = []
    target = task.goal.center
    for _ in range(max(0, probe_targets) + 1):
        for mode, _witness in feasible_modes(task, x, contacts, target, rng):
            if mode not in found:
                found.append(mode)
        if found:
            break
        target = sample_random_object_pose(task.goal.center, task.rrt, rng)
    return list(zip(found, mode_priors(found, previous_mode)))


def pose_child_actions(children):
    """Uniform distribution over explored next poses plus explore-new."""
    p = 1.0 / (len(children) + 1)
    return [(GoChild(c), p) for c in children] + [(EXPLORE_NEW, p)]


@dataclass
class PoseSearchParams:
    level2_iterations: int = 80
    level2_params: ContactPlanParams | None = None
    level2_stop_on_success: bool = False
    rrt_iters: int | None = None    # per rollout; None uses task.rrt.max_iters
    probe_targets: int = 3

    def __post_init__(self):
        if self.level2_iterations < 1:
            raise ValueError("contact search needs at least one iteration")


@dataclass
class PlanCandidate:
    """Best complete plan seen so far: object motion plus finger schedule."""

    reward: float
    trajectory: ObjectTrajectory
    schedule: ContactSchedule
    controls: list
    terminal_node: int


class PoseSearch:
    """One pose-level planning run; owns the bandit tree and the shared RRT.

    The RRT is built once and keeps growing across rollouts, so failed
    explorations still pay into later ones. Iterations all start from the
    chosen node, descend by the selection rule, and end at a terminal pose,
    a dead end, or an explore-new rollout.
    """

    def __init__(self, task: ManipulationTask, rng, params=None, model=None):
        self.task = task
        self.rng = rng
        self.params = params or PoseSearchParams()
        self.model = model
        self.rrt = RrtTree(task.rrt.weights)
        self.tree = Tree(SearchParams(eta=task.eta1))
        self.explore_new_selected = 0
        self.rrt_calls = 0
        self.level2_runs = 0
        self.iterations = 0
        self.best: PlanCandidate | None = None
        contacts = detect_contacts(task.obj, task.x_start, task.env)
        self._init_pose_node(self.tree.root, task.x_start, contacts,
                             parent=None, prev_mode=None)

    def state(self, nid: int) -> L1State:
        return self.tree.node(nid).data["state"]

    def run_iteration(self, startnode: int | None = None) -> float:
        nid = self.tree.root if startnode is None else startnode
        path = self._root_chain(nid)
        reward = 0.0
        while True:
            node = self.tree.node(nid)
            if node.terminal:
                reward = self._terminal_reward(nid, path)
                break
            if node.data["state"].nodetype == POSE:
                self._ensure_mode_edges(nid)
                if not node.edges:
                    break  # no feasible mode here: dead end, zero reward
                nid = self.tree.select_action(nid).child
            else:
                edge = self.tree.select_action(nid)
                if isinstance(edge.action, ExploreNew):
                    reward = self._expand(nid, path)
                    break
                nid = edge.child
            path.append(nid)
        self.tree.backpropagate(path, reward)
        self.iterations += 1
        return reward

    # -- node construction ------------------------------------------------

    def _init_pose_node(self, nid: int, x: Pose, contacts, parent, prev_mode):
        state = L1State(x=x, nodetype=POSE, env_contacts=list(contacts))
        node = self.tree.node(nid)
        node.key = POSE
        node.terminal = is_terminal(state, self.task.goal)
        node.data.update(state=state, parent=parent, prev_mode=prev_mode,
                         modes_ready=False)

    def _new_mode_node(self, pose_nid: int, mode: CsMode) -> int:
        st = self.state(pose_nid)
        state = L1State(x=st.x, nodetype=MODE, mode=mode,
                        env_contacts=list(st.env_contacts))
        nid = self.tree.new_node(key=MODE,
                                 data={"state": state, "parent": pose_nid})
        self.tree.add_edge(nid, EXPLORE_NEW, 1.0)
        return nid

    def _ensure_mode_edges(self, nid: int) -> None:
        """First visit of a pose node: sample its feasible modes, keeping any
        mode edges a rollout grafted in earlier, and price them all."""
        node = self.tree.node(nid)
        if node.data["modes_ready"]:
            return
        st = node.data["state"]
        known = {edge.action.mode for edge in node.edges}
        actions = feasible_mode_actions(self.task, st.x, st.env_contacts,
                                        node.data["prev_mode"], self.rng,
                                        self.params.probe_targets)
        for mode, _prior in actions:
            if mode not in known:
                self.tree.add_edge(nid, SelectMode(mode), 0.0,
                                   child=self._new_mode_node(nid, mode))
        node.data["modes_ready"] = True
        self._reprice_modes(node)

    def _reprice_modes(self, node) -> None:
        modes = [edge.action.mode for edge in node.edges]
        for edge, prior in zip(node.edges, mode_priors(modes, node.data["prev_mode"])):
            edge.prior = prior

    def _mode_child(self, pose_nid: int, mode: CsMode) -> int:
        node = self.tree.node(pose_nid)
        for edge in node.edges:
            if edge.action.mode == mode:
                return edge.child
        child = self._new_mode_node(pose_nid, mode)
        self.tree.add_edge(pose_nid, SelectMode(mode), 1.0, child=child)
        self._reprice_modes(node)
        return child

    def _add_pose_child(self, mode_nid: int, pose_nid: int) -> None:
        self.tree.add_edge(mode_nid, GoChild(pose_nid), 0.0, child=pose_nid)
        node = self.tree.node(mode_nid)
        children = [e.child for e in node.edges if not isinstance(e.action, ExploreNew)]
        priors = dict(pose_child_actions(children))
        for edge in node.edges:
            edge.prior = priors[edge.action]

    def _find_pose_child(self, mode_nid: int, x: Pose):
        for edge in self.tree.node(mode_nid).edges:
            if isinstance(edge.action, GoChild) and pose_distance(
                    self.state(edge.child).x, x,
                    self.task.rrt.weights) <= _SAME_POSE_TOL:
                return edge.child
        return None

    # -- expansion ----------------------------------------------------------

    def _expand(self, mode_nid: int, path: list) -> float:
        """Explore-new on a mode node: one RRT rollout from its pose."""
        self.explore_new_selected += 1
        st = self.state(mode_nid)
        self.rrt_calls += 1
        triples = rrt_explore(self.task, self.rrt, st.x, st.mode, self.rng,
                              max_iters=self.params.rrt_iters)
        if triples is None or len(triples) < 2:
            return 0.0
        terminal = self._attach(mode_nid, triples, path)
        if terminal is None:
            return 0.0
        return self._terminal_reward(terminal, path)

    def _attach(self, mode_nid: int, triples, path: list):
        """Graft a solution path below the expansion node, reusing children
        that already cover a hop. Returns the terminal pose node id."""
        cur_mode = mode_nid
        for i in range(1, len(triples)):
            x, contacts, _mode_in = triples[i]
            child = self._find_pose_child(cur_mode, x)
            if child is None:
                child = self.tree.new_node(key=POSE)
                self._init_pose_node(child, x, contacts, parent=cur_mode,
                                     prev_mode=self.state(cur_mode).mode)
                self._add_pose_child(cur_mode, child)
            path.append(child)
            if self.tree.node(child).terminal:
                return child
            if i + 1 < len(triples):
                cur_mode = self._mode_child(child, triples[i + 1][2])
                path.append(cur_mode)
        return None

    # -- evaluation ----------------------------------------------------------

    def _terminal_reward(self, nid: int, path: list) -> float:
        """Contact-level price of the trajectory ending at nid, evaluated on
        the first visit and reused afterwards."""
        node = self.tree.node(nid)
        if "l2_reward" not in node.data:
            trajectory = trajectory_from_path(self._pose_triples(path))
            planner = plan_contacts(self.task, trajectory,
                                    self.params.level2_iterations, self.rng,
                                    params=self.params.level2_params,
                                    model=self.model,
                                    stop_on_success=self.params.level2_stop_on_success)
            self.level2_runs += 1
            node.data["l2_reward"] = planner.best_reward
            if planner.best_reward > 0:
                self._mark_solved(path)
                if self.best is None or planner.best_reward > self.best.reward:
                    self.best = PlanCandidate(reward=planner.best_reward,
                                              trajectory=trajectory,
                                              schedule=planner.best_schedule,
                                              controls=planner.best_controls,
                                              terminal_node=nid)
        return node.data["l2_reward"]

    def _mark_solved(self, path: list) -> None:
        for nid in path:
            node = self.tree.node(nid)
            node.data["l2_success"] = True
            node.v_est = level1_value_estimate(node)

    def _pose_triples(self, path: list):
        triples, incoming = [], None
        for nid in path:
            st = self.state(nid)
            if st.nodetype == MODE:
                incoming = st.mode
            else:
                triples.append((st.x, st.env_contacts, incoming))
                incoming = None
        return triples

    def _root_chain(self, nid: int) -> list:
        chain = []
        cur = nid
        while cur is not None:
            chain.append(cur)
            cur = self.tree.node(cur).data["parent"]
        chain.reverse()
        return chain


def grow_tree_level1(search: PoseSearch, startnode: int | None = None,
                     budget: int = 1) -> Tree:
    """Run up to budget search iterations from startnode (default root).

    Exhausting the budget is not an error; the grown tree is returned and
    the search object keeps its anytime best plan.
    """
    for _ in range(max(0, budget)):
        search.run_iteration(startnode)
    return search.tree
