"""Shared Monte-Carlo tree search arena used by both planning levels.

Selection maximizes an upper-confidence score over sampled actions; values
are running means of backed-up rewards. A single blend weight switches the
exploitation term from the caller-supplied value estimate to the obtained
value the moment any strictly positive reward is found.

Note on the selection rule: the score adds a positive exploration bonus on
top of Q and rewards are maximized everywhere else in the pipeline, so the
best action is the argmax of U.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .errors import BudgetExhausted, NoActions

DEFAULT_EXPLORATION = 0.1


@dataclass
class SearchParams:
    eta: float = DEFAULT_EXPLORATION
    lam: float = 0.0  # 0 until the first positive reward, then 1

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("exploration scalar must be >= 0")


@dataclass
class ActionEdge:
    action: Any
    prior: float
    child: Optional[int] = None  # node id once expanded


@dataclass
class Node:
    key: Any = None
    v: float = 0.0
    v_est: float = 0.0
    visits: int = 0
    terminal: bool = False
    edges: list = field(default_factory=list)
    data: dict = field(default_factory=dict)


class Tree:
    """Arena-allocated tree; nodes referenced by integer id, root is id 0."""

    def __init__(self, params: SearchParams | None = None, root_key: Any = None):
        self.params = params or SearchParams()
        self.nodes: list[Node] = []
        self.root = self.new_node(key=root_key)

    def new_node(self, key: Any = None, v_est: float = 0.0,
                 terminal: bool = False, data: dict | None = None) -> int:
        self.nodes.append(Node(key=key, v_est=v_est, terminal=terminal,
                               data=data or {}))
        return len(self.nodes) - 1

    def node(self, nid: int) -> Node:
        return self.nodes[nid]

    def add_edge(self, nid: int, action: Any, prior: float,
                 child: Optional[int] = None) -> ActionEdge:
        edge = ActionEdge(action=action, prior=prior, child=child)
        self.nodes[nid].edges.append(edge)
        return edge

    def edge_visits(self, edge: ActionEdge) -> int:
        # every node has one parent edge, so N(s,a) is the child visit count
        return self.nodes[edge.child].visits if edge.child is not None else 0

    def q_value(self, edge: ActionEdge, fresh_v_est: float = 0.0) -> float:
        lam = self.params.lam
        if edge.child is None:
            return (1.0 - lam) * fresh_v_est
        child = self.nodes[edge.child]
        return lam * child.v + (1.0 - lam) * child.v_est

    def select_action(self, nid: int) -> ActionEdge:
        node = self.nodes[nid]
        if not node.edges:
            raise NoActions(f"node {nid} has no sampled actions")
        sqrt_n = math.sqrt(node.visits)
        best, best_u = None, -math.inf
        for edge in node.edges:
            u = self.q_value(edge) + self.params.eta * edge.prior * sqrt_n / (
                1 + self.edge_visits(edge))
            if u > best_u:  # strict: first maximum wins ties
                best, best_u = edge, u
        return best

    def backpropagate(self, path: list[int], reward: float) -> None:
        for nid in path:
            node = self.nodes[nid]
            node.v = (node.visits * node.v + reward) / (node.visits + 1)
            node.visits += 1
        if reward > 0:
            self.params.lam = 1.0

    def best_child(self, nid: int) -> Optional[int]:
        """Most-visited expanded child; ties broken by obtained value."""
        best, best_key = None, None
        for edge in self.nodes[nid].edges:
            if edge.child is None:
                continue
            child = self.nodes[edge.child]
            key = (child.visits, child.v)
            if best_key is None or key > best_key:
                best, best_key = edge.child, key
        return best


def search(tree: Tree,
           grow_fn: Callable[[Tree, int], None],
           best_child_fn: Callable[[Tree, int], Optional[int]] | None = None,
           max_depth: int = 10_000) -> int:
    """Descend from the root by repeated grow-then-commit steps.

    grow_fn runs one batch of tree-growth iterations below the given node;
    best_child_fn picks the child to commit to (default: visits then value).
    Returns the id of the reached terminal node. A BudgetExhausted raised by
    grow_fn is re-raised carrying the deepest committed node as best.
    """
    pick = best_child_fn or (lambda t, n: t.best_child(n))
    nid = tree.root
    for _ in range(max_depth):
        if tree.node(nid).terminal:
            return nid
        try:
            grow_fn(tree, nid)
        except BudgetExhausted as exc:
            if exc.best is None:
                exc.best = nid
            raise
        nxt = pick(tree, nid)
        if nxt is None:
            raise BudgetExhausted(f"no expanded child below node {nid}", best=nid)
        nid = nxt
    raise BudgetExhausted("descent depth limit reached", best=nid)
