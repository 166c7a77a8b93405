"""Contact force programs and constrained velocity projection.

Friction cones are linearized into k unit edges (inner approximation).
Maintained environment contacts and robot patch points enter the balance
as nonnegative combinations of their cone edges; the balance is written
about the object frame origin, declared to be the center of mass.

Feasibility decisions run through small NNLS solves rather than a general
LP: min |G lam + f|^2 over lam >= 0 answers "is the wrench reachable"
directly and is an order of magnitude faster in the planner's inner loop.
The acceptance tests compare against independently formulated LPs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls
from scipy.spatial import ConvexHull, QhullError

from .errors import SolverFailure
from .modes import CsMode, ModeConstraints
from .se3 import Pose, cross3, pose_log, tangent_basis

DEFAULT_CONE_EDGES = 4
RIDGE_EPS = 1e-4  # regularizer weight on |lam|^2 in the force solve
_EQ_WEIGHT = 1e3  # internal weight keeping the balance residual tiny
_FEAS_TOL = 1e-7


@dataclass
class MechanicsConfig:
    model: str = "quasistatic"  # quasistatic | quasidynamic | force_closure
    mu_env: float = 0.5
    mu_mnp: float = 0.8
    cone_edges: int = DEFAULT_CONE_EDGES
    timestep: float = 0.1
    gravity: tuple = (0.0, 0.0, -9.81)
    tol_force: float | None = None  # defaults to 1e-4 * |f_ext| scale

    def force_tolerance(self, f_ext) -> float:
        if self.tol_force is not None:
            return self.tol_force
        return 1e-4 * max(1.0, float(np.linalg.norm(f_ext)))


@dataclass(frozen=True)
class ContactBlock:
    """One point contact entering the force balance.

    position is relative to the balance reference point (object origin),
    normal points into the object, both in the same frame.
    """

    position: tuple
    normal: tuple
    mu: float
    owner: tuple = ("env", -1)


def linearize_cone(normal, mu: float, k: int = DEFAULT_CONE_EDGES) -> np.ndarray:
    """k unit edges of the friction cone around an into-object normal."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    if mu <= 0:
        return n.reshape(1, 3)
    t1, t2 = tangent_basis(n)
    angles = 2 * np.pi * np.arange(k) / k
    edges = n[None, :] + mu * (np.cos(angles)[:, None] * t1 + np.sin(angles)[:, None] * t2)
    return edges / np.linalg.norm(edges, axis=1)[:, None]


def grasp_matrix(blocks, k: int = DEFAULT_CONE_EDGES) -> np.ndarray:
    """Columns are unit-force wrenches of every cone edge of every block."""
    cols = []
    for blk in blocks:
        p = np.asarray(blk.position, dtype=float)
        for e in linearize_cone(blk.normal, blk.mu, k):
            cols.append(np.concatenate([e, cross3(p, e)]))
    if not cols:
        return np.zeros((6, 0))
    return np.stack(cols, axis=1)


def gravity_wrench(mass: float, gravity) -> np.ndarray:
    g = np.asarray(gravity, dtype=float)
    return np.concatenate([mass * g, np.zeros(3)])


def generalized_mass(mass: float, inertia_body: np.ndarray, x: Pose) -> np.ndarray:
    m = np.zeros((6, 6))
    m[:3, :3] = mass * np.eye(3)
    r = x.rotation()
    m[3:, 3:] = r @ inertia_body @ r.T
    return m


def env_blocks(contacts, mode: CsMode, x: Pose, mu_env: float):
    """Force blocks for the maintained contacts of a mode (world frame)."""
    if len(mode) != len(contacts):
        raise ValueError("mode length does not match contact count")
    out = []
    for i in mode.maintained():
        c = contacts[i]
        out.append(ContactBlock(tuple(c.position - x.position), tuple(c.normal),
                                mu_env, ("env", i)))
    return out


def _nnls(a, b):
    try:
        return nnls(a, b)
    except Exception as e:  # scipy raises RuntimeError on iteration overflow
        raise SolverFailure(f"nnls breakdown: {e}") from e


def wrench_feasible(g: np.ndarray, target: np.ndarray, tol: float) -> bool:
    """Can nonnegative edge intensities reproduce the target wrench within tol?"""
    if g.shape[1] == 0:
        return float(np.linalg.norm(target)) <= tol
    _, resid = _nnls(g, target)
    return resid <= tol


def _regularized_forces(g: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Minimum-norm nonnegative intensities reproducing the target wrench.

    Ridge-regularized (RIDGE_EPS) with the balance rows weighted so the
    equality residual stays negligible next to the force tolerance.
    """
    n = g.shape[1]
    if n == 0:
        return np.zeros(0)
    a = np.vstack([_EQ_WEIGHT * g, np.sqrt(RIDGE_EPS) * np.eye(n)])
    b = np.concatenate([_EQ_WEIGHT * target, np.zeros(n)])
    lam, _ = _nnls(a, b)
    return lam


def quasistatic_solve(blocks, f_ext, cfg: MechanicsConfig, return_forces: bool = True):
    """Static balance G lam + f_ext = 0, lam >= 0.

    Returns the regularized minimum-norm lam, or None when infeasible.
    With return_forces=False only the feasibility decision is made.
    """
    f_ext = np.asarray(f_ext, dtype=float)
    g = grasp_matrix(blocks, cfg.cone_edges)
    scale = max(1.0, float(np.linalg.norm(f_ext)))
    if not wrench_feasible(g, -f_ext, _FEAS_TOL * scale):
        return None
    if not return_forces:
        return np.zeros(g.shape[1])
    lam = _regularized_forces(g, -f_ext)
    resid = float(np.linalg.norm(g @ lam + f_ext))
    if resid > cfg.force_tolerance(f_ext):
        raise SolverFailure(f"force solve residual {resid:.3g} above tolerance")
    return lam


def quasidynamic_solve(v_obj, blocks, f_ext, mass_matrix, cfg: MechanicsConfig,
                       return_forces: bool = True):
    """Momentum-rate band |M v/h - G lam - f_ext| <= tol_force, lam >= 0."""
    v = np.asarray(v_obj, dtype=float)
    f_ext = np.asarray(f_ext, dtype=float)
    target = mass_matrix @ v / cfg.timestep - f_ext
    g = grasp_matrix(blocks, cfg.cone_edges)
    tol = cfg.force_tolerance(f_ext)
    if g.shape[1] == 0:
        return np.zeros(0) if float(np.linalg.norm(target)) <= tol else None
    lam, resid = _nnls(g, target)
    if resid > tol:
        return None
    if not return_forces:
        return lam
    lam = _regularized_forces(g, target)
    if float(np.linalg.norm(g @ lam - target)) > tol:
        # regularized polish drifted out of the band; keep the raw solution
        lam, resid = _nnls(g, target)
    return lam


def relocation_force_check(staying_blocks, f_ext, cfg: MechanicsConfig) -> bool:
    """Object must hold still under the contacts that are not relocating."""
    return quasistatic_solve(staying_blocks, f_ext, cfg, return_forces=False) is not None


def block_forces(blocks, lam, k: int) -> list:
    """Fold per-edge intensities back into one 3-vector force per block."""
    out = []
    at = 0
    for blk in blocks:
        edges = linearize_cone(blk.normal, blk.mu, k)
        m = len(edges)
        out.append(edges.T @ lam[at:at + m])
        at += m
    return out


def force_closure(blocks, k: int = DEFAULT_CONE_EDGES, torque_scale: float = 1.0,
                  margin: float = 1e-9) -> bool:
    """Origin strictly inside the convex hull of the contact edge wrenches.

    Positive spans of the edge wrenches cover all of wrench space exactly
    when that holds, which is the force-closure condition.
    """
    g = grasp_matrix(blocks, k)
    if g.shape[1] <= 6:
        return False
    pts = g.T.copy()
    pts[:, 3:] /= torque_scale
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return False  # wrenches span a degenerate (lower-dimensional) set
    return bool(np.max(hull.equations[:, -1]) < -margin)


# ---------------------------------------------------------------------------
# constrained velocity projection


def project_twist(v_des, constraints: ModeConstraints, max_iter: int = 100) -> np.ndarray:
    """Minimize |v - v_des| subject to eq rows = 0 and ineq rows >= 0.

    Small dense primal active-set method; the zero twist is always feasible
    so the result never does worse than standing still.
    """
    v_des = np.asarray(v_des, dtype=float)
    eq = constraints.eq
    ineq = constraints.ineq
    v = np.zeros(6)
    active: list[int] = []

    def eqp(rows):
        if rows.shape[0] == 0:
            return v_des.copy()
        z, *_ = np.linalg.lstsq(rows @ rows.T, rows @ v_des, rcond=None)
        return v_des - rows.T @ z

    for _ in range(max_iter):
        rows = np.vstack([eq, ineq[active]]) if active else eq
        v_star = eqp(rows)
        d = v_star - v
        if np.linalg.norm(d) < 1e-12:
            if not active:
                return v_star
            # multipliers: rows^T c = v - v_des, ineq part must be >= 0
            c, *_ = np.linalg.lstsq(rows.T, v - v_des, rcond=None)
            gammas = c[eq.shape[0]:]
            worst = int(np.argmin(gammas))
            if gammas[worst] >= -1e-10:
                return v
            active.pop(worst)
            continue
        alpha = 1.0
        blocker = -1
        for j in range(ineq.shape[0]):
            if j in active:
                continue
            nd = float(ineq[j] @ d)
            if nd < -1e-12:
                a = -float(ineq[j] @ v) / nd
                if a < alpha - 1e-12:
                    alpha = max(a, 0.0)
                    blocker = j
        v = v + alpha * d
        if blocker >= 0:
            active.append(blocker)
        else:
            v = v_star
    return v  # cycling guard: best feasible point found


def velocity_under_mode(x_now: Pose, x_target: Pose, constraints: ModeConstraints) -> np.ndarray:
    """Unit-step desired twist toward x_target projected onto the mode.

    Returns the zero twist when the projected minimizer is below 1e-8.
    """
    raw = pose_log(x_now, x_target)
    nrm = float(np.linalg.norm(raw))
    if nrm < 1e-12:
        return np.zeros(6)
    v = project_twist(raw / nrm, constraints)
    if float(np.linalg.norm(v)) < 1e-8:
        return np.zeros(6)
    return v
