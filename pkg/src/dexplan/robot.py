"""Robot contact models.

The planner talks to robots through a small interface: can a finger reach
a surface point, is the fingertip sphere collision-free there, how does a
point contact expand into force-bearing contacts, and can a finger move
between two surface points while the object holds still.

SphereFingerRobot models fully actuated fingertips: reachability is a
workspace volume per finger, and each contact acts as a patch approximated
by three points on a circle of radius r_p in the tangent plane.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np

from .mechanics import ContactBlock
from .se3 import Pose, tangent_basis, transform_point
from .world import EnvBody, ObjectModel, SurfacePoint, body_signed_distance, signed_distance_local, Mesh

_COLLISION_SLACK = 1e-6
_MESH_SLACK_FACTOR = 0.2  # mesh distances are unsigned; allow a deeper margin


class RobotInterface(abc.ABC):
    """What levels 1 and 2 need to know about a robot."""

    n_fingers: int

    @abc.abstractmethod
    def ik_feasible(self, finger: int, p_world) -> bool: ...

    @abc.abstractmethod
    def fingertip_collision_free(self, finger: int, p_world, n_out_world, env, obj, x) -> bool: ...

    @abc.abstractmethod
    def contact_model_points(self, p, n_into):
        """Expand one contact into its force-bearing point set."""

    @abc.abstractmethod
    def relocation_path_exists(self, finger: int, frm, to, env, obj, x) -> bool: ...


@dataclass
class SphereFingerRobot(RobotInterface):
    n_fingers: int = 2
    fingertip_radius: float = 0.3
    patch_radius: float = 0.2
    workspaces: list = field(default_factory=list)  # per finger: EnvBody volume or None

    def __post_init__(self):
        if self.n_fingers < 1:
            raise ValueError("robot needs at least one finger")
        if self.fingertip_radius <= 0 or self.patch_radius < 0:
            raise ValueError("bad fingertip dimensions")
        if not self.workspaces:
            self.workspaces = [None] * self.n_fingers
        if len(self.workspaces) != self.n_fingers:
            raise ValueError("one workspace entry per finger required")

    def ik_feasible(self, finger: int, p_world) -> bool:
        ws = self.workspaces[finger]
        if ws is None:
            return True
        d, _ = body_signed_distance(ws, p_world)
        return d <= 1e-9  # closed volume

    def _sphere_clear(self, center, env, obj: ObjectModel, x: Pose) -> bool:
        r = self.fingertip_radius
        for body in env.bodies:
            d, _ = body_signed_distance(body, center)
            if d < r - _COLLISION_SLACK:
                return False
        local = x.rotation().T @ (center - x.position)
        d, _ = signed_distance_local(obj.shape, local)
        slack = _MESH_SLACK_FACTOR * r if isinstance(obj.shape, Mesh) else _COLLISION_SLACK
        return d >= r - slack

    def fingertip_collision_free(self, finger: int, p_world, n_out_world, env, obj, x) -> bool:
        center = np.asarray(p_world, dtype=float) + self.fingertip_radius * np.asarray(n_out_world, dtype=float)
        return self._sphere_clear(center, env, obj, x)

    def contact_model_points(self, p, n_into):
        """Three patch points on a radius r_p circle, centroid at p."""
        p = np.asarray(p, dtype=float)
        n = np.asarray(n_into, dtype=float)
        n = n / np.linalg.norm(n)
        if self.patch_radius == 0:
            return [p.copy()]
        t1, t2 = tangent_basis(n)
        pts = []
        for ang in (0.0, 2 * np.pi / 3, 4 * np.pi / 3):
            pts.append(p + self.patch_radius * (np.cos(ang) * t1 + np.sin(ang) * t2))
        return pts

    def relocation_path_exists(self, finger: int, frm, to, env, obj, x,
                               samples: int = 20) -> bool:
        """Retract, traverse, approach; 20 sphere checks per segment.

        frm and to are (point, outward normal) pairs in the world frame.
        """
        r = self.fingertip_radius
        p0, n0 = (np.asarray(a, dtype=float) for a in frm)
        p1, n1 = (np.asarray(a, dtype=float) for a in to)
        c0 = p0 + r * n0
        c1 = p1 + r * n1
        c0r = c0 + 2 * r * n0
        c1r = c1 + 2 * r * n1
        for a, b in ((c0, c0r), (c0r, c1r), (c1r, c1)):
            for t in np.linspace(0.0, 1.0, samples):
                if not self._sphere_clear(a + t * (b - a), env, obj, x):
                    return False
        return True

    def sample_contact(self, finger: int, candidates, x: Pose, env, obj, rng,
                       max_tries: int = 50):
        """Rejection-sample one reachable, collision-free candidate index."""
        if not candidates:
            return None
        for _ in range(max_tries):
            idx = int(rng.integers(0, len(candidates)))
            sp = candidates[idx]
            p = transform_point(x, sp.pos())
            n_out = x.rotation() @ sp.nrm()
            if self.ik_feasible(finger, p) and self.fingertip_collision_free(
                    finger, p, n_out, env, obj, x):
                return idx
        return None


def patch_blocks(robot: RobotInterface, assignments, candidates, x: Pose, mu: float,
                 frame: str = "world"):
    """Force blocks for finger assignments [(finger, candidate index)].

    frame='world' positions blocks relative to the object origin in world
    coordinates (for balance programs at pose x); frame='object' stays in
    the object frame (pose-invariant, used for force-closure caching).
    """
    blocks = []
    for finger, idx in assignments:
        sp = candidates[idx]
        if frame == "world":
            p = transform_point(x, sp.pos())
            n_into = x.rotation() @ (-sp.nrm())
            rel = lambda q: q - x.position
        else:
            p = sp.pos()
            n_into = -sp.nrm()
            rel = lambda q: q
        for pt in robot.contact_model_points(p, n_into):
            blocks.append(ContactBlock(tuple(rel(pt)), tuple(n_into), mu, ("finger", finger)))
    return blocks
