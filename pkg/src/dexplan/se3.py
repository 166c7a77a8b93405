"""Rigid-body pose and twist arithmetic.

Poses store position plus a unit quaternion (w, x, y, z).  Twists and
wrenches are 6-vectors, linear part first, expressed in the world frame
with the object-frame origin as reference point.  Orientation is
renormalized after every integration step so long rollouts cannot drift
off the unit sphere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-12


def _vec(x, n):
    a = np.asarray(x, dtype=float).reshape(n)
    return a


@dataclass
class Pose:
    """Position and orientation of a rigid body in the world frame."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))

    def __post_init__(self):
        self.position = _vec(self.position, 3)
        self.quaternion = quat_normalize(_vec(self.quaternion, 4))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.quaternion.copy())

    def as_tuple(self) -> tuple:
        p, q = self.position, self.quaternion
        return (p[0], p[1], p[2], q[0], q[1], q[2], q[3])


@dataclass(frozen=True)
class DistanceWeights:
    """Weights combining translation and rotation into one scalar distance."""

    translation: float = 1.0
    rotation: float = 1.0


def identity_pose() -> Pose:
    return Pose()


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < _EPS:
        raise ValueError("zero quaternion")
    q = q / n
    # canonical sign: keep w >= 0 so equal rotations serialize identically
    if q[0] < 0:
        q = -q
    return q


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m):
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(m[i, i] - m[j, j] - m[k, k] + 1.0, 0.0)) * 2
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    return quat_normalize(q)


def quat_from_axis_angle(axis, angle):
    axis = _vec(axis, 3)
    n = np.linalg.norm(axis)
    if n < _EPS:
        return np.array([1.0, 0, 0, 0])
    axis = axis / n
    half = 0.5 * angle
    return quat_normalize(np.concatenate([[np.cos(half)], np.sin(half) * axis]))


def rotation_vector_from_quat(q):
    """Principal axis-angle vector (angle in [0, pi]) of a unit quaternion."""
    q = quat_normalize(q)
    w = min(max(q[0], -1.0), 1.0)
    angle = 2.0 * np.arccos(w)
    s = np.sqrt(max(1.0 - w * w, 0.0))
    if s < _EPS:
        return np.zeros(3)
    return (angle / s) * q[1:]


def quat_from_rotation_vector(rv):
    rv = _vec(rv, 3)
    angle = np.linalg.norm(rv)
    if angle < _EPS:
        # first-order term keeps tiny steps exact enough for projection loops
        return quat_normalize(np.concatenate([[1.0], 0.5 * rv]))
    return quat_from_axis_angle(rv / angle, angle)


def compose(a: Pose, b: Pose) -> Pose:
    """Pose of frame b expressed through a: world_T_b = world_T_a * a_T_b."""
    return Pose(a.position + a.rotation() @ b.position, quat_multiply(a.quaternion, b.quaternion))


def inverse(a: Pose) -> Pose:
    qc = quat_conjugate(a.quaternion)
    return Pose(-(quat_to_matrix(qc) @ a.position), qc)


def transform_point(x: Pose, p) -> np.ndarray:
    return x.position + x.rotation() @ _vec(p, 3)


def transform_points(x: Pose, pts: np.ndarray) -> np.ndarray:
    return pts @ x.rotation().T + x.position


def rotate_vector(x: Pose, v) -> np.ndarray:
    return x.rotation() @ _vec(v, 3)


def rotation_angle_between(qa, qb) -> float:
    """Principal angle of R(qa) R(qb)^T, in [0, pi]."""
    d = abs(float(np.dot(qa, qb)))
    d = min(d, 1.0)
    return 2.0 * np.arccos(d)


def pose_distance(a: Pose, b: Pose, w: DistanceWeights) -> float:
    dt = float(np.linalg.norm(a.position - b.position))
    dr = rotation_angle_between(a.quaternion, b.quaternion)
    return w.translation * dt + w.rotation * dr


def pose_log(a: Pose, b: Pose) -> np.ndarray:
    """Twist v with integrate(a, v, 1) == b.

    Linear part is the straight world-frame displacement, angular part the
    principal rotation vector of R_b R_a^T.
    """
    dq = quat_multiply(b.quaternion, quat_conjugate(a.quaternion))
    return np.concatenate([b.position - a.position, rotation_vector_from_quat(dq)])


def integrate(x: Pose, twist, h: float) -> Pose:
    """Exponential-map step of h*twist applied to x.

    The rotation part exponentiates in SO(3) and premultiplies (world-frame
    angular velocity); translation steps linearly.
    """
    v = _vec(twist, 6)
    dq = quat_from_rotation_vector(h * v[3:])
    return Pose(x.position + h * v[:3], quat_multiply(dq, x.quaternion))


def cross3(a, b) -> np.ndarray:
    """Cross product of two plain 3-vectors.

    np.cross pays dispatch overhead that dominates the force-solve inner
    loops; this stays on the scalar fast path.
    """
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def grasp_map_column(p, f_dir) -> np.ndarray:
    """Unit-force wrench of a contact force f_dir applied at point p.

    p must already be relative to the reference point of the force balance.
    """
    p = _vec(p, 3)
    f = _vec(f_dir, 3)
    return np.concatenate([f, cross3(p, f)])


def random_quaternion(rng: np.random.Generator):
    """Uniform random rotation (subgroup algorithm)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    return quat_normalize(
        np.array(
            [
                b * np.cos(2 * np.pi * u3),
                a * np.sin(2 * np.pi * u2),
                a * np.cos(2 * np.pi * u2),
                b * np.sin(2 * np.pi * u3),
            ]
        )
    )


def tangent_basis(normal):
    """Deterministic right-handed tangent frame (t1, t2) for a unit normal."""
    n = _vec(normal, 3)
    n = n / np.linalg.norm(n)
    ref = np.array([0.0, 0, 1]) if abs(n[2]) < 0.9 else np.array([1.0, 0, 0])
    t1 = cross3(ref, n)
    t1 /= np.linalg.norm(t1)
    t2 = cross3(n, t1)
    return t1, t2
