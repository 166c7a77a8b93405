"""World model: shape primitives, signed distances, contacts, sampling.

Primitive objects get analytic contact points against half-space, box and
sphere environment bodies (cylinder caps/sides against half-spaces too).
Every other pairing, and every mesh object, interacts with the environment
through sampled surface points only.  Contact normals always point into
the object.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyMesh, ParseError, PenetrationTooDeep
from .se3 import Pose, cross3, tangent_basis, transform_point

DEFAULT_CONTACT_TOL = 5e-3


@dataclass(frozen=True)
class Box:
    size: tuple  # full extents (x, y, z)

    def __post_init__(self):
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        if min(self.size) <= 0:
            raise ValueError("box extents must be positive")


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class Cylinder:
    # axis along local z, height centered on the origin
    radius: float
    height: float

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("cylinder dimensions must be positive")


@dataclass(frozen=True)
class HalfSpace:
    """Solid region z <= 0 in the body frame; surface normal is local +z."""


@dataclass
class Mesh:
    vertices: np.ndarray  # (n, 3)
    faces: np.ndarray  # (m, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=int).reshape(-1, 3)
        if len(self.faces) == 0:
            raise EmptyMesh("mesh has no faces")


@dataclass
class EnvBody:
    shape: object
    pose: Pose = field(default_factory=Pose)
    name: str = ""


@dataclass
class EnvironmentModel:
    bodies: list = field(default_factory=list)


@dataclass(frozen=True)
class SurfacePoint:
    """Candidate contact location on the object, in the object frame."""

    position: tuple
    normal: tuple  # outward from the object

    def pos(self):
        return np.array(self.position)

    def nrm(self):
        return np.array(self.normal)


@dataclass
class ContactPoint:
    """One object-environment contact.

    position is on the object surface in the world frame; normal points
    into the object; object_point is the object-frame anchor used when a
    projection step must keep this contact on its surface.
    """

    position: np.ndarray
    normal: np.ndarray
    signed_distance: float
    body_id: int
    object_point: np.ndarray

    def key(self):
        p, n = self.position, self.normal
        return (self.body_id, round(p[0], 9), round(p[1], 9), round(p[2], 9),
                round(n[0], 9), round(n[1], 9), round(n[2], 9))


def shape_bbox(shape):
    """Axis-aligned bounds of the shape in its own frame."""
    if isinstance(shape, Box):
        h = np.array(shape.size) / 2
        return -h, h
    if isinstance(shape, Sphere):
        r = shape.radius
        return -np.full(3, r), np.full(3, r)
    if isinstance(shape, Cylinder):
        r, hh = shape.radius, shape.height / 2
        return np.array([-r, -r, -hh]), np.array([r, r, hh])
    if isinstance(shape, Mesh):
        return shape.vertices.min(axis=0), shape.vertices.max(axis=0)
    raise TypeError(f"no bbox for {type(shape).__name__}")


def characteristic_length(shape) -> float:
    lo, hi = shape_bbox(shape)
    return float(np.mean(hi - lo))


def default_inertia(shape, mass: float) -> np.ndarray:
    if isinstance(shape, Box):
        sx, sy, sz = shape.size
        d = mass / 12.0 * np.array([sy * sy + sz * sz, sx * sx + sz * sz, sx * sx + sy * sy])
        return np.diag(d)
    if isinstance(shape, Sphere):
        return np.eye(3) * (0.4 * mass * shape.radius**2)
    if isinstance(shape, Cylinder):
        r, h = shape.radius, shape.height
        ixx = mass * (3 * r * r + h * h) / 12.0
        return np.diag([ixx, ixx, 0.5 * mass * r * r])
    if isinstance(shape, Mesh):
        lo, hi = shape_bbox(shape)
        return default_inertia(Box(tuple(np.maximum(hi - lo, 1e-6))), mass)
    raise TypeError(f"no inertia for {type(shape).__name__}")


@dataclass
class ObjectModel:
    shape: object
    mass: float = 1.0
    inertia: np.ndarray | None = None
    surface_points: list = field(default_factory=list)

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("object mass must be positive")
        if self.inertia is None:
            self.inertia = default_inertia(self.shape, self.mass)
        else:
            self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)

    def characteristic_length(self) -> float:
        return characteristic_length(self.shape)


# ---------------------------------------------------------------------------
# signed distances


def signed_distance_local(shape, p):
    """Signed distance and outward normal of a point in the shape frame."""
    p = np.asarray(p, dtype=float)
    if isinstance(shape, HalfSpace):
        return float(p[2]), np.array([0.0, 0, 1])
    if isinstance(shape, Sphere):
        r = np.linalg.norm(p)
        if r < 1e-12:
            return -shape.radius, np.array([0.0, 0, 1])  # center: tie broken to +z
        return float(r - shape.radius), p / r
    if isinstance(shape, Box):
        h = np.asarray(shape.size) / 2
        q = np.abs(p) - h
        if np.any(q > 0):
            outside = np.maximum(q, 0.0)
            d = float(np.linalg.norm(outside))
            closest = np.clip(p, -h, h)
            n = p - closest
            nn = np.linalg.norm(n)
            return d, (n / nn if nn > 1e-12 else np.array([0.0, 0, 1]))
        # inside: nearest face, ties broken x then y then z
        ax = int(np.argmax(q))
        n = np.zeros(3)
        n[ax] = 1.0 if p[ax] >= 0 else -1.0
        return float(q[ax]), n
    if isinstance(shape, Cylinder):
        rr = float(np.hypot(p[0], p[1]))
        dr = rr - shape.radius
        dz = abs(p[2]) - shape.height / 2
        radial = p[:2] / rr if rr > 1e-12 else np.array([1.0, 0])
        zsgn = 1.0 if p[2] >= 0 else -1.0
        if dr <= 0 and dz <= 0:
            if dr >= dz:  # radial face is closer (both negative)
                return float(dr), np.array([radial[0], radial[1], 0.0])
            return float(dz), np.array([0.0, 0, zsgn])
        a, b = max(dr, 0.0), max(dz, 0.0)
        d = float(np.hypot(a, b))
        n = np.array([radial[0] * a, radial[1] * a, zsgn * b])
        nn = np.linalg.norm(n)
        return d, (n / nn if nn > 1e-12 else np.array([0.0, 0, zsgn]))
    if isinstance(shape, Mesh):
        d, n = _mesh_surface_distance(shape, p)
        return d, n
    raise TypeError(f"no signed distance for {type(shape).__name__}")


def body_signed_distance(body: EnvBody, p_world):
    """Signed distance from a world point to an environment body."""
    local = body.pose.rotation().T @ (np.asarray(p_world, dtype=float) - body.pose.position)
    d, n_local = signed_distance_local(body.shape, local)
    return d, body.pose.rotation() @ n_local


def _mesh_surface_distance(mesh: Mesh, p):
    """Unsigned distance to the triangle soup (sign is not recovered)."""
    d2, idx, _ = _point_triangles(p, mesh)
    tri = mesh.vertices[mesh.faces[idx]]
    n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    nn = np.linalg.norm(n)
    n = n / nn if nn > 1e-12 else np.array([0.0, 0, 1])
    return float(np.sqrt(d2)), n


def _point_triangles(p, mesh: Mesh):
    """Closest squared distance from p to every triangle; returns the best."""
    tris = mesh.vertices[mesh.faces]  # (m, 3, 3)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    denom = np.where(np.abs(denom) < 1e-30, 1e-30, denom)
    v = vb / denom
    w = vc / denom
    closest = a + v[:, None] * ab + w[:, None] * ac
    # clamp the regions outside the triangle
    m1 = (d1 <= 0) & (d2 <= 0)
    closest[m1] = a[m1]
    m2 = (d3 >= 0) & (d4 <= d3)
    closest[m2] = b[m2]
    m3 = (d6 >= 0) & (d5 <= d6)
    closest[m3] = c[m3]
    e1 = (d1 >= 0) & (d3 <= 0) & (vc <= 0)
    t1 = np.where(np.abs(d1 - d3) > 1e-30, d1 / np.maximum(d1 - d3, 1e-30), 0.0)
    closest[e1] = a[e1] + np.clip(t1[e1], 0, 1)[:, None] * ab[e1]
    e2 = (d2 >= 0) & (d6 <= 0) & (vb <= 0)
    t2 = np.where(np.abs(d2 - d6) > 1e-30, d2 / np.maximum(d2 - d6, 1e-30), 0.0)
    closest[e2] = a[e2] + np.clip(t2[e2], 0, 1)[:, None] * ac[e2]
    e3 = ((d4 - d3) >= 0) & ((d5 - d6) >= 0) & (va <= 0)
    t3num = d4 - d3
    t3den = (d4 - d3) + (d5 - d6)
    t3 = np.where(np.abs(t3den) > 1e-30, t3num / np.maximum(t3den, 1e-30), 0.0)
    closest[e3] = b[e3] + np.clip(t3[e3], 0, 1)[:, None] * (c[e3] - b[e3])
    diff = closest - p
    dd = np.einsum("ij,ij->i", diff, diff)
    idx = int(np.argmin(dd))
    return float(dd[idx]), idx, closest[idx]


# ---------------------------------------------------------------------------
# surface sampling


def sample_surface_points(shape, n: int, rng: np.random.Generator):
    """Area-uniform surface samples with outward normals (object frame)."""
    if isinstance(shape, Box):
        sx, sy, sz = shape.size
        areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
        face = rng.choice(6, size=n, p=areas / areas.sum())
        u = rng.random((n, 2)) - 0.5
        out = []
        h = np.array(shape.size) / 2
        normals = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]
        spans = [(1, 2), (1, 2), (0, 2), (0, 2), (0, 1), (0, 1)]
        for i in range(n):
            f = int(face[i])
            ax = f // 2
            p = np.zeros(3)
            p[ax] = h[ax] * (1.0 if f % 2 else -1.0)
            a, b = spans[f]
            p[a] = u[i, 0] * shape.size[a]
            p[b] = u[i, 1] * shape.size[b]
            out.append(SurfacePoint(tuple(p), normals[f]))
        return out
    if isinstance(shape, Sphere):
        out = []
        for _ in range(n):
            v = rng.normal(size=3)
            nv = np.linalg.norm(v)
            v = v / nv if nv > 1e-12 else np.array([0.0, 0, 1])
            out.append(SurfacePoint(tuple(shape.radius * v), tuple(v)))
        return out
    if isinstance(shape, Cylinder):
        r, hgt = shape.radius, shape.height
        side = 2 * np.pi * r * hgt
        cap = np.pi * r * r
        which = rng.choice(3, size=n, p=np.array([side, cap, cap]) / (side + 2 * cap))
        out = []
        for i in range(n):
            if which[i] == 0:
                th = rng.random() * 2 * np.pi
                z = (rng.random() - 0.5) * hgt
                nrm = (np.cos(th), np.sin(th), 0.0)
                out.append(SurfacePoint((r * nrm[0], r * nrm[1], z), nrm))
            else:
                zs = 1.0 if which[i] == 1 else -1.0
                rad = r * np.sqrt(rng.random())
                th = rng.random() * 2 * np.pi
                out.append(
                    SurfacePoint((rad * np.cos(th), rad * np.sin(th), zs * hgt / 2), (0.0, 0.0, zs))
                )
        return out
    if isinstance(shape, Mesh):
        tris = shape.vertices[shape.faces]
        cross = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        if areas.sum() <= 0:
            raise EmptyMesh("mesh has zero total area")
        idx = rng.choice(len(areas), size=n, p=areas / areas.sum())
        out = []
        for i in range(n):
            t = tris[idx[i]]
            u, v = rng.random(2)
            su = np.sqrt(u)
            p = (1 - su) * t[0] + su * (1 - v) * t[1] + su * v * t[2]
            nv = cross[idx[i]]
            nn = np.linalg.norm(nv)
            nv = nv / nn if nn > 1e-12 else np.array([0.0, 0, 1])
            out.append(SurfacePoint(tuple(p), tuple(nv)))
        return out
    raise TypeError(f"cannot sample surface of {type(shape).__name__}")


# ---------------------------------------------------------------------------
# mesh files


def load_mesh(path) -> Mesh:
    """Read an ASCII STL or OBJ file (triangles only)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ParseError(f"cannot read mesh file {path}: {e}") from e
    suffix = path.suffix.lower()
    if suffix == ".stl":
        return _parse_stl(text, path)
    if suffix == ".obj":
        return _parse_obj(text, path)
    raise ParseError(f"unsupported mesh format: {path.suffix}")


def _parse_stl(text, path):
    verts, faces, current = [], [], []
    index = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "vertex":
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: bad vertex line")
            try:
                v = tuple(float(p) for p in parts[1:4])
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: bad vertex number") from e
            if v not in index:
                index[v] = len(verts)
                verts.append(v)
            current.append(index[v])
        elif parts[0] == "endfacet":
            if len(current) != 3:
                raise ParseError(f"{path}:{lineno}: facet with {len(current)} vertices")
            faces.append(tuple(current))
            current = []
    if not faces:
        raise EmptyMesh(f"{path}: no facets found")
    return Mesh(np.array(verts), np.array(faces))


def _parse_obj(text, path):
    verts, faces = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            try:
                verts.append(tuple(float(p) for p in parts[1:4]))
            except (ValueError, IndexError) as e:
                raise ParseError(f"{path}:{lineno}: bad vertex") from e
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                try:
                    i = int(tok.split("/")[0])
                except ValueError as e:
                    raise ParseError(f"{path}:{lineno}: bad face index") from e
                idx.append(i - 1 if i > 0 else len(verts) + i)
            if len(idx) < 3:
                raise ParseError(f"{path}:{lineno}: face with fewer than 3 vertices")
            for k in range(1, len(idx) - 1):  # fan-triangulate
                faces.append((idx[0], idx[k], idx[k + 1]))
    if not faces:
        raise EmptyMesh(f"{path}: no faces found")
    mesh = Mesh(np.array(verts), np.array(faces))
    if mesh.faces.max() >= len(mesh.vertices) or mesh.faces.min() < 0:
        raise ParseError(f"{path}: face index out of range")
    return mesh


# ---------------------------------------------------------------------------
# contact detection


def _box_corners(size):
    h = np.asarray(size) / 2
    return np.array([[sx, sy, sz] for sx in (-h[0], h[0]) for sy in (-h[1], h[1]) for sz in (-h[2], h[2])])


def _contact(p_world, n_world, dist, body_id, x: Pose):
    rt = x.rotation().T
    return ContactPoint(
        position=np.asarray(p_world, dtype=float),
        normal=np.asarray(n_world, dtype=float),
        signed_distance=float(dist),
        body_id=body_id,
        object_point=rt @ (np.asarray(p_world, dtype=float) - x.position),
    )


def detect_contacts(obj: ObjectModel, x: Pose, env: EnvironmentModel,
                    d_contact: float = DEFAULT_CONTACT_TOL):
    """All object-environment contacts at pose x, deterministically ordered.

    Raises PenetrationTooDeep when any separation falls below -10*d_contact.
    """
    contacts = []
    deepest = 0.0
    for body_id, body in enumerate(env.bodies):
        found = _pair_contacts(obj, x, body, body_id, d_contact)
        for c in found:
            deepest = min(deepest, c.signed_distance)
            if c.signed_distance <= d_contact:
                contacts.append(c)
    if deepest < -10.0 * d_contact:
        raise PenetrationTooDeep(f"signed distance {deepest:.6g} below {-10 * d_contact:.6g}")
    contacts.sort(key=lambda c: c.key())
    return _dedup(contacts)


def _dedup(contacts, tol=1e-9):
    out = []
    for c in contacts:
        dup = False
        for o in out:
            if (np.linalg.norm(c.position - o.position) <= tol
                    and np.linalg.norm(c.normal - o.normal) <= tol):
                dup = True
                break
        if not dup:
            out.append(c)
    return out


def _pair_contacts(obj: ObjectModel, x: Pose, body: EnvBody, body_id: int, d_contact: float):
    s, e = obj.shape, body.shape
    if isinstance(e, HalfSpace):
        if isinstance(s, Box):
            return _box_halfspace(s, x, body, body_id, d_contact)
        if isinstance(s, Sphere):
            return _sphere_vs_body(s, x, body, body_id)
        if isinstance(s, Cylinder):
            return _cylinder_halfspace(s, x, body, body_id, d_contact)
    if isinstance(e, Box):
        if isinstance(s, Box):
            return _box_box(s, x, e, body.pose, body_id, d_contact)
        if isinstance(s, Sphere):
            return _sphere_vs_body(s, x, body, body_id)
    if isinstance(e, Sphere):
        if isinstance(s, Box):
            return _box_env_sphere(s, x, body, body_id)
        if isinstance(s, Sphere):
            return _sphere_vs_body(s, x, body, body_id)
    # everything else runs through sampled surface points
    return _sampled_contacts(obj, x, body, body_id)


def _box_halfspace(shape: Box, x: Pose, body: EnvBody, body_id: int, d_contact: float):
    n = body.pose.rotation() @ np.array([0.0, 0, 1])
    origin = body.pose.position
    corners = _box_corners(shape.size) @ x.rotation().T + x.position
    dists = (corners - origin) @ n
    return [_contact(c, n, d, body_id, x) for c, d in zip(corners, dists) if d <= d_contact]


def _sphere_vs_body(shape: Sphere, x: Pose, body: EnvBody, body_id: int):
    center = x.position
    d, n = body_signed_distance(body, center)
    dist = d - shape.radius
    p = center - shape.radius * n
    return [_contact(p, n, dist, body_id, x)]


def _box_env_sphere(shape: Box, x: Pose, body: EnvBody, body_id: int):
    # closest point on the object box to the sphere center
    c_local = x.rotation().T @ (body.pose.position - x.position)
    h = np.asarray(shape.size) / 2
    closest = np.clip(c_local, -h, h)
    p_world = transform_point(x, closest)
    delta = p_world - body.pose.position
    dd = np.linalg.norm(delta)
    n = delta / dd if dd > 1e-12 else np.array([0.0, 0, 1])
    return [_contact(p_world, n, dd - body.shape.radius, body_id, x)]


def _cylinder_halfspace(shape: Cylinder, x: Pose, body: EnvBody, body_id: int, d_contact: float):
    n = body.pose.rotation() @ np.array([0.0, 0, 1])
    origin = body.pose.position
    axis = x.rotation() @ np.array([0.0, 0, 1])
    c = x.position
    ca = float(np.dot(n, axis))
    r, hh = shape.radius, shape.height / 2
    out = []
    if abs(ca) > 1.0 - 1e-9:
        cap = c - np.sign(ca) * hh * axis
        t1, t2 = tangent_basis(axis)
        for th in (0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi):
            p = cap + r * (np.cos(th) * t1 + np.sin(th) * t2)
            out.append(_contact(p, n, float(np.dot(p - origin, n)), body_id, x))
    elif abs(ca) < 1e-9:
        radial = n - ca * axis
        radial /= np.linalg.norm(radial)
        for s in (-1.0, 1.0):
            p = c + s * hh * axis - r * radial
            out.append(_contact(p, n, float(np.dot(p - origin, n)), body_id, x))
    else:
        radial = n - ca * axis
        radial /= np.linalg.norm(radial)
        p = c - np.sign(ca) * hh * axis - r * radial
        out.append(_contact(p, n, float(np.dot(p - origin, n)), body_id, x))
    return out


def _sampled_contacts(obj: ObjectModel, x: Pose, body: EnvBody, body_id: int):
    out = []
    for sp in obj.surface_points:
        p = transform_point(x, sp.pos())
        d, n = body_signed_distance(body, p)
        out.append(_contact(p, n, d, body_id, x))
    return out


def _box_box(sa: Box, xa: Pose, sb: Box, xb: Pose, body_id: int, d_contact: float):
    """SAT separation, then reference-face clipping (or edge-edge closest points).

    Returns contacts on the object (box a) surface with normals pointing
    into the object.
    """
    ra, rb = xa.rotation(), xb.rotation()
    ha, hb = np.asarray(sa.size) / 2, np.asarray(sb.size) / 2
    dc = xa.position - xb.position  # from b to a

    axes = []
    for i in range(3):
        axes.append(("a", i, ra[:, i]))
    for i in range(3):
        axes.append(("b", i, rb[:, i]))
    for i in range(3):
        for j in range(3):
            cr = cross3(ra[:, i], rb[:, j])
            ln = np.linalg.norm(cr)
            if ln > 1e-9:
                axes.append(("e", (i, j), cr / ln))

    best = None
    for kind, idx, ax in axes:
        pa = float(np.dot(np.abs(ax @ ra), ha))
        pb = float(np.dot(np.abs(ax @ rb), hb))
        sep = abs(float(np.dot(ax, dc))) - pa - pb
        if sep > d_contact:
            return []
        bias = 1e-9 if kind == "e" else 0.0  # prefer face axes on near ties
        if best is None or sep - bias > best[0]:
            best = (sep - bias, kind, idx, ax, sep)
    _, kind, idx, ax, sep = best
    n = ax if np.dot(ax, dc) >= 0 else -ax  # points from b into a

    if kind == "e":
        i, j = idx
        # supporting edges nearest each other along n
        sa_pt = xa.position.copy()
        for k in range(3):
            if k != i:
                sa_pt += -np.sign(np.dot(n, ra[:, k])) * ha[k] * ra[:, k]
        sb_pt = xb.position.copy()
        for k in range(3):
            if k != j:
                sb_pt += np.sign(np.dot(n, rb[:, k])) * hb[k] * rb[:, k]
        pa_c, _ = _closest_on_lines(sa_pt, ra[:, i], ha[i], sb_pt, rb[:, j], hb[j])
        return [_contact(pa_c, n, sep, body_id, xa)]

    if kind == "b":
        # reference face on the environment box, incident face on the object
        ref_n = n  # outward from b toward a
        ref_c = xb.position + _face_offset(rb, hb, ref_n)
        face_pts = _incident_face(ra, ha, xa.position, -ref_n)
        clipped = _clip_to_face(face_pts, rb, hb, xb.position, ref_n)
        out = []
        for q in clipped:
            gap = float(np.dot(q - ref_c, ref_n))
            if gap <= d_contact:
                out.append(_contact(q, ref_n, gap, body_id, xa))
        return _dedup(out)

    # reference face on the object box
    ref_out = -n  # outward from a toward b
    ref_c = xa.position + _face_offset(ra, ha, ref_out)
    face_pts = _incident_face(rb, hb, xb.position, -ref_out)
    clipped = _clip_to_face(face_pts, ra, ha, xa.position, ref_out)
    out = []
    for q in clipped:
        gap = float(np.dot(q - ref_c, ref_out))
        if gap <= d_contact:
            # project onto the object face so the point lies on the object
            out.append(_contact(q - gap * ref_out, n, gap, body_id, xa))
    return _dedup(out)


def _face_offset(r, h, outward):
    d = r.T @ outward
    ax = int(np.argmax(np.abs(d)))
    off = np.zeros(3)
    off[ax] = h[ax] * np.sign(d[ax])
    return r @ off


def _incident_face(r, h, center, direction):
    """Corners of the box face whose outward normal best matches direction."""
    d = r.T @ direction
    ax = int(np.argmax(np.abs(d)))
    sgn = np.sign(d[ax]) if d[ax] != 0 else 1.0
    others = [k for k in range(3) if k != ax]
    pts = []
    for s0 in (-1, 1):
        for s1 in (-1, 1):
            p = np.zeros(3)
            p[ax] = sgn * h[ax]
            p[others[0]] = s0 * h[others[0]]
            p[others[1]] = s1 * h[others[1]]
            pts.append(center + r @ p)
    # order as a quad loop for polygon clipping
    return [pts[0], pts[1], pts[3], pts[2]]


def _clip_to_face(poly, r, h, center, ref_outward):
    """Sutherland-Hodgman clip of poly against the 4 side planes of a face."""
    d = r.T @ ref_outward
    ax = int(np.argmax(np.abs(d)))
    for k in range(3):
        if k == ax:
            continue
        u = r[:, k]
        for sgn in (-1.0, 1.0):
            plane_n = sgn * u
            plane_off = float(np.dot(plane_n, center)) + h[k]
            poly = _clip_halfplane(poly, plane_n, plane_off)
            if not poly:
                return []
    return poly


def _clip_halfplane(poly, n, off):
    """Keep the part of poly with n.p <= off."""
    out = []
    m = len(poly)
    for i in range(m):
        a, b = poly[i], poly[(i + 1) % m]
        da, db = float(np.dot(n, a)) - off, float(np.dot(n, b)) - off
        if da <= 0:
            out.append(a)
            if db > 0:
                t = da / (da - db)
                out.append(a + t * (b - a))
        elif db <= 0:
            t = da / (da - db)
            out.append(a + t * (b - a))
    return out


def _closest_on_lines(p1, d1, h1, p2, d2, h2):
    """Closest points of two segments given centers, directions, half-lengths."""
    r = p1 - p2
    a = float(np.dot(d1, d1))
    e = float(np.dot(d2, d2))
    b = float(np.dot(d1, d2))
    c = float(np.dot(d1, r))
    f = float(np.dot(d2, r))
    den = a * e - b * b
    s = (b * f - c * e) / den if abs(den) > 1e-12 else 0.0
    s = float(np.clip(s, -h1, h1))
    t = (b * s + f) / e
    t = float(np.clip(t, -h2, h2))
    s = float(np.clip((b * t - c) / a, -h1, h1))
    return p1 + s * d1, p2 + t * d2
