import numpy as np
import pytest

from dexplan.errors import EmptyMesh, ParseError, PenetrationTooDeep
from dexplan.se3 import Pose, quat_from_axis_angle
from dexplan.world import (
    Box,
    Cylinder,
    EnvBody,
    EnvironmentModel,
    HalfSpace,
    Mesh,
    ObjectModel,
    Sphere,
    body_signed_distance,
    characteristic_length,
    default_inertia,
    detect_contacts,
    load_mesh,
    sample_surface_points,
    signed_distance_local,
)

TABLE = EnvironmentModel([EnvBody(HalfSpace())])


def make_box_on_table(size=(1.0, 1.0, 1.0)):
    obj = ObjectModel(Box(size))
    x = Pose([0, 0, size[2] / 2], [1, 0, 0, 0])
    return obj, x


# --- signed distances ------------------------------------------------------


def test_halfspace_sdf():
    d, n = signed_distance_local(HalfSpace(), [0.3, -2.0, 1.5])
    assert d == 1.5
    assert np.allclose(n, [0, 0, 1])


def test_sphere_sdf_outside_inside():
    d, n = signed_distance_local(Sphere(2.0), [3.0, 0, 0])
    assert abs(d - 1.0) < 1e-12
    assert np.allclose(n, [1, 0, 0])
    d, n = signed_distance_local(Sphere(2.0), [0.5, 0, 0])
    assert abs(d + 1.5) < 1e-12
    # exact center falls back to +z
    d, n = signed_distance_local(Sphere(2.0), [0, 0, 0])
    assert abs(d + 2.0) < 1e-12
    assert np.allclose(n, [0, 0, 1])


def test_box_sdf_derived_values():
    # oracle: clamp construction computed by hand for a 2x2x2 box
    box = Box((2.0, 2.0, 2.0))
    d, n = signed_distance_local(box, [2.0, 0, 0])
    assert abs(d - 1.0) < 1e-12 and np.allclose(n, [1, 0, 0])
    # outside along an edge: closest corner is (1, 1, 0)
    p = np.array([2.0, 3.0, 0.0])
    expect = np.linalg.norm(p - [1, 1, 0])
    d, n = signed_distance_local(box, p)
    assert abs(d - expect) < 1e-12
    assert np.allclose(n, (p - [1, 1, 0]) / expect)
    # inside: nearest face wins, x tie-break
    d, n = signed_distance_local(box, [0.5, 0, 0])
    assert abs(d + 0.5) < 1e-12 and np.allclose(n, [1, 0, 0])
    d, n = signed_distance_local(box, [0, 0, 0])
    assert abs(d + 1.0) < 1e-12 and np.allclose(n, [1, 0, 0])


def test_cylinder_sdf_cases():
    cyl = Cylinder(1.0, 4.0)
    d, n = signed_distance_local(cyl, [3.0, 0, 0])
    assert abs(d - 2.0) < 1e-12 and np.allclose(n, [1, 0, 0])
    d, n = signed_distance_local(cyl, [0, 0, 3.0])
    assert abs(d - 1.0) < 1e-12 and np.allclose(n, [0, 0, 1])
    # outside both: corner distance
    d, n = signed_distance_local(cyl, [2.0, 0, 3.0])
    assert abs(d - np.hypot(1.0, 1.0)) < 1e-12
    # inside
    d, _ = signed_distance_local(cyl, [0.5, 0, 0])
    assert abs(d + 0.5) < 1e-12


def test_sdf_gradient_matches_finite_difference():
    # property: outward normal equals the numerical gradient off the surface
    shapes = [Box((1.5, 1.0, 2.0)), Sphere(1.2), Cylinder(0.8, 1.6)]
    rng = np.random.default_rng(11)
    eps = 1e-6
    for shape in shapes:
        checked = 0
        while checked < 30:
            p = rng.uniform(-2.5, 2.5, size=3)
            d0, n = signed_distance_local(shape, p)
            if abs(d0) < 0.05:  # skip near-surface/near-edge points
                continue
            g = np.zeros(3)
            for k in range(3):
                dp = np.zeros(3)
                dp[k] = eps
                g[k] = (signed_distance_local(shape, p + dp)[0]
                        - signed_distance_local(shape, p - dp)[0]) / (2 * eps)
            if np.linalg.norm(g) < 0.5:  # medial-axis neighborhood, gradient ill-defined
                continue
            assert np.allclose(g, n, atol=1e-4), (shape, p, g, n)
            checked += 1


def test_body_signed_distance_transforms():
    body = EnvBody(Sphere(1.0), Pose([5, 0, 0], [1, 0, 0, 0]))
    d, n = body_signed_distance(body, [7.0, 0, 0])
    assert abs(d - 1.0) < 1e-12
    assert np.allclose(n, [1, 0, 0])


# --- contact detection -----------------------------------------------------


def test_unit_box_on_halfspace_four_corner_contacts():
    obj, x = make_box_on_table()
    contacts = detect_contacts(obj, x, TABLE)
    assert len(contacts) == 4
    # oracle: the four bottom corners of the cube, enumerated directly
    expected = {(sx * 0.5, sy * 0.5, 0.0) for sx in (-1, 1) for sy in (-1, 1)}
    got = {tuple(np.round(c.position, 9)) for c in contacts}
    assert got == expected
    for c in contacts:
        assert np.allclose(c.normal, [0, 0, 1])
        assert abs(c.signed_distance) < 1e-12
        assert c.body_id == 0
    # deterministic order: sorted by body then position
    keys = [c.key() for c in contacts]
    assert keys == sorted(keys)


def test_hovering_box_no_contacts():
    obj, _ = make_box_on_table()
    x = Pose([0, 0, 1.0], [1, 0, 0, 0])
    assert detect_contacts(obj, x, TABLE) == []


def test_penetration_too_deep_raises():
    obj, _ = make_box_on_table()
    x = Pose([0, 0, 0.3], [1, 0, 0, 0])  # bottom at -0.2, threshold -0.05
    with pytest.raises(PenetrationTooDeep):
        detect_contacts(obj, x, TABLE)


def test_sphere_on_table_single_contact():
    obj = ObjectModel(Sphere(0.5))
    x = Pose([0.2, 0.3, 0.5], [1, 0, 0, 0])
    contacts = detect_contacts(obj, x, TABLE)
    assert len(contacts) == 1
    c = contacts[0]
    assert np.allclose(c.position, [0.2, 0.3, 0.0], atol=1e-12)
    assert np.allclose(c.normal, [0, 0, 1])


def test_tilted_box_two_edge_contacts():
    obj, _ = make_box_on_table()
    q = quat_from_axis_angle([0, 1, 0], np.deg2rad(20))
    # place so the lowest edge touches z=0: edge corners at x-rotated positions
    # lowest corner offset below center: rotate (-0.5, *, -0.5)
    from dexplan.se3 import quat_to_matrix

    r = quat_to_matrix(q)
    drop = min((r @ np.array([sx, sy, sz]))[2]
               for sx in (-0.5, 0.5) for sy in (-0.5, 0.5) for sz in (-0.5, 0.5))
    x = Pose([0, 0, -drop], q)
    contacts = detect_contacts(obj, x, TABLE)
    assert len(contacts) == 2  # one edge (two corners) touches
    for c in contacts:
        assert abs(c.signed_distance) < 1e-9


def test_cylinder_on_table_cap_and_side():
    obj = ObjectModel(Cylinder(0.5, 2.0))
    up = detect_contacts(obj, Pose([0, 0, 1.0], [1, 0, 0, 0]), TABLE)
    assert len(up) == 4  # rim points of the resting cap
    for c in up:
        assert abs(c.signed_distance) < 1e-9
        assert abs(np.hypot(c.position[0], c.position[1]) - 0.5) < 1e-9
    lying = detect_contacts(
        obj, Pose([0, 0, 0.5], quat_from_axis_angle([0, 1, 0], np.pi / 2)), TABLE)
    assert len(lying) == 2  # line contact endpoints
    for c in lying:
        assert abs(c.signed_distance) < 1e-9


def test_box_stack_face_contacts():
    # small box resting centered on a big env box: its 4 bottom corners
    env = EnvironmentModel([EnvBody(Box((4.0, 4.0, 2.0)), Pose([0, 0, -1.0], [1, 0, 0, 0]))])
    obj = ObjectModel(Box((1.0, 1.0, 1.0)))
    contacts = detect_contacts(obj, Pose([0, 0, 0.5], [1, 0, 0, 0]), env)
    assert len(contacts) == 4
    expected = {(sx * 0.5, sy * 0.5, 0.0) for sx in (-1, 1) for sy in (-1, 1)}
    got = {tuple(np.round(c.position, 6)) for c in contacts}
    assert got == expected
    for c in contacts:
        assert np.allclose(c.normal, [0, 0, 1], atol=1e-9)


def test_box_beside_box_side_face_contacts():
    # object box pressed against the side face of an env box
    env = EnvironmentModel([EnvBody(Box((2.0, 2.0, 2.0)), Pose([2.0, 0, 1.0], [1, 0, 0, 0]))])
    obj = ObjectModel(Box((2.0, 2.0, 2.0)))
    contacts = detect_contacts(obj, Pose([0, 0, 1.0], [1, 0, 0, 0]), env)
    assert len(contacts) == 4
    for c in contacts:
        assert np.allclose(c.normal, [-1, 0, 0], atol=1e-9)  # into the object
        assert abs(c.position[0] - 1.0) < 1e-9


def test_box_overhang_clip_produces_clipped_polygon():
    # object box overhangs the env box edge: clipped rectangle, still 4 points
    env = EnvironmentModel([EnvBody(Box((2.0, 2.0, 2.0)), Pose([0, 0, -1.0], [1, 0, 0, 0]))])
    obj = ObjectModel(Box((2.0, 2.0, 2.0)))
    contacts = detect_contacts(obj, Pose([1.5, 0, 1.0], [1, 0, 0, 0]), env)
    assert len(contacts) == 4
    xs = sorted(round(c.position[0], 6) for c in contacts)
    assert xs == [0.5, 0.5, 1.0, 1.0]  # clipped at the env box edge x=1


def test_sphere_against_env_sphere():
    env = EnvironmentModel([EnvBody(Sphere(1.0), Pose([0, 0, 0], [1, 0, 0, 0]))])
    obj = ObjectModel(Sphere(0.5))
    contacts = detect_contacts(obj, Pose([0, 0, 1.5], [1, 0, 0, 0]), env)
    assert len(contacts) == 1
    assert abs(contacts[0].signed_distance) < 1e-12
    assert np.allclose(contacts[0].normal, [0, 0, 1])


def test_contact_object_point_anchors():
    obj, x = make_box_on_table()
    for c in detect_contacts(obj, x, TABLE):
        # anchor transformed back to world equals the reported position
        back = x.position + x.rotation() @ c.object_point
        assert np.allclose(back, c.position, atol=1e-12)


# --- sampling --------------------------------------------------------------


def test_box_sampling_area_uniform_and_deterministic():
    shape = Box((1.0, 1.0, 1.0))
    pts = sample_surface_points(shape, 600, np.random.default_rng(42))
    assert len(pts) == 600
    counts = {}
    for sp in pts:
        n = sp.normal
        counts[n] = counts.get(n, 0) + 1
        p = np.array(sp.position)
        assert np.max(np.abs(p)) <= 0.5 + 1e-12  # on the surface
        ax = int(np.argmax(np.abs(np.array(n))))
        assert abs(abs(p[ax]) - 0.5) < 1e-12
    assert len(counts) == 6
    for face, c in counts.items():
        assert 60 <= c <= 140, (face, c)
    # bit-identical resample with the same seed
    again = sample_surface_points(shape, 600, np.random.default_rng(42))
    assert all(a == b for a, b in zip(pts, again))


def test_sphere_sampling_on_surface():
    pts = sample_surface_points(Sphere(2.0), 200, np.random.default_rng(1))
    for sp in pts:
        assert abs(np.linalg.norm(sp.position) - 2.0) < 1e-9
        assert np.allclose(sp.pos() / 2.0, sp.nrm(), atol=1e-9)


def test_cylinder_sampling_split():
    pts = sample_surface_points(Cylinder(1.0, 2.0), 400, np.random.default_rng(2))
    side = sum(1 for sp in pts if abs(sp.normal[2]) < 1e-9)
    # side is 2/3 of the area for r=1, h=2
    assert 200 <= side <= 330


# --- meshes ----------------------------------------------------------------

TETRA_STL = """solid tetra
facet normal 0 0 -1
 outer loop
  vertex 0 0 0
  vertex 1 0 0
  vertex 0 1 0
 endloop
endfacet
facet normal 0 -1 0
 outer loop
  vertex 0 0 0
  vertex 0 0 1
  vertex 1 0 0
 endloop
endfacet
facet normal -1 0 0
 outer loop
  vertex 0 0 0
  vertex 0 1 0
  vertex 0 0 1
 endloop
endfacet
facet normal 1 1 1
 outer loop
  vertex 1 0 0
  vertex 0 0 1
  vertex 0 1 0
 endloop
endfacet
endsolid tetra
"""


def test_load_stl_and_obj(tmp_path):
    stl = tmp_path / "tetra.stl"
    stl.write_text(TETRA_STL)
    mesh = load_mesh(stl)
    assert len(mesh.vertices) == 4
    assert len(mesh.faces) == 4
    obj = tmp_path / "tri.obj"
    obj.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3\nf 1 2 4\n")
    mesh2 = load_mesh(obj)
    assert len(mesh2.faces) == 2


def test_empty_and_malformed_mesh(tmp_path):
    empty = tmp_path / "empty.stl"
    empty.write_text("solid nothing\nendsolid nothing\n")
    with pytest.raises(EmptyMesh):
        load_mesh(empty)
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 zero\nf 1 2 3\n")
    with pytest.raises(ParseError):
        load_mesh(bad)


def test_mesh_object_contacts_through_sampled_points(tmp_path):
    stl = tmp_path / "tetra.stl"
    stl.write_text(TETRA_STL)
    mesh = load_mesh(stl)
    pts = sample_surface_points(mesh, 200, np.random.default_rng(3))
    obj = ObjectModel(mesh, surface_points=pts)
    contacts = detect_contacts(obj, Pose([0, 0, 0], [1, 0, 0, 0]), TABLE, d_contact=0.02)
    assert contacts  # bottom-face samples touch the plane
    for c in contacts:
        assert c.signed_distance <= 0.02
        assert np.allclose(c.normal, [0, 0, 1])


# --- model helpers ---------------------------------------------------------


def test_characteristic_length():
    assert abs(characteristic_length(Box((1, 2, 3))) - 2.0) < 1e-12
    assert abs(characteristic_length(Sphere(1.5)) - 3.0) < 1e-12


def test_default_inertia_box():
    inertia = default_inertia(Box((1.0, 2.0, 3.0)), 12.0)
    assert np.allclose(np.diag(inertia), [4 + 9, 1 + 9, 1 + 4])


def test_object_model_validation():
    with pytest.raises(ValueError):
        ObjectModel(Box((1, 1, 1)), mass=0.0)
    with pytest.raises(ValueError):
        Box((0, 1, 1))
