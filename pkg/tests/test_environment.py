import numpy as np
import pytest

from fieldarm.environment import (
    AabbTree,
    FeasibilityStatus,
    RobotBody,
    TriangleMesh,
    build_trees,
    check_collision,
    load_mesh,
    partition_pose_dictionary,
    path_feasible,
    pose_feasibility,
    segment_triangle_distance,
    tool_capsule_for_pose,
)
from fieldarm.errors import DegenerateGeometry, EndpointInCollision, ParseError
from fieldarm.kinematics import Pose, forward_kinematics, inverse_kinematics

UNIT_CUBE_OFF = """OFF
8 12 0
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
3 0 2 1
3 0 3 2
3 4 5 6
3 4 6 7
3 0 1 5
3 0 5 4
3 2 3 7
3 2 7 6
3 1 2 6
3 1 6 5
3 3 0 4
3 3 4 7
"""

SINGLE_TRIANGLE_STL = """solid tri
  facet normal 0 0 1
    outer loop
      vertex 0 0 0
      vertex 1 0 0
      vertex 0 1 0
    endloop
  endfacet
endsolid tri
"""


def test_load_off_unit_cube(tmp_path):
    path = tmp_path / "cube.off"
    path.write_text(UNIT_CUBE_OFF)
    mesh = load_mesh(str(path))
    assert mesh.vertices.shape == (8, 3)
    assert mesh.triangles.shape == (12, 3)


def test_load_ascii_stl(tmp_path):
    path = tmp_path / "tri.stl"
    path.write_text(SINGLE_TRIANGLE_STL)
    mesh = load_mesh(str(path))
    assert mesh.vertices.shape[0] == 3
    assert mesh.triangles.shape == (1, 3)


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text("OFF\n3 1 0\n0 0 0\n1 0\n0 1 0\n3 0 1 2\n")
    with pytest.raises(ParseError) as err:
        load_mesh(str(path))
    assert err.value.line is not None


def test_degenerate_triangle_rejected():
    with pytest.raises(DegenerateGeometry):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]], "degenerate")


def test_triangle_index_out_of_range():
    with pytest.raises(ParseError):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 5]], "bad-index")


def test_mesh_transformed_rigidly():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]], "tri")
    R = Pose(0, 0, 0, 0.2, -0.5, 1.1).rotation()
    t = np.array([1.0, -2.0, 0.5])
    moved = mesh.transformed(R, t)
    assert np.allclose(moved.vertices, mesh.vertices @ R.T + t)
    assert np.allclose(moved.areas(), mesh.areas())


def test_segment_triangle_distance_analytic():
    a, b, c = np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    # segment directly above the triangle interior
    assert np.isclose(
        segment_triangle_distance(np.array([0.2, 0.2, 1.0]), np.array([0.2, 0.2, 2.0]), a, b, c),
        1.0,
    )
    # segment crossing the triangle
    assert np.isclose(
        segment_triangle_distance(np.array([0.2, 0.2, -0.5]), np.array([0.2, 0.2, 0.5]), a, b, c),
        0.0,
    )
    # segment beyond the edge: closest feature is the vertex at the origin
    assert np.isclose(
        segment_triangle_distance(np.array([-1.0, -1.0, 0.0]), np.array([-1.0, -2.0, 0.0]), a, b, c),
        np.sqrt(2.0),
    )


def test_aabb_tree_matches_brute_force():
    rng = np.random.default_rng(2)
    verts = rng.uniform(-1, 1, size=(30, 3))
    tris = rng.integers(0, 30, size=(40, 3))
    keep = [t for t in tris if len(set(t)) == 3]
    mesh = TriangleMesh(verts, keep, "random")
    tree = AabbTree(mesh)
    for _ in range(50):
        p, q = rng.uniform(-2, 2, size=(2, 3))
        brute = min(
            segment_triangle_distance(p, q, *mesh.vertices[t]) for t in mesh.triangles
        )
        assert np.isclose(tree.segment_distance(p, q), brute, atol=1e-12)


def test_check_collision_floor_distance(dh):
    floor = TriangleMesh(
        [[-5, -5, -0.2], [5, -5, -0.2], [5, 5, -0.2], [-5, 5, -0.2]],
        [[0, 1, 2], [0, 2, 3]], "floor",
    )
    body = RobotBody.from_dh(dh)  # uniform 0.04 m capsules
    result = check_collision(body, dh, np.zeros(6), [floor])
    assert result.clear
    # the base frame origin sits at z = 0, 0.2 m above the floor plane
    assert np.isclose(result.min_distance, 0.2 - 0.04, atol=1e-9)


def test_check_collision_empty_environment(dh):
    body = RobotBody.from_dh(dh)
    result = check_collision(body, dh, np.zeros(6), [])
    assert result.clear and result.min_distance is None


def test_check_collision_detects_hit(dh):
    plane = TriangleMesh(
        [[-5, -5, 0.1], [5, -5, 0.1], [5, 5, 0.1], [-5, 5, 0.1]],
        [[0, 1, 2], [0, 2, 3]], "cutting-plane",
    )
    body = RobotBody.from_dh(dh)
    result = check_collision(body, dh, np.zeros(6), [plane])
    assert not result.clear
    assert result.min_distance == 0.0


def test_collision_monotone_under_shrinking_radii(dh):
    plane = TriangleMesh(
        [[-5, -5, -0.06], [5, -5, -0.06], [5, 5, -0.06], [-5, 5, -0.06]],
        [[0, 1, 2], [0, 2, 3]], "near-floor",
    )
    rng = np.random.default_rng(9)
    for _ in range(20):
        q = rng.uniform(dh.q_min * 0.6, dh.q_max * 0.6)
        fat = RobotBody(np.full(7, 0.05))
        thin = RobotBody(np.full(7, 0.03))
        if check_collision(fat, dh, q, [plane]).clear:
            assert check_collision(thin, dh, q, [plane]).clear


def test_path_feasible_detects_mid_path_obstacle(dh):
    body = RobotBody.from_dh(dh)
    j_start = np.zeros(6)
    j_end = np.array([1.2, 0.0, 0.0, 0.0, 0.0, 0.0])
    j_mid = (j_start + j_end) / 2.0
    tcp = forward_kinematics(dh, j_mid).position
    e = 0.02
    cube_v = np.array([
        tcp + [-e, -e, -e], tcp + [e, -e, -e], tcp + [e, e, -e], tcp + [-e, e, -e],
        tcp + [-e, -e, e], tcp + [e, -e, e], tcp + [e, e, e], tcp + [-e, e, e],
    ])
    cube_t = [[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7], [0, 1, 5], [0, 5, 4],
              [2, 3, 7], [2, 7, 6], [1, 2, 6], [1, 6, 5], [3, 0, 4], [3, 4, 7]]
    cube = TriangleMesh(cube_v, cube_t, "blocker")
    assert not path_feasible(body, dh, j_start, j_end, [cube])
    assert path_feasible(body, dh, j_start, j_end, [])


def test_path_feasible_rejects_colliding_endpoint(dh):
    body = RobotBody.from_dh(dh)
    plane = TriangleMesh(
        [[-5, -5, 0.1], [5, -5, 0.1], [5, 5, 0.1], [-5, 5, 0.1]],
        [[0, 1, 2], [0, 2, 3]], "cutting-plane",
    )
    with pytest.raises(EndpointInCollision):
        path_feasible(body, dh, np.zeros(6), np.zeros(6), [plane])


def test_pose_feasibility_statuses(dh, body, wall):
    reachable = forward_kinematics(dh, np.array([0.3, 0.4, -0.2, 0.1, 0.5, 0.0]))
    res = pose_feasibility(reachable, dh, body, [], dh.home())
    assert res.status is FeasibilityStatus.REACHABLE
    assert res.joints is not None

    res = pose_feasibility(Pose(0.5, 0.5, 0.5), dh, body, [], dh.home())
    assert res.status in (FeasibilityStatus.REACHABLE, FeasibilityStatus.IK_FAILURE)

    behind_wall = Pose(0.2, -0.15, 0.3)
    res = pose_feasibility(behind_wall, dh, body, [wall], dh.home())
    assert res.status in (FeasibilityStatus.COLLISION, FeasibilityStatus.IK_FAILURE)


def test_tool_capsule_follows_pose(dh, body):
    pose = Pose(0.3, 0.1, 0.25, 0.0, 0.4, 0.9)
    base, tip, radius = tool_capsule_for_pose(dh, body, pose)
    assert np.allclose(tip, pose.position)
    axis = pose.rotation() @ np.array([1.0, 0.0, 0.0])
    assert np.allclose(base, pose.position - dh.tool_offset * axis)
    assert radius == body.radii[-1]


def test_partition_deterministic(dh, body, wall):
    poses = [Pose(0.2, y, 0.3, 0.0, 0.5, 0.2) for y in np.linspace(-0.12, 0.12, 6)]
    first = partition_pose_dictionary(poses, dh, body, [wall])
    second = partition_pose_dictionary(poses, dh, body, [wall])
    assert [r.status for r in first] == [r.status for r in second]
    for a, b in zip(first, second):
        if a.joints is not None:
            assert np.allclose(a.joints, b.joints)


def test_partition_mixed_statuses(dh, body, wall):
    poses = [Pose(0.2, 0.1, 0.3, 0.0, 0.5, 0.2), Pose(0.2, -0.15, 0.3, 0.0, 0.5, 0.2)]
    results = partition_pose_dictionary(poses, dh, body, [wall])
    assert results[0].status is FeasibilityStatus.REACHABLE
    assert results[1].status is not FeasibilityStatus.REACHABLE


def test_robot_body_validation():
    with pytest.raises(ValueError):
        RobotBody(np.full(6, 0.04))
    with pytest.raises(ValueError):
        RobotBody(np.array([0.04, 0.04, 0.04, 0.04, 0.04, 0.04, -0.01]))
