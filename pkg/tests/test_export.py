import numpy as np
import pytest
from shapely.geometry import Polygon

from hlg.export import read_obj, scene_to_obj
from hlg.scene import ObjectSpec, Pose, RoomShell, Scene
from hlg.tlo.synth import synth_scene

from oracles import box_corners_2d

L_ROOM = RoomShell("other", ((0, 0), (4, 0), (4, 2), (2, 2), (2, 4), (0, 4)), 3.0)


def faces(text):
    groups, current = {}, None
    for line in text.splitlines():
        parts = line.split()
        if parts and parts[0] == "o":
            current = parts[1]
            groups[current] = []
        elif parts and parts[0] == "f":
            groups[current].append(tuple(int(i) for i in parts[1:]))
    return groups


@pytest.mark.parametrize("seed", range(5))
def test_vertices_match_boxes(seed):
    s = synth_scene(seed).scene
    groups = read_obj(scene_to_obj(s))
    objs = s.by_id()
    for oid, p in s.poses.items():
        o = objs[oid]
        expected = box_corners_2d(p.x, p.y, o.dims[0] / 2, o.dims[1] / 2, p.yaw)
        verts = np.array(groups[oid])
        assert verts.shape == (8, 3)
        got = {tuple(v) for v in np.round(verts[:, :2], 9)}
        assert got == {tuple(v) for v in np.round(np.array(expected), 9)}
        assert np.allclose(verts[:4, 2], p.z, atol=1e-9, rtol=0)
        assert np.allclose(verts[4:, 2], p.z + o.dims[2], atol=1e-9, rtol=0)


def test_face_counts_and_outward_normals():
    obj = ObjectSpec("a", "other", (1, 2, 0.5))
    s = Scene(L_ROOM, (obj,), (), {"a": Pose((1, 1, 0), 0.7)})
    text = scene_to_obj(s)
    groups = read_obj(text)
    fs = faces(text)
    assert len(fs["a"]) == 12
    verts = np.array(groups["a"] + groups["floor"])
    centre = verts[:8].mean(axis=0)
    for a, b, c in fs["a"]:
        p0, p1, p2 = verts[a - 1], verts[b - 1], verts[c - 1]
        normal = np.cross(p1 - p0, p2 - p0)
        assert np.dot(normal, (p0 + p1 + p2) / 3 - centre) > 0


def test_floor_triangulation_covers_l_room():
    s = Scene(L_ROOM, (), (), {})
    text = scene_to_obj(s)
    verts = np.array(read_obj(text)["floor"])
    tris = faces(text)["floor"]
    assert len(tris) == len(L_ROOM.floor_polygon) - 2
    area = sum(Polygon(verts[[a - 1, b - 1, c - 1], :2]).area for a, b, c in tris)
    assert area == pytest.approx(Polygon(L_ROOM.floor_polygon).area, abs=1e-12)
    union = Polygon()
    for a, b, c in tris:
        union = union.union(Polygon(verts[[a - 1, b - 1, c - 1], :2]))
    assert union.symmetric_difference(Polygon(L_ROOM.floor_polygon)).area < 1e-12
