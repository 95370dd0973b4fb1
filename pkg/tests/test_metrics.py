import csv
import io
import json
import math

import numpy as np
import pytest
from shapely.geometry import Polygon

from hlg.metrics import CSV_HEADER, EPS_OOB_AREA, oob, ori, report, report_csv, report_json
from hlg.scene import Constraint, ObjectSpec, Pose, Relation, RoomShell, Scene
from hlg.tlo.synth import synth_scene

from oracles import box_corners_2d

L_ROOM = RoomShell("other", ((0, 0), (4, 0), (4, 2), (2, 2), (2, 4), (0, 4)), 3.0)


def shapely_deficit(obj, pose, container):
    fp = Polygon(box_corners_2d(pose.x, pose.y, obj.dims[0] / 2, obj.dims[1] / 2, pose.yaw))
    return fp.difference(Polygon(container)).area


@pytest.mark.parametrize("seed", range(10))
def test_oob_matches_shapely_in_l_room(seed):
    rng = np.random.default_rng(seed)
    objs = tuple(ObjectSpec(f"o{k}", "other", (*rng.uniform(0.2, 1.2, 2), 0.5)) for k in range(8))
    poses = {o.id: Pose((*rng.uniform(0, 4, 2), 0.0), rng.uniform(-3, 3)) for o in objs}
    deficits, rate = oob(Scene(L_ROOM, objs, (), poses))
    expected = {o.id: shapely_deficit(o, poses[o.id], L_ROOM.floor_polygon) for o in objs}
    for oid in expected:
        assert deficits[oid] == pytest.approx(expected[oid], abs=1e-9)
    n_out = sum(v > EPS_OOB_AREA for v in expected.values())
    assert rate == pytest.approx(100.0 * n_out / len(objs))


def test_child_is_measured_against_parent_top():
    table = ObjectSpec("t", "desk", (1.0, 1.0, 0.7))
    cup = ObjectSpec("c", "mug", (0.2, 0.2, 0.1))
    cons = (Constraint("c", Relation.ON, "t"),)
    inside = {"t": Pose((1, 1, 0), 0.0), "c": Pose((1.3, 1, 0.7), 0.0)}
    hanging = {"t": Pose((1, 1, 0), 0.0), "c": Pose((1.5, 1, 0.7), 0.0)}
    assert oob(Scene(L_ROOM, (table, cup), cons, inside))[1] == 0.0
    deficits, rate = oob(Scene(L_ROOM, (table, cup), cons, hanging))
    assert deficits["c"] == pytest.approx(0.1 * 0.2)
    assert rate == 50.0


def test_ori_threshold_is_inclusive_and_wraps():
    obj = ObjectSpec("a", "other", (1, 1, 1))
    s = Scene(L_ROOM, (obj,), (), {"a": Pose((1, 1, 0), math.pi - 0.1)})
    ok, score = ori(s, {"a": Pose((0, 0, 0), -math.pi + 0.1)}, threshold=0.2 + 1e-15)
    assert ok == {"a": True} and score == 100.0
    ok, score = ori(s, {"a": Pose((0, 0, 0), 0.0)})
    assert ok == {"a": False} and score == 0.0
    assert ori(s, {}) == ({}, None)


def test_report_and_csv():
    sample = synth_scene(0)
    rep = report(sample.scene, sample.tree)
    assert rep.ori_score is not None
    assert set(rep.per_object) == {o.id for o in sample.scene.objects}
    text = report_csv([("a", rep), ("b", report(sample.ground_truth_scene(), sample.tree))])
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_HEADER
    assert [r[0] for r in rows[1:]] == ["a", "b"]
    assert float(rows[1][1]) == rep.oob_rate
    assert float(rows[1][-1]) == rep.loss.total
    # ground truth is feasible and exactly aligned
    assert float(rows[2][1]) == 0.0 and float(rows[2][2]) == 100.0
    assert json.loads(report_json(rep))["oob_rate"] == rep.oob_rate


def test_report_without_targets_leaves_ori_blank():
    obj = ObjectSpec("a", "other", (1, 1, 1))
    rep = report(Scene(L_ROOM, (obj,), (), {"a": Pose((1, 1, 0), 0.0)}))
    assert rep.ori_score is None
    assert report_csv([("x", rep)]).splitlines()[1].split(",")[2] == ""
