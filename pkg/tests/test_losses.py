import math

import numpy as np
import pytest
from shapely.geometry import Point, Polygon

from hlg.fgla import OwnershipTree, build_ownership
from hlg.instruction import Instruction
from hlg.scene import FLOOR, Constraint, ObjectSpec, Pose, Relation, RoomShell, Scene
from hlg.tlo.losses import (
    EPS_CONTACT,
    CandidateMissing,
    LayoutModel,
    LossBreakdown,
    loss_align,
    loss_collision,
    loss_owner,
    loss_stability,
    loss_total,
    pose_gradient,
)

from oracles import box_corners_2d

ROOM = RoomShell("other", ((0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)), 3.0)


def scene(objs, poses, constraints=(), targets=None):
    return Scene(ROOM, tuple(objs), tuple(constraints), poses, targets)


def shapely_iou(oa, pa, ob, pb):
    fa = Polygon(box_corners_2d(pa.x, pa.y, oa.dims[0] / 2, oa.dims[1] / 2, pa.yaw))
    fb = Polygon(box_corners_2d(pb.x, pb.y, ob.dims[0] / 2, ob.dims[1] / 2, pb.yaw))
    dz = max(0.0, min(pa.z + oa.dims[2], pb.z + ob.dims[2]) - max(pa.z, pb.z))
    inter = fa.intersection(fb).area * dz
    va = oa.dims[0] * oa.dims[1] * oa.dims[2]
    vb = ob.dims[0] * ob.dims[1] * ob.dims[2]
    return inter / (va + vb - inter) if inter > 0 else 0.0


class TestCollision:
    def test_identical_boxes_have_iou_one(self):
        objs = [ObjectSpec("a", "other", (1, 1, 1)), ObjectSpec("b", "other", (1, 1, 1))]
        p = Pose((2, 2, 0), 0.0)
        assert loss_collision(scene(objs, {"a": p, "b": p})) == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_shapely_pairwise_sum(self, seed):
        rng = np.random.default_rng(seed)
        objs = [ObjectSpec(f"o{k}", "other", tuple(rng.uniform(0.3, 1.2, 3))) for k in range(6)]
        poses = {o.id: Pose((*rng.uniform(1, 3, 2), rng.uniform(0, 0.5)), rng.uniform(-3, 3)) for o in objs}
        expected = sum(
            shapely_iou(objs[i], poses[objs[i].id], objs[j], poses[objs[j].id])
            for i in range(6) for j in range(i + 1, 6)
        )
        # every object is a floor child here, so nobody is exempt
        assert loss_collision(scene(objs, poses)) == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_resting_contact_is_exempt(self):
        table = ObjectSpec("t", "desk", (1, 1, 0.5))
        pot = ObjectSpec("p", "teapot", (0.2, 0.2, 0.2))
        cons = [Constraint("p", Relation.ON, "t")]
        exact = {"t": Pose((2, 2, 0), 0.0), "p": Pose((2, 2, 0.5), 0.0)}
        assert loss_collision(scene([table, pot], exact, cons)) == 0.0
        sunk = {"t": Pose((2, 2, 0), 0.0), "p": Pose((2, 2, 0.5 - 0.5 * EPS_CONTACT), 0.0)}
        assert loss_collision(scene([table, pot], sunk, cons)) == 0.0
        deep = {"t": Pose((2, 2, 0), 0.0), "p": Pose((2, 2, 0.4), 0.0)}
        assert loss_collision(scene([table, pot], deep, cons)) > 0.0

    def test_non_parent_pair_is_not_exempt(self):
        a = ObjectSpec("a", "other", (1, 1, 0.5))
        b = ObjectSpec("b", "other", (1, 1, 0.5))
        poses = {"a": Pose((2, 2, 0), 0.0), "b": Pose((2, 2, 0.5 - 0.5 * EPS_CONTACT), 0.0)}
        assert loss_collision(scene([a, b], poses)) > 0.0


class TestStability:
    def test_inside_support_is_zero(self):
        objs = [ObjectSpec("a", "other", (1, 1, 1))]
        assert loss_stability(scene(objs, {"a": Pose((2, 2, 0), 0.0)})) == 0.0

    def test_distance_outside_room(self):
        objs = [ObjectSpec("a", "other", (1, 1, 1))]
        assert loss_stability(scene(objs, {"a": Pose((5, 2, 0), 0.0)})) == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_child_com_against_parent_top(self, seed):
        rng = np.random.default_rng(seed)
        table = ObjectSpec("t", "desk", (1.2, 0.6, 0.7))
        cup = ObjectSpec("c", "mug", (0.1, 0.1, 0.1))
        tp = Pose((2, 2, 0), float(rng.uniform(-3, 3)))
        cp = Pose((*rng.uniform(1.0, 3.0, 2), 0.7), 0.0)
        s = scene([table, cup], {"t": tp, "c": cp}, [Constraint("c", Relation.ON, "t")])
        top = Polygon(box_corners_2d(2, 2, 0.6, 0.3, tp.yaw))
        pt = Point(cp.x, cp.y)
        expected = 0.0 if top.covers(pt) else top.exterior.distance(pt)
        assert loss_stability(s) == pytest.approx(expected, abs=1e-9)


class TestAlignAndOwner:
    def test_align(self):
        objs = [ObjectSpec("a", "other", (1, 1, 1))]
        s = scene(objs, {"a": Pose((1, 2, 0), 3.0)}, targets={"a": Pose((0, 0, 0), -3.0)})
        # yaw difference wraps: 6 rad is 6 - 2 pi
        assert loss_align(s) == pytest.approx(1 + 4 + (6 - 2 * math.pi) ** 2)
        assert loss_align(s, {}) == 0.0

    def test_owner_nll(self):
        tree = OwnershipTree({"c": "t", "t": FLOOR}, {"c": 1, "t": 0})
        assert loss_owner({"c": {"t": 0.5, FLOOR: 0.5}}, tree) == pytest.approx(math.log(2))
        assert loss_owner({"c": {"t": 1.0, FLOOR: 0.0}}, tree) == 0.0
        assert loss_owner({"c": {"t": 0.0, FLOOR: 1.0}}, tree) == math.inf
        with pytest.raises(CandidateMissing):
            loss_owner({"c": {FLOOR: 1.0}}, tree)

    def test_total_combines_weighted_terms(self):
        objs = [ObjectSpec("a", "other", (1, 1, 1)), ObjectSpec("b", "other", (1, 1, 1))]
        poses = {"a": Pose((2, 2, 0), 0.0), "b": Pose((2.5, 2, 0), 0.0)}
        s = scene(objs, poses, targets={"a": Pose((2, 1, 0), 0.0)})
        tree = build_ownership(Instruction.from_scene(s))
        b = loss_total(s, tree, weights=(1.0, 2.0, 3.0, 4.0))
        assert b.collision == pytest.approx(1 / 3)
        assert b.align == pytest.approx(1.0)
        assert b.total == pytest.approx(2 * b.collision + 3 * b.stability + 4 * b.align)
        assert LossBreakdown.of(1, 2, 3, 4).row() == [1, 2, 3, 4, 10]


class TestGradient:
    def test_align_gradient_is_analytic(self):
        objs = [ObjectSpec("a", "other", (1, 1, 1))]
        s = scene(objs, {"a": Pose((1.5, 2.5, 0), 0.3)}, targets={"a": Pose((1, 2, 0), 0.1)})
        g = pose_gradient(s, None, None, "a")
        assert g == pytest.approx((1.0, 1.0, 0.0, 0.4), abs=1e-6)

    def test_overlap_gradients_push_apart(self):
        objs = [ObjectSpec("a", "other", (1, 1, 1)), ObjectSpec("b", "other", (1, 1, 1))]
        s = scene(objs, {"a": Pose((1.8, 2, 0), 0.0), "b": Pose((2.2, 2, 0), 0.0)})
        ga = pose_gradient(s, None, None, "a")
        gb = pose_gradient(s, None, None, "b")
        assert ga[0] > 0 > gb[0]  # descending moves a left, b right
        assert ga[0] == pytest.approx(-gb[0], rel=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_local_loss_equals_full_loss_difference(self, seed):
        rng = np.random.default_rng(seed)
        objs = [ObjectSpec(f"o{k}", "other", tuple(rng.uniform(0.3, 1.0, 3))) for k in range(5)]
        poses = {o.id: Pose((*rng.uniform(1, 3, 2), 0.0), rng.uniform(-3, 3)) for o in objs}
        targets = {"o0": Pose((1, 1, 0), 0.0)}
        s = scene(objs, poses, targets=targets)
        m = LayoutModel(s)
        P = m.pose_matrix()
        B = m.boxes(P)
        for k in range(5):
            g = m.gradient(P, k, B)
            for c, h in ((0, 1e-4), (1, 1e-4), (3, 1e-4)):
                up = [list(r) for r in P]
                dn = [list(r) for r in P]
                up[k][c] += h
                dn[k][c] -= h
                full = (m.total(up) - m.total(dn)) / (2 * h)
                assert g[c] == pytest.approx(full, rel=1e-6, abs=1e-9)
