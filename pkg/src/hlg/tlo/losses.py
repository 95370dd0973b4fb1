"""Composite layout loss: ownership, collision, stability and alignment.

``LayoutModel`` packs a scene into flat per-object arrays so the optimizer
can evaluate the geometric terms (and their finite-difference gradients)
without rebuilding value objects. The public ``loss_*`` functions take
scenes and delegate to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from ..fgla import OwnershipTree, build_ownership
from ..geometry import EPS_AREA, _clip, point_polygon_distance
from ..instruction import Instruction
from ..scene import FLOOR, Pose, Scene, signed_area, wrap_angle

EPS_CONTACT = 1e-6
H_POS = 1e-4
H_YAW = 1e-4


class CandidateMissing(KeyError):
    pass


@dataclass(frozen=True)
class LossBreakdown:
    owner: float
    collision: float
    stability: float
    align: float
    total: float

    @classmethod
    def of(cls, owner: float, collision: float, stability: float, align: float,
           weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0)) -> "LossBreakdown":
        wo, wc, ws, wa = weights
        return cls(owner, collision, stability, align, wo * owner + wc * collision + ws * stability + wa * align)

    def row(self) -> list[float]:
        return [self.owner, self.collision, self.stability, self.align, self.total]


def _ownership(scene: Scene, tree: OwnershipTree | None) -> OwnershipTree:
    return tree if tree is not None else build_ownership(Instruction.from_scene(scene))


class LayoutModel:
    """Flat view of a posed scene for fast loss evaluation.

    Poses are held as ``[x, y, z, yaw]`` lists indexed like ``ids``.
    """

    def __init__(
        self,
        scene: Scene,
        tree: OwnershipTree | None = None,
        targets: Mapping[str, Pose] | None = None,
        weights: Sequence[float] = (1.0, 1.0, 1.0),
    ):
        tree = _ownership(scene, tree)
        self.scene = scene
        self.tree = tree
        self.ids = [o.id for o in scene.objects]
        index = {oid: k for k, oid in enumerate(self.ids)}
        self.n = len(self.ids)
        self.dims = [o.dims for o in scene.objects]
        self.half = [(0.5 * d[0], 0.5 * d[1]) for d in self.dims]
        self.radius = [math.hypot(*h) for h in self.half]
        self.volume = [d[0] * d[1] * d[2] for d in self.dims]
        self.parent = [-1 if tree.parent[oid] == FLOOR else index[tree.parent[oid]] for oid in self.ids]
        self.children: list[list[int]] = [[] for _ in range(self.n)]
        for k, p in enumerate(self.parent):
            if p >= 0:
                self.children[p].append(k)
        self.order = sorted(range(self.n), key=lambda k: (tree.depth[self.ids[k]], k))
        self.floor = scene.shell.floor_polygon
        self.w_collision, self.w_stability, self.w_align = weights
        targets = scene.targets if targets is None else targets
        self.targets: list[tuple[float, float, float, float] | None] = []
        for oid in self.ids:
            t = (targets or {}).get(oid)
            self.targets.append(None if t is None else (*t.position, t.yaw))

    # ------------------------------------------------------------------ poses

    def pose_matrix(self, poses: Mapping[str, Pose] | None = None) -> list[list[float]]:
        poses = self.scene.poses if poses is None else poses
        return [[*poses[oid].position, poses[oid].yaw] for oid in self.ids]

    def to_poses(self, P: Sequence[Sequence[float]]) -> dict[str, Pose]:
        return {oid: Pose((p[0], p[1], p[2]), p[3]) for oid, p in zip(self.ids, P)}

    def snap(self, P: list[list[float]]) -> None:
        """Put every object on its parent's top face, parents first; wrap yaws."""
        for k in self.order:
            p = self.parent[k]
            P[k][2] = 0.0 if p < 0 else P[p][2] + self.dims[p][2]
            P[k][3] = wrap_angle(P[k][3])

    # ------------------------------------------------------------------ terms

    def box(self, P, k: int):
        x, y, z, yaw = P[k]
        hx, hy = self.half[k]
        c, s = math.cos(yaw), math.sin(yaw)
        fp = (
            (x - c * hx + s * hy, y - s * hx - c * hy),
            (x + c * hx + s * hy, y + s * hx - c * hy),
            (x + c * hx - s * hy, y + s * hx + c * hy),
            (x - c * hx - s * hy, y - s * hx + c * hy),
        )
        return fp, z, z + self.dims[k][2], x, y

    def boxes(self, P) -> list:
        return [self.box(P, k) for k in range(self.n)]

    def pair_iou(self, i: int, bi, j: int, bj) -> float:
        fi, zi0, zi1, xi, yi = bi
        fj, zj0, zj1, xj, yj = bj
        dz = min(zi1, zj1) - max(zi0, zj0)
        if dz <= 0.0:
            return 0.0
        if (self.parent[i] == j or self.parent[j] == i) and dz <= EPS_CONTACT:
            return 0.0  # resting contact between an object and its support
        r = self.radius[i] + self.radius[j]
        if (xi - xj) ** 2 + (yi - yj) ** 2 >= r * r:
            return 0.0
        pts = _clip(fi, fj) if i < j else _clip(fj, fi)
        if len(pts) < 3:
            return 0.0
        area = signed_area(pts)
        if area <= EPS_AREA:
            return 0.0
        inter = area * dz
        return min(1.0, inter / (self.volume[i] + self.volume[j] - inter))

    def stability_of(self, k: int, bk, support) -> float:
        return point_polygon_distance((bk[3], bk[4]), support)

    def support_of(self, k: int, B) -> tuple:
        p = self.parent[k]
        return self.floor if p < 0 else B[p][0]

    def align_of(self, k: int, P) -> float:
        t = self.targets[k]
        if t is None:
            return 0.0
        x, y, z, yaw = P[k]
        dyaw = wrap_angle(yaw - t[3])
        return (x - t[0]) ** 2 + (y - t[1]) ** 2 + (z - t[2]) ** 2 + dyaw * dyaw

    def terms(self, P, B=None) -> tuple[float, float, float]:
        B = self.boxes(P) if B is None else B
        col = 0.0
        for i in range(self.n):
            for j in range(i + 1, self.n):
                col += self.pair_iou(i, B[i], j, B[j])
        stab = sum(self.stability_of(k, B[k], self.support_of(k, B)) for k in range(self.n))
        align = sum(self.align_of(k, P) for k in range(self.n))
        return col, stab, align

    def total(self, P, B=None) -> float:
        c, s, a = self.terms(P, B)
        return self.w_collision * c + self.w_stability * s + self.w_align * a

    def breakdown(self, P, owner: float = 0.0) -> LossBreakdown:
        c, s, a = self.terms(P)
        return LossBreakdown.of(owner, c, s, a, (1.0, self.w_collision, self.w_stability, self.w_align))

    def local(self, P, k: int, B) -> float:
        """Every loss term that depends on object ``k``'s pose."""
        bk = self.box(P, k)
        col = 0.0
        for j in range(self.n):
            if j != k:
                col += self.pair_iou(k, bk, j, B[j])
        p = self.parent[k]
        stab = self.stability_of(k, bk, self.floor if p < 0 else B[p][0])
        for c in self.children[k]:
            stab += self.stability_of(c, B[c], bk[0])
        return self.w_collision * col + self.w_stability * stab + self.w_align * self.align_of(k, P)

    def gradient(self, P, k: int, B=None, coords: Sequence[int] = (0, 1, 2, 3),
                 h_pos: float = H_POS, h_yaw: float = H_YAW) -> list[float]:
        """Central differences of the geometric loss w.r.t. object ``k``'s pose."""
        B = self.boxes(P) if B is None else B
        g = [0.0, 0.0, 0.0, 0.0]
        row = P[k]
        for c in coords:
            h = h_yaw if c == 3 else h_pos
            orig = row[c]
            row[c] = orig + h
            up = self.local(P, k, B)
            row[c] = orig - h
            down = self.local(P, k, B)
            row[c] = orig
            g[c] = (up - down) / (2.0 * h)
        return g


# ------------------------------------------------------------------ scene-level API


def loss_owner(pred: Mapping[str, Mapping[str, float]], truth: OwnershipTree) -> float:
    """Negative log-likelihood of the true parent, summed over children."""
    total = 0.0
    for child, probs in pred.items():
        parent = truth.parent[child]
        if parent not in probs:
            raise CandidateMissing(f"true parent {parent!r} of {child!r} is not a candidate")
        p = probs[parent]
        total += math.inf if p <= 0.0 else -math.log(p)
    return total + 0.0


def loss_collision(scene: Scene, tree: OwnershipTree | None = None) -> float:
    m = LayoutModel(scene, tree, {})
    return m.terms(m.pose_matrix())[0]


def loss_stability(scene: Scene, tree: OwnershipTree | None = None) -> float:
    m = LayoutModel(scene, tree, {})
    return m.terms(m.pose_matrix())[1]


def loss_align(scene: Scene, targets: Mapping[str, Pose] | None = None) -> float:
    targets = scene.targets if targets is None else targets
    total = 0.0
    for oid, t in (targets or {}).items():
        p = scene.poses[oid]
        d = wrap_angle(p.yaw - t.yaw)
        total += sum((a - b) ** 2 for a, b in zip(p.position, t.position)) + d * d
    return total


def loss_total(
    scene: Scene,
    tree: OwnershipTree | None = None,
    targets: Mapping[str, Pose] | None = None,
    pred_ownership: Mapping[str, Mapping[str, float]] | None = None,
    weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0),
) -> LossBreakdown:
    """All four terms; the ownership term is 0 without predictions (pure refinement)."""
    tree = _ownership(scene, tree)
    owner = 0.0 if pred_ownership is None else loss_owner(pred_ownership, tree)
    m = LayoutModel(scene, tree, targets, weights[1:])
    c, s, _ = m.terms(m.pose_matrix())
    a = loss_align(scene, targets)
    return LossBreakdown.of(owner, c, s, a, weights)


def pose_gradient(
    scene: Scene,
    tree: OwnershipTree | None,
    targets: Mapping[str, Pose] | None,
    oid: str,
) -> tuple[float, float, float, float]:
    """(dL/dx, dL/dy, dL/dz, dL/dyaw) of the geometric loss by central differences."""
    m = LayoutModel(scene, tree, targets)
    P = m.pose_matrix()
    return tuple(m.gradient(P, m.ids.index(oid)))
