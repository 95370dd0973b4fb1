"""Greedy coarse placement.

Layers are placed parents-first. Inside a layer, nodes follow
``placement_order``; each node gets the pose its relations dictate, and
when that pose collides with an already placed sibling or leaves the
support surface, the nearest feasible pose on a spiral grid is used.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Union

from .fgla import LayerGraph, OwnershipTree, placement_order
from .geometry import (
    Obb,
    Polygon2,
    boundary_distance,
    footprint,
    footprint_containment_deficit,
    obb_intersection_volume,
    obb_of,
    point_in_polygon,
    point_polygon_distance,
    polygon_area,
    polygon_centroid,
)
from .instruction import Instruction
from .scene import FLOOR, ObjectSpec, Pose, Relation, RoomShell, Scene

logger = logging.getLogger(__name__)

# Feasibility tolerances used while placing; tighter than the 1e-6 acceptance bounds.
PLACE_EPS_AREA = 1e-9
PLACE_EPS_VOLUME = 1e-9


class UnplacedReference(ValueError):
    pass


class LayerOverflow(RuntimeError):
    """Some nodes had no feasible pose.

    Raised after the whole layer (or scene) has been processed; ``scene`` or
    ``poses`` carries the best-effort result, ``failed`` the offending
    ``(layer_parent, object_id)`` pairs.
    """

    def __init__(self, failed: list[tuple[str, str]], poses: Mapping[str, Pose], scene: Scene | None = None):
        names = ", ".join(f"{oid} (on {layer})" for layer, oid in failed)
        super().__init__(f"no feasible pose for: {names}")
        self.failed = list(failed)
        self.poses = dict(poses)
        self.scene = scene


@dataclass(frozen=True)
class OffsetRules:
    gap: float = 0.05
    wall_clearance: float = 0.02
    grid_step: float = 0.05

    def __post_init__(self) -> None:
        if not (self.gap > 0 and self.wall_clearance > 0 and self.grid_step > 0):
            raise ValueError("offset rules must be strictly positive")


def _unit(x: float, y: float) -> tuple[float, float] | None:
    n = math.hypot(x, y)
    return None if n < 1e-12 else (x / n, y / n)


def yaw_facing(frm: tuple[float, float], to: tuple[float, float], default: float = 0.0) -> float:
    """Yaw that points an object's local +y axis from ``frm`` towards ``to``."""
    d = _unit(to[0] - frm[0], to[1] - frm[1])
    if d is None:
        return default
    return math.atan2(-d[0], d[1])


def _half_width(half_extents: tuple[float, float], yaw: float, u: tuple[float, float]) -> float:
    c, s = math.cos(yaw), math.sin(yaw)
    return abs(u[0] * c + u[1] * s) * half_extents[0] + abs(-u[0] * s + u[1] * c) * half_extents[1]


def resolve_relation(
    rel: Relation,
    subject: ObjectSpec,
    reference: Union[Obb, RoomShell, None],
    rules: OffsetRules,
    prior: Pose | None = None,
    room: RoomShell | None = None,
    base_z: float | None = None,
) -> Pose:
    """Candidate pose for ``subject`` from one relation to an already placed reference.

    ``prior`` is the current estimate (used by face_to, against_wall, near);
    ``base_z`` overrides the height rule when the caller knows the layer's
    support height.
    """
    if reference is None:
        raise UnplacedReference(f"{subject.id}: {rel.value} reference has no pose yet")
    hx, hy = subject.half_extents

    if isinstance(reference, RoomShell):
        shell = reference
        z = 0.0 if base_z is None else base_z
        cx, cy = polygon_centroid(shell.floor_polygon)
        yaw = prior.yaw if prior is not None else 0.0
        if rel in (Relation.CENTER_OF, Relation.ON, Relation.NEAR):
            return Pose((cx, cy, z), yaw)
        if rel is Relation.AGAINST_WALL:
            anchor = (prior.x, prior.y) if prior is not None else (cx, cy)
            poly = shell.floor_polygon
            best = None
            for i in range(len(poly)):
                a, b = poly[i], poly[(i + 1) % len(poly)]
                d = boundary_distance(anchor, (a, b))
                if best is None or d < best[0] - 1e-12:
                    best = (d, a, b)
            _, a, b = best
            ex, ey = b[0] - a[0], b[1] - a[1]
            length = math.hypot(ex, ey)
            ux, uy = ex / length, ey / length
            nx, ny = -uy, ux  # inward normal of a CCW edge
            t = (anchor[0] - a[0]) * ux + (anchor[1] - a[1]) * uy
            t = length / 2 if length < 2 * hx else min(max(t, hx), length - hx)
            off = rules.wall_clearance + hy
            return Pose((a[0] + t * ux + off * nx, a[1] + t * uy + off * ny, z), math.atan2(-nx, ny))
        raise ValueError(f"relation {rel.value!r} cannot reference the room")

    ref = reference
    rx, ry = ref.base_center
    ax, ay = ref.axes()
    rhx, rhy = ref.half_extents
    if rel is Relation.ON:
        return Pose((rx, ry, ref.z_max if base_z is None else base_z), prior.yaw if prior else ref.yaw)
    if rel is Relation.CENTER_OF:
        return Pose((rx, ry, ref.z_max if base_z is None else base_z), prior.yaw if prior else ref.yaw)

    z = ref.z_min if base_z is None else base_z
    if rel in (Relation.LEFT_OF, Relation.RIGHT_OF):
        sign = -1.0 if rel is Relation.LEFT_OF else 1.0
        d = sign * (rhx + hx + rules.gap)
        return Pose((rx + d * ax[0], ry + d * ax[1], z), ref.yaw)
    if rel in (Relation.IN_FRONT_OF, Relation.BEHIND):
        sign = 1.0 if rel is Relation.IN_FRONT_OF else -1.0
        d = sign * (rhy + hy + rules.gap)
        return Pose((rx + d * ay[0], ry + d * ay[1], z), ref.yaw)
    if rel is Relation.FACE_TO:
        if prior is None:
            raise ValueError(f"{subject.id}: face_to needs a prior position estimate")
        return Pose(prior.position, yaw_facing((prior.x, prior.y), (rx, ry), prior.yaw))
    if rel is Relation.NEAR:
        yaw = prior.yaw if prior is not None else ref.yaw
        target = polygon_centroid(room.floor_polygon) if room is not None else None
        u = _unit(target[0] - rx, target[1] - ry) if target is not None else None
        if u is None:
            u = ay
        dist = _half_width((rhx, rhy), ref.yaw, u) + _half_width((hx, hy), yaw, u) + rules.gap
        return Pose((rx + dist * u[0], ry + dist * u[1], z), yaw)
    raise ValueError(f"relation {rel.value!r} cannot be resolved against an object")


@lru_cache(maxsize=64)
def _spiral(radius: int) -> tuple[tuple[int, int], ...]:
    """Grid offsets ordered by ring, then distance, then angle."""
    pts = [(i, j) for i in range(-radius, radius + 1) for j in range(-radius, radius + 1) if (i, j) != (0, 0)]
    pts.sort(key=lambda p: (max(abs(p[0]), abs(p[1])), p[0] ** 2 + p[1] ** 2, math.atan2(p[1], p[0])))
    return tuple(pts)


class _Layer:
    """Feasibility bookkeeping for one layer."""

    def __init__(self, support: Polygon2, base_z: float, rules: OffsetRules):
        self.support = support
        self.base_z = base_z
        self.rules = rules
        self.obstacles: list[Obb] = []
        self.support_area = polygon_area(support)
        xs = [p[0] for p in support]
        ys = [p[1] for p in support]
        self.bbox = (min(xs), min(ys), max(xs), max(ys))

    def feasible(self, obj: ObjectSpec, pose: Pose) -> bool:
        if not point_in_polygon((pose.x, pose.y), self.support):
            return False
        box = obb_of(obj, pose)
        if footprint_containment_deficit(footprint(box), self.support) > PLACE_EPS_AREA:
            return False
        return all(obb_intersection_volume(box, o) <= PLACE_EPS_VOLUME for o in self.obstacles)

    def scan(self, obj: ObjectSpec, start: Pose) -> Pose | None:
        if obj.footprint_area > self.support_area:
            return None
        step = self.rules.grid_step
        x0, y0, x1, y1 = self.bbox
        reach = max(abs(start.x - x0), abs(start.x - x1), abs(start.y - y0), abs(start.y - y1))
        radius = min(int(math.ceil(reach / step)) + 1, 400)
        offsets = _spiral(radius)
        for yaw in (start.yaw, start.yaw + math.pi / 2):
            first = Pose(start.position, yaw)
            if yaw != start.yaw and self.feasible(obj, first):
                return first
            for i, j in offsets:
                cand = Pose((start.x + i * step, start.y + j * step, self.base_z), yaw)
                if self.feasible(obj, cand):
                    return cand
        return None

    def free_point(self, obj: ObjectSpec) -> tuple[float, float]:
        """Grid point with the largest clearance to the support edge and placed siblings."""
        x0, y0, x1, y1 = self.bbox
        step = max(self.rules.grid_step, max(x1 - x0, y1 - y0) / 40.0)
        centroid = polygon_centroid(self.support)
        cands = [centroid]
        nx, ny = int((x1 - x0) / step), int((y1 - y0) / step)
        for i in range(nx + 1):
            for j in range(ny + 1):
                cands.append((x0 + i * step, y0 + j * step))
        feet = [footprint(o) for o in self.obstacles]
        best, best_key = centroid, None
        for p in cands:
            if not point_in_polygon(p, self.support):
                continue
            clear = boundary_distance(p, self.support)
            for f in feet:
                clear = min(clear, point_polygon_distance(p, f))
            key = (-round(clear, 9), round(math.dist(p, centroid), 9), p)
            if best_key is None or key < best_key:
                best, best_key = p, key
        return best


def _layer_base(graph: LayerGraph, objects: Mapping[str, ObjectSpec], poses: Mapping[str, Pose]) -> float:
    if graph.layer_parent == FLOOR:
        return 0.0
    parent_pose = poses[graph.layer_parent]
    return parent_pose.z + objects[graph.layer_parent].dims[2]


def _place_layer(
    graph: LayerGraph,
    support: Polygon2,
    placed: Scene,
    rules: OffsetRules,
) -> tuple[dict[str, Pose], list[str]]:
    objects = placed.by_id()
    poses: dict[str, Pose] = dict(placed.poses or {})
    targets = placed.targets or {}
    base_z = _layer_base(graph, objects, poses)
    layer = _Layer(support, base_z, rules)
    parent_ref: Union[Obb, RoomShell] = (
        placed.shell if graph.layer_parent == FLOOR else obb_of(objects[graph.layer_parent], poses[graph.layer_parent])
    )

    def reference_of(rid: str):
        if rid == FLOOR:
            return placed.shell
        if rid == graph.layer_parent:
            return parent_ref
        if rid in out:
            return obb_of(objects[rid], out[rid])
        return None

    out: dict[str, Pose] = {}
    failed: list[str] = []
    for oid in placement_order(graph):
        obj = objects[oid]
        edges = [c for c in graph.edges if c.subject == oid]
        prior = None
        if oid in targets:
            t = targets[oid]
            prior = Pose((t.x, t.y, base_z), t.yaw)

        pose = None
        for c in edges:
            if c.relation is Relation.FACE_TO:
                continue
            ref = reference_of(c.reference)
            if ref is None:
                continue
            pose = resolve_relation(c.relation, obj, ref, rules, prior=prior, room=placed.shell, base_z=base_z)
            break
        if pose is None:
            if prior is not None:
                pose = prior
            else:
                fx, fy = layer.free_point(obj)
                pose = Pose((fx, fy, base_z), 0.0)
        for c in edges:
            if c.relation is Relation.FACE_TO:
                ref = reference_of(c.reference)
                if ref is not None:
                    pose = resolve_relation(c.relation, obj, ref, rules, prior=pose, base_z=base_z)

        if not layer.feasible(obj, pose):
            repaired = layer.scan(obj, pose)
            if repaired is None:
                logger.warning("no feasible pose for %s on %s", oid, graph.layer_parent)
                failed.append(oid)
                out[oid] = pose
                continue
            pose = repaired
        out[oid] = pose
        layer.obstacles.append(obb_of(obj, pose))
    return out, failed


def place_layer(graph: LayerGraph, support: Polygon2, placed: Scene, rules: OffsetRules | None = None) -> dict[str, Pose]:
    """Poses for every node of one layer; raises LayerOverflow listing infeasible nodes."""
    poses, failed = _place_layer(graph, support, placed, rules or OffsetRules())
    if failed:
        raise LayerOverflow([(graph.layer_parent, f) for f in failed], poses)
    return poses


def place_scene(
    instr: Instruction,
    tree: OwnershipTree,
    graphs: list[LayerGraph],
    rules: OffsetRules | None = None,
) -> Scene:
    """Coarse layout: floor layer first, then each deeper layer on its parent's top face."""
    rules = rules or OffsetRules()
    scene = instr.to_scene(poses={})
    objects = scene.by_id()
    poses: dict[str, Pose] = {}
    failed: list[tuple[str, str]] = []
    for graph in sorted(graphs, key=lambda g: g.depth):
        if graph.layer_parent == FLOOR:
            support = scene.shell.floor_polygon
        else:
            support = footprint(obb_of(objects[graph.layer_parent], poses[graph.layer_parent]))
        layer_poses, layer_failed = _place_layer(graph, support, scene.with_poses(poses), rules)
        poses.update(layer_poses)
        failed.extend((graph.layer_parent, f) for f in layer_failed)
    result = scene.with_poses({o.id: poses[o.id] for o in instr.objects})
    if failed:
        raise LayerOverflow(failed, result.poses, result)
    return result
