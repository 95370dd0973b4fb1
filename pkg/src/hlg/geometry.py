"""Yaw-oriented box geometry.

Boxes only rotate about z, so every 3D quantity factors into an exact 2D
polygon computation times a 1D z-interval overlap. Polygons are tuples of
``(x, y)`` float pairs in counter-clockwise order; everything is pure
Python because the polygons are tiny and this sits in the refinement loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

from .scene import ObjectSpec, Pose, RoomShell, signed_area

EPS_GEOM = 1e-9
# Clipped polygons below this area are treated as zero-measure contact.
EPS_AREA = 1e-14

Point2 = tuple[float, float]
Polygon2 = tuple[Point2, ...]


class NonConvex(ValueError):
    pass


@dataclass(frozen=True)
class Obb:
    base_center: tuple[float, float]
    z_min: float
    z_max: float
    half_extents: tuple[float, float]
    yaw: float

    @property
    def height(self) -> float:
        return self.z_max - self.z_min

    @property
    def volume(self) -> float:
        return 4.0 * self.half_extents[0] * self.half_extents[1] * (self.z_max - self.z_min)

    @property
    def radius(self) -> float:
        return math.hypot(*self.half_extents)

    def axes(self) -> tuple[Point2, Point2]:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return (c, s), (-s, c)


def obb_of(obj: ObjectSpec, pose: Pose) -> Obb:
    x, y, z = pose.position
    dx, dy, dz = obj.dims
    return Obb((x, y), z, z + dz, (0.5 * dx, 0.5 * dy), pose.yaw)


def footprint(obb: Obb) -> Polygon2:
    cx, cy = obb.base_center
    hx, hy = obb.half_extents
    c, s = math.cos(obb.yaw), math.sin(obb.yaw)
    out = []
    for lx, ly in ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)):
        out.append((cx + c * lx - s * ly, cy + s * lx + c * ly))
    return tuple(out)


def polygon_area(poly: Sequence[Point2]) -> float:
    return signed_area(poly) if len(poly) >= 3 else 0.0


def polygon_centroid(poly: Sequence[Point2]) -> Point2:
    a = 0.0
    cx = cy = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cross = x0 * y1 - x1 * y0
        a += cross
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
    if abs(a) < 1e-300:
        return (sum(p[0] for p in poly) / n, sum(p[1] for p in poly) / n)
    return (cx / (3.0 * a), cy / (3.0 * a))


def is_convex(poly: Sequence[Point2], eps: float = EPS_GEOM) -> bool:
    """CCW convexity check; collinear vertices are tolerated."""
    n = len(poly)
    if n < 3:
        return False
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        cx, cy = poly[(i + 2) % n]
        if (bx - ax) * (cy - by) - (by - ay) * (cx - bx) < -eps:
            return False
    return polygon_area(poly) > 0


def _clip(subject: Sequence[Point2], clipper: Sequence[Point2]) -> list[Point2]:
    # Sutherland-Hodgman against each CCW edge of the convex clipper.
    out = list(subject)
    n = len(clipper)
    for i in range(n):
        if not out:
            break
        ex0, ey0 = clipper[i]
        ex1, ey1 = clipper[(i + 1) % n]
        edx, edy = ex1 - ex0, ey1 - ey0
        inp = out
        out = []
        m = len(inp)
        px, py = inp[-1]
        pd = edx * (py - ey0) - edy * (px - ex0)
        for j in range(m):
            qx, qy = inp[j]
            qd = edx * (qy - ey0) - edy * (qx - ex0)
            if qd >= 0.0:
                if pd < 0.0:
                    t = pd / (pd - qd)
                    out.append((px + t * (qx - px), py + t * (qy - py)))
                out.append((qx, qy))
            elif pd >= 0.0:
                t = pd / (pd - qd)
                out.append((px + t * (qx - px), py + t * (qy - py)))
            px, py, pd = qx, qy, qd
    return out


def _clip_area(a: Sequence[Point2], b: Sequence[Point2]) -> float:
    pts = _clip(a, b)
    if len(pts) < 3:
        return 0.0
    area = signed_area(pts)
    return area if area > EPS_AREA else 0.0


def clip_convex(a: Sequence[Point2], b: Sequence[Point2]) -> Polygon2:
    """Intersection of two convex CCW polygons; ``()`` when they only touch or are apart."""
    if not is_convex(a) or not is_convex(b):
        raise NonConvex("clip_convex requires convex counter-clockwise polygons")
    pts = _clip(a, b)
    if len(pts) < 3 or signed_area(pts) <= EPS_AREA:
        return ()
    cleaned: list[Point2] = []
    for p in pts:
        if not cleaned or math.dist(cleaned[-1], p) > 1e-12:
            cleaned.append(p)
    if len(cleaned) > 1 and math.dist(cleaned[0], cleaned[-1]) <= 1e-12:
        cleaned.pop()
    return tuple(cleaned)


def z_overlap(a: Obb, b: Obb) -> float:
    return max(0.0, min(a.z_max, b.z_max) - max(a.z_min, b.z_min))


def obb_intersection_volume(a: Obb, b: Obb) -> float:
    dz = z_overlap(a, b)
    if dz <= 0.0:
        return 0.0
    ax, ay = a.base_center
    bx, by = b.base_center
    r = a.radius + b.radius
    if (ax - bx) ** 2 + (ay - by) ** 2 >= r * r:
        return 0.0
    # Clip in a fixed argument order so the result is exactly symmetric.
    if (a.base_center, a.half_extents, a.yaw) > (b.base_center, b.half_extents, b.yaw):
        a, b = b, a
    return _clip_area(footprint(a), footprint(b)) * dz


def obb_iou(a: Obb, b: Obb) -> float:
    inter = obb_intersection_volume(a, b)
    if inter <= 0.0:
        return 0.0
    union = a.volume + b.volume - inter
    return min(1.0, inter / union)


def _point_segment_distance(px: float, py: float, a: Point2, b: Point2) -> float:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0.0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def boundary_distance(p: Sequence[float], poly: Sequence[Point2]) -> float:
    px, py = p[0], p[1]
    n = len(poly)
    return min(_point_segment_distance(px, py, poly[i], poly[(i + 1) % n]) for i in range(n))


def point_in_polygon(p: Sequence[float], poly: Sequence[Point2], eps: float = EPS_GEOM) -> bool:
    """Crossing-number test; points within ``eps`` of the boundary count as inside."""
    px, py = p[0], p[1]
    inside = False
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if (y0 > py) != (y1 > py):
            xc = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            if xc > px:
                inside = not inside
    if inside:
        return True
    return boundary_distance(p, poly) <= eps


def point_polygon_distance(p: Sequence[float], poly: Sequence[Point2]) -> float:
    if point_in_polygon(p, poly):
        return 0.0
    return boundary_distance(p, poly)


def support_polygon(parent: Union[RoomShell, tuple[ObjectSpec, Pose]]) -> Polygon2:
    """Floor polygon for the room, otherwise the parent's top face (= its footprint)."""
    if isinstance(parent, RoomShell):
        return parent.floor_polygon
    obj, pose = parent
    return footprint(obb_of(obj, pose))


@lru_cache(maxsize=256)
def convex_pieces(poly: Polygon2) -> tuple[Polygon2, ...]:
    """Split a simple CCW polygon into convex pieces (ear-clipped triangles).

    Convex input is returned as a single piece.
    """
    if is_convex(poly):
        return (tuple(poly),)
    return triangulate(poly)


def triangulate(poly: Sequence[Point2]) -> tuple[Polygon2, ...]:
    idx = list(range(len(poly)))
    tris: list[Polygon2] = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3 and guard < 10 * len(poly) ** 2:
        guard += 1
        n = len(idx)
        for k in range(n):
            i0, i1, i2 = idx[(k - 1) % n], idx[k], idx[(k + 1) % n]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= 1e-15:
                continue
            ear = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                q = poly[j]
                if cross(a, b, q) >= 0 and cross(b, c, q) >= 0 and cross(c, a, q) >= 0:
                    ear = False
                    break
            if ear:
                tris.append((a, b, c))
                idx.pop(k)
                break
        else:
            # only collinear leftovers remain
            break
    if len(idx) == 3:
        a, b, c = (poly[i] for i in idx)
        if cross(a, b, c) > 1e-15:
            tris.append((a, b, c))
    return tuple(tris)


def footprint_containment_deficit(inner: Sequence[Point2], outer: Sequence[Point2]) -> float:
    """Area of ``inner`` lying outside ``outer``; 0 when fully contained."""
    total = polygon_area(inner)
    covered = 0.0
    for piece in convex_pieces(tuple(outer)):
        covered += _clip_area(inner, piece)
    deficit = total - covered
    return deficit if deficit > 1e-12 * max(1.0, total) else 0.0
