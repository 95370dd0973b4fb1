"""Scene formalism: room shell, objects, relations, constraints and poses.

All types here are frozen value objects. A scene is the triple
(objects, room type, constraints) plus optional placed poses and
instruction-supplied target poses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

FLOOR = "floor"

ROOM_TYPES = ("living_room", "bedroom", "kitchen", "dining_room", "office", "other")

DEFAULT_CATEGORIES: tuple[str, ...] = (
    # floor furniture
    "sofa",
    "armchair",
    "chair",
    "coffee_table",
    "dining_table",
    "desk",
    "side_table",
    "tv_stand",
    "cabinet",
    "bookshelf",
    "wardrobe",
    "bed",
    "floor_lamp",
    "plant",
    "rug",
    # tabletop items
    "teapot",
    "teacup",
    "coaster",
    "basket",
    "apple",
    "book",
    "table_lamp",
    "vase",
    "plate",
    "bowl",
    "laptop",
    "mug",
    "other",
)


class Relation(str, Enum):
    ON = "on"
    LEFT_OF = "left_of"
    RIGHT_OF = "right_of"
    IN_FRONT_OF = "in_front_of"
    BEHIND = "behind"
    FACE_TO = "face_to"
    CENTER_OF = "center_of"
    AGAINST_WALL = "against_wall"
    NEAR = "near"

    @classmethod
    def parse(cls, text: str) -> "Relation":
        """Canonicalize a relation string; raises ValueError when unknown."""
        key = text.strip().lower().replace(" ", "_").replace("-", "_")
        return cls(key)


# Relations that may point at the room anchor instead of an object.
FLOOR_RELATIONS = frozenset({Relation.ON, Relation.CENTER_OF, Relation.AGAINST_WALL, Relation.NEAR})


def wrap_angle(theta: float) -> float:
    """Normalize an angle into [-pi, pi).

    Values already in range are returned untouched so that serialized yaws
    survive a round trip bit-exactly.
    """
    if -math.pi <= theta < math.pi:
        return float(theta)
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    wrapped -= math.pi
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


def signed_area(vertices: Sequence[Sequence[float]]) -> float:
    n = len(vertices)
    acc = 0.0
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12 and min(a[1], b[1]) - 1e-12 <= c[
            1
        ] <= max(a[1], b[1]) + 1e-12

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4):
        return True
    if o1 == 0 and on_seg(p1, p2, q1):
        return True
    if o2 == 0 and on_seg(p1, p2, q2):
        return True
    if o3 == 0 and on_seg(q1, q2, p1):
        return True
    if o4 == 0 and on_seg(q1, q2, p2):
        return True
    return False


def is_simple_polygon(vertices: Sequence[Sequence[float]]) -> bool:
    """True when no two non-adjacent edges touch."""
    n = len(vertices)
    if n < 3:
        return False
    for i in range(n):
        a1, a2 = vertices[i], vertices[(i + 1) % n]
        if math.dist(a1, a2) == 0.0:
            return False
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_cross(a1, a2, vertices[j], vertices[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True)
class RoomShell:
    room_type: str
    floor_polygon: tuple[tuple[float, float], ...]
    height: float

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "floor_polygon", tuple((float(x), float(y)) for x, y in self.floor_polygon)
        )
        object.__setattr__(self, "height", float(self.height))

    @property
    def diameter(self) -> float:
        pts = self.floor_polygon
        return max((math.dist(p, q) for p in pts for q in pts), default=0.0)

    def problems(self) -> list[str]:
        out = []
        if self.room_type not in ROOM_TYPES:
            out.append(f"unknown room type {self.room_type!r}")
        if not self.height > 0:
            out.append("height must be positive")
        if len(self.floor_polygon) < 3:
            out.append("floor polygon needs at least 3 vertices")
        elif not is_simple_polygon(self.floor_polygon):
            out.append("floor polygon is not simple")
        elif signed_area(self.floor_polygon) <= 0:
            out.append("floor polygon must be counter-clockwise with positive area")
        return out


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    category: str
    dims: tuple[float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))

    @property
    def half_extents(self) -> tuple[float, float]:
        return 0.5 * self.dims[0], 0.5 * self.dims[1]

    @property
    def footprint_area(self) -> float:
        return self.dims[0] * self.dims[1]


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def x(self) -> float:
        return self.position[0]

    @property
    def y(self) -> float:
        return self.position[1]

    @property
    def z(self) -> float:
        return self.position[2]

    def moved(self, dx: float = 0.0, dy: float = 0.0, dz: float = 0.0, dyaw: float = 0.0) -> "Pose":
        x, y, z = self.position
        return Pose((x + dx, y + dy, z + dz), self.yaw + dyaw)


@dataclass(frozen=True)
class Constraint:
    subject: str
    relation: Relation
    reference: str

    def as_tuple(self) -> tuple[str, str, str]:
        return self.subject, self.relation.value, self.reference


@dataclass(frozen=True)
class Issue:
    """One violated invariant, e.g. ``Issue("DuplicateId", "lamp")``."""

    kind: str
    subject: str
    detail: str = ""

    def __repr__(self) -> str:
        return f"{self.kind}({self.subject!r})"


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    def add(self, kind: str, subject: str, detail: str = "") -> None:
        self.issues.append(Issue(kind, subject, detail))

    @property
    def ok(self) -> bool:
        return not self.issues

    def kinds(self) -> set[str]:
        return {i.kind for i in self.issues}

    def __len__(self) -> int:
        return len(self.issues)

    def __iter__(self) -> Iterator[Issue]:
        return iter(self.issues)

    def __contains__(self, item: object) -> bool:
        if isinstance(item, Issue):
            item = (item.kind, item.subject)
        if isinstance(item, tuple) and len(item) == 2:
            return any((i.kind, i.subject) == item for i in self.issues)
        return False

    def __bool__(self) -> bool:  # truthy iff there is something to report
        return bool(self.issues)


@dataclass(frozen=True)
class Scene:
    shell: RoomShell
    objects: tuple[ObjectSpec, ...]
    constraints: tuple[Constraint, ...] = ()
    poses: Mapping[str, Pose] | None = None
    targets: Mapping[str, Pose] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.poses is not None:
            object.__setattr__(self, "poses", dict(self.poses))
        if self.targets is not None:
            object.__setattr__(self, "targets", dict(self.targets))

    @property
    def ids(self) -> list[str]:
        return [o.id for o in self.objects]

    def object(self, oid: str) -> ObjectSpec:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def by_id(self) -> dict[str, ObjectSpec]:
        return {o.id: o for o in self.objects}

    def with_poses(self, poses: Mapping[str, Pose]) -> "Scene":
        return replace(self, poses=dict(poses))

    def with_targets(self, targets: Mapping[str, Pose] | None) -> "Scene":
        return replace(self, targets=None if targets is None else dict(targets))


def validate_scene(scene: Scene, vocabulary: Iterable[str] | None = None) -> ValidationReport:
    """Check every scene invariant and list all violations.

    Pure and idempotent; an empty report means the scene is well formed.
    """
    report = ValidationReport()
    vocab = set(DEFAULT_CATEGORIES if vocabulary is None else vocabulary)

    for problem in scene.shell.problems():
        report.add("InvalidShell", "room", problem)

    seen: set[str] = set()
    diameter = scene.shell.diameter
    for obj in scene.objects:
        if obj.id in seen:
            report.add("DuplicateId", obj.id)
        seen.add(obj.id)
        if obj.id == FLOOR:
            report.add("ReservedId", obj.id)
        if obj.category not in vocab:
            report.add("UnknownCategory", obj.id, obj.category)
        if len(obj.dims) != 3 or not all(math.isfinite(d) and d > 0 for d in obj.dims):
            report.add("InvalidDims", obj.id)
        elif obj.dims[2] > scene.shell.height or max(obj.dims[0], obj.dims[1]) > diameter:
            report.add("OversizedObject", obj.id)

    for c in scene.constraints:
        for ref in (c.subject, c.reference):
            if ref == FLOOR:
                continue
            if ref not in seen:
                report.add("UnknownReference", ref)
        if c.subject == FLOOR:
            report.add("UnknownReference", c.subject, "floor cannot be a subject")
        if c.subject == c.reference:
            report.add("SelfReference", c.subject)
        if c.reference == FLOOR and c.relation not in FLOOR_RELATIONS:
            report.add("InvalidFloorRelation", c.subject, c.relation.value)
        if c.relation is Relation.AGAINST_WALL and c.reference != FLOOR:
            report.add("InvalidFloorRelation", c.subject, "against_wall must reference floor")

    for label, mapping in (("pose", scene.poses), ("target", scene.targets)):
        if mapping is None:
            continue
        for oid, pose in mapping.items():
            if oid not in seen:
                report.add("UnknownReference", oid, f"{label} for unknown object")
            elif not all(math.isfinite(v) for v in (*pose.position, pose.yaw)):
                report.add("InvalidPose", oid, label)
            elif label == "pose" and pose.z < 0:
                report.add("InvalidPose", oid, "negative z")
    if scene.poses is not None:
        for oid in seen:
            if oid not in scene.poses:
                report.add("MissingPose", oid)
    return report
