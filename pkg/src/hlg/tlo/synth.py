"""Procedural labeled layouts for training and evaluation.

A sample is built in three steps: a (possibly L-shaped) room, furniture
rejection-sampled onto the floor, then tabletop items (and the odd item in
a container) rejection-sampled onto support surfaces. The clean layout is
the ground truth; the coarse input is a Gaussian perturbation of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..fgla import OwnershipTree, build_ownership
from ..geometry import Obb, _clip_area, footprint, footprint_containment_deficit, obb_of
from ..instruction import Instruction, load_stub_rules, parse_scene, serialize_scene
from ..scene import FLOOR, Constraint, ObjectSpec, Pose, Relation, RoomShell, Scene

MAX_ATTEMPTS = 10_000
PER_OBJECT_ATTEMPTS = 400
FLOOR_MARGIN = 0.05
ITEM_MARGIN = 0.02

CONTAINERS = ("basket", "bowl", "plate")
CONTAINED = ("apple", "teacup")
SEATING = ("sofa", "armchair", "chair")
EXCLUDED_FLOOR = ("rug",)


class GenerationOverflow(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    n_floor: tuple[int, int] = (2, 5)
    n_table_items: tuple[int, int] = (1, 5)
    room_width: tuple[float, float] = (4.0, 6.0)
    room_depth: tuple[float, float] = (3.5, 5.0)
    height: float = 2.8
    l_shape_prob: float = 0.25
    sigma_pos: float = 0.15
    sigma_yaw: float = 0.3
    max_relations_per_layer: int = 2

    def __post_init__(self) -> None:
        for lo, hi in (self.n_floor, self.n_table_items, self.room_width, self.room_depth):
            if lo > hi or lo < 0:
                raise ValueError("invalid range in SynthSpec")
        if self.n_floor[0] < 1 or self.room_width[0] <= 0 or self.room_depth[0] <= 0:
            raise ValueError("need at least one floor object and a positive room size")


@dataclass(frozen=True)
class LabeledSample:
    seed: int
    scene: Scene  # coarse poses, targets = ground truth
    tree: OwnershipTree
    truth: dict = field(default_factory=dict)  # id -> ground-truth Pose

    @property
    def instruction(self) -> Instruction:
        return Instruction.from_scene(self.scene)

    def ground_truth_scene(self) -> Scene:
        return self.scene.with_poses(self.truth)


def _catalogue():
    cats = load_stub_rules()["categories"]
    floor = [c for c, e in cats.items() if not e.get("tabletop") and c not in EXCLUDED_FLOOR]
    surfaces = [c for c, e in cats.items() if e.get("surface")]
    items = [c for c, e in cats.items() if e.get("tabletop")]
    return cats, floor, surfaces, items


def _room(rng: np.random.Generator, spec: SynthSpec) -> RoomShell:
    w = round(float(rng.uniform(*spec.room_width)), 2)
    d = round(float(rng.uniform(*spec.room_depth)), 2)
    if rng.random() < spec.l_shape_prob:
        cw = round(float(rng.uniform(0.25, 0.45)) * w, 2)
        cd = round(float(rng.uniform(0.25, 0.45)) * d, 2)
        poly = ((0.0, 0.0), (w, 0.0), (w, d - cd), (w - cw, d - cd), (w - cw, d), (0.0, d))
        room_type = "other"
    else:
        poly = ((0.0, 0.0), (w, 0.0), (w, d), (0.0, d))
        room_type = "living_room"
    return RoomShell(room_type, poly, spec.height)


def _inflated(box: Obb, margin: float) -> Obb:
    hx, hy = box.half_extents
    return Obb(box.base_center, box.z_min, box.z_max, (hx + margin, hy + margin), box.yaw)


def _fits(box: Obb, support, others: list[Obb], margin: float) -> bool:
    if footprint_containment_deficit(footprint(_inflated(box, margin)), support) > 0.0:
        return False
    fp = footprint(_inflated(box, margin / 2))
    for o in others:
        if _clip_area(fp, footprint(_inflated(o, margin / 2))) > 0.0:
            return False
    return True


def synth_scene(seed: int, spec: SynthSpec | None = None) -> LabeledSample:
    """Deterministic labeled sample for ``seed``."""
    spec = spec or SynthSpec()
    rng = np.random.default_rng(seed)
    cats, floor_cats, surface_cats, item_cats = _catalogue()
    shell = _room(rng, spec)
    xs = [p[0] for p in shell.floor_polygon]
    ys = [p[1] for p in shell.floor_polygon]

    attempts = 0
    counter: dict[str, int] = {}
    objects: list[ObjectSpec] = []
    truth: dict[str, Pose] = {}
    parent: dict[str, str] = {}

    def new_object(cat: str) -> ObjectSpec:
        counter[cat] = counter.get(cat, 0) + 1
        scale = rng.uniform(0.85, 1.15, size=3)
        dims = tuple(round(float(b * s), 3) for b, s in zip(cats[cat]["dims"], scale))
        return ObjectSpec(f"{cat}_{counter[cat]}", cat, dims)

    # floor furniture, at least one surface first so tabletop items have a home
    n_floor = int(rng.integers(spec.n_floor[0], spec.n_floor[1] + 1))
    chosen = [surface_cats[int(rng.integers(len(surface_cats)))]]
    chosen += [floor_cats[int(rng.integers(len(floor_cats)))] for _ in range(n_floor - 1)]
    placed_floor: list[Obb] = []
    for cat in chosen:
        obj = new_object(cat)
        for _ in range(PER_OBJECT_ATTEMPTS):
            attempts += 1
            if attempts > MAX_ATTEMPTS:
                raise GenerationOverflow(f"seed {seed}: rejection budget exhausted")
            yaw = float(rng.integers(-2, 2)) * math.pi / 2
            pose = Pose((float(rng.uniform(min(xs), max(xs))), float(rng.uniform(min(ys), max(ys))), 0.0), yaw)
            box = obb_of(obj, pose)
            if _fits(box, shell.floor_polygon, placed_floor, FLOOR_MARGIN):
                objects.append(obj)
                truth[obj.id] = pose
                parent[obj.id] = FLOOR
                placed_floor.append(box)
                break
    by_id = {o.id: o for o in objects}
    hosts = [o.id for o in objects if o.category in surface_cats]
    if not hosts:
        raise GenerationOverflow(f"seed {seed}: no support surface could be placed")

    n_items = int(rng.integers(spec.n_table_items[0], spec.n_table_items[1] + 1))
    on_host: dict[str, list[Obb]] = {}
    for _ in range(n_items):
        containers = [oid for oid in by_id if by_id[oid].category in CONTAINERS and parent[oid] != FLOOR]
        if containers and rng.random() < 0.4:
            host = containers[int(rng.integers(len(containers)))]
            cat = CONTAINED[int(rng.integers(len(CONTAINED)))]
        else:
            host = hosts[int(rng.integers(len(hosts)))]
            cat = item_cats[int(rng.integers(len(item_cats)))]
        obj = new_object(cat)
        hpose, hobj = truth[host], by_id[host]
        support = footprint(obb_of(hobj, hpose))
        base = hpose.z + hobj.dims[2]
        hx, hy = hobj.half_extents
        c, s = math.cos(hpose.yaw), math.sin(hpose.yaw)
        siblings = on_host.setdefault(host, [])
        for _ in range(PER_OBJECT_ATTEMPTS):
            attempts += 1
            if attempts > MAX_ATTEMPTS:
                raise GenerationOverflow(f"seed {seed}: rejection budget exhausted")
            lx, ly = float(rng.uniform(-hx, hx)), float(rng.uniform(-hy, hy))
            pose = Pose((hpose.x + c * lx - s * ly, hpose.y + s * lx + c * ly, base), float(rng.uniform(-math.pi, math.pi)))
            box = obb_of(obj, pose)
            if _fits(box, support, siblings, ITEM_MARGIN):
                objects.append(obj)
                by_id[obj.id] = obj
                truth[obj.id] = pose
                parent[obj.id] = host
                siblings.append(box)
                break

    constraints = [Constraint(o.id, Relation.ON, parent[o.id]) for o in objects if parent[o.id] != FLOOR]
    constraints += _relations(rng, objects, truth, parent, shell, spec, by_id)

    coarse: dict[str, Pose] = {}
    depth_sorted = sorted(objects, key=lambda o: _depth(o.id, parent))
    for o in depth_sorted:
        t = truth[o.id]
        dx, dy = rng.normal(0.0, spec.sigma_pos, size=2)
        dyaw = rng.normal(0.0, spec.sigma_yaw)
        p = parent[o.id]
        z = 0.0 if p == FLOOR else coarse[p].z + by_id[p].dims[2]
        coarse[o.id] = Pose((t.x + float(dx), t.y + float(dy), z), t.yaw + float(dyaw))

    scene = Scene(shell, tuple(objects), tuple(constraints), coarse, dict(truth))
    tree = build_ownership(Instruction.from_scene(scene))
    return LabeledSample(seed, scene, tree, dict(truth))


def _depth(oid: str, parent: dict[str, str]) -> int:
    d = 0
    while parent[oid] != FLOOR:
        oid = parent[oid]
        d += 1
    return d


def _relations(rng, objects, truth, parent, shell, spec, by_id) -> list[Constraint]:
    """Intra-layer relations read off the ground truth; subjects always come
    later in declaration order than references, so relations stay acyclic."""
    out: list[Constraint] = []
    layers: dict[str, list[str]] = {}
    for o in objects:
        layers.setdefault(parent[o.id], []).append(o.id)
    for layer, members in layers.items():
        pairs = [(b, a) for i, a in enumerate(members) for b in members[i + 1:]]
        if not pairs:
            continue
        k = min(spec.max_relations_per_layer, len(pairs))
        for idx in rng.choice(len(pairs), size=k, replace=False):
            subj, ref = pairs[int(idx)]
            rp, sp = truth[ref], truth[subj]
            c, s = math.cos(rp.yaw), math.sin(rp.yaw)
            dx, dy = sp.x - rp.x, sp.y - rp.y
            lx, ly = c * dx + s * dy, -s * dx + c * dy
            if by_id[subj].category in SEATING and by_id[ref].category not in SEATING:
                rel = Relation.FACE_TO
            elif abs(lx) >= abs(ly):
                rel = Relation.RIGHT_OF if lx > 0 else Relation.LEFT_OF
            else:
                rel = Relation.IN_FRONT_OF if ly > 0 else Relation.BEHIND
            out.append(Constraint(subj, rel, ref))
    return out


def sample_to_text(sample: LabeledSample) -> str:
    return serialize_scene(sample.scene, meta={"seed": sample.seed, "generator": "hlg.synth"})


def sample_from_text(text: str | bytes) -> LabeledSample:
    doc = parse_scene(text)
    scene = doc.scene
    if scene.targets is None:
        raise ValueError("a labeled sample needs ground-truth targets")
    seed = int((doc.meta or {}).get("seed", -1))
    tree = build_ownership(Instruction.from_scene(scene))
    return LabeledSample(seed, scene, tree, dict(scene.targets))
