"""Instruction documents: parsing, serialization, and the extractor boundary.

An instruction is the structured product of scene-information extraction:
room shell, objects, constraints and optional approximate target poses.
Documents are JSON; unknown fields are rejected.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Iterable, Mapping, Protocol

from .scene import (
    DEFAULT_CATEGORIES,
    FLOOR,
    Constraint,
    ObjectSpec,
    Pose,
    Relation,
    RoomShell,
    Scene,
    ValidationReport,
    validate_scene,
)

FORMAT_VERSION = 1


class InstructionError(ValueError):
    """Base class for instruction/scene document problems."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class DocumentSyntaxError(InstructionError):
    pass


class SchemaError(InstructionError):
    pass


class SemanticError(InstructionError):
    def __init__(self, kind: str, message: str, field: str | None = None, issues=None):
        super().__init__(f"{kind}: {message}", field)
        self.kind = kind
        self.issues = list(issues or [])


class ExtractionEmpty(ValueError):
    pass


@dataclass(frozen=True)
class Instruction:
    shell: RoomShell
    objects: tuple[ObjectSpec, ...]
    constraints: tuple[Constraint, ...] = ()
    targets: Mapping[str, Pose] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.targets is not None:
            object.__setattr__(self, "targets", dict(self.targets))

    def to_scene(self, poses: Mapping[str, Pose] | None = None) -> Scene:
        return Scene(self.shell, self.objects, self.constraints, poses, self.targets)

    @classmethod
    def from_scene(cls, scene: Scene) -> "Instruction":
        return cls(scene.shell, scene.objects, scene.constraints, scene.targets)


# --------------------------------------------------------------------------- parsing


def _expect(cond: bool, message: str, path: str) -> None:
    if not cond:
        raise SchemaError(message, path)


def _number(value: Any, path: str) -> float:
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool), "expected a number", path)
    _expect(math.isfinite(value), "expected a finite number", path)
    return float(value)


def _vector(value: Any, n: int, path: str) -> tuple[float, ...]:
    _expect(isinstance(value, list) and len(value) == n, f"expected a list of {n} numbers", path)
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _keys(obj: Any, required: set[str], optional: set[str], path: str) -> None:
    _expect(isinstance(obj, dict), "expected an object", path)
    missing = required - obj.keys()
    if missing:
        raise SchemaError(f"missing field(s) {sorted(missing)}", path)
    extra = obj.keys() - required - optional
    if extra:
        raise SchemaError(f"unknown field(s) {sorted(extra)}", path)


def _pose(obj: Any, path: str) -> Pose:
    _keys(obj, {"position", "yaw"}, set(), path)
    pos = _vector(obj["position"], 3, f"{path}.position")
    return Pose(pos, _number(obj["yaw"], f"{path}.yaw"))


def _pose_map(obj: Any, path: str) -> dict[str, Pose]:
    _expect(isinstance(obj, dict), "expected an object keyed by object id", path)
    return {str(k): _pose(v, f"{path}.{k}") for k, v in obj.items()}


def _load_json(doc: bytes | str) -> Any:
    if isinstance(doc, bytes):
        try:
            doc = doc.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DocumentSyntaxError(f"document is not UTF-8: {exc}") from None
    try:
        return json.loads(doc)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(f"{exc.msg} (line {exc.lineno}, column {exc.colno})") from None


def _parse_body(data: Any, *, scene_fields: bool) -> dict[str, Any]:
    optional = {"constraints", "targets"}
    if scene_fields:
        optional |= {"poses", "format_version", "meta"}
    _keys(data, {"room", "objects"}, optional, "$")

    room = data["room"]
    _keys(room, {"type", "floor", "height"}, set(), "room")
    _expect(isinstance(room["type"], str), "expected a string", "room.type")
    _expect(isinstance(room["floor"], list), "expected a list of [x, y] vertices", "room.floor")
    floor = tuple(_vector(v, 2, f"room.floor[{i}]") for i, v in enumerate(room["floor"]))
    shell = RoomShell(room["type"], floor, _number(room["height"], "room.height"))

    _expect(isinstance(data["objects"], list), "expected a list", "objects")
    objects = []
    for i, o in enumerate(data["objects"]):
        path = f"objects[{i}]"
        _keys(o, {"id", "category", "dims"}, set(), path)
        _expect(isinstance(o["id"], str) and o["id"], "expected a non-empty string", f"{path}.id")
        _expect(isinstance(o["category"], str), "expected a string", f"{path}.category")
        objects.append(ObjectSpec(o["id"], o["category"], _vector(o["dims"], 3, f"{path}.dims")))

    constraints = []
    raw = data.get("constraints", [])
    _expect(isinstance(raw, list), "expected a list", "constraints")
    for i, c in enumerate(raw):
        path = f"constraints[{i}]"
        _keys(c, {"subject", "relation", "reference"}, set(), path)
        for key in ("subject", "relation", "reference"):
            _expect(isinstance(c[key], str), "expected a string", f"{path}.{key}")
        try:
            rel = Relation.parse(c["relation"])
        except ValueError:
            raise SemanticError("UnknownRelation", repr(c["relation"]), f"{path}.relation") from None
        constraints.append(Constraint(c["subject"], rel, c["reference"]))

    out: dict[str, Any] = {"shell": shell, "objects": objects, "constraints": constraints}
    out["targets"] = _pose_map(data["targets"], "targets") if "targets" in data else None
    if scene_fields:
        if "format_version" in data:
            _expect(data["format_version"] == FORMAT_VERSION, f"unsupported version (want {FORMAT_VERSION})", "format_version")
        out["poses"] = _pose_map(data["poses"], "poses") if "poses" in data else None
        meta = data.get("meta")
        _expect(meta is None or isinstance(meta, dict), "expected an object", "meta")
        out["meta"] = meta
    return out


def find_ownership_cycle(constraints: Iterable[Constraint]) -> list[str] | None:
    """Return one cycle of ``on`` edges as a list of ids, or None."""
    edges: dict[str, list[str]] = {}
    for c in constraints:
        if c.relation is Relation.ON and c.reference != FLOOR:
            edges.setdefault(c.subject, []).append(c.reference)
    state: dict[str, int] = {}

    def visit(node: str, stack: list[str]) -> list[str] | None:
        state[node] = 1
        stack.append(node)
        for nxt in edges.get(node, ()):
            if state.get(nxt) == 1:
                return stack[stack.index(nxt):] + [nxt]
            if nxt not in state:
                found = visit(nxt, stack)
                if found:
                    return found
        stack.pop()
        state[node] = 2
        return None

    for start in sorted(edges):
        if start not in state:
            found = visit(start, [])
            if found:
                return found
    return None


def _semantic_checks(scene: Scene, vocabulary: Iterable[str] | None) -> None:
    report: ValidationReport = validate_scene(scene, vocabulary)
    if report:
        first = report.issues[0]
        raise SemanticError(first.kind, f"{first.subject} {first.detail}".strip(), issues=report.issues)
    cycle = find_ownership_cycle(scene.constraints)
    if cycle:
        raise SemanticError("CyclicOwnership", " on ".join(cycle))


def parse_instruction(doc: bytes | str, vocabulary: Iterable[str] | None = None) -> Instruction:
    """Parse and fully validate an instruction document."""
    body = _parse_body(_load_json(doc), scene_fields=False)
    instr = Instruction(body["shell"], body["objects"], body["constraints"], body["targets"])
    _semantic_checks(instr.to_scene(), vocabulary)
    return instr


@dataclass(frozen=True)
class SceneDocument:
    scene: Scene
    meta: dict | None = field(default=None)


def parse_scene(doc: bytes | str, vocabulary: Iterable[str] | None = None) -> SceneDocument:
    """Parse a scene file: the instruction schema plus ``poses``, ``format_version`` and ``meta``."""
    body = _parse_body(_load_json(doc), scene_fields=True)
    scene = Scene(body["shell"], body["objects"], body["constraints"], body["poses"], body["targets"])
    _semantic_checks(scene, vocabulary)
    return SceneDocument(scene, body["meta"])


# ---------------------------------------------------------------------- serialization


def _pose_dict(pose: Pose) -> dict:
    return {"position": list(pose.position), "yaw": pose.yaw}


def _body_dict(shell: RoomShell, objects, constraints, targets) -> dict:
    out: dict[str, Any] = {
        "room": {
            "type": shell.room_type,
            "floor": [list(v) for v in shell.floor_polygon],
            "height": shell.height,
        },
        "objects": [{"id": o.id, "category": o.category, "dims": list(o.dims)} for o in objects],
        "constraints": [
            {"subject": c.subject, "relation": c.relation.value, "reference": c.reference} for c in constraints
        ],
    }
    if targets is not None:
        out["targets"] = {k: _pose_dict(v) for k, v in targets.items()}
    return out


def _dumps(data: dict) -> str:
    return json.dumps(data, indent=2) + "\n"


def serialize_instruction(instr: Instruction) -> str:
    return _dumps(_body_dict(instr.shell, instr.objects, instr.constraints, instr.targets))


def serialize_scene(scene: Scene, meta: Mapping | None = None) -> str:
    data = {"format_version": FORMAT_VERSION}
    data.update(_body_dict(scene.shell, scene.objects, scene.constraints, scene.targets))
    if scene.poses is not None:
        # emit poses in object order so output bytes do not depend on dict history
        data["poses"] = {o.id: _pose_dict(scene.poses[o.id]) for o in scene.objects if o.id in scene.poses}
    if meta:
        data["meta"] = dict(meta)
    return _dumps(data)


# ------------------------------------------------------------------------ extraction


class ExtractorBoundary(Protocol):
    """Anything that turns a free-text prompt into an Instruction.

    Implementations must not keep mutable per-session state so that
    concurrent independent requests are safe.
    """

    def extract(self, prompt: str) -> Instruction: ...


def extract_validated(extractor: ExtractorBoundary, prompt: str, vocabulary: Iterable[str] | None = None) -> Instruction:
    """Run an extractor and push its output through full document validation."""
    return parse_instruction(serialize_instruction(extractor.extract(prompt)), vocabulary)


@lru_cache(maxsize=1)
def load_stub_rules() -> dict:
    text = resources.files("hlg.data").joinpath("stub_rules.json").read_text(encoding="utf-8")
    return json.loads(text)


def _keyword_pattern(keyword: str) -> re.Pattern:
    words = r"\s+".join(re.escape(w) for w in keyword.split())
    return re.compile(rf"\b{words}(?:e?s)?\b")


def stub_extract(prompt: str, seed: int = 0) -> Instruction:
    """Deterministic keyword-matching stand-in for an LLM extractor.

    Objects come from the category keyword table (longest keyword wins,
    one object per mentioned category, ordered by first mention). Room size
    is drawn from ``seed``. Constraints come from the pair-rule table:
    tabletop items go ``on`` the highest-priority surface present.
    """
    rules = load_stub_rules()
    text = prompt.lower()
    if not text.strip():
        raise ExtractionEmpty("empty prompt")

    keyword_table = sorted(
        ((kw, cat) for cat, entry in rules["categories"].items() for kw in entry["keywords"]),
        key=lambda kc: (-len(kc[0]), kc[0]),
    )
    masked = text
    first_seen: dict[str, int] = {}
    for kw, cat in keyword_table:
        for m in _keyword_pattern(kw).finditer(masked):
            first_seen[cat] = min(first_seen.get(cat, m.start()), m.start())
            masked = masked[: m.start()] + " " * (m.end() - m.start()) + masked[m.end():]
    if not first_seen:
        raise ExtractionEmpty(f"no known object category in prompt {prompt!r}")
    cats = sorted(first_seen, key=lambda c: (first_seen[c], c))

    room_type = "other"
    best = None
    for rtype, kws in rules["room_keywords"].items():
        for kw in kws:
            m = _keyword_pattern(kw).search(text)
            if m and (best is None or m.start() < best):
                best, room_type = m.start(), rtype

    rng = random.Random(seed)
    size = rules["room_size"]
    w = round(rng.uniform(*size["width"]), 1)
    d = round(rng.uniform(*size["depth"]), 1)
    shell = RoomShell(room_type, ((0.0, 0.0), (w, 0.0), (w, d), (0.0, d)), size["height"])

    ids = {c: f"{c}_1" for c in cats}
    objects = [ObjectSpec(ids[c], c, rules["categories"][c]["dims"]) for c in cats]

    surface = next((s for s in rules["surface_priority"] if s in ids), None)
    constraints: list[Constraint] = []
    if surface is not None:
        for c in cats:
            if rules["categories"][c].get("tabletop"):
                constraints.append(Constraint(ids[c], Relation.ON, ids[surface]))

    def parent_of(cid: str) -> str:
        for con in constraints:
            if con.relation is Relation.ON and con.subject == cid:
                return con.reference
        return FLOOR

    for rule in rules["pair_rules"]:
        subj = rule["subject"]
        if subj not in ids:
            continue
        ref = rule["reference"]
        if ref == "@surface":
            ref_id = parent_of(ids[subj])
            if ref_id == FLOOR:
                continue
        elif ref == FLOOR:
            ref_id = FLOOR
        elif ref in ids:
            ref_id = ids[ref]
            if parent_of(ids[subj]) != parent_of(ref_id):
                continue
        else:
            continue
        constraints.append(Constraint(ids[subj], Relation.parse(rule["relation"]), ref_id))

    return Instruction(shell, objects, constraints, None)


@dataclass(frozen=True)
class StubExtractor:
    seed: int = 0

    def extract(self, prompt: str) -> Instruction:
        return stub_extract(prompt, self.seed)
