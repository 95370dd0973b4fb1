"""Out-of-bound rate, orientation correctness and per-scene reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

from .fgla import OwnershipTree, build_ownership
from .geometry import footprint, footprint_containment_deficit, obb_of
from .instruction import Instruction
from .scene import FLOOR, Pose, Scene, wrap_angle
from .tlo.losses import LossBreakdown, loss_total

EPS_OOB_AREA = 1e-6
DEFAULT_ORI_THRESHOLD = math.radians(15.0)

CSV_HEADER = ("scene_id", "oob", "ori", "owner", "collision", "stability", "align", "total")


@dataclass(frozen=True)
class ObjectReport:
    oob: bool
    ori_ok: bool | None
    deficit_area: float


@dataclass(frozen=True)
class SceneReport:
    oob_rate: float
    ori_score: float | None
    loss: LossBreakdown
    per_object: dict[str, ObjectReport] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "oob_rate": self.oob_rate,
            "ori_score": self.ori_score,
            "loss": asdict(self.loss),
            "per_object": {k: asdict(v) for k, v in self.per_object.items()},
        }


def oob(scene: Scene, tree: OwnershipTree | None = None) -> tuple[dict[str, float], float]:
    """Per-object containment deficit (m^2) and the OOB rate in percent.

    An object is out of bounds when its footprint pokes more than 1e-6 m^2
    outside its container: the floor for depth-0 objects, the parent's top
    face otherwise.
    """
    tree = tree or build_ownership(Instruction.from_scene(scene))
    objs = scene.by_id()
    deficits = {}
    for o in scene.objects:
        p = tree.parent[o.id]
        if p == FLOOR:
            container = scene.shell.floor_polygon
        else:
            container = footprint(obb_of(objs[p], scene.poses[p]))
        deficits[o.id] = footprint_containment_deficit(footprint(obb_of(o, scene.poses[o.id])), container)
    n_out = sum(1 for d in deficits.values() if d > EPS_OOB_AREA)
    rate = 100.0 * n_out / len(deficits) if deficits else 0.0
    return deficits, rate


def ori(
    scene: Scene,
    targets: Mapping[str, Pose] | None = None,
    threshold: float = DEFAULT_ORI_THRESHOLD,
) -> tuple[dict[str, bool], float | None]:
    """Yaw within ``threshold`` (inclusive) of the target, per object; score in percent or None."""
    targets = scene.targets if targets is None else targets
    ok = {}
    for oid, t in (targets or {}).items():
        err = abs(wrap_angle(scene.poses[oid].yaw - t.yaw))
        ok[oid] = err <= threshold + 1e-12
    score = 100.0 * sum(ok.values()) / len(ok) if ok else None
    return ok, score


def report(
    scene: Scene,
    tree: OwnershipTree | None = None,
    targets: Mapping[str, Pose] | None = None,
    threshold: float = DEFAULT_ORI_THRESHOLD,
) -> SceneReport:
    tree = tree or build_ownership(Instruction.from_scene(scene))
    targets = scene.targets if targets is None else targets
    deficits, rate = oob(scene, tree)
    ori_ok, score = ori(scene, targets, threshold)
    loss = loss_total(scene, tree, targets)
    per = {
        o.id: ObjectReport(deficits[o.id] > EPS_OOB_AREA, ori_ok.get(o.id), deficits[o.id]) for o in scene.objects
    }
    return SceneReport(rate, score, loss, per)


def report_csv(rows: Iterable[tuple[str, SceneReport]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for scene_id, r in rows:
        w.writerow([scene_id, repr(r.oob_rate), "" if r.ori_score is None else repr(r.ori_score)]
                   + [repr(v) for v in r.loss.row()])
    return buf.getvalue()


def report_json(r: SceneReport) -> str:
    return json.dumps(r.to_dict(), indent=2) + "\n"
