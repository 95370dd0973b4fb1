"""Hierarchical indoor layout generation from structured instructions."""

from .fgla import build_layer_graphs, build_ownership, placement_order, validate_disjointness
from .geometry import obb_intersection_volume, obb_iou, obb_of
from .instruction import Instruction, parse_instruction, parse_scene, serialize_instruction, serialize_scene, stub_extract
from .placement import OffsetRules, place_scene
from .scene import FLOOR, ObjectSpec, Pose, Relation, RoomShell, Scene, validate_scene

__version__ = "0.1.0"

__all__ = [
    "FLOOR",
    "Instruction",
    "ObjectSpec",
    "OffsetRules",
    "Pose",
    "Relation",
    "RoomShell",
    "Scene",
    "build_layer_graphs",
    "build_ownership",
    "obb_intersection_volume",
    "obb_iou",
    "obb_of",
    "parse_instruction",
    "parse_scene",
    "place_scene",
    "placement_order",
    "serialize_instruction",
    "serialize_scene",
    "stub_extract",
    "validate_disjointness",
    "validate_scene",
]
