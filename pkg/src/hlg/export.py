"""Wavefront OBJ export of box layouts (z-up, meters)."""

from __future__ import annotations

from .geometry import convex_pieces, footprint, is_convex, obb_of
from .scene import Scene

# Triangles of a box whose corners are numbered bottom 0-3, top 4-7 (CCW from above).
_BOX_FACES = (
    (0, 2, 1), (0, 3, 2),  # bottom, facing -z
    (4, 5, 6), (4, 6, 7),  # top
    (0, 1, 5), (0, 5, 4),
    (1, 2, 6), (1, 6, 5),
    (2, 3, 7), (2, 7, 6),
    (3, 0, 4), (3, 4, 7),
)


def _fmt(v: float) -> str:
    return repr(float(v))


def scene_to_obj(scene: Scene) -> str:
    lines = ["# hlg layout export", "# units: meters, +z up"]
    base = 1
    for o in scene.objects:
        box = obb_of(o, scene.poses[o.id])
        fp = footprint(box)
        lines.append(f"o {o.id}")
        for z in (box.z_min, box.z_max):
            for x, y in fp:
                lines.append(f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}")
        for a, b, c in _BOX_FACES:
            lines.append(f"f {base + a} {base + b} {base + c}")
        base += 8

    poly = scene.shell.floor_polygon
    lines.append("o floor")
    for x, y in poly:
        lines.append(f"v {_fmt(x)} {_fmt(y)} 0.0")
    index = {p: k for k, p in enumerate(poly)}
    if is_convex(poly):
        tris = [(0, k, k + 1) for k in range(1, len(poly) - 1)]
    else:
        tris = [tuple(index[p] for p in tri) for tri in convex_pieces(poly)]
    for a, b, c in tris:
        lines.append(f"f {base + a} {base + b} {base + c}")
    return "\n".join(lines) + "\n"


def read_obj(text: str) -> dict[str, list[tuple[float, float, float]]]:
    """Vertices grouped by ``o`` name."""
    groups: dict[str, list[tuple[float, float, float]]] = {}
    current = None
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "o":
            current = parts[1]
            groups[current] = []
        elif parts[0] == "v":
            groups.setdefault(current or "", []).append(tuple(float(v) for v in parts[1:4]))
    return groups
