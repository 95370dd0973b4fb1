"""Fine-grained layout alignment.

Vertical decoupling turns ``on`` constraints into an ownership tree (one
parent per object, floor at the root). Horizontal decoupling groups the
remaining constraints into one scene graph per parent, so that no
constraint is shared between layers.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Mapping

from .instruction import Instruction
from .scene import FLOOR, Constraint, Relation, ValidationReport


class MultipleParents(ValueError):
    def __init__(self, oid: str):
        super().__init__(f"object {oid!r} has more than one 'on' constraint")
        self.id = oid


class CrossLayerConstraint(ValueError):
    def __init__(self, report: ValidationReport):
        subjects = ", ".join(i.subject for i in report)
        super().__init__(f"constraints cross ownership layers: {subjects}")
        self.report = report


class RelationCycle(ValueError):
    def __init__(self, nodes: list[str]):
        super().__init__(f"positional relations form a cycle among {nodes}")
        self.nodes = nodes


@dataclass(frozen=True)
class OwnershipTree:
    parent: Mapping[str, str]
    depth: Mapping[str, int]

    def children(self, pid: str) -> list[str]:
        return [c for c, p in self.parent.items() if p == pid]

    def ancestors(self, oid: str) -> list[str]:
        out = []
        p = self.parent[oid]
        while p != FLOOR:
            out.append(p)
            p = self.parent[p]
        return out

    @property
    def max_depth(self) -> int:
        return max(self.depth.values(), default=-1)


@dataclass(frozen=True)
class LayerGraph:
    layer_parent: str
    depth: int
    nodes: tuple[str, ...]
    edges: tuple[Constraint, ...]
    areas: Mapping[str, float] = field(default_factory=dict)


def build_ownership(instr: Instruction) -> OwnershipTree:
    parent: dict[str, str] = {o.id: FLOOR for o in instr.objects}
    seen: set[str] = set()
    for c in instr.constraints:
        if c.relation is not Relation.ON:
            continue
        if c.subject in seen:
            raise MultipleParents(c.subject)
        seen.add(c.subject)
        parent[c.subject] = c.reference

    depth: dict[str, int] = {}

    def resolve(oid: str, trail: tuple[str, ...] = ()) -> int:
        if oid in depth:
            return depth[oid]
        if oid in trail:
            raise ValueError(f"cyclic ownership through {oid!r}")
        p = parent[oid]
        d = 0 if p == FLOOR else resolve(p, trail + (oid,)) + 1
        depth[oid] = d
        return d

    for o in instr.objects:
        resolve(o.id)
    return OwnershipTree(parent, {o.id: depth[o.id] for o in instr.objects})


def _same_layer(c: Constraint, tree: OwnershipTree) -> bool:
    layer = tree.parent[c.subject]
    if c.reference == FLOOR:
        return layer == FLOOR
    # a relation to the layer's own parent (e.g. teapot center_of its table) stays in that layer
    return c.reference == layer or tree.parent[c.reference] == layer


def validate_disjointness(instr: Instruction, tree: OwnershipTree) -> ValidationReport:
    report = ValidationReport()
    for c in instr.constraints:
        if c.relation is Relation.ON:
            continue
        if not _same_layer(c, tree):
            report.add("CrossLayerConstraint", c.subject, f"{c.subject} {c.relation.value} {c.reference}")
    return report


def build_layer_graphs(instr: Instruction, tree: OwnershipTree) -> list[LayerGraph]:
    report = validate_disjointness(instr, tree)
    if report:
        raise CrossLayerConstraint(report)
    areas = {o.id: o.footprint_area for o in instr.objects}
    parents: list[str] = []
    for o in instr.objects:
        p = tree.parent[o.id]
        if p not in parents:
            parents.append(p)
    parents.sort(key=lambda p: (-1 if p == FLOOR else tree.depth[p], p))

    graphs = []
    for p in parents:
        nodes = tuple(o.id for o in instr.objects if tree.parent[o.id] == p)
        edges = tuple(c for c in instr.constraints if c.relation is not Relation.ON and tree.parent[c.subject] == p)
        graphs.append(
            LayerGraph(p, -1 if p == FLOOR else tree.depth[p], nodes, edges, {n: areas[n] for n in nodes})
        )
    return graphs


def _reaches(adj: dict[str, set[str]], src: str, dst: str) -> bool:
    stack, seen = [src], {src}
    while stack:
        u = stack.pop()
        if u == dst:
            return True
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return False


def placement_order(graph: LayerGraph) -> list[str]:
    """Reference-first topological order of a layer's nodes.

    Positional relations are hard ordering edges and must be acyclic.
    ``face_to`` only orients, so its edges are added when they do not close
    a cycle (mutual facing is common). Ready nodes are taken by descending
    footprint area, then by id.
    """
    nodes = set(graph.nodes)
    adj: dict[str, set[str]] = {n: set() for n in graph.nodes}
    soft = []
    for c in graph.edges:
        if c.reference not in nodes or c.subject not in nodes:
            continue
        if c.relation is Relation.FACE_TO:
            soft.append(c)
        else:
            adj[c.reference].add(c.subject)

    indeg = {n: 0 for n in graph.nodes}
    for u in adj:
        for v in adj[u]:
            indeg[v] += 1
    # cycle check on the hard edges alone
    probe = dict(indeg)
    queue = [n for n in graph.nodes if probe[n] == 0]
    visited = 0
    while queue:
        u = queue.pop()
        visited += 1
        for v in adj[u]:
            probe[v] -= 1
            if probe[v] == 0:
                queue.append(v)
    if visited != len(nodes):
        raise RelationCycle(sorted(n for n in graph.nodes if probe[n] > 0))

    for c in sorted(soft, key=lambda c: (c.subject, c.reference)):
        if c.subject not in adj[c.reference] and not _reaches(adj, c.subject, c.reference):
            adj[c.reference].add(c.subject)
            indeg[c.subject] += 1

    heap = [(-graph.areas.get(n, 0.0), n) for n in graph.nodes if indeg[n] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, u = heapq.heappop(heap)
        order.append(u)
        for v in sorted(adj[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, (-graph.areas.get(v, 0.0), v))
    return order
