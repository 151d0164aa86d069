"""Limiting metric graph, vertex-domain templates, and the JSON graph format.

A graph file looks like::

    {"vertices": [{"id": "a", "position": [0, 0],
                   "template": {"polygon": [[-0.5, -0.5], [0.5, -0.5],
                                            [0.5, 0.5], [-0.5, 0.5]],
                                "area": 1.0}},
                  ...],
     "edges": [{"id": "e0", "tail": "a", "head": "b", "length": 1.0, "axis": "h"}]}

``position`` and ``template`` are optional (templates default to the unit
square). An edge may also carry ``"tail_side"``/``"head_side"``, the index of
the template side holding its contact plate; otherwise sides are assigned
automatically (facing the other endpoint when positions are known).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from shapely.geometry import Polygon

UNIT_SQUARE = ((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5))

# outward normals of axis-aligned sides for a counter-clockwise polygon
_DIRECTIONS = {"E": (1, 0), "N": (0, 1), "W": (-1, 0), "S": (0, -1)}


class GraphError(ValueError):
    """Invalid graph description; ``entity`` names the offending id."""

    def __init__(self, message: str, entity: Optional[str] = None):
        self.entity = entity
        super().__init__(f"{message} [{entity}]" if entity is not None else message)


@dataclass(frozen=True)
class VertexSpec:
    id: str
    position: Optional[tuple]
    template_polygon: tuple
    template_area: float
    plate_sides: dict = field(default_factory=dict, compare=False)  # (edge id, role) -> side index

    def side(self, k: int):
        """Endpoints of template side ``k`` (counter-clockwise orientation)."""
        pts = self.template_polygon
        return np.asarray(pts[k], float), np.asarray(pts[(k + 1) % len(pts)], float)

    def side_length(self, k: int) -> float:
        p, q = self.side(k)
        return float(np.abs(q - p).sum())

    def side_normal(self, k: int) -> tuple:
        p, q = self.side(k)
        d = np.sign(q - p).astype(int)
        return (int(d[1]), int(-d[0]))  # rotate clockwise: outward for CCW polygons


@dataclass(frozen=True)
class EdgeSpec:
    id: str
    tail: str
    head: str
    length: float
    axis: str = "h"


@dataclass(frozen=True)
class MetricGraph:
    vertices: tuple
    edges: tuple

    @property
    def N(self) -> int:
        return len(self.vertices)

    @property
    def vertex_ids(self) -> list:
        return [v.id for v in self.vertices]

    @property
    def edge_ids(self) -> list:
        return [e.id for e in self.edges]

    def vertex(self, vid: str) -> VertexSpec:
        for v in self.vertices:
            if v.id == vid:
                return v
        raise GraphError("unknown vertex id", vid)

    def vertex_index(self, vid: str) -> int:
        for i, v in enumerate(self.vertices):
            if v.id == vid:
                return i
        raise GraphError("unknown vertex id", vid)

    def edge(self, eid: str) -> EdgeSpec:
        for e in self.edges:
            if e.id == eid:
                return e
        raise GraphError("unknown edge id", eid)

    def degree(self, vid: str) -> int:
        return len(incidence(self, vid))

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    def with_areas(self, areas) -> "MetricGraph":
        """Copy with every template rescaled to the given areas (same shapes)."""
        verts = []
        for v, a in zip(self.vertices, areas):
            s = np.sqrt(a / v.template_area)
            poly = tuple(tuple(float(c) * s for c in p) for p in v.template_polygon)
            verts.append(VertexSpec(v.id, v.position, poly, float(a), dict(v.plate_sides)))
        return MetricGraph(tuple(verts), self.edges)


def incidence(graph: MetricGraph, v: str) -> list:
    """``(edge id, 'tail'|'head')`` pairs at vertex ``v``.

    Sorted by edge id, tail before head, so a loop contributes two entries.
    """
    graph.vertex(v)
    out = []
    for e in sorted(graph.edges, key=lambda e: e.id):
        if e.tail == v:
            out.append((e.id, "tail"))
        if e.head == v:
            out.append((e.id, "head"))
    return out


def kappa(graph: MetricGraph) -> np.ndarray:
    """Vertex weights ``sqrt(|Q_v^0|)`` in vertex order."""
    return np.sqrt(np.array([v.template_area for v in graph.vertices], dtype=float))


def _polygon(vid, pts):
    if len(pts) < 4:
        raise GraphError("template polygon needs at least 4 corners", vid)
    arr = np.asarray(pts, float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GraphError("template polygon must be a list of [x, y]", vid)
    for p, q in zip(arr, np.roll(arr, -1, axis=0)):
        if (p[0] != q[0]) == (p[1] != q[1]):
            raise GraphError("template polygon sides must be axis-aligned and nondegenerate", vid)
    poly = Polygon(arr)
    if not poly.is_valid:
        raise GraphError("template polygon is self-intersecting", vid)
    if not poly.exterior.is_ccw:
        arr = arr[::-1]
    return tuple(tuple(float(c) for c in p) for p in arr), float(poly.area)


def _require(d, key, entity):
    if key not in d:
        raise GraphError(f"missing key '{key}'", entity)
    return d[key]


def _assign_sides(vertices: dict, edges: list) -> None:
    """Choose a distinct template side for every plate."""
    taken = {vid: set() for vid in vertices}
    pending = []
    for e in edges:
        for role, vid, other in (("tail", e.tail, e.head), ("head", e.head, e.tail)):
            v = vertices[vid]
            k = v.plate_sides.get((e.id, role))
            if k is not None:
                if not 0 <= k < len(v.template_polygon):
                    raise GraphError("plate side index out of range", e.id)
                if k in taken[vid]:
                    raise GraphError("two plates on one template side", vid)
                taken[vid].add(k)
            else:
                pending.append((e, role, vid, other))
    for e, role, vid, other in pending:
        v = vertices[vid]
        free = [k for k in range(len(v.template_polygon)) if k not in taken[vid]]
        if not free:
            raise GraphError("vertex degree exceeds number of template sides", vid)
        want = None
        w = vertices[other]
        if v.position is not None and w.position is not None and vid != other:
            d = np.sign(np.asarray(w.position, float) - np.asarray(v.position, float)).astype(int)
            want = (int(d[0]), int(d[1]))
        free.sort(key=lambda k: (v.side_normal(k) != want, -v.side_length(k), k))
        taken[vid].add(free[0])
        v.plate_sides[(e.id, role)] = free[0]


def parse_graph(text) -> MetricGraph:
    """Parse and validate a graph description (JSON text or an already-loaded dict)."""
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphError(f"not valid JSON: {exc}") from exc
    else:
        doc = text
    if not isinstance(doc, dict):
        raise GraphError("top level must be an object")
    raw_vertices = _require(doc, "vertices", None)
    raw_edges = _require(doc, "edges", None)
    if not raw_vertices:
        raise GraphError("graph needs at least one vertex")

    vertices = {}
    for rv in raw_vertices:
        vid = str(_require(rv, "id", None))
        if vid in vertices:
            raise GraphError("duplicate vertex id", vid)
        pos = rv.get("position")
        if pos is not None:
            if len(pos) != 2:
                raise GraphError("position must be [x, y]", vid)
            pos = (float(pos[0]), float(pos[1]))
        tpl = rv.get("template") or {}
        poly, area = _polygon(vid, tpl.get("polygon", UNIT_SQUARE))
        if "area" in tpl:
            declared = float(tpl["area"])
            if declared <= 0:
                raise GraphError("template area must be positive", vid)
            if abs(declared - area) > 1e-12 * max(1.0, area):
                raise GraphError(f"template area {declared} != polygon area {area}", vid)
        vertices[vid] = VertexSpec(vid, pos, poly, area, {})

    edges = []
    seen = set()
    for re_ in raw_edges:
        eid = str(_require(re_, "id", None))
        if eid in seen:
            raise GraphError("duplicate edge id", eid)
        seen.add(eid)
        tail, head = str(_require(re_, "tail", eid)), str(_require(re_, "head", eid))
        for end in (tail, head):
            if end not in vertices:
                raise GraphError(f"dangling vertex reference '{end}'", eid)
        try:
            length = float(_require(re_, "length", eid))
        except (TypeError, ValueError) as exc:
            raise GraphError("length must be a number", eid) from exc
        if not np.isfinite(length) or length <= 0:
            raise GraphError("nonpositive length", eid)
        axis = re_.get("axis", "h")
        if axis not in ("h", "v"):
            raise GraphError("axis must be 'h' or 'v'", eid)
        pt, ph = vertices[tail].position, vertices[head].position
        if pt is not None and ph is not None and tail != head:
            i, j = (0, 1) if axis == "h" else (1, 0)
            along, across = abs(ph[i] - pt[i]), abs(ph[j] - pt[j])
            if across > 1e-12 or abs(along - length) > 1e-9 * max(1.0, length):
                raise GraphError("axis/length inconsistent with endpoint positions", eid)
        e = EdgeSpec(eid, tail, head, length, axis)
        for role, vid in (("tail", tail), ("head", head)):
            key = f"{role}_side"
            if key in re_:
                vertices[vid].plate_sides[(eid, role)] = int(re_[key])
        edges.append(e)

    _assign_sides(vertices, edges)

    # connectivity
    adj = {vid: set() for vid in vertices}
    for e in edges:
        adj[e.tail].add(e.head)
        adj[e.head].add(e.tail)
    start = next(iter(vertices))
    reached, queue = {start}, deque([start])
    while queue:
        for w in adj[queue.popleft()]:
            if w not in reached:
                reached.add(w)
                queue.append(w)
    missing = sorted(set(vertices) - reached)
    if missing:
        raise GraphError("disconnected graph", missing[0])

    ordered = tuple(vertices[k] for k in sorted(vertices))
    return MetricGraph(ordered, tuple(sorted(edges, key=lambda e: e.id)))


def graph_to_dict(graph: MetricGraph) -> dict:
    verts = []
    for v in graph.vertices:
        d = {"id": v.id, "template": {"polygon": [list(p) for p in v.template_polygon],
                                      "area": v.template_area}}
        if v.position is not None:
            d["position"] = list(v.position)
        verts.append(d)
    edges = []
    for e in graph.edges:
        edges.append({"id": e.id, "tail": e.tail, "head": e.head, "length": e.length, "axis": e.axis,
                      "tail_side": graph.vertex(e.tail).plate_sides[(e.id, "tail")],
                      "head_side": graph.vertex(e.head).plate_sides[(e.id, "head")]})
    return {"vertices": verts, "edges": edges}


def serialize(graph: MetricGraph) -> str:
    return json.dumps(graph_to_dict(graph), indent=2)


def load_graph(path) -> MetricGraph:
    return parse_graph(Path(path).read_text(encoding="utf-8"))


CORPUS = ("single_edge", "star3", "triangle_pendant")


def corpus_graph(name: str) -> MetricGraph:
    """One of the bundled regression graphs (see ``CORPUS``)."""
    if name not in CORPUS:
        raise KeyError(name)
    return load_graph(Path(__file__).with_name("data") / f"{name}.json")
