"""The event graph: typed nodes and edges, relation construction,
hierarchical collapse/expand, and canonical serialization.

Nodes wrap events; edges carry one of five kinds. Undirected kinds
(spatial_close, same_time, meanwhile) are stored once with
source < target; `next` is directed by time; `semantic` edges are
representable but never produced automatically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Optional, Sequence, Set, Tuple

from .errors import MalformedGraph, NotCollapsed, UnknownNode
from .events import Event

EDGE_KINDS = ("spatial_close", "next", "same_time", "meanwhile", "semantic")
UNDIRECTED_KINDS = frozenset({"spatial_close", "same_time", "meanwhile"})
GROUP_LABEL = "group"

FORMAT_NAME = "event-graph/1"


@dataclass(frozen=True)
class EventEdge:
    source: int
    target: int
    kind: str
    label: Optional[str] = None

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError("self edges are not allowed")
        if self.kind not in EDGE_KINDS:
            raise ValueError(f"unknown edge kind {self.kind!r}")

    def canonical(self) -> "EventEdge":
        if self.kind in UNDIRECTED_KINDS and self.source > self.target:
            return EventEdge(self.target, self.source, self.kind, self.label)
        return self

    def sort_key(self):
        return (self.source, self.target, self.kind, self.label or "")


@dataclass(frozen=True)
class EventNode:
    node_id: int
    event: Event
    refs: Tuple[int, ...] = ()
    level: int = 0
    subgraph: Optional["EventGraph"] = None
    collapsed_external_edges: Optional[Tuple[EventEdge, ...]] = None

    @property
    def is_collapsed(self) -> bool:
        return self.subgraph is not None

    def person_ids(self) -> FrozenSet[int]:
        """Actors covered by this node; a collapsed node covers the union
        of its members' actors."""
        if self.subgraph is None:
            return frozenset({self.event.person_id})
        out: Set[int] = set()
        for member in self.subgraph.nodes.values():
            out |= member.person_ids()
        return frozenset(out)


@dataclass
class EventGraph:
    nodes: Dict[int, EventNode]
    edges: list[EventEdge]
    video_length: int
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        canonical = {}
        for edge in self.edges:
            edge = edge.canonical()
            if edge.source not in self.nodes or edge.target not in self.nodes:
                raise MalformedGraph(
                    f"edge {edge.source}->{edge.target} has a dangling endpoint")
            canonical.setdefault((edge.source, edge.target, edge.kind), edge)
        self.edges = sorted(canonical.values(), key=EventEdge.sort_key)
        for node in self.nodes.values():
            for ref in node.refs:
                if ref not in self.nodes:
                    raise MalformedGraph(f"node {node.node_id} refs missing node {ref}")

    def events(self) -> list[Event]:
        return [n.event for n in sorted(self.nodes.values(), key=lambda n: n.node_id)]

    def edges_of(self, node_id: int) -> list[EventEdge]:
        return [e for e in self.edges if node_id in (e.source, e.target)]

    def neighbors(self, node_id: int) -> Dict[int, Set[str]]:
        """neighbor id -> set of edge kinds linking it to node_id
        (undirected view; `next` counts in both directions)."""
        out: Dict[int, Set[str]] = {}
        for edge in self.edges:
            if edge.source == node_id:
                out.setdefault(edge.target, set()).add(edge.kind)
            elif edge.target == node_id:
                out.setdefault(edge.source, set()).add(edge.kind)
        return out

    def copy(self) -> "EventGraph":
        return EventGraph(dict(self.nodes), list(self.edges),
                          self.video_length, dict(self.metadata))


def graph_from_events(events: Sequence[Event], video_length: int,
                      metadata: Optional[Dict[str, str]] = None) -> EventGraph:
    nodes = {e.event_id: EventNode(node_id=e.event_id, event=e) for e in events}
    if len(nodes) != len(events):
        raise MalformedGraph("duplicate event ids")
    return EventGraph(nodes, [], video_length, dict(metadata or {}))


# --- relation construction ---------------------------------------------------

def _shared_box_frames(a: Event, b: Event) -> list[int]:
    return sorted(set(a.per_frame_boxes) & set(b.per_frame_boxes))


def _centroid_ratio(box_a, box_b) -> float:
    (ax, ay), (bx, by) = box_a.centroid, box_b.centroid
    dist = math.hypot(ax - bx, ay - by)
    denom = box_a.diagonal + box_b.diagonal
    if denom == 0.0:
        return 0.0 if dist == 0.0 else math.inf
    return dist / denom


def build_spatial_edges(graph: EventGraph,
                        ratio_threshold: float = 0.5,
                        frame_fraction: float = 0.75) -> EventGraph:
    """Link two temporally overlapping events as spatially close when the
    centroid-distance / diagonal-sum ratio stays below ratio_threshold in
    more than frame_fraction of their shared frames."""
    if ratio_threshold <= 0:
        raise ValueError("ratio_threshold must be positive")
    if not (0 < frame_fraction <= 1):
        raise ValueError("frame_fraction must be in (0, 1]")
    node_ids = sorted(graph.nodes)
    new_edges = list(graph.edges)
    for i, a_id in enumerate(node_ids):
        for b_id in node_ids[i + 1:]:
            a, b = graph.nodes[a_id].event, graph.nodes[b_id].event
            if not a.overlaps(b):
                continue
            shared = _shared_box_frames(a, b)
            if not shared:
                continue
            close = sum(
                1 for f in shared
                if _centroid_ratio(a.per_frame_boxes[f], b.per_frame_boxes[f])
                < ratio_threshold
            )
            if close / len(shared) > frame_fraction:
                new_edges.append(EventEdge(a_id, b_id, "spatial_close"))
    return EventGraph(dict(graph.nodes), new_edges, graph.video_length,
                      dict(graph.metadata))


def build_temporal_edges(graph: EventGraph,
                         same_time_fraction: float = 0.05,
                         next_gap_fraction: float = 0.10) -> EventGraph:
    """Assign at most one temporal relation per unordered event pair:
    same_time when both endpoints nearly coincide, meanwhile for any other
    overlap, next for sequential events within the gap bound."""
    length = graph.video_length
    if length <= 0:
        raise MalformedGraph("video_length must be positive to build temporal edges")
    node_ids = sorted(graph.nodes)
    new_edges = list(graph.edges)
    for i, a_id in enumerate(node_ids):
        for b_id in node_ids[i + 1:]:
            a, b = graph.nodes[a_id].event, graph.nodes[b_id].event
            start_diff = abs(a.start_frame - b.start_frame) / length
            end_diff = abs(a.end_frame - b.end_frame) / length
            if start_diff <= same_time_fraction and end_diff <= same_time_fraction:
                new_edges.append(EventEdge(a_id, b_id, "same_time"))
                continue
            if a.overlaps(b):
                new_edges.append(EventEdge(a_id, b_id, "meanwhile"))
                continue
            first_id, second_id = (a_id, b_id) if a.start_frame <= b.start_frame else (b_id, a_id)
            first = graph.nodes[first_id].event
            second = graph.nodes[second_id].event
            if second.start_frame < first.end_frame:
                continue
            same_actor_same_label = (first.person_id == second.person_id
                                     and first.action_label == second.action_label)
            gap = second.start_frame - first.end_frame
            if gap / length <= next_gap_fraction and not same_actor_same_label:
                new_edges.append(EventEdge(first_id, second_id, "next"))
    return EventGraph(dict(graph.nodes), new_edges, graph.video_length,
                      dict(graph.metadata))


# --- hierarchy ----------------------------------------------------------------

def collapse(graph: EventGraph, node_ids: Set[int]) -> EventGraph:
    """Fold the induced subgraph over node_ids into a single higher-level
    node. External edges re-attach to the new node (duplicates coalesce);
    the original subgraph and external attachments are stored on the node
    so expand can restore them exactly."""
    if not node_ids:
        raise ValueError("node_ids must be non-empty")
    for node_id in node_ids:
        if node_id not in graph.nodes:
            raise UnknownNode(node_id)

    members = {nid: graph.nodes[nid] for nid in node_ids}
    internal, external, untouched = [], [], []
    for edge in graph.edges:
        ends_in = (edge.source in node_ids, edge.target in node_ids)
        if all(ends_in):
            internal.append(edge)
        elif any(ends_in):
            external.append(edge)
        else:
            untouched.append(edge)

    new_id = max(graph.nodes) + 1
    starts = [m.event.start_frame for m in members.values()]
    ends = [m.event.end_frame for m in members.values()]
    group_event = Event(
        event_id=new_id,
        person_id=min(m.event.person_id for m in members.values()),
        action_label=GROUP_LABEL,
        start_frame=min(starts),
        end_frame=max(ends),
        objects=frozenset().union(*(m.event.objects for m in members.values())),
        per_frame_boxes={},
        properties={"member_count": str(len(members))},
    )
    subgraph = EventGraph(dict(members), list(internal), graph.video_length, {})
    new_node = EventNode(
        node_id=new_id,
        event=group_event,
        level=1 + max(m.level for m in members.values()),
        subgraph=subgraph,
        collapsed_external_edges=tuple(sorted(external, key=EventEdge.sort_key)),
    )

    nodes = {nid: n for nid, n in graph.nodes.items() if nid not in node_ids}
    nodes[new_id] = new_node
    rewired = []
    for edge in external:
        source = new_id if edge.source in node_ids else edge.source
        target = new_id if edge.target in node_ids else edge.target
        rewired.append(EventEdge(source, target, edge.kind, edge.label))
    return EventGraph(nodes, untouched + rewired, graph.video_length,
                      dict(graph.metadata))


def expand(graph: EventGraph, node_id: int) -> EventGraph:
    """Inverse of collapse: replace a collapsed node by its stored
    subgraph, restoring the original external attachments. Edges attached
    to the collapsed node after the collapse are dropped (their original
    member endpoint is unknowable)."""
    if node_id not in graph.nodes:
        raise UnknownNode(node_id)
    node = graph.nodes[node_id]
    if node.subgraph is None:
        raise NotCollapsed(node_id)
    nodes = {nid: n for nid, n in graph.nodes.items() if nid != node_id}
    nodes.update(node.subgraph.nodes)
    kept = [e for e in graph.edges if node_id not in (e.source, e.target)]
    restored = list(node.subgraph.edges) + list(node.collapsed_external_edges or ())
    return EventGraph(nodes, kept + restored, graph.video_length,
                      dict(graph.metadata))


# --- serialization -------------------------------------------------------------

def _event_to_dict(event: Event) -> dict:
    return {
        "event_id": event.event_id,
        "person_id": event.person_id,
        "action_label": event.action_label,
        "start_frame": event.start_frame,
        "end_frame": event.end_frame,
        "objects": sorted(event.objects),
        "per_frame_boxes": {str(f): b.to_list()
                            for f, b in sorted(event.per_frame_boxes.items())},
        "per_frame_objects": {str(f): sorted(labels)
                              for f, labels in sorted(event.per_frame_objects.items())},
        "properties": dict(sorted(event.properties.items())),
    }


def _event_from_dict(raw: dict) -> Event:
    from .ingest import BoundingBox
    return Event(
        event_id=int(raw["event_id"]),
        person_id=int(raw["person_id"]),
        action_label=str(raw["action_label"]),
        start_frame=int(raw["start_frame"]),
        end_frame=int(raw["end_frame"]),
        objects=frozenset(raw.get("objects", [])),
        per_frame_boxes={int(f): BoundingBox.from_list(b)
                         for f, b in raw.get("per_frame_boxes", {}).items()},
        per_frame_objects={int(f): frozenset(labels)
                           for f, labels in raw.get("per_frame_objects", {}).items()},
        properties={str(k): str(v) for k, v in raw.get("properties", {}).items()},
    )


def _node_to_dict(node: EventNode) -> dict:
    out = {
        "node_id": node.node_id,
        "level": node.level,
        "refs": list(node.refs),
        "event": _event_to_dict(node.event),
    }
    if node.subgraph is not None:
        out["subgraph"] = _graph_to_dict(node.subgraph)
        out["collapsed_external_edges"] = [
            {"source": e.source, "target": e.target, "kind": e.kind, "label": e.label}
            for e in (node.collapsed_external_edges or ())
        ]
    return out


def _node_from_dict(raw: dict) -> EventNode:
    subgraph = None
    external = None
    if raw.get("subgraph") is not None:
        subgraph = _graph_from_dict(raw["subgraph"])
        external = tuple(
            EventEdge(int(e["source"]), int(e["target"]), str(e["kind"]),
                      e.get("label"))
            for e in raw.get("collapsed_external_edges", [])
        )
    return EventNode(
        node_id=int(raw["node_id"]),
        event=_event_from_dict(raw["event"]),
        refs=tuple(int(r) for r in raw.get("refs", [])),
        level=int(raw.get("level", 0)),
        subgraph=subgraph,
        collapsed_external_edges=external,
    )


def _graph_to_dict(graph: EventGraph) -> dict:
    return {
        "format": FORMAT_NAME,
        "video_length": graph.video_length,
        "metadata": dict(sorted(graph.metadata.items())),
        "nodes": [_node_to_dict(n)
                  for _, n in sorted(graph.nodes.items())],
        "edges": [
            {"source": e.source, "target": e.target, "kind": e.kind, "label": e.label}
            for e in sorted(graph.edges, key=EventEdge.sort_key)
        ],
    }


def _graph_from_dict(raw: dict) -> EventGraph:
    if not isinstance(raw, dict):
        raise MalformedGraph("graph payload must be a JSON object")
    if raw.get("format") != FORMAT_NAME:
        raise MalformedGraph(f"unsupported graph format {raw.get('format')!r}")
    try:
        nodes = {int(n["node_id"]): _node_from_dict(n) for n in raw.get("nodes", [])}
        edges = [
            EventEdge(int(e["source"]), int(e["target"]), str(e["kind"]), e.get("label"))
            for e in raw.get("edges", [])
        ]
        return EventGraph(nodes, edges, int(raw["video_length"]),
                          {str(k): str(v) for k, v in raw.get("metadata", {}).items()})
    except MalformedGraph:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedGraph(str(exc)) from exc


def serialize_graph(graph: EventGraph) -> str:
    """Canonical textual encoding: sorted keys, nodes and edges in sorted
    order. Two equal graphs serialize to identical bytes."""
    return json.dumps(_graph_to_dict(graph), sort_keys=True, indent=2) + "\n"


def deserialize_graph(text: str) -> EventGraph:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedGraph(f"invalid JSON: {exc.msg}") from exc
    return _graph_from_dict(raw)


def to_dot(graph: EventGraph) -> str:
    """Export for graph-drawing tools (non-interactive figures)."""
    lines = ["digraph events {"]
    for _, node in sorted(graph.nodes.items()):
        e = node.event
        label = f"{e.action_label}\\nperson {e.person_id}\\n[{e.start_frame}, {e.end_frame}]"
        shape = "box" if node.subgraph is None else "box3d"
        lines.append(f'  n{node.node_id} [label="{label}", shape={shape}];')
    for edge in sorted(graph.edges, key=EventEdge.sort_key):
        style = "dir=none, " if edge.kind in UNDIRECTED_KINDS else ""
        lines.append(
            f'  n{edge.source} -> n{edge.target} [{style}label="{edge.kind}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# --- structural comparison ------------------------------------------------------

def _canonical_person_relabel(events: Sequence[Event]) -> Dict[int, int]:
    order = sorted(events, key=lambda e: (e.start_frame, e.end_frame,
                                          e.action_label, e.person_id))
    mapping: Dict[int, int] = {}
    for event in order:
        if event.person_id not in mapping:
            mapping[event.person_id] = len(mapping)
    return mapping


def canonical_signature(graph: EventGraph,
                        include_objects: bool = True) -> tuple:
    """Identity-free structural signature: persons relabeled by first
    appearance, nodes relabeled by (span, label, person), edges as a
    sorted multiset. Graphs with identical signatures are isomorphic
    provided node signatures are unique (ties make the check conservative)."""
    events = graph.events()
    person_map = _canonical_person_relabel(events)

    def node_sig(event: Event):
        sig = (event.start_frame, event.end_frame, event.action_label,
               person_map[event.person_id])
        if include_objects:
            sig = sig + (tuple(sorted(event.objects)),)
        return sig

    id_to_sig = {n.node_id: node_sig(n.event) for n in graph.nodes.values()}
    nodes_sorted = sorted(id_to_sig.values())
    edges_sorted = sorted(
        (id_to_sig[e.source], id_to_sig[e.target], e.kind) for e in graph.edges
    )
    return (tuple(nodes_sorted), tuple(edges_sorted))


def graphs_isomorphic(a: EventGraph, b: EventGraph,
                      include_objects: bool = True) -> bool:
    return (canonical_signature(a, include_objects)
            == canonical_signature(b, include_objects))
