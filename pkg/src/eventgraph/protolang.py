"""Render an event graph into proto-language text.

The traversal walks events chronologically and folds same-actor linked
events into groups; each group becomes one clause and consecutive groups
are joined by a connector derived from their spatio-temporal relation.
The output is deliberately robotic: a downstream language model does the
polishing. docs/proto-language.md holds a worked trace of the grouping
pass, including the duplicate-membership corner it inherits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Set, Tuple

from .graph import EventGraph, EventNode

CONNECTOR_WORDS = {
    "same_time": "at the same time,",
    "meanwhile": "meanwhile,",
    "next": "then,",
}
SPATIAL_WORD = "nearby"
DEFAULT_CONNECTOR = "then,"

TEMPORAL_PRIORITY = ("same_time", "meanwhile", "next")

# Verbs whose third-person singular is not rule-derivable.
IRREGULAR_VERBS = {
    "be": "is",
    "have": "has",
    "do": "does",
    "go": "goes",
}


@dataclass(frozen=True)
class EventGroup:
    parent_event: int
    members: Tuple[int, ...]
    order_index: int

    def __post_init__(self):
        if not self.members:
            raise ValueError("group must have members")
        if self.parent_event not in self.members:
            raise ValueError("parent_event must be a member")


@dataclass
class ProtoScript:
    scene_context: Optional[str]
    group_texts: List[str]
    connectors: List[str]

    def __post_init__(self):
        if self.group_texts and len(self.connectors) != len(self.group_texts) - 1:
            raise ValueError("need exactly one connector per group after the first")

    def text(self) -> str:
        parts = []
        if self.scene_context:
            parts.append(f"The scene is: {self.scene_context}.")
        for i, group_text in enumerate(self.group_texts):
            if i == 0:
                parts.append(f"{group_text}.")
            else:
                parts.append(f"{self.connectors[i - 1]} {group_text}.")
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {
            "scene_context": self.scene_context,
            "group_texts": list(self.group_texts),
            "connectors": list(self.connectors),
        }


def _visit_order(graph: EventGraph) -> list[EventNode]:
    return sorted(graph.nodes.values(),
                  key=lambda n: (n.event.start_frame, n.node_id))


def _sorted_neighbors(graph: EventGraph, node_id: int) -> list[Tuple[int, frozenset]]:
    """Unique incident neighbors with their edge kinds, ordered by
    (start frame, node id) for determinism."""
    raw = graph.neighbors(node_id)
    order = sorted(raw, key=lambda nid: (graph.nodes[nid].event.start_frame, nid))
    return [(nid, frozenset(raw[nid])) for nid in order]


def _same_actor(graph: EventGraph, a: int, b: int) -> bool:
    return bool(graph.nodes[a].person_ids() & graph.nodes[b].person_ids())


def build_groups(graph: EventGraph) -> list[EventGroup]:
    """Group events for narration, visiting them in start-frame order.

    An undone event whose links are all `next` narrates alone. Otherwise
    its same-actor linked events join its group; when that adds nothing
    new, a done event is skipped entirely and an undone one keeps only its
    undone members. Every emitted group marks its members done.
    """
    done: Set[int] = set()
    groups: list[EventGroup] = []
    for node in _visit_order(graph):
        nid = node.node_id
        incident = _sorted_neighbors(graph, nid)
        all_next = all(kinds == frozenset({"next"}) for _, kinds in incident)
        if all_next and nid not in done:
            groups.append(EventGroup(nid, (nid,), len(groups)))
            done.add(nid)
            continue

        members = [nid]
        added_new = False
        for neighbor, _kinds in incident:
            if _same_actor(graph, nid, neighbor):
                members.append(neighbor)
                if neighbor not in done:
                    added_new = True

        if not added_new:
            if nid in done:
                continue
            members = [m for m in members if m not in done]

        groups.append(EventGroup(nid, tuple(members), len(groups)))
        done.update(members)
    return groups


def verbalize(action_label: str) -> str:
    """Third-person singular form of an action label. Multi-word labels
    inflect their first word; underscores read as spaces."""
    words = action_label.replace("_", " ").split()
    if not words:
        return action_label
    verb = words[0]
    lowered = verb.lower()
    if lowered in IRREGULAR_VERBS:
        inflected = IRREGULAR_VERBS[lowered]
    elif lowered.endswith(("s", "x", "z", "ch", "sh", "o")):
        inflected = verb + "es"
    elif lowered.endswith("y") and len(lowered) > 1 and lowered[-2] not in "aeiou":
        inflected = verb[:-1] + "ies"
    else:
        inflected = verb + "s"
    return " ".join([inflected] + words[1:])


def describe_event(node: EventNode, include_span: bool = False) -> str:
    """One clause for one node. Candidate objects are all listed; choosing
    among them is deferred to the refinement model."""
    event = node.event
    if node.is_collapsed:
        count = len(node.subgraph.nodes)
        return (f"a group of {count} related events "
                f"(frames {event.start_frame}-{event.end_frame})")
    text = f"person {event.person_id} {verbalize(event.action_label)}"
    if event.objects:
        listed = ", ".join(sorted(event.objects))
        text += f", possibly involving {listed}"
    if include_span:
        text += f" (frames {event.start_frame}-{event.end_frame})"
    return text


def _pair_relation(graph: EventGraph, a: int, b: int) -> Tuple[Optional[str], bool]:
    """(temporal kind or None, spatially close?) between two nodes."""
    kinds = graph.neighbors(a).get(b, set())
    temporal = next((k for k in TEMPORAL_PRIORITY if k in kinds), None)
    return temporal, "spatial_close" in kinds


def _group_relation(graph: EventGraph, group: EventGroup,
                    previous: EventGroup) -> Tuple[Optional[str], bool]:
    """Relation between two groups: the parents' link wins; otherwise the
    highest-priority link over all member pairs."""
    temporal, spatial = _pair_relation(graph, group.parent_event,
                                       previous.parent_event)
    if temporal is not None or spatial:
        return temporal, spatial
    best: Optional[str] = None
    spatial_any = False
    for a in group.members:
        for b in previous.members:
            t, s = _pair_relation(graph, a, b)
            spatial_any = spatial_any or s
            if t is not None:
                if best is None or TEMPORAL_PRIORITY.index(t) < TEMPORAL_PRIORITY.index(best):
                    best = t
    return best, spatial_any


def _describe_group(graph: EventGraph, group: EventGroup,
                    include_spans: bool) -> str:
    ordered = sorted(dict.fromkeys(group.members),
                     key=lambda nid: (graph.nodes[nid].event.start_frame, nid))
    parts = [describe_event(graph.nodes[ordered[0]], include_spans)]
    for prev, current in zip(ordered, ordered[1:]):
        temporal, _ = _pair_relation(graph, prev, current)
        if temporal in ("same_time", "meanwhile"):
            joiner = "while"
        elif temporal == "next":
            joiner = "and then"
        else:
            joiner = "and"
        parts.append(f"{joiner} {describe_event(graph.nodes[current], include_spans)}")
    return " ".join(parts)


def render_proto(graph: EventGraph, scene: Optional[str] = None,
                 include_spans: bool = False) -> ProtoScript:
    """Deterministic proto-language for a graph: ordered group clauses
    plus inter-group connectors; the scene context, when known, leads."""
    groups = build_groups(graph)
    texts = [_describe_group(graph, g, include_spans) for g in groups]
    connectors = []
    for previous, current in zip(groups, groups[1:]):
        temporal, spatial = _group_relation(graph, current, previous)
        word = CONNECTOR_WORDS.get(temporal, DEFAULT_CONNECTOR)
        if spatial:
            word = f"{word} {SPATIAL_WORD}"
        connectors.append(word)
    return ProtoScript(scene_context=scene, group_texts=texts,
                       connectors=connectors)
