"""Grouping traversal (with an independent pseudo-code interpreter as
oracle), event description templates, and proto-script rendering."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventgraph.graph import EventEdge, EventGraph, build_temporal_edges, collapse, graph_from_events
from eventgraph.protolang import (
    EventGroup,
    ProtoScript,
    build_groups,
    describe_event,
    render_proto,
    verbalize,
)

from conftest import random_graph, simple_event


# --- oracle: direct transliteration of the published grouping pseudo-code ---

class _Ev:
    __slots__ = ("node_id", "start_frame", "persons", "links", "done")

    def __init__(self, node_id, start_frame, persons):
        self.node_id = node_id
        self.start_frame = start_frame
        self.persons = persons
        self.links = []   # (other _Ev, kind), one entry per incident edge
        self.done = False


def interpret_grouping_pseudocode(graph: EventGraph):
    """Line-by-line interpreter of the grouping pseudo-code, sharing only
    the adjacency definition (all incident edges, neighbours ordered by
    start frame then id) with the production implementation."""
    evs = {}
    for nid, node in graph.nodes.items():
        evs[nid] = _Ev(nid, node.event.start_frame, node.person_ids())
    for edge in graph.edges:
        evs[edge.source].links.append((evs[edge.target], edge.kind))
        evs[edge.target].links.append((evs[edge.source], edge.kind))
    for ev in evs.values():
        ev.links.sort(key=lambda link: (link[0].start_frame, link[0].node_id, link[1]))

    parent_events = []
    groups = []
    events = sorted(evs.values(), key=lambda e: (e.start_frame, e.node_id))
    for event in events:
        crt_event = event
        crt_group = [crt_event]
        if all(kind == "next" for _, kind in event.links) and not event.done:
            parent_events.append(crt_event)
            groups.append(crt_group)
            for ev in crt_group:
                ev.done = True
            continue

        added_new_event = False
        linked_events = [other for other, _ in crt_event.links
                         if other.persons & crt_event.persons]
        for linked_event in linked_events:
            crt_group.append(linked_event)
            if not linked_event.done:
                added_new_event = True

        if not added_new_event:
            if crt_event.done:
                continue
            crt_group = [ev for ev in crt_group if not ev.done]

        parent_events.append(crt_event)
        groups.append(crt_group)
        for ev in crt_group:
            ev.done = True

    deduped = []
    for group in groups:
        deduped.append(list(dict.fromkeys(ev.node_id for ev in group)))
    return deduped


def groups_as_lists(groups):
    return [list(dict.fromkeys(g.members)) for g in groups]


def linked_graph(events, edges, video_length=1000):
    g = graph_from_events(events, video_length)
    return EventGraph(dict(g.nodes), edges, video_length)


class TestBuildGroups:
    def test_single_event_single_group(self):
        g = linked_graph([simple_event(0)], [])
        assert groups_as_lists(build_groups(g)) == [[0]]

    def test_same_actor_same_time_one_group(self):
        # Trace: first event has a non-next link, pulls in the undone
        # same-actor neighbour; both marked done; second event skipped.
        g = linked_graph(
            [simple_event(0, person=0, label="walk", start=0, end=100),
             simple_event(1, person=0, label="read", start=0, end=100)],
            [EventEdge(0, 1, "same_time")])
        assert groups_as_lists(build_groups(g)) == [[0, 1]]

    def test_different_actor_next_two_groups(self):
        # Trace: both events see only next links, so each forms its own
        # group, in chronological order.
        g = linked_graph(
            [simple_event(0, person=0, start=0, end=100),
             simple_event(1, person=1, start=150, end=250)],
            [EventEdge(0, 1, "next")])
        assert groups_as_lists(build_groups(g)) == [[0], [1]]

    def test_every_event_lands_in_a_group(self):
        rng = random.Random(7)
        for _ in range(50):
            g = random_graph(rng, max_nodes=10)
            covered = set()
            for group in build_groups(g):
                covered.update(group.members)
            assert covered == set(g.nodes)

    def test_group_order_follows_parent_start_frames(self):
        rng = random.Random(11)
        for _ in range(30):
            g = random_graph(rng, max_nodes=10)
            groups = build_groups(g)
            starts = [g.nodes[grp.parent_event].event.start_frame for grp in groups]
            assert starts == sorted(starts)

    @settings(max_examples=300, deadline=None)
    @given(st.integers(0, 10 ** 9))
    def test_matches_pseudocode_interpreter(self, seed):
        rng = random.Random(seed)
        g = random_graph(rng, max_nodes=10)
        assert groups_as_lists(build_groups(g)) == interpret_grouping_pseudocode(g)


class TestVerbalize:
    @pytest.mark.parametrize("label,expected", [
        ("walk", "walks"),
        ("sit", "sits"),
        ("carry", "carries"),
        ("watch", "watches"),
        ("pass", "passes"),
        ("go", "goes"),
        ("be", "is"),
        ("open door", "opens door"),
        ("open_door", "opens door"),
        ("play guitar", "plays guitar"),
    ])
    def test_third_person_singular(self, label, expected):
        assert verbalize(label) == expected


class TestDescribeEvent:
    def test_minimal_template(self):
        g = linked_graph([simple_event(0, person=0, label="walk")], [])
        assert describe_event(g.nodes[0]) == "person 0 walks"

    def test_all_candidate_objects_listed(self):
        g = linked_graph(
            [simple_event(0, person=1, label="open door",
                          objects={"door", "cup"})], [])
        text = describe_event(g.nodes[0])
        assert "door" in text and "cup" in text
        assert text.startswith("person 1 opens door, possibly involving")

    def test_collapsed_node_described_by_count_and_span(self):
        g = build_temporal_edges(linked_graph(
            [simple_event(0, person=0, start=0, end=100),
             simple_event(1, person=1, start=0, end=100)], []))
        collapsed = collapse(g, {0, 1})
        node = collapsed.nodes[max(collapsed.nodes)]
        text = describe_event(node)
        assert "2" in text and "0-100" in text

    def test_span_clause_optional(self):
        g = linked_graph([simple_event(0, person=0, label="walk",
                                       start=5, end=9)], [])
        assert "frames" not in describe_event(g.nodes[0])
        assert "(frames 5-9)" in describe_event(g.nodes[0], include_span=True)


class TestRenderProto:
    def test_single_group_no_connectors(self):
        g = linked_graph([simple_event(0)], [])
        script = render_proto(g)
        assert script.connectors == []
        assert len(script.group_texts) == 1

    def test_next_connector(self):
        g = linked_graph(
            [simple_event(0, person=0, start=0, end=100),
             simple_event(1, person=1, start=150, end=250)],
            [EventEdge(0, 1, "next")])
        script = render_proto(g)
        assert script.connectors == ["then,"]
        assert script.text().count("then,") == 1

    def test_same_time_and_meanwhile_connectors(self):
        g = linked_graph(
            [simple_event(0, person=0, start=0, end=100),
             simple_event(1, person=1, start=0, end=100)],
            [EventEdge(0, 1, "meanwhile")])
        script = render_proto(g)
        assert script.connectors == ["meanwhile,"]

    def test_spatial_appends_nearby(self):
        g = linked_graph(
            [simple_event(0, person=0, start=0, end=100),
             simple_event(1, person=1, start=0, end=100)],
            [EventEdge(0, 1, "meanwhile"), EventEdge(0, 1, "spatial_close")])
        script = render_proto(g)
        assert script.connectors == ["meanwhile, nearby"]

    def test_scene_sentence_leads(self):
        g = linked_graph([simple_event(0)], [])
        script = render_proto(g, scene="classroom")
        assert script.scene_context == "classroom"
        assert script.text().startswith("The scene is: classroom.")

    def test_determinism(self):
        rng = random.Random(23)
        for _ in range(20):
            g = random_graph(rng, max_nodes=8)
            a = render_proto(g, scene="park")
            b = render_proto(g, scene="park")
            assert a.text() == b.text()
            assert a.to_dict() == b.to_dict()

    def test_object_completeness(self):
        g = linked_graph(
            [simple_event(0, person=0, objects={"cup", "book"}),
             simple_event(1, person=1, start=30, end=40,
                          objects={"door"})], [])
        text = render_proto(g).text()
        for label in ("cup", "book", "door"):
            assert label in text

    def test_connector_count_invariant(self):
        rng = random.Random(5)
        for _ in range(30):
            g = random_graph(rng, max_nodes=9)
            script = render_proto(g)
            if script.group_texts:
                assert len(script.connectors) == len(script.group_texts) - 1

    def test_mentions_every_event_at_least_once(self):
        rng = random.Random(9)
        for _ in range(30):
            g = random_graph(rng, max_nodes=8)
            script = render_proto(g)
            joined = " ".join(script.group_texts)
            for node in g.nodes.values():
                assert f"person {node.event.person_id} " in joined
