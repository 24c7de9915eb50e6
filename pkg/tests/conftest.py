"""Shared builders for stream records and random graphs."""

from __future__ import annotations

import random

import pytest

from eventgraph.events import Event
from eventgraph.graph import EventEdge, EventGraph, EventNode, graph_from_events
from eventgraph.ingest import (
    ActionDetection,
    BoundingBox,
    FrameRecord,
    MaskSummary,
    ObjectDetection,
)


def box(x0=0.0, y0=0.0, x1=10.0, y1=10.0) -> BoundingBox:
    return BoundingBox(x0, y0, x1, y1)


def action(label="walk", conf=0.9, b=None, track=0) -> ActionDetection:
    return ActionDetection(label, conf, b or box(), track)


def obj(label="cup", b=None, depth=5.0, source="detector") -> ObjectDetection:
    return ObjectDetection(label, b or box(), depth, source)


def mask(track=0, color=(10.0, 0.5, 0.5), count=4, depth=5.0) -> MaskSummary:
    return MaskSummary(
        track_id=track,
        pixel_count=count,
        mean_depth=depth,
        hsv_pixels=tuple(color for _ in range(count)),
    )


def frame(idx, actions=(), objects=(), masks=(), extras=None) -> FrameRecord:
    return FrameRecord(
        frame_index=idx,
        actions=tuple(actions),
        objects=tuple(objects),
        masks=tuple(masks),
        extras=dict(extras or {}),
    )


def simple_event(event_id, person=0, label="walk", start=0, end=10,
                 objects=frozenset(), box_at=None) -> Event:
    boxes = {f: (box_at or box()) for f in range(start, end + 1)}
    return Event(
        event_id=event_id,
        person_id=person,
        action_label=label,
        start_frame=start,
        end_frame=end,
        objects=frozenset(objects),
        per_frame_boxes=boxes,
        per_frame_objects={f: frozenset(objects) for f in range(start, end + 1)},
    )


LABELS = ("walk", "sit", "read", "open door", "write")
KINDS = ("spatial_close", "next", "same_time", "meanwhile")


def random_graph(rng: random.Random, max_nodes=10, video_length=1000) -> EventGraph:
    """Random but structurally valid graph: next edges always point
    forward in start-frame order; undirected kinds are canonicalized by
    the graph itself."""
    n = rng.randint(1, max_nodes)
    events = []
    for i in range(n):
        start = rng.randint(0, video_length - 60)
        end = start + rng.randint(5, 50)
        events.append(simple_event(
            i,
            person=rng.randint(0, 3),
            label=rng.choice(LABELS),
            start=start,
            end=end,
        ))
    graph = graph_from_events(events, video_length)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.3:
                kind = rng.choice(KINDS)
                if kind == "next":
                    a, b = events[i], events[j]
                    first, second = (i, j) if (a.start_frame, i) <= (b.start_frame, j) else (j, i)
                    edges.append(EventEdge(first, second, "next"))
                else:
                    edges.append(EventEdge(i, j, kind))
    return EventGraph(dict(graph.nodes), edges, video_length)
