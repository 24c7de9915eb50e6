"""End-to-end orchestration: perception stream in, event graph and
proto-language out.

Stage order matters: track segments, short-gap bridging, appearance
re-identification, action filtering, object association, window voting,
event aggregation, event unification, then relation edges.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence

from .config import EngineConfig
from .events import (
    aggregate_events,
    attach_objects,
    filter_actions,
    unify_events,
    window_vote,
)
from .graph import (
    EventGraph,
    build_spatial_edges,
    build_temporal_edges,
    graph_from_events,
)
from .identity import (
    bridge_short_gaps,
    entities_from_segments,
    person_id_map,
    reidentify,
    track_segments_from_records,
)
from .ingest import FrameRecord
from .protolang import ProtoScript, render_proto


@dataclass(frozen=True)
class StageStats:
    frames: int
    video_length: int
    segments_raw: int
    segments_after_bridging: int
    persons_before_reid: int
    persons_after_reid: int
    actions_after_filter: int
    actions_after_vote: int
    events_before_unify: int
    events_after_unify: int
    edges: Dict[str, int]

    def to_dict(self) -> dict:
        return asdict(self)


def infer_video_length(records: Sequence[FrameRecord]) -> int:
    if not records:
        return 0
    return records[-1].frame_index + 1


def build_graph(records: Sequence[FrameRecord],
                config: Optional[EngineConfig] = None,
                video_length: Optional[int] = None,
                metadata: Optional[Dict[str, str]] = None) -> tuple[EventGraph, StageStats]:
    """Run the full graph-construction pipeline over one video's stream."""
    config = config or EngineConfig()
    t = config.thresholds
    if video_length is None:
        video_length = infer_video_length(records)

    segments = track_segments_from_records(records)
    segments_raw = len(segments)
    segments = bridge_short_gaps(segments, max_gap=t.bridge_max_gap_frames,
                                 iou_min=t.bridge_iou_min)
    entities = entities_from_segments(segments, bins=t.bins,
                                      std_factor=t.representative_std_factor)
    persons_before = len(entities)
    entities = reidentify(entities, threshold=t.reid_similarity_threshold,
                          bins=t.bins, std_factor=t.representative_std_factor)
    mapping = person_id_map(entities)

    actions = filter_actions(records, person_ids=mapping,
                             confidence_min=t.action_confidence_min,
                             top_k=t.actions_per_frame_top_k)
    actions = attach_objects(actions, records,
                             enlarge_fraction=t.box_enlarge_fraction,
                             iou_min=t.object_iou_min,
                             depth_max_relative=t.depth_max_relative,
                             image_size=config.image_size)
    actions_filtered = len(actions)
    actions = window_vote(actions, halfwidth=t.vote_window_halfwidth,
                          min_count=t.vote_min_count)
    actions_voted = len(actions)

    events = aggregate_events(actions, presence_min=t.object_presence_min_fraction)
    events_before = len(events)
    if events and video_length > 0:
        events = unify_events(events, video_length,
                              max_gap_fraction=t.event_unify_max_gap_fraction,
                              presence_min=t.object_presence_min_fraction)

    graph = graph_from_events(events, video_length, metadata)
    if video_length > 0:
        graph = build_temporal_edges(graph,
                                     same_time_fraction=t.same_time_tolerance_fraction,
                                     next_gap_fraction=t.next_max_gap_fraction)
    graph = build_spatial_edges(graph,
                                ratio_threshold=t.spatial_ratio_threshold,
                                frame_fraction=t.spatial_frame_fraction)

    edge_counts: Dict[str, int] = {}
    for edge in graph.edges:
        edge_counts[edge.kind] = edge_counts.get(edge.kind, 0) + 1

    stats = StageStats(
        frames=len(records),
        video_length=video_length,
        segments_raw=segments_raw,
        segments_after_bridging=len(segments),
        persons_before_reid=persons_before,
        persons_after_reid=len(entities),
        actions_after_filter=actions_filtered,
        actions_after_vote=actions_voted,
        events_before_unify=events_before,
        events_after_unify=len(events),
        edges=edge_counts,
    )
    return graph, stats


def describe_stream(records: Sequence[FrameRecord],
                    config: Optional[EngineConfig] = None,
                    scene: Optional[str] = None,
                    video_length: Optional[int] = None,
                    include_spans: bool = False) -> tuple[EventGraph, ProtoScript, StageStats]:
    """Graph plus proto-language in one call; the composition equals
    running build_graph and render_proto separately."""
    graph, stats = build_graph(records, config, video_length)
    script = render_proto(graph, scene=scene, include_spans=include_spans)
    return graph, script, stats
