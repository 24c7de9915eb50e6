"""Frame-level action post-processing and event aggregation.

Per-frame action detections are noisy; the sequence here mirrors the
stage order of the engine: confidence + top-k filtering, window voting,
object association (2D overlap and depth), aggregation of consecutive
frames into events, and unification of fragmented events.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Mapping, Optional, Sequence, Tuple

from .ingest import BoundingBox, FrameRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameAction:
    """One surviving action instance at one frame."""

    frame_index: int
    person_id: int
    action_label: str
    confidence: float
    person_box: BoundingBox
    candidate_objects: FrozenSet[str] = frozenset()
    track_id: int = -1


@dataclass(frozen=True)
class Event:
    """Maximal run of one person doing one action, with candidate objects."""

    event_id: int
    person_id: int
    action_label: str
    start_frame: int
    end_frame: int
    objects: FrozenSet[str]
    per_frame_boxes: Mapping[int, BoundingBox]
    per_frame_objects: Mapping[int, FrozenSet[str]] = field(default_factory=dict)
    properties: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise ValueError("start_frame must be <= end_frame")

    @property
    def span_length(self) -> int:
        return self.end_frame - self.start_frame + 1

    def overlaps(self, other: "Event") -> bool:
        return (self.start_frame <= other.end_frame
                and other.start_frame <= self.end_frame)


def filter_actions(frames: Sequence[FrameRecord],
                   person_ids: Optional[Mapping[int, int]] = None,
                   confidence_min: float = 0.75,
                   top_k: int = 2) -> list[FrameAction]:
    """Drop low-confidence actions and keep the top_k most confident per
    frame (confidence ties break on label, then track id). person_ids maps
    raw tracker ids to unified person ids; unmapped tracks keep their raw
    id. Output sorted by (frame, person)."""
    out: list[FrameAction] = []
    for frame in frames:
        survivors = [a for a in frame.actions if a.confidence >= confidence_min]
        survivors.sort(key=lambda a: (-a.confidence, a.action_label, a.track_id))
        for action in survivors[:top_k]:
            person = action.track_id
            if person_ids is not None:
                person = person_ids.get(action.track_id, action.track_id)
            out.append(FrameAction(
                frame_index=frame.frame_index,
                person_id=person,
                action_label=action.action_label,
                confidence=action.confidence,
                person_box=action.person_box,
                track_id=action.track_id,
            ))
    out.sort(key=lambda a: (a.frame_index, a.person_id, a.action_label))
    return out


def window_vote(actions: Sequence[FrameAction],
                halfwidth: int = 5,
                min_count: int = 5) -> list[FrameAction]:
    """Keep an action instance only if its (person, label) recurs at least
    min_count times within the window of 2*halfwidth+1 frames centred on
    it. Counts come from the pre-vote snapshot, so deletions never
    cascade."""
    frames_by_key: Dict[Tuple[int, str], set[int]] = {}
    for action in actions:
        frames_by_key.setdefault((action.person_id, action.action_label),
                                 set()).add(action.frame_index)
    kept = []
    for action in actions:
        window_frames = frames_by_key[(action.person_id, action.action_label)]
        count = sum(1 for f in window_frames
                    if action.frame_index - halfwidth <= f <= action.frame_index + halfwidth)
        if count >= min_count:
            kept.append(action)
    return kept


def associate_objects(action: FrameAction,
                      frame: FrameRecord,
                      enlarge_fraction: float = 0.10,
                      iou_min: float = 0.1,
                      depth_max_relative: float = 0.25,
                      depth_epsilon: float = 1e-6,
                      image_size: Optional[Tuple[float, float]] = None) -> frozenset[str]:
    """Objects in the person's vicinity: the person box is enlarged, then
    objects pass on 2D overlap (IoU against the enlarged box) and on
    relative depth against the person's mask depth. A person without a
    mask depth passes the depth test by default."""
    if action.frame_index != frame.frame_index:
        raise ValueError(
            f"action frame {action.frame_index} does not match record "
            f"frame {frame.frame_index}"
        )
    enlarged = action.person_box.enlarged(enlarge_fraction, image_size)
    mask = frame.mask_for_track(action.track_id)
    person_depth = mask.mean_depth if mask is not None else None
    if person_depth is None:
        logger.warning("frame %d track %d: no mask depth, depth filter disabled",
                       frame.frame_index, action.track_id)
    labels = set()
    for obj in frame.objects:
        if obj.box.iou(enlarged) < iou_min:
            continue
        if person_depth is not None:
            relative = abs(obj.mean_depth - person_depth) / max(person_depth, depth_epsilon)
            if relative > depth_max_relative:
                continue
        labels.add(obj.object_label)
    return frozenset(labels)


def attach_objects(actions: Sequence[FrameAction],
                   frames: Sequence[FrameRecord],
                   **assoc_params) -> list[FrameAction]:
    """Fill candidate_objects on each action from its frame record."""
    by_index = {f.frame_index: f for f in frames}
    return [
        replace(action, candidate_objects=associate_objects(
            action, by_index[action.frame_index], **assoc_params))
        for action in actions
    ]


def _filter_span_objects(labels_by_frame: Mapping[int, FrozenSet[str]],
                         start: int, end: int,
                         presence_min: float) -> frozenset[str]:
    """Labels present in at least presence_min of the frames between start
    and end (span length is the denominator)."""
    span = end - start + 1
    counts: Dict[str, int] = {}
    for frame, labels in labels_by_frame.items():
        if start <= frame <= end:
            for label in labels:
                counts[label] = counts.get(label, 0) + 1
    return frozenset(label for label, c in counts.items() if c / span >= presence_min)


def aggregate_events(actions: Sequence[FrameAction],
                     presence_min: float = 0.10) -> list[Event]:
    """Turn maximal runs of consecutive frames with the same (person,
    label) into events. An event's objects are the candidates present in
    at least presence_min of its frames."""
    by_key: Dict[Tuple[int, str], list[FrameAction]] = {}
    for action in actions:
        by_key.setdefault((action.person_id, action.action_label), []).append(action)

    events: list[Event] = []
    for (person, label), group in by_key.items():
        group.sort(key=lambda a: a.frame_index)
        run: list[FrameAction] = []
        for action in group:
            if run and action.frame_index == run[-1].frame_index:
                # Duplicate detection of one (person, label) in one frame;
                # union the object candidates instead of splitting the run.
                run[-1] = replace(run[-1], candidate_objects=(
                    run[-1].candidate_objects | action.candidate_objects))
                continue
            if run and action.frame_index != run[-1].frame_index + 1:
                events.append(_event_from_run(person, label, run, presence_min))
                run = []
            run.append(action)
        if run:
            events.append(_event_from_run(person, label, run, presence_min))

    events.sort(key=lambda e: (e.start_frame, e.person_id, e.action_label))
    return [replace(e, event_id=i) for i, e in enumerate(events)]


def _event_from_run(person: int, label: str,
                    run: Sequence[FrameAction],
                    presence_min: float) -> Event:
    boxes = {a.frame_index: a.person_box for a in run}
    objects_by_frame = {a.frame_index: a.candidate_objects for a in run}
    start, end = run[0].frame_index, run[-1].frame_index
    return Event(
        event_id=-1,
        person_id=person,
        action_label=label,
        start_frame=start,
        end_frame=end,
        objects=_filter_span_objects(objects_by_frame, start, end, presence_min),
        per_frame_boxes=boxes,
        per_frame_objects=objects_by_frame,
    )


def unify_events(events: Sequence[Event],
                 video_length: int,
                 max_gap_fraction: float = 0.10,
                 presence_min: float = 0.10) -> list[Event]:
    """Merge events with the same (person, label) whose gap is at most
    max_gap_fraction of the video, to fixpoint. Objects are re-filtered
    with the presence rule over the merged span."""
    if video_length <= 0:
        raise ValueError("video_length must be positive")
    by_key: Dict[Tuple[int, str], list[Event]] = {}
    for event in events:
        by_key.setdefault((event.person_id, event.action_label), []).append(event)

    out: list[Event] = []
    for (person, label), group in by_key.items():
        group.sort(key=lambda e: e.start_frame)
        current = group[0]
        for nxt in group[1:]:
            gap = nxt.start_frame - current.end_frame
            if gap / video_length <= max_gap_fraction:
                boxes = dict(current.per_frame_boxes)
                boxes.update(nxt.per_frame_boxes)
                objs = dict(current.per_frame_objects)
                objs.update(nxt.per_frame_objects)
                start = current.start_frame
                end = max(current.end_frame, nxt.end_frame)
                current = Event(
                    event_id=-1,
                    person_id=person,
                    action_label=label,
                    start_frame=start,
                    end_frame=end,
                    objects=_filter_span_objects(objs, start, end, presence_min),
                    per_frame_boxes=boxes,
                    per_frame_objects=objs,
                )
            else:
                out.append(current)
                current = nxt
        out.append(current)

    out.sort(key=lambda e: (e.start_frame, e.person_id, e.action_label))
    return [replace(e, event_id=i) for i, e in enumerate(out)]
