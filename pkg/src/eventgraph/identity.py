"""Person identity unification.

Raw tracker ids are fragile: the tracker re-assigns ids after short blind
spots and after a person leaves and re-enters the frame. Two passes fix
this: short gaps are bridged geometrically (time gap + box IoU), long
gaps are bridged by appearance (linearized HSV histogram descriptors
compared with cosine similarity).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from .errors import NoMasks, ZeroVector
from .histogram import DEFAULT_BINS, compute_histogram
from .ingest import BoundingBox, FrameRecord, MaskSummary

__all__ = [
    "TrackSegment",
    "PersonEntity",
    "track_segments_from_records",
    "bridge_short_gaps",
    "compute_histogram",
    "compute_person_descriptor",
    "cosine_similarity",
    "entities_from_segments",
    "reidentify",
    "person_id_map",
]


@dataclass(frozen=True)
class TrackSegment:
    """Contiguous observations of one raw tracker id."""

    raw_track_id: int
    start_frame: int
    end_frame: int
    per_frame_boxes: Mapping[int, BoundingBox]
    per_frame_masks: Mapping[int, MaskSummary]
    member_raw_ids: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise ValueError("start_frame must be <= end_frame")
        if not self.per_frame_boxes:
            raise ValueError("segment needs at least one box observation")
        if not self.member_raw_ids:
            object.__setattr__(self, "member_raw_ids", (self.raw_track_id,))

    @property
    def first_box(self) -> BoundingBox:
        return self.per_frame_boxes[min(self.per_frame_boxes)]

    @property
    def last_box(self) -> BoundingBox:
        return self.per_frame_boxes[max(self.per_frame_boxes)]


@dataclass
class PersonEntity:
    """A unified actor identity with appearance descriptor."""

    person_id: int
    member_segments: list[TrackSegment]
    descriptor: np.ndarray

    @property
    def first_frame(self) -> int:
        return min(s.start_frame for s in self.member_segments)

    @property
    def raw_track_ids(self) -> Tuple[int, ...]:
        ids: list[int] = []
        for seg in self.member_segments:
            ids.extend(seg.member_raw_ids)
        return tuple(sorted(set(ids)))

    def overlaps_in_time(self, other: "PersonEntity") -> bool:
        for a in self.member_segments:
            for b in other.member_segments:
                if a.start_frame <= b.end_frame and b.start_frame <= a.end_frame:
                    return True
        return False


def track_segments_from_records(records: Sequence[FrameRecord]) -> list[TrackSegment]:
    """One segment per raw tracker id, spanning the frames where the
    tracker reported a person box. Masks attach by track id regardless of
    whether an action fired on that frame. Tracks that never produced a
    box are dropped (nothing downstream can use them)."""
    boxes: Dict[int, Dict[int, BoundingBox]] = {}
    best_conf: Dict[Tuple[int, int], float] = {}
    masks: Dict[int, Dict[int, MaskSummary]] = {}
    for record in records:
        for action in record.actions:
            key = (action.track_id, record.frame_index)
            # Multiple detections of the same track in one frame share the
            # tracker's box in practice; keep the most confident one.
            if key not in best_conf or action.confidence > best_conf[key]:
                best_conf[key] = action.confidence
                boxes.setdefault(action.track_id, {})[record.frame_index] = action.person_box
        for mask in record.masks:
            masks.setdefault(mask.track_id, {})[record.frame_index] = mask

    segments = []
    for track_id in sorted(boxes):
        frame_boxes = boxes[track_id]
        segments.append(TrackSegment(
            raw_track_id=track_id,
            start_frame=min(frame_boxes),
            end_frame=max(frame_boxes),
            per_frame_boxes=dict(sorted(frame_boxes.items())),
            per_frame_masks=dict(sorted(masks.get(track_id, {}).items())),
        ))
    segments.sort(key=lambda s: (s.start_frame, s.raw_track_id))
    return segments


def _merge_segments(earlier: TrackSegment, later: TrackSegment) -> TrackSegment:
    boxes = dict(earlier.per_frame_boxes)
    boxes.update(later.per_frame_boxes)
    mask_map = dict(earlier.per_frame_masks)
    mask_map.update(later.per_frame_masks)
    return TrackSegment(
        raw_track_id=earlier.raw_track_id,
        start_frame=min(earlier.start_frame, later.start_frame),
        end_frame=max(earlier.end_frame, later.end_frame),
        per_frame_boxes=dict(sorted(boxes.items())),
        per_frame_masks=dict(sorted(mask_map.items())),
        member_raw_ids=tuple(sorted(set(earlier.member_raw_ids + later.member_raw_ids))),
    )


def bridge_short_gaps(segments: Sequence[TrackSegment],
                      max_gap: int = 10,
                      iou_min: float = 0.6) -> list[TrackSegment]:
    """Merge tracker fragments that are close in time and space.

    Two segments merge when 0 < later.start - earlier.end < max_gap and
    the IoU between the earlier's last box and the later's first box
    exceeds iou_min. Applied transitively until no merge fires. Gap 0 or
    less means temporal overlap, which is never a tracker blind spot.
    """
    segs = sorted(segments, key=lambda s: (s.start_frame, s.raw_track_id))
    while True:
        merged = False
        for i in range(len(segs)):
            for j in range(len(segs)):
                if i == j:
                    continue
                a, b = segs[i], segs[j]
                gap = b.start_frame - a.end_frame
                if 0 < gap < max_gap and a.last_box.iou(b.first_box) > iou_min:
                    union = _merge_segments(a, b)
                    segs = [s for k, s in enumerate(segs) if k not in (i, j)]
                    segs.append(union)
                    segs.sort(key=lambda s: (s.start_frame, s.raw_track_id))
                    merged = True
                    break
            if merged:
                break
        if not merged:
            return segs


def compute_person_descriptor(segments: Sequence[TrackSegment],
                              bins: Tuple[int, int, int] = DEFAULT_BINS,
                              std_factor: float = 1.5) -> np.ndarray:
    """Appearance descriptor accumulated over representative masks.

    Representative masks are those whose pixel_count reaches
    mean + std_factor * std (population std) over all the entity's masks;
    when none qualifies the single largest mask stands in.
    """
    masks: list[Tuple[int, int, MaskSummary]] = []
    for seg in segments:
        for frame, mask in seg.per_frame_masks.items():
            masks.append((frame, seg.raw_track_id, mask))
    if not masks:
        raise NoMasks("entity has no masks; cannot compute a descriptor")
    counts = np.array([m.pixel_count for _, _, m in masks], dtype=np.float64)
    threshold = counts.mean() + std_factor * counts.std()
    representative = [m for (_, _, m), c in zip(masks, counts) if c >= threshold]
    if not representative:
        biggest = max(masks, key=lambda entry: (entry[2].pixel_count, -entry[0], -entry[1]))
        representative = [biggest[2]]
    descriptor = np.zeros(np.prod(bins), dtype=np.float64)
    for mask in representative:
        descriptor += mask.histogram(bins)
    return descriptor


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine similarity undefined for a zero vector")
    return float(np.dot(a, b) / (norm_a * norm_b))


def entities_from_segments(segments: Sequence[TrackSegment],
                           bins: Tuple[int, int, int] = DEFAULT_BINS,
                           std_factor: float = 1.5) -> list[PersonEntity]:
    """One provisional entity per segment, ids in order of first appearance.

    Segments without any mask get an all-zero descriptor; they can never
    merge by appearance but still carry their geometry downstream.
    """
    ordered = sorted(segments, key=lambda s: (s.start_frame, s.raw_track_id))
    entities = []
    for idx, seg in enumerate(ordered):
        try:
            descriptor = compute_person_descriptor([seg], bins, std_factor)
        except NoMasks:
            descriptor = np.zeros(int(np.prod(bins)), dtype=np.float64)
        entities.append(PersonEntity(idx, [seg], descriptor))
    return entities


def reidentify(entities: Sequence[PersonEntity],
               threshold: float = 0.3,
               bins: Tuple[int, int, int] = DEFAULT_BINS,
               std_factor: float = 1.5) -> list[PersonEntity]:
    """Greedy-max appearance merging.

    Repeatedly merge the non-time-overlapping pair with the highest
    descriptor cosine similarity while that similarity exceeds the
    threshold; entities visible at the same time are never the same
    person. Ties break on the smaller id pair. Final person_ids are dense,
    ordered by first appearance.
    """
    pool: list[PersonEntity] = [
        PersonEntity(e.person_id, list(e.member_segments), np.array(e.descriptor))
        for e in entities
    ]

    def best_pair():
        best = None
        for i in range(len(pool)):
            for j in range(i + 1, len(pool)):
                a, b = pool[i], pool[j]
                if a.overlaps_in_time(b):
                    continue
                if not a.descriptor.any() or not b.descriptor.any():
                    continue
                sim = cosine_similarity(a.descriptor, b.descriptor)
                lo, hi = sorted((a.person_id, b.person_id))
                key = (-sim, lo, hi)
                if best is None or key < best[0]:
                    best = (key, sim, i, j)
        return best

    while True:
        found = best_pair()
        if found is None or found[1] <= threshold:
            break
        _, _, i, j = found
        a, b = pool[i], pool[j]
        keeper = a if a.person_id < b.person_id else b
        segments = sorted(a.member_segments + b.member_segments,
                          key=lambda s: (s.start_frame, s.raw_track_id))
        descriptor = compute_person_descriptor(segments, bins, std_factor)
        merged = PersonEntity(keeper.person_id, segments, descriptor)
        pool = [e for k, e in enumerate(pool) if k not in (i, j)]
        pool.append(merged)

    pool.sort(key=lambda e: (e.first_frame, min(e.raw_track_ids)))
    return [PersonEntity(idx, e.member_segments, e.descriptor)
            for idx, e in enumerate(pool)]


def person_id_map(entities: Sequence[PersonEntity]) -> Dict[int, int]:
    """raw tracker id -> stable person id."""
    mapping: Dict[int, int] = {}
    for entity in entities:
        for raw in entity.raw_track_ids:
            mapping[raw] = entity.person_id
    return mapping
