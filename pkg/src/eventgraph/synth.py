"""Scripted-scene oracle: synthetic perception streams with known ground
truth, for end-to-end verification and noise-robustness reporting.

A scene script declares true persons (with separable appearance modes),
a timeline of actions with box trajectories and planted objects, and a
noise model. emit_stream produces both the perception stream and the
ground-truth graph the engine must recover. The ground truth is built
from the script by interval predicates and self-contained relation
rules, never through the engine pipeline.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import yaml

from .config import Thresholds
from .errors import InvalidScript
from .events import Event
from .graph import EventEdge, EventGraph, graph_from_events
from .histogram import hsv_bin_index
from .ingest import (
    ActionDetection,
    BoundingBox,
    FrameRecord,
    MaskSummary,
    ObjectDetection,
)

OBJECT_PLACEMENTS = ("near", "far_2d", "far_depth")


@dataclass(frozen=True)
class NoiseSpec:
    id_switch_prob: float = 0.0
    dropout_prob: float = 0.0
    confidence_jitter: float = 0.0
    seed: int = 7

    def __post_init__(self):
        for name in ("id_switch_prob", "dropout_prob", "confidence_jitter"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise InvalidScript(f"noise.{name} must be in [0, 1]")

    @property
    def any_noise(self) -> bool:
        return (self.id_switch_prob > 0 or self.dropout_prob > 0
                or self.confidence_jitter > 0)


@dataclass(frozen=True)
class IdBreak:
    """Scripted tracker fault: the actor vanishes at `frame` for `gap`
    frames and reappears under a fresh raw track id."""
    frame: int
    gap: int


@dataclass(frozen=True)
class ActorSpec:
    person_id: int
    color: Tuple[float, float, float]
    depth: float = 5.0
    mask_pixels: int = 8
    color_jitter: Tuple[float, float, float] = (2.0, 0.02, 0.02)
    id_breaks: Tuple[IdBreak, ...] = ()


@dataclass(frozen=True)
class ObjectSpec:
    label: str
    placement: str = "near"
    coverage: float = 1.0
    frames_present: Optional[int] = None
    depth_factor: float = 1.0

    def __post_init__(self):
        if self.placement not in OBJECT_PLACEMENTS:
            raise InvalidScript(f"object placement must be one of {OBJECT_PLACEMENTS}")
        if not (0.0 <= self.coverage <= 1.0):
            raise InvalidScript("object coverage must be in [0, 1]")

    def present_frames(self, span: int) -> int:
        if self.frames_present is not None:
            return min(self.frames_present, span)
        return math.ceil(self.coverage * span)

    def survives_filters(self, depth_max_relative: float) -> bool:
        """Does this object pass the proximity filters by construction?"""
        if self.placement != "near":
            return False
        return abs(self.depth_factor - 1.0) <= depth_max_relative


@dataclass(frozen=True)
class TimelineEntry:
    person_id: int
    action_label: str
    start: int
    end: int
    confidence: float = 0.95
    start_box: BoundingBox = BoundingBox(10, 10, 50, 90)
    end_box: Optional[BoundingBox] = None
    objects: Tuple[ObjectSpec, ...] = ()

    def box_at(self, frame: int) -> BoundingBox:
        last = self.end_box or self.start_box
        if self.end == self.start:
            return self.start_box
        t = (frame - self.start) / (self.end - self.start)
        a, b = self.start_box, last
        return BoundingBox(
            a.x_min + t * (b.x_min - a.x_min),
            a.y_min + t * (b.y_min - a.y_min),
            a.x_max + t * (b.x_max - a.x_max),
            a.y_max + t * (b.y_max - a.y_max),
        )


@dataclass(frozen=True)
class SceneScript:
    video_length: int
    actors: Tuple[ActorSpec, ...]
    timeline: Tuple[TimelineEntry, ...]
    noise: NoiseSpec = NoiseSpec()
    expect: Dict[str, object] = field(default_factory=dict)
    name: str = "scene"


# --- script loading ---------------------------------------------------------

def _box_from(raw) -> BoundingBox:
    return BoundingBox.from_list(raw)


def script_from_dict(raw: dict, name: str = "scene") -> SceneScript:
    try:
        actors = []
        for a in raw["actors"]:
            color = a["color"]
            actors.append(ActorSpec(
                person_id=int(a["person_id"]),
                color=(float(color["h"]), float(color["s"]), float(color["v"])),
                depth=float(a.get("depth", 5.0)),
                mask_pixels=int(a.get("mask_pixels", 8)),
                color_jitter=tuple(a.get("color_jitter", (2.0, 0.02, 0.02))),
                id_breaks=tuple(IdBreak(int(b["frame"]), int(b["gap"]))
                                for b in a.get("id_breaks", [])),
            ))
        timeline = []
        for t in raw["timeline"]:
            path = t.get("path", {})
            timeline.append(TimelineEntry(
                person_id=int(t["person_id"]),
                action_label=str(t["action_label"]),
                start=int(t["start"]),
                end=int(t["end"]),
                confidence=float(t.get("confidence", 0.95)),
                start_box=_box_from(path.get("start_box", [10, 10, 50, 90])),
                end_box=(_box_from(path["end_box"]) if "end_box" in path else None),
                objects=tuple(ObjectSpec(
                    label=str(o["label"]),
                    placement=str(o.get("placement", "near")),
                    coverage=float(o.get("coverage", 1.0)),
                    frames_present=(None if o.get("frames_present") is None
                                    else int(o["frames_present"])),
                    depth_factor=float(o.get("depth_factor", 1.0)),
                ) for o in t.get("objects", [])),
            ))
        noise_raw = raw.get("noise", {})
        script = SceneScript(
            video_length=int(raw["video_length"]),
            actors=tuple(actors),
            timeline=tuple(timeline),
            noise=NoiseSpec(
                id_switch_prob=float(noise_raw.get("id_switch_prob", 0.0)),
                dropout_prob=float(noise_raw.get("dropout_prob", 0.0)),
                confidence_jitter=float(noise_raw.get("confidence_jitter", 0.0)),
                seed=int(noise_raw.get("seed", 7)),
            ),
            expect=dict(raw.get("expect", {})),
            name=name,
        )
    except InvalidScript:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidScript(f"{name}: {exc}") from exc
    validate_script(script)
    return script


def load_script(path: Union[str, Path]) -> SceneScript:
    path = Path(path)
    raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    return script_from_dict(raw, name=path.stem)


def validate_script(script: SceneScript) -> None:
    if script.video_length <= 0:
        raise InvalidScript("video_length must be positive")
    actor_ids = {a.person_id for a in script.actors}
    if len(actor_ids) != len(script.actors):
        raise InvalidScript("duplicate actor person_id")
    for entry in script.timeline:
        if entry.person_id not in actor_ids:
            raise InvalidScript(f"timeline references unknown actor {entry.person_id}")
        if not (0 <= entry.start <= entry.end < script.video_length):
            raise InvalidScript(
                f"entry [{entry.start}, {entry.end}] outside [0, {script.video_length})")
    # Appearance separability by construction: distinct actors must occupy
    # distinct HSV bins so cross-actor descriptor cosine stays below the
    # re-id threshold.
    bins_seen: Dict[int, int] = {}
    for actor in script.actors:
        mode_bin = hsv_bin_index(*actor.color)
        if mode_bin in bins_seen and bins_seen[mode_bin] != actor.person_id:
            raise InvalidScript(
                f"actors {bins_seen[mode_bin]} and {actor.person_id} share an HSV bin")
        bins_seen[mode_bin] = actor.person_id


# --- stream emission -----------------------------------------------------------

def _break_windows(actor: ActorSpec) -> list[Tuple[int, int]]:
    return [(b.frame, b.frame + b.gap) for b in actor.id_breaks]


def _jittered_color(actor: ActorSpec, rng: random.Random) -> Tuple[float, float, float]:
    jh, js, jv = actor.color_jitter
    h = (actor.color[0] + rng.uniform(-jh, jh)) % 360.0
    s = min(1.0, max(0.0, actor.color[1] + rng.uniform(-js, js)))
    v = min(1.0, max(0.0, actor.color[2] + rng.uniform(-jv, jv)))
    return (h, s, v)


def emit_stream(script: SceneScript,
                thresholds: Optional[Thresholds] = None) -> tuple[list[FrameRecord], EventGraph]:
    """Perception stream plus the ground-truth graph implied by the
    script. With zero noise the engine must recover a graph isomorphic to
    the truth."""
    thresholds = thresholds or Thresholds()
    validate_script(script)
    rng = random.Random(script.noise.seed)
    next_track = 1000
    current_track = {a.person_id: a.person_id for a in script.actors}
    breaks_applied: Dict[int, set] = {a.person_id: set() for a in script.actors}

    records = []
    for f in range(script.video_length):
        actions: list[ActionDetection] = []
        objects: list[ObjectDetection] = []
        masks: list[MaskSummary] = []
        for actor in script.actors:
            active = [e for e in script.timeline
                      if e.person_id == actor.person_id and e.start <= f <= e.end]
            if not active:
                continue
            if any(b0 <= f < b1 for b0, b1 in _break_windows(actor)):
                continue
            # A finished break switches the id at the next visible frame,
            # even when the break ended during an idle stretch.
            for b0, b1 in _break_windows(actor):
                if f >= b1 and b0 not in breaks_applied[actor.person_id]:
                    breaks_applied[actor.person_id].add(b0)
                    current_track[actor.person_id] = next_track
                    next_track += 1
            if script.noise.dropout_prob > 0 and rng.random() < script.noise.dropout_prob:
                continue
            if script.noise.id_switch_prob > 0 and rng.random() < script.noise.id_switch_prob:
                current_track[actor.person_id] = next_track
                next_track += 1
            track = current_track[actor.person_id]
            for entry in active:
                conf = entry.confidence
                if script.noise.confidence_jitter > 0:
                    conf = min(1.0, max(0.0, conf + rng.uniform(
                        -script.noise.confidence_jitter,
                        script.noise.confidence_jitter)))
                actions.append(ActionDetection(entry.action_label, conf,
                                               entry.box_at(f), track))
                span = entry.end - entry.start + 1
                for obj_spec in entry.objects:
                    if f - entry.start >= obj_spec.present_frames(span):
                        continue
                    if obj_spec.placement == "near":
                        obox = entry.box_at(f)
                    elif obj_spec.placement == "far_2d":
                        base = entry.box_at(f)
                        shift = 10 * base.width + 1000
                        obox = BoundingBox(base.x_min + shift, base.y_min,
                                           base.x_max + shift, base.y_max)
                    else:  # far_depth: overlapping in 2D, far in depth
                        obox = entry.box_at(f)
                    factor = obj_spec.depth_factor
                    if obj_spec.placement == "far_depth" and factor == 1.0:
                        factor = 1.5
                    objects.append(ObjectDetection(
                        obj_spec.label, obox, actor.depth * factor, "detector"))
            pixels = tuple(_jittered_color(actor, rng)
                           for _ in range(actor.mask_pixels))
            masks.append(MaskSummary(
                track_id=track,
                pixel_count=actor.mask_pixels,
                mean_depth=actor.depth,
                hsv_pixels=pixels,
            ))
        records.append(FrameRecord(frame_index=f, actions=tuple(actions),
                                   objects=tuple(objects), masks=tuple(masks)))

    truth = ground_truth_graph(script, thresholds)
    return records, truth


# --- ground truth ----------------------------------------------------------------

def _top2_surviving_frames(script: SceneScript, entry: TimelineEntry,
                           thresholds: Thresholds) -> list[int]:
    """Frames where the entry survives the per-frame top-k rule and the
    actor is visible (outside scripted breaks)."""
    actor = next(a for a in script.actors if a.person_id == entry.person_id)
    windows = _break_windows(actor)
    survivors = []
    for f in range(entry.start, entry.end + 1):
        if any(b0 <= f < b1 for b0, b1 in windows):
            continue
        concurrent = [e for e in script.timeline
                      if e.start <= f <= e.end
                      and e.confidence >= thresholds.action_confidence_min]
        concurrent.sort(key=lambda e: (-e.confidence, e.action_label, e.person_id))
        if entry in concurrent[:thresholds.actions_per_frame_top_k]:
            survivors.append(f)
    return survivors


def _contiguous_pieces(frames: Sequence[int]) -> list[Tuple[int, int]]:
    pieces = []
    for f in frames:
        if pieces and f == pieces[-1][1] + 1:
            pieces[-1] = (pieces[-1][0], f)
        else:
            pieces.append((f, f))
    return pieces


def _merge_intervals(pieces: list[Tuple[int, int]], gap_fraction: float,
                     length: int) -> list[Tuple[int, int]]:
    merged: list[Tuple[int, int]] = []
    for start, end in sorted(pieces):
        if merged and (start - merged[-1][1]) / length <= gap_fraction:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def ground_truth_graph(script: SceneScript,
                       thresholds: Optional[Thresholds] = None) -> EventGraph:
    """The graph the engine must recover, derived from the script alone.

    Per (person, action) the surviving frame set is computed from the
    declared filters (confidence, per-frame top-k, visibility breaks, the
    11-frame voting predicate); its contiguous runs re-join under the
    gap-unification rule and become events; objects survive by placement,
    depth factor and coverage. Only interval predicates, never the engine
    pipeline.
    """
    thresholds = thresholds or Thresholds()
    t = thresholds
    half = t.vote_window_halfwidth

    entries_by_key: Dict[Tuple[int, str], list[TimelineEntry]] = {}
    for entry in script.timeline:
        if entry.confidence < t.action_confidence_min:
            continue
        entries_by_key.setdefault((entry.person_id, entry.action_label),
                                  []).append(entry)

    events: list[Event] = []
    for (person, label), entries in sorted(entries_by_key.items()):
        frame_owner: Dict[int, TimelineEntry] = {}
        for entry in entries:
            for f in _top2_surviving_frames(script, entry, t):
                frame_owner.setdefault(f, entry)
        survivors = set(frame_owner)
        voted = sorted(
            f for f in survivors
            if sum(1 for g in survivors if f - half <= g <= f + half) >= t.vote_min_count
        )
        pieces = _contiguous_pieces(voted)
        merged = _merge_intervals(pieces, t.event_unify_max_gap_fraction,
                                  script.video_length)
        for start, end in merged:
            span_len = end - start + 1
            frames_here = [f for f in voted if start <= f <= end]
            boxes = {f: frame_owner[f].box_at(f) for f in frames_here}
            object_frames: Dict[str, int] = {}
            for f in frames_here:
                entry = frame_owner[f]
                entry_span = entry.end - entry.start + 1
                for obj_spec in entry.objects:
                    if not obj_spec.survives_filters(t.depth_max_relative):
                        continue
                    if f - entry.start < obj_spec.present_frames(entry_span):
                        object_frames[obj_spec.label] = object_frames.get(obj_spec.label, 0) + 1
            keep_objects = {
                obj_label for obj_label, count in object_frames.items()
                if count / span_len >= t.object_presence_min_fraction
            }
            events.append(Event(
                event_id=len(events),
                person_id=person,
                action_label=label,
                start_frame=start,
                end_frame=end,
                objects=frozenset(keep_objects),
                per_frame_boxes=boxes,
            ))

    events.sort(key=lambda e: (e.start_frame, e.person_id, e.action_label))
    events = [Event(i, e.person_id, e.action_label, e.start_frame, e.end_frame,
                    e.objects, e.per_frame_boxes, e.per_frame_objects)
              for i, e in enumerate(events)]
    graph = graph_from_events(events, script.video_length)
    edges = _truth_temporal_edges(events, script.video_length, t)
    edges += _truth_spatial_edges(events, t)
    return EventGraph(dict(graph.nodes), edges, script.video_length)


def _truth_temporal_edges(events: Sequence[Event], length: int,
                          t: Thresholds) -> list[EventEdge]:
    """Relation rules restated from their definitions, independent of the
    engine's edge builder."""
    edges = []
    for i in range(len(events)):
        for j in range(i + 1, len(events)):
            a, b = events[i], events[j]
            near_start = abs(a.start_frame - b.start_frame) / length <= t.same_time_tolerance_fraction
            near_end = abs(a.end_frame - b.end_frame) / length <= t.same_time_tolerance_fraction
            if near_start and near_end:
                edges.append(EventEdge(a.event_id, b.event_id, "same_time"))
                continue
            disjoint = a.end_frame < b.start_frame or b.end_frame < a.start_frame
            if not disjoint:
                edges.append(EventEdge(a.event_id, b.event_id, "meanwhile"))
                continue
            earlier, later = (a, b) if a.start_frame <= b.start_frame else (b, a)
            if later.start_frame < earlier.end_frame:
                continue
            if (earlier.person_id == later.person_id
                    and earlier.action_label == later.action_label):
                continue
            if (later.start_frame - earlier.end_frame) / length <= t.next_max_gap_fraction:
                edges.append(EventEdge(earlier.event_id, later.event_id, "next"))
    return edges


def _truth_spatial_edges(events: Sequence[Event],
                         t: Thresholds) -> list[EventEdge]:
    edges = []
    for i in range(len(events)):
        for j in range(i + 1, len(events)):
            a, b = events[i], events[j]
            shared = sorted(set(a.per_frame_boxes) & set(b.per_frame_boxes))
            if not shared:
                continue
            close = 0
            for f in shared:
                box_a, box_b = a.per_frame_boxes[f], b.per_frame_boxes[f]
                (ax, ay), (bx, by) = box_a.centroid, box_b.centroid
                distance = math.hypot(ax - bx, ay - by)
                diag_sum = box_a.diagonal + box_b.diagonal
                if diag_sum == 0:
                    ratio = 0.0 if distance == 0 else math.inf
                else:
                    ratio = distance / diag_sum
                if ratio < t.spatial_ratio_threshold:
                    close += 1
            if close / len(shared) > t.spatial_frame_fraction:
                edges.append(EventEdge(a.event_id, b.event_id, "spatial_close"))
    return edges


# --- recovery scoring (noise harness; reported, never asserted) ------------------

def recovery_score(truth: EventGraph, recovered: EventGraph) -> dict:
    """How much of the ground truth the engine recovered: event F1 on
    (label, span-overlap), person-count match, and edge-kind agreement."""
    truth_events = truth.events()
    got_events = recovered.events()

    def overlap(a: Event, b: Event) -> float:
        inter = min(a.end_frame, b.end_frame) - max(a.start_frame, b.start_frame) + 1
        union = max(a.end_frame, b.end_frame) - min(a.start_frame, b.start_frame) + 1
        return max(0.0, inter / union)

    matched = set()
    hits = 0
    for te in truth_events:
        best, best_score = None, 0.0
        for ge in got_events:
            if ge.event_id in matched or ge.action_label != te.action_label:
                continue
            score = overlap(te, ge)
            if score > best_score:
                best, best_score = ge, score
        if best is not None and best_score >= 0.5:
            matched.add(best.event_id)
            hits += 1
    precision = hits / len(got_events) if got_events else (1.0 if not truth_events else 0.0)
    recall = hits / len(truth_events) if truth_events else 1.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)

    def person_count(graph: EventGraph) -> int:
        return len({e.person_id for e in graph.events()})

    def kind_counts(graph: EventGraph) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for e in graph.edges:
            out[e.kind] = out.get(e.kind, 0) + 1
        return out

    return {
        "event_precision": precision,
        "event_recall": recall,
        "event_f1": f1,
        "persons_truth": person_count(truth),
        "persons_recovered": person_count(recovered),
        "edges_truth": kind_counts(truth),
        "edges_recovered": kind_counts(recovered),
    }


def with_noise(script: SceneScript, noise: NoiseSpec) -> SceneScript:
    from dataclasses import replace
    return replace(script, noise=noise)


def check_expectations(script: SceneScript, truth: EventGraph) -> list[str]:
    """Compare a script's optional `expect` block against the built
    ground truth; returns human-readable mismatch descriptions."""
    problems = []
    expect = script.expect
    events = truth.events()
    if "events" in expect and len(events) != int(expect["events"]):
        problems.append(f"expected {expect['events']} events, truth has {len(events)}")
    if "persons" in expect:
        persons = {e.person_id for e in events}
        if len(persons) != int(expect["persons"]):
            problems.append(
                f"expected {expect['persons']} persons, truth has {len(persons)}")
    if "edges" in expect:
        counts: Dict[str, int] = {}
        for e in truth.edges:
            counts[e.kind] = counts.get(e.kind, 0) + 1
        want = {str(k): int(v) for k, v in dict(expect["edges"]).items()}
        if counts != want:
            problems.append(f"expected edges {want}, truth has {counts}")
    if "event_objects" in expect:
        got = [sorted(e.objects) for e in events]
        want_objects = [sorted(x) for x in expect["event_objects"]]
        if got != want_objects:
            problems.append(f"expected objects {want_objects}, truth has {got}")
    return problems


def shipped_scene_dir() -> Path:
    from importlib import resources
    return Path(str(resources.files("eventgraph.assets").joinpath("scenes")))


def shipped_scene_paths() -> list[Path]:
    return sorted(shipped_scene_dir().glob("*.yaml"))
