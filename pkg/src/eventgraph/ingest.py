"""Perception-stream file format: record types, parsing, serialization.

A stream is UTF-8, line-delimited JSON, one frame per line, frames in
strictly increasing order. Upstream detectors produce it; everything in
the engine consumes the parsed records and never mutates them.

See docs/stream-format.md for the field-by-field description.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DuplicateTrackInFrame, MalformedRecord, NonMonotonicFrames
from .histogram import DEFAULT_BINS, compute_histogram, descriptor_length

OBJECT_SOURCES = ("detector", "segmentation")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel-coordinate box, image frame of reference."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if min(self.x_min, self.y_min, self.x_max, self.y_max) < 0:
            raise ValueError(f"box has negative coordinate: {self}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"box min exceeds max: {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def centroid(self) -> Tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def iou(self, other: "BoundingBox") -> float:
        ix = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        iy = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if ix <= 0 or iy <= 0:
            return 0.0
        inter = ix * iy
        union = self.area + other.area - inter
        if union <= 0:
            # Two degenerate (zero-area) boxes that coincide count as identical.
            return 1.0 if inter >= 0 and self == other else 0.0
        return inter / union

    def enlarged(self, fraction: float,
                 image_size: Optional[Tuple[float, float]] = None) -> "BoundingBox":
        """Grow by `fraction` of width/height on each side, clamped to the
        image when its size is known (the stream carries no image size)."""
        dx = self.width * fraction
        dy = self.height * fraction
        x_min = max(0.0, self.x_min - dx)
        y_min = max(0.0, self.y_min - dy)
        x_max = self.x_max + dx
        y_max = self.y_max + dy
        if image_size is not None:
            x_max = min(x_max, float(image_size[0]))
            y_max = min(y_max, float(image_size[1]))
        return BoundingBox(x_min, y_min, x_max, y_max)

    def to_list(self) -> list:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def from_list(cls, raw: Sequence[float]) -> "BoundingBox":
        if len(raw) != 4:
            raise ValueError(f"box must have 4 numbers, got {raw!r}")
        return cls(*(float(x) for x in raw))


@dataclass(frozen=True)
class ActionDetection:
    """One action hypothesis for one person in one frame."""

    action_label: str
    confidence: float
    person_box: BoundingBox
    track_id: int

    def __post_init__(self):
        if not self.action_label:
            raise ValueError("action_label must be non-empty")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class ObjectDetection:
    object_label: str
    box: BoundingBox
    mean_depth: float
    source: str = "detector"

    def __post_init__(self):
        if not self.object_label:
            raise ValueError("object_label must be non-empty")
        if not math.isfinite(self.mean_depth) or self.mean_depth < 0:
            raise ValueError(f"mean_depth {self.mean_depth} must be finite and >= 0")
        if self.source not in OBJECT_SOURCES:
            raise ValueError(f"source must be one of {OBJECT_SOURCES}, got {self.source!r}")


@dataclass(frozen=True)
class MaskSummary:
    """Per-frame person mask digest: either the full HSV pixel list or a
    precomputed histogram (producers that subsample pixels must ship the
    histogram, computed over the full mask, so pixel_count stays truthful).
    """

    track_id: int
    pixel_count: int
    mean_depth: float
    hsv_pixels: Optional[Tuple[Tuple[float, float, float], ...]] = None
    hsv_histogram: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.pixel_count < 0:
            raise ValueError("pixel_count must be >= 0")
        if not math.isfinite(self.mean_depth) or self.mean_depth < 0:
            raise ValueError(f"mean_depth {self.mean_depth} must be finite and >= 0")
        if self.hsv_pixels is None and self.hsv_histogram is None:
            raise ValueError("mask needs hsv_pixels or hsv_histogram")
        if self.hsv_pixels is not None and len(self.hsv_pixels) != self.pixel_count:
            raise ValueError(
                f"hsv_pixels has {len(self.hsv_pixels)} entries but pixel_count "
                f"is {self.pixel_count}"
            )
        if self.hsv_histogram is not None:
            if len(self.hsv_histogram) != descriptor_length(DEFAULT_BINS):
                raise ValueError(
                    f"hsv_histogram must have {descriptor_length(DEFAULT_BINS)} entries"
                )
            if any(x < 0 for x in self.hsv_histogram):
                raise ValueError("hsv_histogram entries must be >= 0")
        if self.hsv_pixels is not None and self.hsv_histogram is not None:
            computed = compute_histogram(self.hsv_pixels)
            if not np.array_equal(computed, np.asarray(self.hsv_histogram)):
                raise ValueError("hsv_histogram inconsistent with hsv_pixels")

    def histogram(self, bins=DEFAULT_BINS) -> np.ndarray:
        """Histogram of this mask; recomputed from pixels when custom bins
        are requested (stored histograms are always default-binned)."""
        if self.hsv_pixels is not None:
            return compute_histogram(self.hsv_pixels, bins)
        if bins != DEFAULT_BINS:
            raise ValueError("stored hsv_histogram uses default bins; "
                             "custom bins require hsv_pixels")
        return np.asarray(self.hsv_histogram, dtype=np.float64)


@dataclass(frozen=True)
class FrameRecord:
    """All perception outputs for one frame."""

    frame_index: int
    actions: Tuple[ActionDetection, ...] = ()
    objects: Tuple[ObjectDetection, ...] = ()
    masks: Tuple[MaskSummary, ...] = ()
    extras: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        seen = set()
        for mask in self.masks:
            if mask.track_id in seen:
                raise DuplicateTrackInFrame(self.frame_index, mask.track_id)
            seen.add(mask.track_id)

    def mask_for_track(self, track_id: int) -> Optional[MaskSummary]:
        for mask in self.masks:
            if mask.track_id == track_id:
                return mask
        return None


@dataclass(frozen=True)
class Warning:
    frame_index: int
    message: str


KNOWN_FRAME_FIELDS = {"frame_index", "actions", "objects", "masks"}


def _action_from_dict(raw: dict) -> ActionDetection:
    return ActionDetection(
        action_label=str(raw["action_label"]),
        confidence=float(raw["confidence"]),
        person_box=BoundingBox.from_list(raw["person_box"]),
        track_id=int(raw["track_id"]),
    )


def _object_from_dict(raw: dict) -> ObjectDetection:
    return ObjectDetection(
        object_label=str(raw["object_label"]),
        box=BoundingBox.from_list(raw["box"]),
        mean_depth=float(raw["mean_depth"]),
        source=str(raw.get("source", "detector")),
    )


def _mask_from_dict(raw: dict) -> MaskSummary:
    pixels = raw.get("hsv_pixels")
    if pixels is not None:
        pixels = tuple(tuple(float(c) for c in px) for px in pixels)
        for px in pixels:
            if len(px) != 3:
                raise ValueError(f"hsv pixel must have 3 components, got {px!r}")
    histogram = raw.get("hsv_histogram")
    if histogram is not None:
        histogram = tuple(histogram)
    return MaskSummary(
        track_id=int(raw["track_id"]),
        pixel_count=int(raw["pixel_count"]),
        mean_depth=float(raw["mean_depth"]),
        hsv_pixels=pixels,
        hsv_histogram=histogram,
    )


def frame_record_from_dict(raw: dict) -> FrameRecord:
    if "frame_index" not in raw:
        raise ValueError("missing frame_index")
    extras = {k: v for k, v in raw.items() if k not in KNOWN_FRAME_FIELDS}
    return FrameRecord(
        frame_index=int(raw["frame_index"]),
        actions=tuple(_action_from_dict(a) for a in raw.get("actions", [])),
        objects=tuple(_object_from_dict(o) for o in raw.get("objects", [])),
        masks=tuple(_mask_from_dict(m) for m in raw.get("masks", [])),
        extras=extras,
    )


def frame_record_to_dict(record: FrameRecord) -> dict:
    out = dict(record.extras)
    out["frame_index"] = record.frame_index
    out["actions"] = [
        {
            "action_label": a.action_label,
            "confidence": a.confidence,
            "person_box": a.person_box.to_list(),
            "track_id": a.track_id,
        }
        for a in record.actions
    ]
    out["objects"] = [
        {
            "object_label": o.object_label,
            "box": o.box.to_list(),
            "mean_depth": o.mean_depth,
            "source": o.source,
        }
        for o in record.objects
    ]
    out["masks"] = []
    for m in record.masks:
        entry: dict = {
            "track_id": m.track_id,
            "pixel_count": m.pixel_count,
            "mean_depth": m.mean_depth,
        }
        if m.hsv_pixels is not None:
            entry["hsv_pixels"] = [list(px) for px in m.hsv_pixels]
        if m.hsv_histogram is not None:
            entry["hsv_histogram"] = list(m.hsv_histogram)
        out["masks"].append(entry)
    return out


def parse_stream_text(text: str) -> list[FrameRecord]:
    """Parse a whole stream from memory; see parse_stream for the contract."""
    records: list[FrameRecord] = []
    previous = -1
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_number, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(payload, dict):
            raise MalformedRecord(line_number, "record must be a JSON object")
        try:
            record = frame_record_from_dict(payload)
        except DuplicateTrackInFrame:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise MalformedRecord(line_number, str(exc)) from exc
        if record.frame_index <= previous:
            raise NonMonotonicFrames(line_number, record.frame_index, previous)
        previous = record.frame_index
        records.append(record)
    return records


def parse_stream(path: Union[str, Path]) -> list[FrameRecord]:
    """Parse a perception-stream file.

    Returns records sorted by frame_index (the format requires strictly
    increasing frames, so file order is the sorted order). Unknown
    top-level fields are preserved in `extras` and otherwise ignored.
    Raises MalformedRecord, NonMonotonicFrames or DuplicateTrackInFrame;
    never returns a partial result.
    """
    return parse_stream_text(Path(path).read_text(encoding="utf-8"))


def serialize_stream(records: Iterable[FrameRecord]) -> str:
    lines = [json.dumps(frame_record_to_dict(r), sort_keys=True) for r in records]
    return "\n".join(lines) + ("\n" if lines else "")


def write_stream(records: Iterable[FrameRecord], path: Union[str, Path]) -> None:
    Path(path).write_text(serialize_stream(records), encoding="utf-8")


def load_vocabulary(path: Union[str, Path]) -> set[str]:
    """Vocabulary files carry one label per line; blank lines ignored."""
    labels = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            labels.add(line)
    return labels


def validate_vocabulary(records: Sequence[FrameRecord],
                        actions: set[str],
                        objects: set[str]) -> list[Warning]:
    """One warning per out-of-vocabulary label occurrence; input untouched."""
    warnings: list[Warning] = []
    for record in records:
        for action in record.actions:
            if action.action_label not in actions:
                warnings.append(Warning(
                    record.frame_index,
                    f"unknown action label {action.action_label!r}",
                ))
        for obj in record.objects:
            if obj.object_label not in objects:
                warnings.append(Warning(
                    record.frame_index,
                    f"unknown object label {obj.object_label!r}",
                ))
    return warnings
