"""Annotation backend: task corpus, sessions, seeded shuffles, and the
append-only submission log.

Raters must pass a qualification task (exact match against the known
correct ranking) before real tasks are served. Presentation order is
shuffled per (rater, video) with a persistent seed so re-requests are
stable and submissions de-shuffle deterministically.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import yaml

from ..errors import (
    IncompleteRanking,
    NoTasksLeft,
    UnknownRater,
)
from ..evaluation import RankingRecord, RaterProfile


@dataclass(frozen=True)
class VideoTask:
    video_id: str
    url: str
    duration_seconds: float
    descriptions: Dict[str, str]


@dataclass(frozen=True)
class AnnotationManifest:
    raters: Tuple[str, ...]
    videos: Tuple[VideoTask, ...]
    qualification_video: Optional[str]
    qualification_order: Tuple[str, ...]

    def task(self, video_id: str) -> VideoTask:
        for video in self.videos:
            if video.video_id == video_id:
                return video
        raise KeyError(video_id)

    @property
    def regular_videos(self) -> list[VideoTask]:
        return [v for v in self.videos if v.video_id != self.qualification_video]


def load_manifest(path: Union[str, Path]) -> AnnotationManifest:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    videos = tuple(
        VideoTask(
            video_id=str(v["video_id"]),
            url=str(v["url"]),
            duration_seconds=float(v["duration_seconds"]),
            descriptions={str(k): str(t) for k, t in v["descriptions"].items()},
        )
        for v in raw["videos"]
    )
    qual = raw.get("qualification") or {}
    return AnnotationManifest(
        raters=tuple(str(r) for r in raw.get("raters", [])),
        videos=videos,
        qualification_video=qual.get("video_id"),
        qualification_order=tuple(qual.get("correct_order", [])),
    )


class AnnotationService:
    """Single-writer annotation state over an append-only JSONL log."""

    def __init__(self, manifest: AnnotationManifest,
                 store_path: Union[str, Path],
                 shuffle_seed: int = 17):
        self.manifest = manifest
        self.store_path = Path(store_path)
        self.shuffle_seed = shuffle_seed
        self._lock = threading.Lock()
        self._sessions: Dict[str, str] = {}
        self._log: list[dict] = []
        if self.store_path.exists():
            for line in self.store_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._log.append(json.loads(line))

    # --- persistence -------------------------------------------------------

    def _append(self, entry: dict) -> None:
        with self._lock:
            self._log.append(entry)
            self.store_path.parent.mkdir(parents=True, exist_ok=True)
            with self.store_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
                fh.flush()

    def _entries(self, kind: str, rater_id: Optional[str] = None) -> list[dict]:
        return [e for e in self._log
                if e.get("type") == kind
                and (rater_id is None or e.get("rater_id") == rater_id)]

    # --- sessions ------------------------------------------------------------

    def create_session(self, rater_id: str) -> str:
        if rater_id not in self.manifest.raters:
            raise UnknownRater(rater_id)
        token = uuid.uuid4().hex
        self._sessions[token] = rater_id
        return token

    def rater_for(self, token: str) -> str:
        if token not in self._sessions:
            raise PermissionError("invalid or expired session token")
        return self._sessions[token]

    # --- qualification ----------------------------------------------------------

    def is_qualified(self, rater_id: str) -> bool:
        if self.manifest.qualification_video is None:
            return True
        return any(e["passed"] for e in self._entries("qualification", rater_id))

    # --- shuffles -----------------------------------------------------------------

    def presentation_order(self, rater_id: str, video_id: str) -> list[str]:
        """Canonical description ids in the order shown to this rater;
        derived from a persistent seed, so identical on re-request."""
        task = self.manifest.task(video_id)
        ids = sorted(task.descriptions)
        digest = hashlib.sha256(
            f"{self.shuffle_seed}:{rater_id}:{video_id}".encode()).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        rng.shuffle(ids)
        return ids

    # --- task queue -------------------------------------------------------------------

    def _completed_videos(self, rater_id: str) -> set:
        return {e["video_id"] for e in self._entries("ranking", rater_id)}

    def _skip_counts(self, rater_id: str) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for e in self._entries("skip", rater_id):
            counts[e["video_id"]] = counts.get(e["video_id"], 0) + 1
        return counts

    def next_task(self, rater_id: str) -> VideoTask:
        if not self.is_qualified(rater_id):
            if self.manifest.qualification_video is None:
                raise NoTasksLeft("no qualification task configured")
            return self.manifest.task(self.manifest.qualification_video)
        done = self._completed_videos(rater_id)
        skips = self._skip_counts(rater_id)
        pending = [v for v in self.manifest.regular_videos if v.video_id not in done]
        if not pending:
            raise NoTasksLeft(f"rater {rater_id} has annotated every video")
        pending.sort(key=lambda v: (skips.get(v.video_id, 0),
                                    [x.video_id for x in self.manifest.videos].index(v.video_id)))
        return pending[0]

    def previous_task(self, rater_id: str) -> Tuple[VideoTask, dict]:
        rankings = self._entries("ranking", rater_id)
        if not rankings:
            raise NoTasksLeft(f"rater {rater_id} has no previous annotation")
        last = rankings[-1]
        return self.manifest.task(last["video_id"]), last

    def skip(self, rater_id: str, video_id: str) -> None:
        self.manifest.task(video_id)
        self._append({"type": "skip", "rater_id": rater_id,
                      "video_id": video_id, "timestamp": time.time()})

    # --- submissions ----------------------------------------------------------------------

    def submit(self, rater_id: str, video_id: str, order: List[int],
               duration_seconds: float, revision: int = 0,
               active_duration_seconds: Optional[float] = None) -> dict:
        """Store one ranking. `order` lists presentation slots best-first
        and must be a complete permutation of them. The raw wall-clock
        duration drives the fast-annotation flag; the active duration
        (hidden-tab time excluded) is stored alongside when reported."""
        task = self.manifest.task(video_id)
        presented = self.presentation_order(rater_id, video_id)
        if sorted(order) != list(range(len(presented))):
            raise IncompleteRanking(
                f"order must be a permutation of 0..{len(presented) - 1}, "
                f"got {order}")
        ranking = {presented[slot]: position + 1
                   for position, slot in enumerate(order)}

        is_qualification = video_id == self.manifest.qualification_video
        result = {
            "is_qualification": is_qualification,
            "qualification_passed": None,
            "flagged_fast": False,
        }
        if is_qualification:
            best_first = [presented[slot] for slot in order]
            passed = tuple(best_first) == self.manifest.qualification_order
            self._append({"type": "qualification", "rater_id": rater_id,
                          "passed": passed, "timestamp": time.time()})
            result["qualification_passed"] = passed
            return result

        existing = [e for e in self._entries("ranking", rater_id)
                    if e["video_id"] == video_id]
        if existing and revision <= max(e["revision"] for e in existing):
            revision = max(e["revision"] for e in existing) + 1
        self._append({
            "type": "ranking",
            "rater_id": rater_id,
            "video_id": video_id,
            "ranking": ranking,
            "duration_seconds": duration_seconds,
            "active_duration_seconds": active_duration_seconds,
            "revision": revision,
            "shuffle_presented": presented,
            "timestamp": time.time(),
        })
        result["flagged_fast"] = duration_seconds < task.duration_seconds
        return result

    # --- read models --------------------------------------------------------------------------

    def progress(self, rater_id: str) -> dict:
        done = self._completed_videos(rater_id)
        return {
            "rater_id": rater_id,
            "qualified": self.is_qualified(rater_id),
            "completed": len(done),
            "total": len(self.manifest.regular_videos),
            "flagged_fast": self.profile(rater_id).flagged_fast,
        }

    def profile(self, rater_id: str) -> RaterProfile:
        durations = {v.video_id: v.duration_seconds for v in self.manifest.videos}
        flagged = False
        latest: Dict[str, dict] = {}
        for e in self._entries("ranking", rater_id):
            key = e["video_id"]
            if key not in latest or e["revision"] >= latest[key]["revision"]:
                latest[key] = e
        for e in latest.values():
            if e["duration_seconds"] < durations[e["video_id"]]:
                flagged = True
        return RaterProfile(
            rater_id=rater_id,
            passed_qualification=self.is_qualified(rater_id),
            videos_annotated=len(latest),
            flagged_fast=flagged,
        )

    def profiles(self) -> list[RaterProfile]:
        return [self.profile(r) for r in self.manifest.raters]

    def ranking_records(self) -> list[RankingRecord]:
        """Effective (latest-revision) de-shuffled records for evaluation."""
        latest: Dict[Tuple[str, str], dict] = {}
        for e in self._entries("ranking"):
            key = (e["rater_id"], e["video_id"])
            if key not in latest or e["revision"] >= latest[key]["revision"]:
                latest[key] = e
        out = []
        for (rater_id, video_id), e in sorted(latest.items()):
            out.append(RankingRecord(
                video_id=video_id,
                rater_id=rater_id,
                rater_kind="human",
                ranking=e["ranking"],
                duration_seconds=e["duration_seconds"],
                timestamp=str(e["timestamp"]),
                revision=e["revision"],
            ))
        return out
