"""Ranking storage, rater filtering, pairwise rank agreement, jury
aggregation and machine-judge orchestration.

Rankings map description ids to ranks (1 = best). Humans produce strict
permutations; machine raters (including metric importers) may tie.
"""

from __future__ import annotations

import csv
import json
import random
import re
import threading
import time
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Set, Tuple, Union

import httpx

from .errors import (
    EndpointUnavailable,
    IncompleteJury,
    MismatchedDescriptionSets,
    MissingDuration,
    UnparseableRanking,
    UnparseableVerdict,
)
from .refine import EndpointConfig, call_endpoint, extract_text

RATER_KINDS = ("human", "machine_judge")
JUDGE_FRAME_COUNT = 10
RANKING_MARKER = "FINAL RANKING:"
VERDICT_MARKER = "VERDICT:"


@dataclass(frozen=True)
class RankingRecord:
    """One ranking of the descriptions of one video by one rater."""

    video_id: str
    rater_id: str
    rater_kind: str
    ranking: Mapping[str, int]
    duration_seconds: Optional[float] = None
    timestamp: Optional[str] = None
    revision: int = 0

    def __post_init__(self):
        if self.rater_kind not in RATER_KINDS:
            raise ValueError(f"rater_kind must be one of {RATER_KINDS}")
        if not self.ranking:
            raise ValueError("ranking must cover at least one description")
        ranks = sorted(self.ranking.values())
        if any(r < 1 for r in ranks):
            raise ValueError("ranks start at 1")
        if self.rater_kind == "human" and ranks != list(range(1, len(ranks) + 1)):
            raise ValueError("human rankings must be strict permutations 1..K")

    def description_ids(self) -> frozenset[str]:
        return frozenset(self.ranking)

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "rater_id": self.rater_id,
            "rater_kind": self.rater_kind,
            "ranking": dict(sorted(self.ranking.items())),
            "duration_seconds": self.duration_seconds,
            "timestamp": self.timestamp,
            "revision": self.revision,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RankingRecord":
        return cls(
            video_id=str(raw["video_id"]),
            rater_id=str(raw["rater_id"]),
            rater_kind=str(raw["rater_kind"]),
            ranking={str(k): int(v) for k, v in raw["ranking"].items()},
            duration_seconds=(None if raw.get("duration_seconds") is None
                              else float(raw["duration_seconds"])),
            timestamp=raw.get("timestamp"),
            revision=int(raw.get("revision", 0)),
        )


@dataclass(frozen=True)
class RaterProfile:
    rater_id: str
    passed_qualification: bool
    videos_annotated: int
    flagged_fast: bool = False


# --- rater filtering -----------------------------------------------------------

def filter_raters(profiles: Sequence[RaterProfile],
                  records: Sequence[RankingRecord],
                  video_durations: Mapping[str, float],
                  min_videos: int = 15) -> list[str]:
    """Raters that pass the qualification test, annotated at least
    min_videos videos, and never finished an annotation faster than the
    video itself plays."""
    fast: Set[str] = set()
    for record in records:
        if record.rater_kind != "human" or record.duration_seconds is None:
            continue
        if record.video_id not in video_durations:
            raise MissingDuration(record.video_id)
        if record.duration_seconds < video_durations[record.video_id]:
            fast.add(record.rater_id)
    kept = []
    for profile in profiles:
        if (profile.passed_qualification
                and profile.videos_annotated >= min_videos
                and not profile.flagged_fast
                and profile.rater_id not in fast):
            kept.append(profile.rater_id)
    return kept


# --- pairwise agreement ----------------------------------------------------------

def pairwise_agreement(a: RankingRecord, b: RankingRecord,
                       tie_mode: str = "half") -> float:
    """Fraction of description pairs ordered identically by both rankings.

    Pairs tied in exactly one ranking contribute 0.5 in "half" mode and
    leave the denominator in "exclude" mode; pairs tied in both agree.
    """
    if tie_mode not in ("half", "exclude"):
        raise ValueError("tie_mode must be 'half' or 'exclude'")
    if a.description_ids() != b.description_ids():
        raise MismatchedDescriptionSets(
            f"{sorted(a.description_ids())} vs {sorted(b.description_ids())}")
    ids = sorted(a.description_ids())
    if len(ids) < 2:
        raise MismatchedDescriptionSets("need at least two descriptions to compare")
    score = 0.0
    counted = 0
    for x, y in combinations(ids, 2):
        sign_a = (a.ranking[x] > a.ranking[y]) - (a.ranking[x] < a.ranking[y])
        sign_b = (b.ranking[x] > b.ranking[y]) - (b.ranking[x] < b.ranking[y])
        half_tied = (sign_a == 0) != (sign_b == 0)
        if tie_mode == "exclude" and half_tied:
            continue
        counted += 1
        if sign_a == sign_b:
            score += 1.0
        elif half_tied:
            score += 0.5
    if counted == 0:
        return 1.0
    return score / counted


# --- jury aggregation -------------------------------------------------------------

@dataclass
class JuryResult:
    per_video_mean_rank: Dict[str, Dict[str, float]]
    per_video_ranking: Dict[str, Dict[str, int]]
    dataset_mean_rank: Dict[str, float]

    def jury_record(self, video_id: str, rater_id: str = "jury") -> RankingRecord:
        return RankingRecord(
            video_id=video_id,
            rater_id=rater_id,
            rater_kind="machine_judge",
            ranking=self.per_video_ranking[video_id],
        )


def aggregate_jury(records: Sequence[RankingRecord],
                   judges: Set[str]) -> JuryResult:
    """Average the judges' ranks per description per video; the jury
    ranking orders ascending mean rank with ties broken by description id.
    Every judge must have ranked every video exactly once."""
    by_video: Dict[str, Dict[str, RankingRecord]] = {}
    for record in records:
        if record.rater_id not in judges:
            continue
        per_judge = by_video.setdefault(record.video_id, {})
        if record.rater_id in per_judge:
            raise IncompleteJury(
                f"judge {record.rater_id} ranked video {record.video_id} twice")
        per_judge[record.rater_id] = record

    per_video_mean: Dict[str, Dict[str, float]] = {}
    per_video_rank: Dict[str, Dict[str, int]] = {}
    for video_id, per_judge in sorted(by_video.items()):
        missing = judges - set(per_judge)
        if missing:
            raise IncompleteJury(
                f"video {video_id} missing judges {sorted(missing)}")
        id_sets = {frozenset(r.ranking) for r in per_judge.values()}
        if len(id_sets) != 1:
            raise MismatchedDescriptionSets(
                f"judges disagree on the description set for video {video_id}")
        ids = sorted(next(iter(id_sets)))
        means = {
            d: sum(per_judge[j].ranking[d] for j in judges) / len(judges)
            for d in ids
        }
        per_video_mean[video_id] = means
        ordered = sorted(ids, key=lambda d: (means[d], d))
        per_video_rank[video_id] = {d: i + 1 for i, d in enumerate(ordered)}

    totals: Dict[str, list[float]] = {}
    for means in per_video_mean.values():
        for d, m in means.items():
            totals.setdefault(d, []).append(m)
    dataset_mean = {d: sum(v) / len(v) for d, v in sorted(totals.items())}
    return JuryResult(per_video_mean, per_video_rank, dataset_mean)


# --- metric-score import -----------------------------------------------------------

def ranking_from_scores(video_id: str, metric_name: str,
                        scores: Mapping[str, float]) -> RankingRecord:
    """Rank descriptions by descending metric score. Equal scores share
    the smaller (competition) rank, so induced ties stay visible to the
    agreement metric."""
    ordered = sorted(scores, key=lambda d: (-scores[d], d))
    ranking: Dict[str, int] = {}
    for position, d in enumerate(ordered):
        if position > 0 and scores[d] == scores[ordered[position - 1]]:
            ranking[d] = ranking[ordered[position - 1]]
        else:
            ranking[d] = position + 1
    return RankingRecord(video_id=video_id, rater_id=metric_name,
                         rater_kind="machine_judge", ranking=ranking)


# --- ranking store -------------------------------------------------------------------

class RankingStore:
    """Append-only, line-delimited record log; single writer per file."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: RankingRecord) -> None:
        line = json.dumps(record.to_dict(), sort_keys=True)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()

    def load(self) -> list[RankingRecord]:
        if not self.path.exists():
            return []
        records = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                records.append(RankingRecord.from_dict(json.loads(line)))
        return records

    def effective(self) -> list[RankingRecord]:
        """Latest revision per (rater, video); earlier revisions are
        superseded, never rewritten."""
        latest: Dict[Tuple[str, str], RankingRecord] = {}
        for record in self.load():
            key = (record.rater_id, record.video_id)
            if key not in latest or record.revision >= latest[key].revision:
                latest[key] = record
        return [latest[k] for k in sorted(latest)]


def load_ranking_file(path: Union[str, Path]) -> list[RankingRecord]:
    return RankingStore(path).load()


def agreement_between_files(records_a: Sequence[RankingRecord],
                            records_b: Sequence[RankingRecord],
                            tie_mode: str = "half") -> Tuple[float, Dict[str, float]]:
    """Mean pairwise agreement over videos present in both record sets;
    every cross pairing of raters on a shared video contributes."""
    by_video_a: Dict[str, list[RankingRecord]] = {}
    for r in records_a:
        by_video_a.setdefault(r.video_id, []).append(r)
    by_video_b: Dict[str, list[RankingRecord]] = {}
    for r in records_b:
        by_video_b.setdefault(r.video_id, []).append(r)
    per_video: Dict[str, float] = {}
    for video_id in sorted(set(by_video_a) & set(by_video_b)):
        scores = [
            pairwise_agreement(x, y, tie_mode)
            for x in by_video_a[video_id]
            for y in by_video_b[video_id]
        ]
        per_video[video_id] = sum(scores) / len(scores)
    if not per_video:
        raise MismatchedDescriptionSets("no shared videos between the two record sets")
    overall = sum(per_video.values()) / len(per_video)
    return overall, per_video


def export_agreement_csv(table: Mapping[str, Mapping[str, float]],
                         path: Union[str, Path],
                         columns: Optional[Sequence[str]] = None) -> None:
    """Write an agreement table (row label -> column -> score) as CSV."""
    if columns is None:
        seen: list[str] = []
        for row in table.values():
            for col in row:
                if col not in seen:
                    seen.append(col)
        columns = seen
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", *columns])
        for row_label in table:
            row = table[row_label]
            writer.writerow([row_label] + [
                ("" if row.get(col) is None else f"{row[col]:.4f}") for col in columns
            ])


# --- machine judging ----------------------------------------------------------------

def sample_frame_indices(total: int, count: int = JUDGE_FRAME_COUNT) -> list[int]:
    """Uniform sampling: floor(i * (N - 1) / (count - 1)) for i in 0..count-1."""
    if total < count:
        raise ValueError(f"need at least {count} frames, got {total}")
    return [(i * (total - 1)) // (count - 1) for i in range(count)]


def _shuffled(items: Sequence[str], seed: int) -> list[str]:
    order = list(items)
    random.Random(seed).shuffle(order)
    return order


def _judging_prompt(instructions: str, frames: Sequence[str],
                    presented: Sequence[Tuple[int, str]]) -> str:
    lines = [instructions.rstrip(), "", "Video frames:"]
    lines += [f"- {ref}" for ref in frames]
    lines.append("")
    lines.append("Descriptions:")
    for number, text in presented:
        lines.append(f"{number}. {text}")
    lines.append("")
    lines.append(
        f"Answer with one line of the form '{RANKING_MARKER} a, b, c, ...' "
        "listing every description number exactly once, best first."
    )
    return "\n".join(lines)


def parse_ranking_reply(text: str, count: int) -> list[int]:
    """Extract the delimited ranking; must be a permutation of 1..count."""
    match = None
    for line in text.splitlines():
        if RANKING_MARKER in line:
            match = line.split(RANKING_MARKER, 1)[1]
    if match is None:
        raise UnparseableRanking(f"no {RANKING_MARKER!r} line in reply")
    numbers = [int(tok) for tok in re.findall(r"\d+", match)]
    if sorted(numbers) != list(range(1, count + 1)):
        raise UnparseableRanking(
            f"reply ranking {numbers} is not a permutation of 1..{count}")
    return numbers


def judge_video(video_id: str,
                frames: Sequence[str],
                descriptions: Mapping[str, str],
                cfg: EndpointConfig,
                instructions: str,
                seed: int = 0,
                transport: Optional[httpx.BaseTransport] = None,
                audit_log: Optional[Path] = None,
                sleep=time.sleep) -> RankingRecord:
    """Ask one machine judge to rank the descriptions of one video.

    Ten uniformly sampled frame references, the shuffled descriptions and
    the shared instruction text are sent; the reply is parsed and
    de-shuffled back to canonical description ids. One reprompt is allowed
    before UnparseableRanking."""
    indices = sample_frame_indices(len(frames))
    sampled = [frames[i] for i in indices]
    ids = sorted(descriptions)
    presented_ids = _shuffled(ids, seed)
    presented = [(i + 1, descriptions[d]) for i, d in enumerate(presented_ids)]
    prompt = _judging_prompt(instructions, sampled, presented)

    attempts_text = [prompt,
                     prompt + f"\nYour previous answer was not parseable. "
                              f"Reply with exactly one '{RANKING_MARKER}' line."]
    last_error: Optional[UnparseableRanking] = None
    for attempt_prompt in attempts_text:
        payload = {
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": attempt_prompt}],
            "metadata": {"video_id": video_id, "frames": sampled},
        }
        body = call_endpoint(cfg, payload, transport=transport,
                             audit_log=audit_log, sleep=sleep)
        reply = extract_text(body, cfg)
        try:
            order = parse_ranking_reply(reply, len(presented_ids))
        except UnparseableRanking as exc:
            last_error = exc
            continue
        ranking = {presented_ids[number - 1]: position + 1
                   for position, number in enumerate(order)}
        return RankingRecord(
            video_id=video_id,
            rater_id=cfg.model_name,
            rater_kind="machine_judge",
            ranking=ranking,
            timestamp=None,
        )
    raise last_error if last_error else UnparseableRanking("judge gave no ranking")


def parse_verdict_reply(text: str) -> str:
    verdict = None
    for line in text.splitlines():
        if VERDICT_MARKER in line:
            verdict = line.split(VERDICT_MARKER, 1)[1].strip().upper()
    if verdict is None:
        raise UnparseableVerdict(f"no {VERDICT_MARKER!r} line in reply")
    token = verdict.split()[0].rstrip(".,") if verdict else ""
    if token not in ("FIRST", "SECOND", "TIE"):
        raise UnparseableVerdict(f"verdict {verdict!r} not FIRST/SECOND/TIE")
    return token


def pairwise_preference(text_a: str, text_b: str,
                        frames: Sequence[str],
                        cfg: EndpointConfig,
                        instructions: str,
                        seed: int = 0,
                        transport: Optional[httpx.BaseTransport] = None,
                        audit_log: Optional[Path] = None,
                        sleep=time.sleep) -> str:
    """Two-way judging with ties: returns 'A', 'B' or 'tie'.

    Presentation order is seeded-shuffled to guard against position bias
    and the verdict is mapped back afterwards."""
    indices = sample_frame_indices(len(frames))
    sampled = [frames[i] for i in indices]
    swap = random.Random(seed).random() < 0.5
    first, second = (text_b, text_a) if swap else (text_a, text_b)
    prompt_lines = [instructions.rstrip(), "", "Video frames:"]
    prompt_lines += [f"- {ref}" for ref in sampled]
    prompt_lines += [
        "",
        f"First description:\n{first}",
        "",
        f"Second description:\n{second}",
        "",
        f"Answer with one line '{VERDICT_MARKER} FIRST', "
        f"'{VERDICT_MARKER} SECOND' or '{VERDICT_MARKER} TIE'.",
    ]
    prompt = "\n".join(prompt_lines)

    attempts_text = [prompt,
                     prompt + f"\nYour previous answer was not parseable. "
                              f"Reply with exactly one '{VERDICT_MARKER}' line."]
    last_error: Optional[UnparseableVerdict] = None
    for attempt_prompt in attempts_text:
        payload = {
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": attempt_prompt}],
            "metadata": {"frames": sampled},
        }
        body = call_endpoint(cfg, payload, transport=transport,
                             audit_log=audit_log, sleep=sleep)
        try:
            token = parse_verdict_reply(extract_text(body, cfg))
        except UnparseableVerdict as exc:
            last_error = exc
            continue
        if token == "TIE":
            return "tie"
        winner_first = token == "FIRST"
        if swap:
            return "B" if winner_first else "A"
        return "A" if winner_first else "B"
    raise last_error if last_error else UnparseableVerdict("judge gave no verdict")
