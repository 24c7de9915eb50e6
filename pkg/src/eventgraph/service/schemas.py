"""Pydantic request/response models for the HTTP API.

The service exchanges whole artifacts as text in their canonical on-disk
encodings (stream JSONL, graph JSON), so byte-level determinism survives
the wire and the thin CLI can write responses straight to files.
"""

from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


# --- pipeline ---------------------------------------------------------------

class IngestCheckRequest(BaseModel):
    stream_text: str
    action_vocabulary: Optional[List[str]] = None
    object_vocabulary: Optional[List[str]] = None


class IngestWarning(BaseModel):
    frame_index: int
    message: str


class IngestCheckResponse(BaseModel):
    frame_count: int
    warnings: List[IngestWarning]


class BuildGraphRequest(BaseModel):
    stream_text: str
    config: Optional[dict] = None
    video_length: Optional[int] = None
    metadata: Dict[str, str] = Field(default_factory=dict)


class BuildGraphResponse(BaseModel):
    graph_text: str
    stats: dict


class RenderProtoRequest(BaseModel):
    graph_text: str
    scene: Optional[str] = None
    include_spans: bool = False


class ProtoScriptModel(BaseModel):
    scene_context: Optional[str]
    group_texts: List[str]
    connectors: List[str]


class RenderProtoResponse(BaseModel):
    script: ProtoScriptModel
    text: str


class EndpointModel(BaseModel):
    base_url: str
    model_name: str
    auth_token_env: Optional[str] = None
    timeout_seconds: float = 30.0
    max_retries: int = 2
    response_text_path: str = "choices.0.message.content"


class RefineRequest(BaseModel):
    proto_text: str
    endpoint: EndpointModel
    scene: Optional[str] = None
    instructions: Optional[str] = None
    examples_pool: List[List[str]] = Field(default_factory=list)
    shots: int = 0
    seed: int = 17
    audit_log: Optional[str] = None


class RefineResponse(BaseModel):
    description: str
    prompt: str
    metadata: dict


class SceneQueryRequest(BaseModel):
    frame_paths: List[str]
    endpoint: EndpointModel
    question: Optional[str] = None
    audit_log: Optional[str] = None


class SceneQueryResponse(BaseModel):
    scene: str


class JudgeRequest(BaseModel):
    video_id: str
    frame_paths: List[str]
    descriptions: Dict[str, str]
    endpoint: EndpointModel
    instructions: Optional[str] = None
    seed: int = 17
    audit_log: Optional[str] = None


class RankingModel(BaseModel):
    video_id: str
    rater_id: str
    rater_kind: str
    ranking: Dict[str, int]
    duration_seconds: Optional[float] = None
    timestamp: Optional[str] = None
    revision: int = 0


class JudgeResponse(BaseModel):
    record: RankingModel


class AgreementRequest(BaseModel):
    records_a: List[RankingModel]
    records_b: List[RankingModel]
    tie_mode: str = "half"


class AgreementResponse(BaseModel):
    score: float
    per_video: Dict[str, float]


class SynthRequest(BaseModel):
    script_yaml: str
    config: Optional[dict] = None


class SynthResponse(BaseModel):
    stream_text: str
    truth_graph_text: str


class ExportGraphRequest(BaseModel):
    graph_text: str


class ExportGraphResponse(BaseModel):
    dot: str


# --- annotation --------------------------------------------------------------

class CreateSessionRequest(BaseModel):
    rater_id: str


class CreateSessionResponse(BaseModel):
    token: str
    qualified: bool


class TaskDescription(BaseModel):
    slot: int
    text: str


class NextTaskResponse(BaseModel):
    video_id: str
    video_url: str
    duration_seconds: float
    descriptions: List[TaskDescription]
    is_qualification: bool
    completed: int
    total: int
    instructions_url: str = "/api/annotation/instructions"


class SubmitRankingRequest(BaseModel):
    token: str
    video_id: str
    order: List[int]
    duration_seconds: float
    active_duration_seconds: Optional[float] = None
    revision: int = 0


class SubmitRankingResponse(BaseModel):
    accepted: bool
    is_qualification: bool
    qualification_passed: Optional[bool] = None
    flagged_fast: bool


class SkipRequest(BaseModel):
    token: str
    video_id: str


class ProgressResponse(BaseModel):
    rater_id: str
    qualified: bool
    completed: int
    total: int
    flagged_fast: bool


class RaterProfileModel(BaseModel):
    rater_id: str
    passed_qualification: bool
    videos_annotated: int
    flagged_fast: bool


class ErrorBody(BaseModel):
    error: str
    detail: str
