"""FastAPI application: pipeline endpoints wrapping the core package and
the annotation backend, plus static serving for videos and the UI."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .. import errors
from ..config import EngineConfig, config_from_dict
from ..evaluation import (
    RankingRecord,
    agreement_between_files,
    judge_video,
)
from ..graph import deserialize_graph, serialize_graph, to_dot
from ..ingest import parse_stream_text, validate_vocabulary
from ..pipeline import build_graph
from ..protolang import render_proto
from ..refine import (
    EndpointConfig,
    PromptBundle,
    assemble_prompt,
    default_instructions,
    query_scene,
    refine_description,
    sample_examples,
)
from ..synth import emit_stream, script_from_dict
from ..ingest import serialize_stream
from . import schemas
from .annotation import AnnotationService, load_manifest

ANNOTATION_INSTRUCTIONS = "annotation_instructions.txt"


@dataclass
class ServiceConfig:
    engine: EngineConfig = None
    manifest_path: Optional[Union[str, Path]] = None
    store_path: Optional[Union[str, Path]] = None
    videos_dir: Optional[Union[str, Path]] = None
    ui_dir: Optional[Union[str, Path]] = None
    shuffle_seed: int = 17

    def __post_init__(self):
        if self.engine is None:
            self.engine = EngineConfig()


ERROR_STATUS = {
    errors.MalformedRecord: 422,
    errors.NonMonotonicFrames: 422,
    errors.DuplicateTrackInFrame: 422,
    errors.MalformedGraph: 422,
    errors.InvalidScript: 422,
    errors.ConfigError: 422,
    errors.IncompleteRanking: 422,
    errors.MismatchedDescriptionSets: 422,
    errors.IncompleteJury: 422,
    errors.MissingDuration: 422,
    errors.UnparseableRanking: 502,
    errors.UnparseableVerdict: 502,
    errors.EndpointUnavailable: 502,
    errors.MalformedResponse: 502,
    errors.AuthMissing: 401,
    errors.UnknownRater: 404,
    errors.NoTasksLeft: 404,
    errors.NotCollapsed: 422,
    errors.UnknownNode: 422,
}


def _http_error(exc: errors.EngineError) -> HTTPException:
    status = ERROR_STATUS.get(type(exc), 400)
    return HTTPException(status_code=status, detail={
        "error": type(exc).__name__, "detail": str(exc)})


def _endpoint_config(model: schemas.EndpointModel) -> EndpointConfig:
    return EndpointConfig(
        base_url=model.base_url,
        model_name=model.model_name,
        auth_token_env=model.auth_token_env,
        timeout_seconds=model.timeout_seconds,
        max_retries=model.max_retries,
        response_text_path=model.response_text_path,
    )


def create_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="eventgraph", version="0.1.0")

    annotation: Optional[AnnotationService] = None
    if config.manifest_path is not None:
        manifest = load_manifest(config.manifest_path)
        store = config.store_path or (Path(config.manifest_path).parent / "rankings.jsonl")
        annotation = AnnotationService(manifest, store, config.shuffle_seed)
    app.state.annotation = annotation

    def engine_config(raw: Optional[dict]) -> EngineConfig:
        if raw is None:
            return config.engine
        try:
            return config_from_dict(raw)
        except errors.EngineError as exc:
            raise _http_error(exc)

    # --- pipeline --------------------------------------------------------

    @app.post("/api/pipeline/ingest-check",
              response_model=schemas.IngestCheckResponse)
    def ingest_check(req: schemas.IngestCheckRequest):
        try:
            records = parse_stream_text(req.stream_text)
        except errors.EngineError as exc:
            raise _http_error(exc)
        warnings = []
        if req.action_vocabulary is not None or req.object_vocabulary is not None:
            warnings = validate_vocabulary(
                records,
                set(req.action_vocabulary or []),
                set(req.object_vocabulary or []),
            )
        return schemas.IngestCheckResponse(
            frame_count=len(records),
            warnings=[schemas.IngestWarning(frame_index=w.frame_index,
                                            message=w.message)
                      for w in warnings],
        )

    @app.post("/api/pipeline/build-graph",
              response_model=schemas.BuildGraphResponse)
    def build_graph_endpoint(req: schemas.BuildGraphRequest):
        try:
            records = parse_stream_text(req.stream_text)
            graph, stats = build_graph(records, engine_config(req.config),
                                       video_length=req.video_length,
                                       metadata=req.metadata)
        except errors.EngineError as exc:
            raise _http_error(exc)
        return schemas.BuildGraphResponse(graph_text=serialize_graph(graph),
                                          stats=stats.to_dict())

    @app.post("/api/pipeline/render-proto",
              response_model=schemas.RenderProtoResponse)
    def render_proto_endpoint(req: schemas.RenderProtoRequest):
        try:
            graph = deserialize_graph(req.graph_text)
        except errors.EngineError as exc:
            raise _http_error(exc)
        script = render_proto(graph, scene=req.scene,
                              include_spans=req.include_spans)
        return schemas.RenderProtoResponse(
            script=schemas.ProtoScriptModel(**script.to_dict()),
            text=script.text(),
        )

    @app.post("/api/pipeline/refine", response_model=schemas.RefineResponse)
    def refine_endpoint(req: schemas.RefineRequest):
        instructions = req.instructions or default_instructions()
        pool = [tuple(pair) for pair in req.examples_pool]
        try:
            examples = (sample_examples(pool, req.shots, req.seed)
                        if req.shots else [])
            bundle = PromptBundle(
                instructions=instructions,
                proto=req.proto_text,
                scene_context=req.scene,
                examples=tuple(examples),
            )
            cfg = _endpoint_config(req.endpoint)
            audit = Path(req.audit_log) if req.audit_log else None
            description = refine_description(bundle, cfg, audit_log=audit)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail={
                "error": "ValueError", "detail": str(exc)})
        except errors.EngineError as exc:
            raise _http_error(exc)
        return schemas.RefineResponse(
            description=description,
            prompt=assemble_prompt(bundle),
            metadata={"seed": req.seed, "shots": req.shots,
                      "model": req.endpoint.model_name},
        )

    @app.post("/api/pipeline/scene", response_model=schemas.SceneQueryResponse)
    def scene_endpoint(req: schemas.SceneQueryRequest):
        try:
            scene = query_scene(
                req.frame_paths,
                _endpoint_config(req.endpoint),
                question=req.question,
                audit_log=Path(req.audit_log) if req.audit_log else None,
            )
        except errors.EngineError as exc:
            raise _http_error(exc)
        return schemas.SceneQueryResponse(scene=scene)

    @app.post("/api/pipeline/judge", response_model=schemas.JudgeResponse)
    def judge_endpoint(req: schemas.JudgeRequest):
        instructions = req.instructions or annotation_instructions_text()
        try:
            record = judge_video(
                req.video_id,
                req.frame_paths,
                req.descriptions,
                _endpoint_config(req.endpoint),
                instructions=instructions,
                seed=req.seed,
                audit_log=Path(req.audit_log) if req.audit_log else None,
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail={
                "error": "ValueError", "detail": str(exc)})
        except errors.EngineError as exc:
            raise _http_error(exc)
        return schemas.JudgeResponse(record=schemas.RankingModel(**record.to_dict()))

    @app.post("/api/pipeline/agreement", response_model=schemas.AgreementResponse)
    def agreement_endpoint(req: schemas.AgreementRequest):
        try:
            records_a = [RankingRecord.from_dict(r.model_dump()) for r in req.records_a]
            records_b = [RankingRecord.from_dict(r.model_dump()) for r in req.records_b]
            score, per_video = agreement_between_files(records_a, records_b,
                                                       req.tie_mode)
        except (ValueError, errors.EngineError) as exc:
            if isinstance(exc, errors.EngineError):
                raise _http_error(exc)
            raise HTTPException(status_code=422, detail={
                "error": "ValueError", "detail": str(exc)})
        return schemas.AgreementResponse(score=score, per_video=per_video)

    @app.post("/api/pipeline/synth", response_model=schemas.SynthResponse)
    def synth_endpoint(req: schemas.SynthRequest):
        import yaml as _yaml
        try:
            raw = _yaml.safe_load(req.script_yaml)
            script = script_from_dict(raw)
            thresholds = engine_config(req.config).thresholds
            records, truth = emit_stream(script, thresholds)
        except errors.EngineError as exc:
            raise _http_error(exc)
        except _yaml.YAMLError as exc:
            raise HTTPException(status_code=422, detail={
                "error": "InvalidScript", "detail": str(exc)})
        return schemas.SynthResponse(
            stream_text=serialize_stream(records),
            truth_graph_text=serialize_graph(truth),
        )

    @app.post("/api/pipeline/export-graph",
              response_model=schemas.ExportGraphResponse)
    def export_graph_endpoint(req: schemas.ExportGraphRequest):
        try:
            graph = deserialize_graph(req.graph_text)
        except errors.EngineError as exc:
            raise _http_error(exc)
        return schemas.ExportGraphResponse(dot=to_dot(graph))

    # --- annotation ---------------------------------------------------------

    def annotation_service() -> AnnotationService:
        if annotation is None:
            raise HTTPException(status_code=503, detail={
                "error": "NotConfigured",
                "detail": "annotation manifest not configured; start with serve --manifest"})
        return annotation

    def annotation_instructions_text() -> str:
        from importlib import resources
        return resources.files("eventgraph.assets").joinpath(
            ANNOTATION_INSTRUCTIONS).read_text(encoding="utf-8")

    def session_rater(service: AnnotationService, token: str) -> str:
        try:
            return service.rater_for(token)
        except PermissionError as exc:
            raise HTTPException(status_code=401, detail={
                "error": "InvalidSession", "detail": str(exc)})

    @app.post("/api/annotation/sessions",
              response_model=schemas.CreateSessionResponse)
    def create_session(req: schemas.CreateSessionRequest):
        service = annotation_service()
        try:
            token = service.create_session(req.rater_id)
        except errors.EngineError as exc:
            raise _http_error(exc)
        return schemas.CreateSessionResponse(
            token=token, qualified=service.is_qualified(req.rater_id))

    @app.get("/api/annotation/tasks/next",
             response_model=schemas.NextTaskResponse)
    def next_task(token: str = Query(...)):
        service = annotation_service()
        rater = session_rater(service, token)
        try:
            task = service.next_task(rater)
        except errors.EngineError as exc:
            raise _http_error(exc)
        order = service.presentation_order(rater, task.video_id)
        progress = service.progress(rater)
        return schemas.NextTaskResponse(
            video_id=task.video_id,
            video_url=task.url,
            duration_seconds=task.duration_seconds,
            descriptions=[
                schemas.TaskDescription(slot=i, text=task.descriptions[d])
                for i, d in enumerate(order)
            ],
            is_qualification=(task.video_id ==
                              service.manifest.qualification_video),
            completed=progress["completed"],
            total=progress["total"],
        )

    @app.get("/api/annotation/tasks/previous",
             response_model=schemas.NextTaskResponse)
    def previous_task(token: str = Query(...)):
        service = annotation_service()
        rater = session_rater(service, token)
        try:
            task, _last = service.previous_task(rater)
        except errors.EngineError as exc:
            raise _http_error(exc)
        order = service.presentation_order(rater, task.video_id)
        progress = service.progress(rater)
        return schemas.NextTaskResponse(
            video_id=task.video_id,
            video_url=task.url,
            duration_seconds=task.duration_seconds,
            descriptions=[
                schemas.TaskDescription(slot=i, text=task.descriptions[d])
                for i, d in enumerate(order)
            ],
            is_qualification=False,
            completed=progress["completed"],
            total=progress["total"],
        )

    @app.post("/api/annotation/tasks/skip")
    def skip_task(req: schemas.SkipRequest):
        service = annotation_service()
        rater = session_rater(service, req.token)
        try:
            service.skip(rater, req.video_id)
        except KeyError:
            raise HTTPException(status_code=404, detail={
                "error": "UnknownVideo", "detail": req.video_id})
        return {"accepted": True}

    @app.post("/api/annotation/rankings",
              response_model=schemas.SubmitRankingResponse)
    def submit_ranking(req: schemas.SubmitRankingRequest):
        service = annotation_service()
        rater = session_rater(service, req.token)
        try:
            result = service.submit(rater, req.video_id, req.order,
                                    req.duration_seconds, req.revision,
                                    active_duration_seconds=req.active_duration_seconds)
        except KeyError:
            raise HTTPException(status_code=404, detail={
                "error": "UnknownVideo", "detail": req.video_id})
        except errors.EngineError as exc:
            raise _http_error(exc)
        return schemas.SubmitRankingResponse(
            accepted=True,
            is_qualification=result["is_qualification"],
            qualification_passed=result["qualification_passed"],
            flagged_fast=result["flagged_fast"],
        )

    @app.get("/api/annotation/progress", response_model=schemas.ProgressResponse)
    def progress(token: str = Query(...)):
        service = annotation_service()
        rater = session_rater(service, token)
        return schemas.ProgressResponse(**service.progress(rater))

    @app.get("/api/annotation/raters",
             response_model=list[schemas.RaterProfileModel])
    def rater_profiles():
        service = annotation_service()
        return [schemas.RaterProfileModel(
            rater_id=p.rater_id,
            passed_qualification=p.passed_qualification,
            videos_annotated=p.videos_annotated,
            flagged_fast=p.flagged_fast,
        ) for p in service.profiles()]

    @app.get("/api/annotation/records")
    def annotation_records():
        service = annotation_service()
        return [r.to_dict() for r in service.ranking_records()]

    @app.get("/api/annotation/instructions", response_class=PlainTextResponse)
    def instructions():
        return annotation_instructions_text()

    # --- static ----------------------------------------------------------------

    if config.videos_dir is not None:
        app.mount("/videos", StaticFiles(directory=str(config.videos_dir)),
                  name="videos")
    if config.ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=str(config.ui_dir), html=True),
                  name="ui")

    return app
