"""Command-line interface: a thin client over the HTTP API.

Every subcommand builds a request, sends it to the service and writes
the response to disk. By default the service runs in-process (no network,
same process); `--server` points at a remote instance instead. `serve`
starts the long-running service.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import click
import httpx
import yaml

from .config import EngineConfig, config_from_dict, default_profile_text, load_config
from .errors import ConfigError


class CliError(Exception):
    def __init__(self, error: str, detail: str):
        self.error = error
        self.detail = detail
        super().__init__(f"{error}: {detail}")


def _fail(error: str, detail: str):
    # Machine-readable error record on stderr, nonzero exit.
    sys.stderr.write(json.dumps({"error": error, "detail": detail},
                               sort_keys=True) + "\n")
    sys.exit(1)


class ApiClient:
    """Thin transport wrapper: remote server or in-process app."""

    def __init__(self, server: Optional[str], engine: Optional[EngineConfig] = None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            import warnings
            with warnings.catch_warnings():
                # Keep stderr reserved for machine-readable error records.
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient
            from .service import ServiceConfig, create_app
            self._client = TestClient(create_app(ServiceConfig(engine=engine)))

    def post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", {})
            except json.JSONDecodeError:
                detail = {}
            if isinstance(detail, dict) and "error" in detail:
                raise CliError(detail["error"], detail.get("detail", ""))
            raise CliError(f"HTTP{response.status_code}", response.text[:500])
        return response.json()


def _load_engine_config(path: Optional[str]) -> Optional[EngineConfig]:
    if path is None:
        return None
    return load_config(path)


def _engine_config_dict(path: Optional[str]) -> Optional[dict]:
    if path is None:
        return None
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    config_from_dict(raw)  # strict validation: fail fast, name the key
    return raw


def _load_endpoint(path: str) -> dict:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or "base_url" not in raw or "model_name" not in raw:
        raise ConfigError("endpoint", f"{path} must define base_url and model_name")
    return raw


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL; default runs the service in-process.")
@click.pass_context
def main(ctx, server):
    """Event-graph engine: perception streams to narrated descriptions."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


def _client(ctx, engine: Optional[EngineConfig] = None) -> ApiClient:
    return ApiClient(ctx.obj.get("server"), engine=engine)


@main.command("ingest-check")
@click.argument("stream", type=click.Path(exists=True))
@click.option("--actions-vocab", type=click.Path(exists=True), default=None)
@click.option("--objects-vocab", type=click.Path(exists=True), default=None)
@click.pass_context
def ingest_check(ctx, stream, actions_vocab, objects_vocab):
    """Validate a perception-stream file and report vocabulary warnings."""
    payload = {"stream_text": Path(stream).read_text(encoding="utf-8")}
    for key, path in (("action_vocabulary", actions_vocab),
                      ("object_vocabulary", objects_vocab)):
        if path is not None:
            payload[key] = sorted(
                line.strip()
                for line in Path(path).read_text(encoding="utf-8").splitlines()
                if line.strip())
    try:
        body = _client(ctx).post("/api/pipeline/ingest-check", payload)
    except CliError as exc:
        _fail(exc.error, exc.detail)
    click.echo(f"frames: {body['frame_count']}")
    for warning in body["warnings"]:
        click.echo(f"warning: frame {warning['frame_index']}: {warning['message']}")
    click.echo("ok")


STAT_LINES = (
    ("frames", "frames"),
    ("video_length", "video length"),
    ("segments_raw", "raw track segments"),
    ("segments_after_bridging", "segments after gap bridging"),
    ("persons_before_reid", "persons before re-identification"),
    ("persons_after_reid", "persons after re-identification"),
    ("actions_after_filter", "actions after confidence/top-k filter"),
    ("actions_after_vote", "actions after window voting"),
    ("events_before_unify", "events before unification"),
    ("events_after_unify", "events after unification"),
)


@main.command("build-graph")
@click.argument("streams", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(),
              help="Output graph file (single input) or directory.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--video-length", type=int, default=None)
@click.option("--workers", type=int, default=1, show_default=True)
@click.pass_context
def build_graph_cmd(ctx, streams, out, config_path, video_length, workers):
    """Build event graphs from perception streams; prints stage stats."""
    try:
        config_dict = _engine_config_dict(config_path)
    except ConfigError as exc:
        _fail("ConfigError", str(exc))
    out_path = Path(out)
    if len(streams) > 1 and not out_path.is_dir():
        out_path.mkdir(parents=True, exist_ok=True)

    server = ctx.obj.get("server")

    def run_one(stream_path: str) -> dict:
        client = ApiClient(server)
        payload = {
            "stream_text": Path(stream_path).read_text(encoding="utf-8"),
        }
        if config_dict is not None:
            payload["config"] = config_dict
        if video_length is not None:
            payload["video_length"] = video_length
        return client.post("/api/pipeline/build-graph", payload)

    try:
        if workers > 1 and len(streams) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                bodies = list(pool.map(run_one, streams))
        else:
            bodies = [run_one(s) for s in streams]
    except CliError as exc:
        _fail(exc.error, exc.detail)

    for stream_path, body in zip(streams, bodies):
        if out_path.is_dir():
            target = out_path / (Path(stream_path).stem + ".graph.json")
        else:
            target = out_path
        target.write_text(body["graph_text"], encoding="utf-8")
        click.echo(f"{stream_path} -> {target}")
        stats = body["stats"]
        for key, label in STAT_LINES:
            click.echo(f"  {label}: {stats[key]}")
        for kind, count in sorted(stats.get("edges", {}).items()):
            click.echo(f"  edges[{kind}]: {count}")


@main.command("render-proto")
@click.argument("graph", type=click.Path(exists=True))
@click.option("--scene", default=None,
              help="Scene context string; mutually exclusive with the endpoint query.")
@click.option("--scene-endpoint-config", type=click.Path(exists=True), default=None,
              help="Query this endpoint for the scene instead of --scene.")
@click.option("--scene-frames-list", type=click.Path(exists=True), default=None,
              help="Frame paths (one per line) for the scene query.")
@click.option("--include-spans", is_flag=True, default=False)
@click.option("--out", type=click.Path(), default=None,
              help="Write the proto text here (stdout otherwise).")
@click.option("--out-script", type=click.Path(), default=None,
              help="Write the structured script (groups + connectors) as JSON.")
@click.pass_context
def render_proto_cmd(ctx, graph, scene, scene_endpoint_config,
                     scene_frames_list, include_spans, out, out_script):
    """Render a graph file into proto-language."""
    if scene_endpoint_config:
        if scene is not None:
            _fail("UsageError", "--scene and --scene-endpoint-config are exclusive")
        if scene_frames_list is None:
            _fail("UsageError", "--scene-endpoint-config needs --scene-frames-list")
        frames = [line.strip()
                  for line in Path(scene_frames_list).read_text(encoding="utf-8").splitlines()
                  if line.strip()]
        try:
            endpoint = _load_endpoint(scene_endpoint_config)
            body = _client(ctx).post("/api/pipeline/scene", {
                "frame_paths": frames, "endpoint": endpoint})
            scene = body["scene"]
        except (CliError, ConfigError) as exc:
            if isinstance(exc, CliError):
                _fail(exc.error, exc.detail)
            _fail("ConfigError", str(exc))
    payload = {
        "graph_text": Path(graph).read_text(encoding="utf-8"),
        "scene": scene,
        "include_spans": include_spans,
    }
    try:
        body = _client(ctx).post("/api/pipeline/render-proto", payload)
    except CliError as exc:
        _fail(exc.error, exc.detail)
    if out:
        Path(out).write_text(body["text"] + "\n", encoding="utf-8")
    else:
        click.echo(body["text"])
    if out_script:
        Path(out_script).write_text(
            json.dumps(body["script"], indent=2, sort_keys=True) + "\n",
            encoding="utf-8")


@main.command("refine")
@click.argument("proto", type=click.Path(exists=True))
@click.option("--endpoint-config", required=True, type=click.Path(exists=True))
@click.option("--scene", default=None)
@click.option("--shots", type=click.Choice(["0", "1", "3", "5"]), default="0",
              show_default=True)
@click.option("--examples", type=click.Path(exists=True), default=None,
              help="JSONL pool of {proto, target} solved examples.")
@click.option("--seed", type=int, default=17, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--audit-log", type=click.Path(), default=None)
@click.pass_context
def refine_cmd(ctx, proto, endpoint_config, scene, shots, examples, seed, out,
               audit_log):
    """Refine a proto-language file through the text-generation endpoint."""
    pool = []
    if examples:
        for line in Path(examples).read_text(encoding="utf-8").splitlines():
            if line.strip():
                entry = json.loads(line)
                pool.append([entry["proto"], entry["target"]])
    try:
        endpoint = _load_endpoint(endpoint_config)
    except ConfigError as exc:
        _fail("ConfigError", str(exc))
    payload = {
        "proto_text": Path(proto).read_text(encoding="utf-8"),
        "endpoint": endpoint,
        "scene": scene,
        "examples_pool": pool,
        "shots": int(shots),
        "seed": seed,
        "audit_log": audit_log,
    }
    try:
        body = _client(ctx).post("/api/pipeline/refine", payload)
    except CliError as exc:
        _fail(exc.error, exc.detail)
    if out:
        Path(out).write_text(body["description"] + "\n", encoding="utf-8")
        click.echo(f"wrote {out} (seed={body['metadata']['seed']}, "
                   f"shots={body['metadata']['shots']})")
    else:
        click.echo(body["description"])


@main.command("judge")
@click.option("--video-id", required=True)
@click.option("--frames-list", required=True, type=click.Path(exists=True),
              help="File of frame paths, one per line.")
@click.option("--descriptions", "descriptions_path", required=True,
              type=click.Path(exists=True),
              help="JSON file mapping description id to text.")
@click.option("--endpoint-config", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=17, show_default=True)
@click.option("--out", type=click.Path(), default=None,
              help="Append the ranking record to this JSONL file.")
@click.option("--audit-log", type=click.Path(), default=None)
@click.pass_context
def judge_cmd(ctx, video_id, frames_list, descriptions_path, endpoint_config,
              seed, out, audit_log):
    """Ask one machine judge to rank descriptions of one video."""
    frames = [line.strip()
              for line in Path(frames_list).read_text(encoding="utf-8").splitlines()
              if line.strip()]
    descriptions = json.loads(Path(descriptions_path).read_text(encoding="utf-8"))
    try:
        endpoint = _load_endpoint(endpoint_config)
    except ConfigError as exc:
        _fail("ConfigError", str(exc))
    payload = {
        "video_id": video_id,
        "frame_paths": frames,
        "descriptions": descriptions,
        "endpoint": endpoint,
        "seed": seed,
        "audit_log": audit_log,
    }
    try:
        body = _client(ctx).post("/api/pipeline/judge", payload)
    except CliError as exc:
        _fail(exc.error, exc.detail)
    line = json.dumps(body["record"], sort_keys=True)
    if out:
        with Path(out).open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        click.echo(f"appended ranking to {out}")
    else:
        click.echo(line)


@main.command("agreement")
@click.argument("file_a", type=click.Path(exists=True))
@click.argument("file_b", type=click.Path(exists=True))
@click.option("--tie-mode", type=click.Choice(["half", "exclude"]),
              default="half", show_default=True)
@click.option("--csv-out", type=click.Path(), default=None,
              help="Also write the per-video agreement table as CSV.")
@click.pass_context
def agreement_cmd(ctx, file_a, file_b, tie_mode, csv_out):
    """Pairwise rank agreement between two ranking record files."""
    def load(path):
        return [json.loads(line)
                for line in Path(path).read_text(encoding="utf-8").splitlines()
                if line.strip()]
    payload = {"records_a": load(file_a), "records_b": load(file_b),
               "tie_mode": tie_mode}
    try:
        body = _client(ctx).post("/api/pipeline/agreement", payload)
    except CliError as exc:
        _fail(exc.error, exc.detail)
    click.echo(f"{body['score']:.6g}")
    if csv_out:
        from .evaluation import export_agreement_csv
        export_agreement_csv({"agreement": body["per_video"]}, csv_out)


@main.command("synth")
@click.argument("script", type=click.Path(exists=True))
@click.option("--out-stream", required=True, type=click.Path())
@click.option("--out-truth", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.pass_context
def synth_cmd(ctx, script, out_stream, out_truth, config_path):
    """Generate a synthetic stream (and its ground-truth graph) from a scene script."""
    try:
        config_dict = _engine_config_dict(config_path)
    except ConfigError as exc:
        _fail("ConfigError", str(exc))
    payload = {"script_yaml": Path(script).read_text(encoding="utf-8")}
    if config_dict is not None:
        payload["config"] = config_dict
    try:
        body = _client(ctx).post("/api/pipeline/synth", payload)
    except CliError as exc:
        _fail(exc.error, exc.detail)
    Path(out_stream).write_text(body["stream_text"], encoding="utf-8")
    click.echo(f"wrote {out_stream}")
    if out_truth:
        Path(out_truth).write_text(body["truth_graph_text"], encoding="utf-8")
        click.echo(f"wrote {out_truth}")


@main.command("export-graph")
@click.argument("graph", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def export_graph_cmd(ctx, graph, out):
    """Export a graph file to DOT for rendering figures."""
    payload = {"graph_text": Path(graph).read_text(encoding="utf-8")}
    try:
        body = _client(ctx).post("/api/pipeline/export-graph", payload)
    except CliError as exc:
        _fail(exc.error, exc.detail)
    Path(out).write_text(body["dot"], encoding="utf-8")
    click.echo(f"wrote {out}")


@main.command("default-config")
@click.option("--out", type=click.Path(), default=None)
def default_config_cmd(out):
    """Print (or write) the complete default configuration profile."""
    text = default_profile_text()
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--manifest", type=click.Path(exists=True), default=None,
              help="Annotation task manifest (YAML).")
@click.option("--store", type=click.Path(), default=None,
              help="Ranking store file (append-only JSONL).")
@click.option("--videos-dir", type=click.Path(exists=True), default=None)
@click.option("--ui-dir", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--shuffle-seed", type=int, default=17, show_default=True)
def serve_cmd(host, port, manifest, store, videos_dir, ui_dir, config_path,
              shuffle_seed):
    """Start the HTTP service (pipeline + annotation backend)."""
    import uvicorn
    from .service import ServiceConfig, create_app
    try:
        engine = _load_engine_config(config_path) or EngineConfig()
    except ConfigError as exc:
        _fail("ConfigError", str(exc))
    app = create_app(ServiceConfig(
        engine=engine,
        manifest_path=manifest,
        store_path=store,
        videos_dir=videos_dir,
        ui_dir=ui_dir,
        shuffle_seed=shuffle_seed,
    ))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
