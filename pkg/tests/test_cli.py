"""CLI subcommands as thin clients over the in-process service."""

import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from eventgraph.cli import main
from eventgraph.config import default_profile_text
from eventgraph.graph import deserialize_graph, graphs_isomorphic
from eventgraph.ingest import serialize_stream, write_stream
from eventgraph.synth import emit_stream, load_script, shipped_scene_paths


@pytest.fixture()
def runner():
    return CliRunner()


def scene_path(name):
    return next(p for p in shipped_scene_paths() if name in p.name)


@pytest.fixture()
def stream_file(tmp_path):
    records, truth = emit_stream(load_script(scene_path("01_single_action")))
    path = tmp_path / "scene.jsonl"
    write_stream(records, path)
    return path, truth


class TestIngestCheck:
    def test_ok(self, runner, stream_file):
        path, _ = stream_file
        result = runner.invoke(main, ["ingest-check", str(path)])
        assert result.exit_code == 0
        assert "ok" in result.output

    def test_error_is_machine_readable(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"frame_index": 1}\n{"frame_index": 0}\n')
        result = runner.invoke(main, ["ingest-check", str(bad)])
        assert result.exit_code == 1
        record = json.loads(result.output.strip().splitlines()[-1])
        assert record["error"] == "NonMonotonicFrames"

    def test_vocab_warnings(self, runner, stream_file, tmp_path):
        path, _ = stream_file
        vocab = tmp_path / "actions.txt"
        vocab.write_text("sit\n")
        result = runner.invoke(main, [
            "ingest-check", str(path), "--actions-vocab", str(vocab)])
        assert result.exit_code == 0
        assert "walk" in result.output


class TestBuildGraph:
    def test_build_and_stats(self, runner, stream_file, tmp_path):
        path, truth = stream_file
        out = tmp_path / "graph.json"
        result = runner.invoke(main, ["build-graph", str(path),
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "events before unification: 1" in result.output
        assert "persons after re-identification: 1" in result.output
        graph = deserialize_graph(out.read_text())
        assert graphs_isomorphic(graph, truth)

    def test_missing_config_key_names_it(self, runner, stream_file, tmp_path):
        path, _ = stream_file
        config = tmp_path / "partial.yaml"
        config.write_text("thresholds: {action_confidence_min: 0.8}\n")
        result = runner.invoke(main, ["build-graph", str(path),
                                      "--out", str(tmp_path / "g.json"),
                                      "--config", str(config)])
        assert result.exit_code == 1
        record = json.loads(result.output.strip().splitlines()[-1])
        assert record["error"] == "ConfigError"
        assert "actions_per_frame_top_k" in record["detail"]

    def test_full_default_profile_accepted(self, runner, stream_file, tmp_path):
        path, _ = stream_file
        config = tmp_path / "full.yaml"
        config.write_text(default_profile_text())
        result = runner.invoke(main, ["build-graph", str(path),
                                      "--out", str(tmp_path / "g.json"),
                                      "--config", str(config)])
        assert result.exit_code == 0, result.output


class TestRenderProto:
    def test_render_from_graph_file(self, runner, stream_file, tmp_path):
        path, _ = stream_file
        graph_file = tmp_path / "graph.json"
        runner.invoke(main, ["build-graph", str(path), "--out", str(graph_file)])
        out = tmp_path / "proto.txt"
        script_out = tmp_path / "script.json"
        result = runner.invoke(main, [
            "render-proto", str(graph_file), "--scene", "park",
            "--out", str(out), "--out-script", str(script_out)])
        assert result.exit_code == 0
        text = out.read_text()
        assert text.startswith("The scene is: park.")
        structured = json.loads(script_out.read_text())
        assert structured["group_texts"]


class TestPipelineComposition:
    def test_two_step_equals_in_process(self, runner, stream_file, tmp_path):
        from eventgraph.ingest import parse_stream
        from eventgraph.pipeline import describe_stream

        path, _ = stream_file
        graph_file = tmp_path / "graph.json"
        proto_file = tmp_path / "proto.txt"
        runner.invoke(main, ["build-graph", str(path), "--out", str(graph_file)])
        runner.invoke(main, ["render-proto", str(graph_file),
                             "--out", str(proto_file)])

        from eventgraph.graph import serialize_graph
        graph, script, _ = describe_stream(parse_stream(path))
        assert graph_file.read_text() == serialize_graph(graph)
        assert proto_file.read_text() == script.text() + "\n"


class TestDeterminismAcrossWorkers:
    def test_worker_count_does_not_change_bytes(self, runner, tmp_path):
        streams = []
        for name in ("01_single_action", "02_same_time_spatial", "04_next_chain"):
            records, _ = emit_stream(load_script(scene_path(name)))
            path = tmp_path / f"{name}.jsonl"
            write_stream(records, path)
            streams.append(str(path))
        out1 = tmp_path / "w1"
        out4 = tmp_path / "w4"
        out1.mkdir()
        out4.mkdir()
        r1 = runner.invoke(main, ["build-graph", *streams, "--out", str(out1),
                                  "--workers", "1"])
        r4 = runner.invoke(main, ["build-graph", *streams, "--out", str(out4),
                                  "--workers", "4"])
        assert r1.exit_code == 0 and r4.exit_code == 0
        for name in ("01_single_action", "02_same_time_spatial", "04_next_chain"):
            a = (out1 / f"{name}.graph.json").read_bytes()
            b = (out4 / f"{name}.graph.json").read_bytes()
            assert a == b


class TestSynthCommand:
    def test_synth_writes_stream_and_truth(self, runner, tmp_path):
        script = scene_path("02_same_time_spatial")
        out_stream = tmp_path / "stream.jsonl"
        out_truth = tmp_path / "truth.json"
        result = runner.invoke(main, ["synth", str(script),
                                      "--out-stream", str(out_stream),
                                      "--out-truth", str(out_truth)])
        assert result.exit_code == 0
        graph_file = tmp_path / "graph.json"
        build = runner.invoke(main, ["build-graph", str(out_stream),
                                     "--out", str(graph_file)])
        assert build.exit_code == 0
        recovered = deserialize_graph(graph_file.read_text())
        truth = deserialize_graph(out_truth.read_text())
        assert graphs_isomorphic(recovered, truth)


class TestAgreementCommand:
    def test_identical_files_print_one(self, runner, tmp_path):
        line = json.dumps({"video_id": "v", "rater_id": "r",
                           "rater_kind": "human",
                           "ranking": {"x": 1, "y": 2, "z": 3}})
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        a.write_text(line + "\n")
        b.write_text(line.replace('"r"', '"s"') + "\n")
        result = runner.invoke(main, ["agreement", str(a), str(b)])
        assert result.exit_code == 0
        assert result.output.strip() == "1"


class TestExportGraph:
    def test_dot_written(self, runner, stream_file, tmp_path):
        path, _ = stream_file
        graph_file = tmp_path / "graph.json"
        runner.invoke(main, ["build-graph", str(path), "--out", str(graph_file)])
        out = tmp_path / "graph.dot"
        result = runner.invoke(main, ["export-graph", str(graph_file),
                                      "--out", str(out)])
        assert result.exit_code == 0
        assert out.read_text().startswith("digraph")


class TestDefaultConfig:
    def test_prints_complete_profile(self, runner):
        result = runner.invoke(main, ["default-config"])
        assert result.exit_code == 0
        parsed = yaml.safe_load(result.output)
        assert parsed["thresholds"]["action_confidence_min"] == 0.75
