"""Prompt assembly and the pluggable text-generation endpoint client.

The engine never hosts a model: refinement goes through a generic
chat-completion HTTP endpoint described by EndpointConfig. Correctness
downstream never depends on what the endpoint returns; the text is
opaque.
"""

from __future__ import annotations

import json
import os
import random
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import httpx

from .errors import AuthMissing, EndpointUnavailable, MalformedResponse

STANDARD_SHOT_COUNTS = (0, 1, 3, 5)


def default_instructions() -> str:
    return resources.files("eventgraph.assets").joinpath(
        "refine_instructions.txt").read_text(encoding="utf-8").strip()


def scene_question() -> str:
    return resources.files("eventgraph.assets").joinpath(
        "scene_question.txt").read_text(encoding="utf-8").strip()


@dataclass(frozen=True)
class PromptBundle:
    """Everything that goes into one refinement prompt."""

    instructions: str
    proto: str
    scene_context: Optional[str] = None
    examples: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.instructions.strip():
            raise ValueError("instructions must be non-empty")


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how to reach a text-generation endpoint.

    base_url is the full request URL. auth_token_env names the
    environment variable holding the credential (never the credential
    itself). response_text_path walks the response JSON to the generated
    text; dot-separated, integer parts index into arrays.
    """

    base_url: str
    model_name: str
    auth_token_env: Optional[str] = None
    timeout_seconds: float = 30.0
    max_retries: int = 2
    response_text_path: str = "choices.0.message.content"

    def __post_init__(self):
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def assemble_prompt(bundle: PromptBundle) -> str:
    """Deterministic prompt layout: instructions, scene context, solved
    examples in order, then the target."""
    parts = [bundle.instructions.rstrip()]
    if bundle.scene_context:
        parts.append(f"Scene context: {bundle.scene_context}")
    for i, (proto, target) in enumerate(bundle.examples, start=1):
        parts.append(
            f"Example {i}:\nEvent notes:\n{proto.rstrip()}\nDescription:\n{target.rstrip()}"
        )
    parts.append(f"Event notes:\n{bundle.proto.rstrip()}\nDescription:")
    return "\n\n".join(parts) + "\n"


def sample_examples(pool: Sequence[Tuple[str, str]], count: int,
                    seed: int) -> List[Tuple[str, str]]:
    """Seeded sampling of solved examples for few-shot prompts; the seed
    belongs in the run's output metadata."""
    if count > len(pool):
        raise ValueError(f"cannot sample {count} examples from a pool of {len(pool)}")
    rng = random.Random(seed)
    return rng.sample(list(pool), count)


def _walk_path(payload, path: str):
    value = payload
    for part in path.split("."):
        if isinstance(value, list):
            value = value[int(part)]
        elif isinstance(value, dict):
            value = value[part]
        else:
            raise KeyError(part)
    return value


def _auth_headers(cfg: EndpointConfig) -> dict:
    if not cfg.auth_token_env:
        return {}
    token = os.environ.get(cfg.auth_token_env)
    if not token:
        raise AuthMissing(cfg.auth_token_env)
    return {"Authorization": f"Bearer {token}"}


def _append_audit(audit_log: Optional[Path], entry: dict) -> None:
    if audit_log is None:
        return
    audit_log = Path(audit_log)
    audit_log.parent.mkdir(parents=True, exist_ok=True)
    with audit_log.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def call_endpoint(cfg: EndpointConfig, payload: dict,
                  transport: Optional[httpx.BaseTransport] = None,
                  audit_log: Optional[Path] = None,
                  sleep: Callable[[float], None] = time.sleep,
                  backoff_base: float = 0.5) -> dict:
    """POST the payload, retrying transport failures and 5xx responses
    with exponential backoff (backoff_base * 2**attempt). Every attempt is
    appended to the audit log. Returns the parsed response body."""
    headers = _auth_headers(cfg)
    attempts = cfg.max_retries + 1
    last_error: Optional[str] = None
    with httpx.Client(transport=transport, timeout=cfg.timeout_seconds) as client:
        for attempt in range(attempts):
            entry = {
                "url": cfg.base_url,
                "model": cfg.model_name,
                "attempt": attempt,
                "request": payload,
                "timestamp": time.time(),
            }
            try:
                response = client.post(cfg.base_url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
                entry["error"] = last_error
                _append_audit(audit_log, entry)
                if attempt < attempts - 1:
                    sleep(backoff_base * (2 ** attempt))
                continue
            if response.status_code >= 500:
                last_error = f"server error {response.status_code}"
                entry["error"] = last_error
                _append_audit(audit_log, entry)
                if attempt < attempts - 1:
                    sleep(backoff_base * (2 ** attempt))
                continue
            if response.status_code >= 400:
                entry["error"] = f"client error {response.status_code}"
                _append_audit(audit_log, entry)
                raise EndpointUnavailable(
                    f"{cfg.base_url} answered {response.status_code}: {response.text[:200]}")
            try:
                body = response.json()
            except json.JSONDecodeError as exc:
                entry["error"] = "non-JSON response"
                _append_audit(audit_log, entry)
                raise MalformedResponse(f"endpoint returned non-JSON body: {exc}") from exc
            entry["response"] = body
            _append_audit(audit_log, entry)
            return body
    raise EndpointUnavailable(
        f"{cfg.base_url} unavailable after {attempts} attempts: {last_error}")


def extract_text(body: dict, cfg: EndpointConfig) -> str:
    try:
        text = _walk_path(body, cfg.response_text_path)
    except (KeyError, IndexError, ValueError) as exc:
        raise MalformedResponse(
            f"response lacks text at {cfg.response_text_path!r}") from exc
    if not isinstance(text, str) or not text.strip():
        raise MalformedResponse("endpoint returned empty text")
    return text


def refine_description(bundle: PromptBundle, cfg: EndpointConfig,
                       transport: Optional[httpx.BaseTransport] = None,
                       audit_log: Optional[Path] = None,
                       sleep: Callable[[float], None] = time.sleep,
                       correlation_id: Optional[str] = None) -> str:
    """Send the assembled prompt to the endpoint and return its text."""
    prompt = assemble_prompt(bundle)
    payload = {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt}],
    }
    if correlation_id is not None:
        payload["metadata"] = {"correlation_id": correlation_id}
    body = call_endpoint(cfg, payload, transport=transport,
                         audit_log=audit_log, sleep=sleep)
    return extract_text(body, cfg)


def refine_many(bundles: Sequence[PromptBundle], cfg: EndpointConfig,
                max_in_flight: int = 4,
                transport: Optional[httpx.BaseTransport] = None,
                audit_log: Optional[Path] = None,
                sleep: Callable[[float], None] = time.sleep) -> List[str]:
    """Refine several videos concurrently with a bounded in-flight count.

    Results come back in input order; audit entries carry a correlation
    id so interleaved requests remain attributable.
    """
    from concurrent.futures import ThreadPoolExecutor

    def run(indexed):
        index, bundle = indexed
        return refine_description(bundle, cfg, transport=transport,
                                  audit_log=audit_log, sleep=sleep,
                                  correlation_id=f"bundle-{index}")

    if max_in_flight < 1:
        raise ValueError("max_in_flight must be >= 1")
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(run, enumerate(bundles)))


def query_scene(frames: Sequence[str], cfg: EndpointConfig,
                question: Optional[str] = None,
                transport: Optional[httpx.BaseTransport] = None,
                audit_log: Optional[Path] = None,
                sleep: Callable[[float], None] = time.sleep) -> str:
    """Ask the pluggable endpoint to name the scene shown by the frames.

    The engine never embeds a vision model; the frame references are
    forwarded for the endpoint to resolve.
    """
    prompt_lines = [(question or scene_question()).rstrip(), "", "Video frames:"]
    prompt_lines += [f"- {ref}" for ref in frames]
    payload = {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": "\n".join(prompt_lines)}],
        "metadata": {"frames": list(frames)},
    }
    body = call_endpoint(cfg, payload, transport=transport,
                         audit_log=audit_log, sleep=sleep)
    return extract_text(body, cfg).strip()
