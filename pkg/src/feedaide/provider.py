"""Model-provider layer: scripted playback for tests, OpenAI-compatible HTTP
for production.

Providers return raw structured payloads (dicts); the flow engine is the
authority on validating them. The scripted provider replays a fixed scenario
step by step, which makes every protocol path testable without a live model.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx

from .context import Screenshot
from .errors import (
    ConfigurationError,
    ProviderError,
    ScenarioError,
    ScenarioExhaustedError,
    SchemaViolationError,
)
from .prompt import ModelSettings

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_SECONDS = 30.0
DEFAULT_CONCURRENCY = 8

ENV_PROVIDER = "FEEDAIDE_PROVIDER"
ENV_REMOTE_BASE_URL = "FEEDAIDE_REMOTE_BASE_URL"
ENV_REMOTE_MODEL = "FEEDAIDE_REMOTE_MODEL"
ENV_API_KEY = "FEEDAIDE_API_KEY"

STEP_OUTPUT_SCHEMA_ID = "feedback_step_v1"

# Structured-output schema for one flow step. Exactly one of the three groups
# (predictions / follow-up question / summaries) is populated; the flow module
# enforces that and the per-phase rules.
STEP_OUTPUT_SCHEMA: dict = {
    "type": "object",
    "properties": {
        "feedbackPredictions": {
            "anyOf": [
                {"type": "array", "items": {"type": "string"}, "maxItems": 3},
                {"type": "null"},
            ]
        },
        "followUpQuestion": {
            "anyOf": [
                {
                    "type": "object",
                    "properties": {
                        "questionText": {"type": "string"},
                        "answerOptions": {
                            "type": "array",
                            "items": {"type": "string"},
                            "maxItems": 3,
                        },
                    },
                    "required": ["questionText", "answerOptions"],
                    "additionalProperties": False,
                },
                {"type": "null"},
            ]
        },
        "userIntentSummary": {"type": ["string", "null"]},
        "developerSummary": {"type": ["string", "null"]},
    },
    "required": [
        "feedbackPredictions",
        "followUpQuestion",
        "userIntentSummary",
        "developerSummary",
    ],
    "additionalProperties": False,
}

SCHEMAS: dict[str, dict] = {STEP_OUTPUT_SCHEMA_ID: STEP_OUTPUT_SCHEMA}


@dataclass(frozen=True)
class Message:
    """One chat message; role is system, user, or assistant."""

    role: str
    text: str
    attachment: Screenshot | None = None


@dataclass(frozen=True)
class ProviderRequest:
    messages: tuple[Message, ...]
    settings: ModelSettings = ModelSettings()
    schema_id: str = STEP_OUTPUT_SCHEMA_ID

    def validate(self) -> None:
        if not self.messages or self.messages[0].role != "system":
            raise ConfigurationError("first provider message must be the system text")
        self.settings.validate()
        if self.schema_id not in SCHEMAS:
            raise ConfigurationError(f"unknown output schema: {self.schema_id!r}")


class Provider(Protocol):
    def complete_step(self, req: ProviderRequest) -> dict:
        """Return the next raw structured payload for the request."""
        ...


@dataclass(frozen=True)
class ScriptedScenario:
    """Fixed sequence of raw step payloads; step k targets protocol step k."""

    name: str
    steps: tuple[dict, ...]
    issues: tuple[str, ...] = ()

    @property
    def complete(self) -> bool:
        return not self.issues


def _looks_final(step: dict) -> bool:
    return (
        isinstance(step, dict)
        and step.get("followUpQuestion") is None
        and bool(step.get("userIntentSummary"))
        and bool(step.get("developerSummary"))
    )


def scenario_from_dict(document: dict, name_hint: str = "scenario") -> ScriptedScenario:
    if not isinstance(document, dict):
        raise ScenarioError("scenario document must be a JSON object")
    steps = document.get("steps")
    if not isinstance(steps, list) or not steps:
        raise ScenarioError("scenario must contain a non-empty steps array")
    for index, step in enumerate(steps):
        if not isinstance(step, dict):
            raise ScenarioError(f"step {index} must be an object, got {type(step).__name__}")
    issues = []
    if not any(_looks_final(step) for step in steps):
        issues.append("finalization missing")
    return ScriptedScenario(
        name=document.get("name", name_hint),
        steps=tuple(steps),
        issues=tuple(issues),
    )


def load_scenario(path: str | Path) -> ScriptedScenario:
    """Load and shape-check a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"scenario {path} is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc
    scenario = scenario_from_dict(document, name_hint=path.stem)
    for issue in scenario.issues:
        logger.warning("scenario %s: %s", scenario.name, issue)
    return scenario


@dataclass
class ScriptedProvider:
    """Deterministic playback of one scenario; each call consumes one step."""

    scenario: ScriptedScenario
    cursor: int = 0
    requests: list[ProviderRequest] = field(default_factory=list)

    def complete_step(self, req: ProviderRequest) -> dict:
        req.validate()
        self.requests.append(req)
        if self.cursor >= len(self.scenario.steps):
            raise ScenarioExhaustedError(
                f"scenario {self.scenario.name!r} exhausted after "
                f"{len(self.scenario.steps)} steps"
            )
        step = self.scenario.steps[self.cursor]
        self.cursor += 1
        logger.debug(
            "scripted step %d/%d of %s served",
            self.cursor,
            len(self.scenario.steps),
            self.scenario.name,
        )
        return dict(step)


def _message_to_wire(message: Message) -> dict:
    role = message.role
    if message.attachment is None:
        return {"role": role, "content": message.text}
    encoded = base64.b64encode(message.attachment.data).decode("ascii")
    return {
        "role": role,
        "content": [
            {"type": "text", "text": message.text},
            {
                "type": "image_url",
                "image_url": {"url": f"data:{message.attachment.media_type};base64,{encoded}"},
            },
        ],
    }


class RemoteProvider:
    """OpenAI-compatible chat-completions client with structured outputs."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = DEFAULT_TIMEOUT_SECONDS,
        max_concurrency: int = DEFAULT_CONCURRENCY,
    ):
        if not base_url or not model:
            raise ConfigurationError("remote provider needs a base URL and model name")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout = timeout
        self._semaphore = threading.BoundedSemaphore(max_concurrency)
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=timeout, headers=headers)

    def complete_step(self, req: ProviderRequest) -> dict:
        req.validate()
        body = {
            "model": self.model,
            "temperature": req.settings.temperature,
            "max_tokens": req.settings.max_output_tokens,
            "messages": [_message_to_wire(message) for message in req.messages],
            "response_format": {
                "type": "json_schema",
                "json_schema": {
                    "name": req.schema_id,
                    "schema": SCHEMAS[req.schema_id],
                    "strict": True,
                },
            },
        }
        started = time.monotonic()
        with self._semaphore:
            try:
                response = self._client.post(f"{self.base_url}/chat/completions", json=body)
            except httpx.TimeoutException as exc:
                raise ProviderError(f"provider timed out after {self.timeout}s", retryable=True) from exc
            except httpx.HTTPError as exc:
                raise ProviderError(f"provider transport failure: {exc}", retryable=True) from exc
        elapsed = time.monotonic() - started
        logger.info("provider call completed in %.3fs (status %s)", elapsed, response.status_code)
        if response.status_code < 200 or response.status_code >= 300:
            excerpt = response.text[:200]
            raise ProviderError(
                f"provider returned status {response.status_code}: {excerpt}",
                retryable=response.status_code >= 500,
            )
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise ProviderError(f"provider response has unexpected shape: {exc}", retryable=False) from exc
        try:
            payload = json.loads(content)
        except json.JSONDecodeError as exc:
            raise SchemaViolationError(f"provider content is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise SchemaViolationError("provider content is not a JSON object")
        return payload

    def close(self) -> None:
        self._client.close()


def remote_provider_from_env(env: dict[str, str] | None = None) -> RemoteProvider:
    env = dict(os.environ if env is None else env)
    base_url = env.get(ENV_REMOTE_BASE_URL, "")
    model = env.get(ENV_REMOTE_MODEL, "")
    if not base_url or not model:
        raise ConfigurationError(
            f"remote provider requires {ENV_REMOTE_BASE_URL} and {ENV_REMOTE_MODEL}"
        )
    return RemoteProvider(base_url=base_url, model=model, api_key=env.get(ENV_API_KEY))
