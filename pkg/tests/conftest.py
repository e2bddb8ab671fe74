"""Shared fixtures: canonical context, scenario builders, fixed clock/ids,
and a scriptable local HTTP stub for webhook and remote-provider tests."""

from __future__ import annotations

import json
import threading
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

from feedaide.context import context_from_json
from feedaide.flow import FlowConfig, FlowEngine
from feedaide.prompt import AppDescription, ScreenDescription
from feedaide.provider import ScriptedProvider, scenario_from_dict

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# Canonical initial-context document; the wire format every context must match.
LISTING1_JSON = {
    "events": ["app_launched", "login_button_pressed"],
    "eventTimestamps": ["2025-05-09T16:23:00+02:00", "2025-05-09T16:24:00+02:00"],
    "feedbackInitiationTimestamp": "2025-05-09T16:23:00+02:00",
    "appVersion": "1.3.2",
    "deviceInfo": {
        "model": "iPhone13,4",
        "osVersion": "iOS 17.5",
        "language": "de",
    },
}

LINGOLEARN = AppDescription(
    app_summary=(
        "LingoLearn is a mobile app that helps users learn new languages through "
        "short, interactive lessons. It focuses on daily practice with vocabulary, "
        "grammar, and pronunciation exercises, using streaks and rewards to keep "
        "users motivated."
    ),
    screens=(
        ScreenDescription(
            name="Home",
            description="Shows the current streak, daily goal, and quick access to the next lesson.",
        ),
    ),
)


@pytest.fixture
def listing1_context():
    return context_from_json(LISTING1_JSON)


class FixedClock:
    """Deterministic clock; advance() moves it forward."""

    def __init__(self, start: datetime | None = None):
        self.now = start or datetime(2025, 5, 9, 16, 30, 0, tzinfo=timezone.utc)

    def __call__(self) -> datetime:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now = self.now + timedelta(seconds=seconds)


@pytest.fixture
def fixed_clock():
    return FixedClock()


def sequential_ids(prefix: str = "id"):
    counter = iter(range(1, 100_000))
    return lambda: f"{prefix}-{next(counter):04d}"


def prediction_step(*predictions: str) -> dict:
    return {
        "feedbackPredictions": list(predictions),
        "followUpQuestion": None,
        "userIntentSummary": None,
        "developerSummary": None,
    }


def question_step(text: str, *options: str) -> dict:
    return {
        "feedbackPredictions": None,
        "followUpQuestion": {"questionText": text, "answerOptions": list(options)},
        "userIntentSummary": None,
        "developerSummary": None,
    }


def final_step(user_intent: str, developer: str) -> dict:
    return {
        "feedbackPredictions": None,
        "followUpQuestion": None,
        "userIntentSummary": user_intent,
        "developerSummary": developer,
    }


def happy_scenario(name: str = "happy", seed: int = 0) -> dict:
    """Synthesize one well-formed 4-step scenario, varied a little by seed."""
    return {
        "name": name,
        "steps": [
            prediction_step(
                f"Issue candidate {seed}-A",
                f"Issue candidate {seed}-B",
                f"Issue candidate {seed}-C",
            )
            if seed % 3 == 0
            else prediction_step(f"Issue candidate {seed}-A", f"Issue candidate {seed}-B")
            if seed % 3 == 1
            else prediction_step(f"Issue candidate {seed}-A"),
            question_step(
                f"Clarifying question one for case {seed}?",
                f"Choice {seed}-1",
                f"Choice {seed}-2",
            ),
            question_step(
                f"Clarifying question two for case {seed}?",
                f"Detail {seed}-1",
                f"Detail {seed}-2",
                f"Detail {seed}-3",
            ),
            final_step(
                f"User intent summary for case {seed}",
                f"Developer summary for case {seed}",
            ),
        ],
    }


def make_engine(scenario: dict, clock=None, id_source=None, config: FlowConfig | None = None,
                apps: dict | None = None) -> FlowEngine:
    kwargs = {}
    if clock is not None:
        kwargs["clock"] = clock
    if id_source is not None:
        kwargs["id_source"] = id_source
    if config is not None:
        kwargs["config"] = config
    return FlowEngine(
        apps=apps or {"lingolearn": LINGOLEARN},
        provider=ScriptedProvider(scenario_from_dict(scenario)),
        **kwargs,
    )


def complete_flow(engine, ctx, app_id: str = "lingolearn", first_input=None):
    """Drive a session to completion, selecting the first option at each step.

    first_input may override the prediction-step input (a UserInput).
    Returns (session, report).
    """
    from feedaide.flow import Final, InputKind, NextQuestion, UserInput

    session, predictions = engine.start_session(ctx, app_id)
    step_input = first_input or UserInput(
        kind=InputKind.SELECTED_OPTION, value=predictions[0]
    )
    result = engine.submit_input(session, step_input)
    while isinstance(result, NextQuestion):
        choice = UserInput(kind=InputKind.SELECTED_OPTION, value=result.options[0])
        result = engine.submit_input(session, choice)
    assert isinstance(result, Final)
    return session, result.report


_EVENT_WORDS = (
    "app", "login", "button", "screen", "lesson", "profile", "settings",
    "checkout", "stream", "sync", "upload", "search",
)
_ACTIONS = ("launched", "pressed", "viewed", "failed", "completed", "opened")


def random_context(rng, with_screenshot: bool | None = None):
    """Seeded random FeedbackContext; deterministic for a given rng state."""
    from datetime import timedelta as _td
    from datetime import timezone as _tz

    from feedaide.context import (
        DeviceInfo,
        EventLog,
        Screenshot,
        record_event,
        snapshot_context,
    )

    offset_minutes = rng.choice([-480, -300, -60, 0, 60, 120, 330, 540])
    tz = _tz(_td(minutes=offset_minutes))
    start = datetime(2025, rng.randint(1, 12), rng.randint(1, 28),
                     rng.randint(0, 22), rng.randint(0, 59), rng.randint(0, 59), tzinfo=tz)
    log = EventLog(capacity=rng.randint(5, 150))
    moment = start
    for _ in range(rng.randint(0, 12)):
        name = f"{rng.choice(_EVENT_WORDS)}_{rng.choice(_ACTIONS)}"
        log = record_event(log, name, moment)
        moment = moment + _td(seconds=rng.randint(0, 90))
    device = DeviceInfo(
        model=rng.choice(["iPhone13,4", "iPhone15,2", "iPad14,1"]),
        os_version=f"iOS {rng.randint(15, 18)}.{rng.randint(0, 6)}",
        language=rng.choice(["de", "en", "fr", "de-AT", "en-US", "es-419"]),
    )
    if with_screenshot is None:
        with_screenshot = rng.random() < 0.3
    screenshot = None
    if with_screenshot:
        screenshot = Screenshot(
            data=bytes(rng.getrandbits(8) for _ in range(rng.randint(4, 64))),
            media_type=rng.choice(["image/png", "image/jpeg"]),
        )
    return snapshot_context(
        log,
        device,
        f"{rng.randint(0, 9)}.{rng.randint(0, 20)}.{rng.randint(0, 40)}",
        screenshot,
        moment + _td(seconds=rng.randint(0, 60)),
    )


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        server: StubServer = self.server  # type: ignore[assignment]
        server.requests.append(
            {
                "path": self.path,
                "headers": dict(self.headers),
                "body": body,
            }
        )
        status = server.next_status()
        payload = server.response_body
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, fmt, *args):
        pass


class StubServer(HTTPServer):
    """Local HTTP stub that replays a scripted status-code sequence and
    records every request it receives."""

    def __init__(self, statuses: list[int], response_body: bytes = b"{}"):
        super().__init__(("127.0.0.1", 0), _StubHandler)
        self.statuses = list(statuses)
        self.response_body = response_body
        self.requests: list[dict] = []
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)

    def next_status(self) -> int:
        if len(self.statuses) > 1:
            return self.statuses.pop(0)
        return self.statuses[0]

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}"

    def __enter__(self) -> "StubServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()
        self.server_close()


def openai_stub_body(step_payload: dict) -> bytes:
    """Response body shaped like a chat-completions reply carrying the step."""
    return json.dumps(
        {
            "choices": [
                {"message": {"role": "assistant", "content": json.dumps(step_payload)}}
            ]
        }
    ).encode("utf-8")
