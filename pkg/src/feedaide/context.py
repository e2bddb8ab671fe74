"""Contextual data captured when a user starts a feedback flow.

The host app records named interaction events into a capacity-bounded log;
when the user triggers feedback, the log is snapshotted together with device
and app metadata (and an optional screenshot) into an immutable
FeedbackContext. The context serializes to a fixed JSON wire shape with
parallel ``events`` / ``eventTimestamps`` arrays.

Timestamps keep the UTC offset they arrived with; they are never normalized,
because offset differences across events are themselves a signal (e.g. the
user travelled between time zones).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from datetime import datetime

from .errors import ConfigurationError, ValidationError

DEFAULT_EVENT_CAPACITY = 100

# lowercase primary subtag, optional region (letters or UN M49 digits)
_LANGUAGE_RE = re.compile(r"^[a-z]{2,3}(-(?:[A-Za-z]{2}|[0-9]{3}))?$")

REDACTION_MASK = "[REDACTED]"


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 datetime string, requiring an explicit UTC offset."""
    if not isinstance(value, str) or not value:
        raise ValidationError(f"timestamp must be a non-empty string, got {value!r}")
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ValidationError(f"invalid ISO-8601 timestamp: {value!r}") from exc
    if parsed.tzinfo is None:
        raise ValidationError(f"timestamp lacks a UTC offset: {value!r}")
    return parsed


def format_timestamp(value: datetime) -> str:
    """Render a timezone-aware datetime in ISO-8601 form, offset intact."""
    if value.tzinfo is None:
        raise ValidationError("refusing to serialize a naive datetime")
    return value.isoformat()


@dataclass(frozen=True)
class DeviceInfo:
    """Device metadata sent along with each feedback flow."""

    model: str
    os_version: str
    language: str

    def validate(self) -> None:
        if not self.model:
            raise ValidationError("deviceInfo.model must be non-empty")
        if not self.os_version:
            raise ValidationError("deviceInfo.osVersion must be non-empty")
        if not self.language:
            raise ValidationError("deviceInfo.language must be non-empty")
        if not _LANGUAGE_RE.match(self.language):
            raise ValidationError(
                f"deviceInfo.language is not a language code: {self.language!r}"
            )


@dataclass(frozen=True)
class InteractionEvent:
    """One named in-app event with the moment it happened."""

    name: str
    timestamp: datetime

    def validate(self) -> None:
        if not self.name:
            raise ValidationError("event name must be non-empty")
        if self.timestamp.tzinfo is None:
            raise ValidationError("event timestamp must carry a UTC offset")


@dataclass(frozen=True)
class Screenshot:
    """Opaque uploaded image payload; the server never captures screens."""

    data: bytes
    media_type: str  # "image/png" or "image/jpeg"

    def validate(self) -> None:
        if self.media_type not in ("image/png", "image/jpeg"):
            raise ValidationError(f"unsupported media type: {self.media_type!r}")
        if not self.data:
            raise ValidationError("screenshot payload is empty")


@dataclass(frozen=True)
class FeedbackContext:
    """Snapshot of the user's situation at flow initiation."""

    events: tuple[InteractionEvent, ...]
    feedback_initiation_timestamp: datetime
    app_version: str
    device_info: DeviceInfo
    screenshot: Screenshot | None = None

    def validate(self) -> None:
        """Check field contracts. Deliberately does not require the initiation
        timestamp to follow the last event: wire payloads modeled on the
        canonical example break that rule, so only freshly built snapshots
        enforce it (see snapshot_context)."""
        if not self.app_version:
            raise ValidationError("appVersion must be non-empty")
        self.device_info.validate()
        if self.feedback_initiation_timestamp.tzinfo is None:
            raise ValidationError("feedbackInitiationTimestamp must carry a UTC offset")
        previous: datetime | None = None
        for event in self.events:
            event.validate()
            if previous is not None and event.timestamp < previous:
                raise ValidationError("events must be ordered by non-decreasing timestamp")
            previous = event.timestamp
        if self.screenshot is not None:
            self.screenshot.validate()


@dataclass(frozen=True)
class RedactionRule:
    """Regex-based masking rule applied to context strings."""

    pattern: str
    replacement: str = REDACTION_MASK

    def compiled(self) -> re.Pattern[str]:
        try:
            compiled = re.compile(self.pattern)
        except re.error as exc:
            raise ConfigurationError(f"malformed redaction pattern {self.pattern!r}: {exc}")
        # The mask must not itself match, otherwise repeated application
        # would keep rewriting already-masked text.
        if compiled.search(self.replacement):
            raise ConfigurationError(
                f"replacement {self.replacement!r} matches its own pattern {self.pattern!r}"
            )
        return compiled


# Underscore is excluded from the email local part: event names are
# snake_case, so underscores delimit tokens rather than belonging to them.
DEFAULT_REDACTION_RULES = (
    RedactionRule(pattern=r"[A-Za-z0-9.%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}"),
    RedactionRule(pattern=r"\d{7,}"),
)


@dataclass(frozen=True)
class EventLog:
    """Capacity-bounded interaction log; oldest events are evicted first."""

    events: tuple[InteractionEvent, ...] = ()
    capacity: int = DEFAULT_EVENT_CAPACITY


def record_event(log: EventLog, name: str, timestamp: datetime) -> EventLog:
    """Append one event, evicting the oldest if the log is at capacity."""
    event = InteractionEvent(name=name, timestamp=timestamp)
    event.validate()
    events = log.events + (event,)
    if len(events) > log.capacity:
        events = events[len(events) - log.capacity:]
    return EventLog(events=events, capacity=log.capacity)


def snapshot_context(
    log: EventLog,
    device: DeviceInfo,
    app_version: str,
    screenshot: Screenshot | None,
    now: datetime,
) -> FeedbackContext:
    """Freeze the current log plus metadata into a FeedbackContext."""
    device.validate()
    if not app_version:
        raise ValidationError("appVersion must be non-empty")
    ctx = FeedbackContext(
        events=tuple(log.events),
        feedback_initiation_timestamp=now,
        app_version=app_version,
        device_info=device,
        screenshot=screenshot,
    )
    ctx.validate()
    if ctx.events and now < ctx.events[-1].timestamp:
        raise ValidationError("snapshot time precedes the last recorded event")
    return ctx


def trim_context(ctx: FeedbackContext, max_events: int) -> FeedbackContext:
    """Keep only the most recent ``max_events`` events; everything else unchanged."""
    if max_events < 0:
        raise ValidationError("max_events must be >= 0")
    if max_events == 0:
        return replace(ctx, events=())
    return replace(ctx, events=ctx.events[-max_events:])


def redact_context(
    ctx: FeedbackContext,
    rules: tuple[RedactionRule, ...] = DEFAULT_REDACTION_RULES,
) -> FeedbackContext:
    """Mask every rule match in event names and context string fields."""
    compiled = [(rule.compiled(), rule.replacement) for rule in rules]

    def scrub(text: str) -> str:
        for pattern, replacement in compiled:
            text = pattern.sub(replacement, text)
        return text

    events = tuple(
        InteractionEvent(name=scrub(event.name), timestamp=event.timestamp)
        for event in ctx.events
    )
    device = DeviceInfo(
        model=scrub(ctx.device_info.model),
        os_version=scrub(ctx.device_info.os_version),
        language=scrub(ctx.device_info.language),
    )
    return replace(
        ctx,
        events=events,
        app_version=scrub(ctx.app_version),
        device_info=device,
    )


def context_to_json(ctx: FeedbackContext) -> dict:
    """Serialize to the wire shape: exactly the five top-level context keys.

    The screenshot travels as a separate attachment, never inside this JSON.
    """
    return {
        "events": [event.name for event in ctx.events],
        "eventTimestamps": [format_timestamp(event.timestamp) for event in ctx.events],
        "feedbackInitiationTimestamp": format_timestamp(ctx.feedback_initiation_timestamp),
        "appVersion": ctx.app_version,
        "deviceInfo": {
            "model": ctx.device_info.model,
            "osVersion": ctx.device_info.os_version,
            "language": ctx.device_info.language,
        },
    }


def context_from_json(
    payload: dict,
    screenshot: Screenshot | None = None,
) -> FeedbackContext:
    """Parse the wire shape back into a FeedbackContext.

    Field presence and event ordering are enforced; the language format is
    deliberately not, so downstream language resolution can fall back instead
    of rejecting the whole context.
    """
    if not isinstance(payload, dict):
        raise ValidationError("context must be a JSON object")
    missing = [
        key
        for key in (
            "events",
            "eventTimestamps",
            "feedbackInitiationTimestamp",
            "appVersion",
            "deviceInfo",
        )
        if key not in payload
    ]
    if missing:
        raise ValidationError(f"context is missing keys: {', '.join(missing)}")
    names = payload["events"]
    stamps = payload["eventTimestamps"]
    if not isinstance(names, list) or not isinstance(stamps, list):
        raise ValidationError("events and eventTimestamps must be arrays")
    if len(names) != len(stamps):
        raise ValidationError(
            f"events ({len(names)}) and eventTimestamps ({len(stamps)}) differ in length"
        )
    device_raw = payload["deviceInfo"]
    if not isinstance(device_raw, dict):
        raise ValidationError("deviceInfo must be an object")
    for key in ("model", "osVersion", "language"):
        if not device_raw.get(key):
            raise ValidationError(f"deviceInfo.{key} must be a non-empty string")
    if not payload["appVersion"]:
        raise ValidationError("appVersion must be non-empty")

    events = []
    for name, stamp in zip(names, stamps):
        if not name or not isinstance(name, str):
            raise ValidationError(f"event name must be a non-empty string, got {name!r}")
        events.append(InteractionEvent(name=name, timestamp=parse_timestamp(stamp)))
    ctx = FeedbackContext(
        events=tuple(events),
        feedback_initiation_timestamp=parse_timestamp(payload["feedbackInitiationTimestamp"]),
        app_version=payload["appVersion"],
        device_info=DeviceInfo(
            model=device_raw["model"],
            os_version=device_raw["osVersion"],
            language=device_raw["language"],
        ),
        screenshot=screenshot,
    )
    previous: datetime | None = None
    for event in ctx.events:
        if previous is not None and event.timestamp < previous:
            raise ValidationError("events must be ordered by non-decreasing timestamp")
        previous = event.timestamp
    return ctx
