"""Session state machine for the feedback protocol.

One flow is: predictions step, a fixed number of follow-up questions
(two by default), then finalization into the two summaries. The engine
drives a provider, validates every payload against the phase it was
requested for, retries on violations with a corrective message, and
keeps a transcript that alternates model and user entries.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import TYPE_CHECKING, Callable, Mapping, Union

from .context import FeedbackContext, trim_context
from .errors import (
    ConfigurationError,
    ConstraintViolationError,
    InvalidModelOutputError,
    OptionNotOfferedError,
    ProviderError,
    SchemaViolationError,
    SessionBusyError,
    SessionExpiredError,
    SessionFailedError,
    ValidationError,
)
from .prompt import AppDescription, ModelSettings, build_prompt_bundle
from .provider import STEP_OUTPUT_SCHEMA_ID, Message, Provider, ProviderRequest

if TYPE_CHECKING:
    from .report import FeedbackReport

logger = logging.getLogger(__name__)

MAX_PREDICTIONS = 3
MAX_ANSWER_OPTIONS = 3

DEFAULT_QUESTION_COUNT = 2
DEFAULT_MAX_RETRIES = 2
DEFAULT_SESSION_TTL_SECONDS = 15 * 60
DEFAULT_FREE_TEXT_MAX_CHARS = 2000
DEFAULT_MAX_CONTEXT_EVENTS = 100

# Banned generic options, compared case-insensitively after trimming.
DEFAULT_CATCH_ALL_BAN = ("something else", "other", "etwas anderes")


class PhaseKind:
    AWAITING_CONTEXT = "awaiting_context"
    AWAITING_PREDICTION_CHOICE = "awaiting_prediction_choice"
    AWAITING_ANSWER = "awaiting_answer"
    FINALIZED = "finalized"
    FAILED = "failed"


@dataclass(frozen=True)
class Phase:
    """Flow state. Answer phases are generated from the configured question
    count rather than hard-coded, so AWAITING_ANSWER carries its index."""

    kind: str
    answer_index: int = 0

    @classmethod
    def awaiting_answer(cls, index: int) -> "Phase":
        if index < 1:
            raise ValueError("answer index is 1-based")
        return cls(kind=PhaseKind.AWAITING_ANSWER, answer_index=index)

    @property
    def value(self) -> str:
        if self.kind == PhaseKind.AWAITING_ANSWER:
            return f"awaiting_answer_{self.answer_index}"
        return self.kind

    @property
    def terminal(self) -> bool:
        return self.kind in (PhaseKind.FINALIZED, PhaseKind.FAILED)


AWAITING_CONTEXT = Phase(PhaseKind.AWAITING_CONTEXT)
AWAITING_PREDICTION_CHOICE = Phase(PhaseKind.AWAITING_PREDICTION_CHOICE)
AWAITING_ANSWER_1 = Phase.awaiting_answer(1)
AWAITING_ANSWER_2 = Phase.awaiting_answer(2)
FINALIZED = Phase(PhaseKind.FINALIZED)
FAILED = Phase(PhaseKind.FAILED)


@dataclass(frozen=True)
class FollowUpQuestion:
    question_text: str
    answer_options: tuple[str, ...]


@dataclass(frozen=True)
class ModelStepOutput:
    """One validated model payload: predictions, a question, or the summaries."""

    feedback_predictions: tuple[str, ...] | None = None
    follow_up_question: FollowUpQuestion | None = None
    user_intent_summary: str | None = None
    developer_summary: str | None = None

    def to_payload(self) -> dict:
        question = None
        if self.follow_up_question is not None:
            question = {
                "questionText": self.follow_up_question.question_text,
                "answerOptions": list(self.follow_up_question.answer_options),
            }
        return {
            "feedbackPredictions": (
                list(self.feedback_predictions)
                if self.feedback_predictions is not None
                else None
            ),
            "followUpQuestion": question,
            "userIntentSummary": self.user_intent_summary,
            "developerSummary": self.developer_summary,
        }


class InputKind:
    SELECTED_OPTION = "selectedOption"
    FREE_TEXT = "freeText"


@dataclass(frozen=True)
class UserInput:
    kind: str
    value: str


@dataclass
class TranscriptEntry:
    role: str  # "model" | "user"
    content: Union[ModelStepOutput, str]


@dataclass
class FlowSession:
    session_id: str
    app_id: str
    context: FeedbackContext
    created_at: datetime
    expires_at: datetime
    phase: Phase = AWAITING_CONTEXT
    transcript: list[TranscriptEntry] = field(default_factory=list)
    retry_count: int = 0  # retries used within the current step
    provider_calls: int = 0
    anonymous: bool = False
    failure_reason: str | None = None

    def questions_asked(self) -> int:
        return sum(
            1
            for entry in self.transcript
            if entry.role == "model"
            and isinstance(entry.content, ModelStepOutput)
            and entry.content.follow_up_question is not None
        )

    def current_options(self) -> tuple[str, ...]:
        """Options the user may select right now (predictions or last question's)."""
        for entry in reversed(self.transcript):
            if entry.role == "model" and isinstance(entry.content, ModelStepOutput):
                output = entry.content
                if output.follow_up_question is not None:
                    return output.follow_up_question.answer_options
                if output.feedback_predictions is not None:
                    return output.feedback_predictions
                return ()
        return ()


@dataclass(frozen=True)
class NextQuestion:
    question_text: str
    options: tuple[str, ...]


@dataclass(frozen=True)
class Final:
    report: "FeedbackReport"


StepResult = Union[NextQuestion, Final]


def _is_banned(text: str, ban_list: tuple[str, ...]) -> bool:
    normalized = text.strip().casefold()
    return any(normalized == banned.strip().casefold() for banned in ban_list)


def _parse_strings(raw, field_name: str, max_items: int) -> tuple[str, ...]:
    if not isinstance(raw, list):
        raise SchemaViolationError(f"{field_name} must be an array")
    if len(raw) > max_items:
        raise SchemaViolationError(
            f"{field_name} has {len(raw)} items, at most {max_items} allowed"
        )
    values = []
    for item in raw:
        if not isinstance(item, str) or not item.strip():
            raise SchemaViolationError(f"{field_name} items must be non-empty strings")
        values.append(item)
    return tuple(values)


def validate_step_output(
    raw: dict,
    expected_phase: Phase,
    question_count: int = DEFAULT_QUESTION_COUNT,
    ban_list: tuple[str, ...] = DEFAULT_CATCH_ALL_BAN,
) -> ModelStepOutput:
    """Parse a raw payload and enforce the population rules for the phase the
    request was issued from.

    Raises SchemaViolationError for shape/phase problems and
    ConstraintViolationError for banned catch-all options.
    """
    if not isinstance(raw, dict):
        raise SchemaViolationError("step output must be a JSON object")

    predictions_raw = raw.get("feedbackPredictions")
    question_raw = raw.get("followUpQuestion")
    intent_raw = raw.get("userIntentSummary")
    developer_raw = raw.get("developerSummary")

    predictions: tuple[str, ...] | None = None
    if predictions_raw is not None:
        predictions = _parse_strings(predictions_raw, "feedbackPredictions", MAX_PREDICTIONS)
        if not predictions:
            raise SchemaViolationError("feedbackPredictions must contain at least one item")

    question: FollowUpQuestion | None = None
    if question_raw is not None:
        if not isinstance(question_raw, dict):
            raise SchemaViolationError("followUpQuestion must be an object")
        text = question_raw.get("questionText")
        if not isinstance(text, str) or not text.strip():
            raise SchemaViolationError("followUpQuestion.questionText must be a non-empty string")
        options = _parse_strings(
            question_raw.get("answerOptions", []), "answerOptions", MAX_ANSWER_OPTIONS
        )
        question = FollowUpQuestion(question_text=text, answer_options=options)

    for summary_name, summary_raw in (
        ("userIntentSummary", intent_raw),
        ("developerSummary", developer_raw),
    ):
        if summary_raw is not None and not isinstance(summary_raw, str):
            raise SchemaViolationError(f"{summary_name} must be a string")

    has_summaries = bool(intent_raw) or bool(developer_raw)
    if has_summaries and (not intent_raw or not str(intent_raw).strip()):
        raise SchemaViolationError("userIntentSummary must be non-empty at finalization")
    if has_summaries and (not developer_raw or not str(developer_raw).strip()):
        raise SchemaViolationError("developerSummary must be non-empty at finalization")

    populated = [
        name
        for name, present in (
            ("predictions", predictions is not None),
            ("followUpQuestion", question is not None),
            ("summaries", has_summaries),
        )
        if present
    ]
    if len(populated) != 1:
        raise SchemaViolationError(
            f"exactly one of predictions / followUpQuestion / summaries must be "
            f"populated, got: {populated or 'none'}"
        )

    if expected_phase.kind == PhaseKind.AWAITING_CONTEXT:
        expected_group = "predictions"
    elif expected_phase.kind == PhaseKind.AWAITING_PREDICTION_CHOICE:
        expected_group = "followUpQuestion" if question_count >= 1 else "summaries"
    elif expected_phase.kind == PhaseKind.AWAITING_ANSWER:
        expected_group = (
            "followUpQuestion" if expected_phase.answer_index < question_count else "summaries"
        )
    else:
        raise SchemaViolationError(f"no model output expected in phase {expected_phase.value}")
    if populated[0] != expected_group:
        raise SchemaViolationError(
            f"phase {expected_phase.value} requires {expected_group}, got {populated[0]}"
        )

    for candidate in (predictions or ()) + (question.answer_options if question else ()):
        if _is_banned(candidate, ban_list):
            raise ConstraintViolationError(
                f"generic catch-all option is banned: {candidate!r}"
            )

    return ModelStepOutput(
        feedback_predictions=predictions,
        follow_up_question=question,
        user_intent_summary=intent_raw if has_summaries else None,
        developer_summary=developer_raw if has_summaries else None,
    )


@dataclass(frozen=True)
class FlowConfig:
    question_count: int = DEFAULT_QUESTION_COUNT
    max_retries: int = DEFAULT_MAX_RETRIES
    ban_list: tuple[str, ...] = DEFAULT_CATCH_ALL_BAN
    session_ttl_seconds: int = DEFAULT_SESSION_TTL_SECONDS
    free_text_max_chars: int = DEFAULT_FREE_TEXT_MAX_CHARS
    # Server-side guard against oversized client contexts (prompt bloat).
    max_context_events: int = DEFAULT_MAX_CONTEXT_EVENTS


def _default_clock() -> datetime:
    return datetime.now(timezone.utc)


def _default_id_source() -> str:
    return uuid.uuid4().hex


CORRECTION_TEMPLATE = (
    "Your previous response was rejected: {reason}. "
    "Answer again for the same step, strictly following the protocol and schema."
)


class FlowEngine:
    """Drives feedback sessions against a provider.

    Sessions progress concurrently; each single session is serialized via a
    per-session lock, and a concurrent submit is rejected as busy.
    """

    def __init__(
        self,
        apps: Mapping[str, AppDescription],
        provider: Provider | None = None,
        provider_factory: Callable[[], Provider] | None = None,
        config: FlowConfig = FlowConfig(),
        settings: ModelSettings = ModelSettings(),
        clock: Callable[[], datetime] = _default_clock,
        id_source: Callable[[], str] = _default_id_source,
    ):
        if (provider is None) == (provider_factory is None):
            raise ConfigurationError("pass exactly one of provider / provider_factory")
        self.apps = dict(apps)
        self._provider_factory = provider_factory or (lambda: provider)
        self.config = config
        self.settings = settings
        self.clock = clock
        self.id_source = id_source
        self._sessions: dict[str, FlowSession] = {}
        self._providers: dict[str, Provider] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    # -- session registry -------------------------------------------------

    def get_session(self, session_id: str) -> FlowSession | None:
        return self._sessions.get(session_id)

    def sessions(self) -> list[FlowSession]:
        return list(self._sessions.values())

    # -- protocol steps ----------------------------------------------------

    def start_session(
        self,
        ctx: FeedbackContext,
        app_id: str,
        anonymous: bool = False,
    ) -> tuple[FlowSession, list[str]]:
        app = self.apps.get(app_id)
        if app is None:
            raise ConfigurationError(f"no app registered under id {app_id!r}")
        ctx.validate()
        ctx = trim_context(ctx, self.config.max_context_events)

        now = self.clock()
        session = FlowSession(
            session_id=self.id_source(),
            app_id=app_id,
            context=ctx,
            created_at=now,
            expires_at=now + timedelta(seconds=self.config.session_ttl_seconds),
            anonymous=anonymous,
        )
        with self._registry_lock:
            self._sessions[session.session_id] = session
            self._providers[session.session_id] = self._provider_factory()
            self._locks[session.session_id] = threading.Lock()

        output = self._call_validated(session, expected_phase=session.phase)
        session.transcript.append(TranscriptEntry(role="model", content=output))
        session.phase = AWAITING_PREDICTION_CHOICE
        predictions = list(output.feedback_predictions or ())
        logger.info(
            "session %s started for app %s with %d predictions",
            session.session_id,
            app_id,
            len(predictions),
        )
        return session, predictions

    def submit_input(self, session: FlowSession, user_input: UserInput) -> StepResult:
        lock = self._locks.get(session.session_id)
        if lock is None:
            raise ConfigurationError(f"session {session.session_id} is not managed by this engine")
        if not lock.acquire(blocking=False):
            raise SessionBusyError(f"session {session.session_id} is processing another input")
        try:
            return self._submit_locked(session, user_input)
        finally:
            lock.release()

    def _submit_locked(self, session: FlowSession, user_input: UserInput) -> StepResult:
        now = self.clock()
        if session.expires_at < now and not session.phase.terminal:
            session.phase = FAILED
            session.failure_reason = "expired"
            raise SessionExpiredError(f"session {session.session_id} expired")
        if session.phase.kind not in (
            PhaseKind.AWAITING_PREDICTION_CHOICE,
            PhaseKind.AWAITING_ANSWER,
        ):
            raise ValidationError(
                f"session {session.session_id} does not accept input in phase "
                f"{session.phase.value}"
            )

        value = self._validate_input(session, user_input)
        session.transcript.append(TranscriptEntry(role="user", content=value))

        expected_phase = session.phase
        output = self._call_validated(session, expected_phase=expected_phase)
        session.transcript.append(TranscriptEntry(role="model", content=output))
        session.expires_at = now + timedelta(seconds=self.config.session_ttl_seconds)

        if output.follow_up_question is not None:
            if expected_phase.kind == PhaseKind.AWAITING_PREDICTION_CHOICE:
                session.phase = Phase.awaiting_answer(1)
            else:
                session.phase = Phase.awaiting_answer(expected_phase.answer_index + 1)
            return NextQuestion(
                question_text=output.follow_up_question.question_text,
                options=output.follow_up_question.answer_options,
            )

        session.phase = FINALIZED
        from .report import assemble_report

        report = assemble_report(
            session,
            output,
            clock=self.clock,
            id_source=self.id_source,
        )
        logger.info("session %s finalized into report %s", session.session_id, report.report_id)
        return Final(report=report)

    def _validate_input(self, session: FlowSession, user_input: UserInput) -> str:
        if user_input.kind not in (InputKind.SELECTED_OPTION, InputKind.FREE_TEXT):
            raise ValidationError(f"unknown input kind: {user_input.kind!r}")
        offered = session.current_options()
        if user_input.kind == InputKind.SELECTED_OPTION:
            if user_input.value not in offered:
                raise OptionNotOfferedError(
                    f"option {user_input.value!r} was not offered; "
                    f"current options: {list(offered)}"
                )
            return user_input.value
        trimmed = user_input.value.strip()
        if not trimmed:
            raise ValidationError("free text must be non-empty after trimming")
        if len(trimmed) > self.config.free_text_max_chars:
            raise ValidationError(
                f"free text exceeds {self.config.free_text_max_chars} characters"
            )
        return trimmed

    def _call_validated(self, session: FlowSession, expected_phase: Phase) -> ModelStepOutput:
        provider = self._providers[session.session_id]
        base_messages = self._build_messages(session)
        corrective: list[Message] = []
        session.retry_count = 0
        last_error: Exception | None = None

        for attempt in range(self.config.max_retries + 1):
            session.retry_count = attempt
            request = ProviderRequest(
                messages=tuple(base_messages + corrective),
                settings=self.settings,
                schema_id=self.settings.output_schema_id or STEP_OUTPUT_SCHEMA_ID,
            )
            try:
                raw = provider.complete_step(request)
                session.provider_calls += 1
            except ProviderError as exc:
                last_error = exc
                if not exc.retryable:
                    break
                logger.warning(
                    "session %s provider failure (attempt %d): %s",
                    session.session_id,
                    attempt + 1,
                    exc,
                )
                continue
            except InvalidModelOutputError as exc:
                # Providers may surface undecodable content this way.
                session.provider_calls += 1
                last_error = exc
                corrective.append(
                    Message(role="user", text=CORRECTION_TEMPLATE.format(reason=exc))
                )
                continue
            try:
                return validate_step_output(
                    raw,
                    expected_phase,
                    question_count=self.config.question_count,
                    ban_list=self.config.ban_list,
                )
            except InvalidModelOutputError as exc:
                last_error = exc
                logger.warning(
                    "session %s rejected model output (attempt %d): %s",
                    session.session_id,
                    attempt + 1,
                    exc,
                )
                corrective.append(
                    Message(role="assistant", text=json.dumps(raw, ensure_ascii=False))
                )
                corrective.append(
                    Message(role="user", text=CORRECTION_TEMPLATE.format(reason=exc))
                )

        session.phase = FAILED
        session.failure_reason = str(last_error)
        raise SessionFailedError(
            f"session {session.session_id} failed after "
            f"{self.config.max_retries} retries: {last_error}"
        ) from last_error

    def _build_messages(self, session: FlowSession) -> list[Message]:
        app = self.apps[session.app_id]
        bundle = build_prompt_bundle(app, session.context)
        messages = [
            Message(role="system", text=bundle.system_text),
            Message(
                role="user",
                text=bundle.context_message,
                attachment=bundle.screenshot_attachment,
            ),
        ]
        for entry in session.transcript:
            if entry.role == "model":
                assert isinstance(entry.content, ModelStepOutput)
                messages.append(
                    Message(
                        role="assistant",
                        text=json.dumps(entry.content.to_payload(), ensure_ascii=False),
                    )
                )
            else:
                messages.append(Message(role="user", text=str(entry.content)))
        return messages

    # -- housekeeping ------------------------------------------------------

    def expire_sessions(self, now: datetime | None = None) -> int:
        """Fail every live session whose inactivity deadline has passed."""
        now = now or self.clock()
        expired = 0
        for session in self._sessions.values():
            if session.phase.terminal:
                continue
            if session.expires_at < now:
                session.phase = FAILED
                session.failure_reason = "expired"
                expired += 1
        return expired
