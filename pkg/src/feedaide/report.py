"""Feedback report assembly, serialization, persistence, and delivery.

A report is a pure function of a finalized session's transcript: the offered
predictions, the user's choice, every question/answer pair, and the two
closing summaries, together with the context snapshot and a hash of the
prompt text that produced it.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import httpx

from .context import (
    FeedbackContext,
    context_from_json,
    context_to_json,
    format_timestamp,
    parse_timestamp,
)
from .errors import NotFoundError, ValidationError
from .flow import (
    DEFAULT_QUESTION_COUNT,
    FlowSession,
    ModelStepOutput,
    PhaseKind,
    TranscriptEntry,
)
from .prompt import static_prompt_hash

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = "1"

ORIGIN_PREDICTED = "predicted"
ORIGIN_USER_WRITTEN = "userWritten"
ANSWER_ORIGIN_SELECTED = "selectedOption"
ANSWER_ORIGIN_FREE_TEXT = "freeText"

ANONYMIZED_MODEL = "[ANONYMIZED]"


@dataclass(frozen=True)
class ChosenFeedback:
    text: str
    origin: str  # predicted | userWritten


@dataclass(frozen=True)
class QuestionAndAnswer:
    question: str
    options: tuple[str, ...]
    answer: str
    origin: str  # selectedOption | freeText


@dataclass(frozen=True)
class FeedbackReport:
    report_id: str
    app_id: str
    created_at: datetime
    context: FeedbackContext
    predictions_offered: tuple[str, ...]
    chosen_feedback: ChosenFeedback
    questions_and_answers: tuple[QuestionAndAnswer, ...]
    user_intent_summary: str
    developer_summary: str
    prompt_version_hash: str

    def validate(self, question_count: int = DEFAULT_QUESTION_COUNT) -> None:
        if not self.user_intent_summary or not self.developer_summary:
            raise ValidationError("both summaries must be non-empty")
        if len(self.questions_and_answers) != question_count:
            raise ValidationError(
                f"report must contain exactly {question_count} question/answer "
                f"pairs, got {len(self.questions_and_answers)}"
            )
        if not self.chosen_feedback.text:
            raise ValidationError("chosenFeedback text must be non-empty")


def _model_outputs(transcript: list[TranscriptEntry]) -> list[ModelStepOutput]:
    return [
        entry.content
        for entry in transcript
        if entry.role == "model" and isinstance(entry.content, ModelStepOutput)
    ]


def assemble_report(
    session: FlowSession,
    final: ModelStepOutput,
    clock: Callable[[], datetime] | None = None,
    id_source: Callable[[], str] | None = None,
) -> FeedbackReport:
    """Build the report from a finalized session's transcript."""
    if session.phase.kind != PhaseKind.FINALIZED:
        raise ValidationError("report assembly requires a finalized session")
    if not final.user_intent_summary or not final.developer_summary:
        raise ValidationError("final step must carry both summaries")

    transcript = session.transcript
    if len(transcript) < 3 or transcript[0].role != "model":
        raise ValidationError("transcript is incomplete: missing prediction step")
    first = transcript[0].content
    if not isinstance(first, ModelStepOutput) or first.feedback_predictions is None:
        raise ValidationError("transcript is incomplete: first entry is not predictions")
    predictions = first.feedback_predictions

    if transcript[1].role != "user":
        raise ValidationError("transcript is incomplete: missing user choice")
    chosen_text = str(transcript[1].content)
    chosen = ChosenFeedback(
        text=chosen_text,
        origin=ORIGIN_PREDICTED if chosen_text in predictions else ORIGIN_USER_WRITTEN,
    )

    pairs = []
    index = 2
    while index + 1 < len(transcript):
        model_entry = transcript[index]
        user_entry = transcript[index + 1]
        if model_entry.role != "model" or user_entry.role != "user":
            raise ValidationError("transcript does not alternate model/user entries")
        output = model_entry.content
        if not isinstance(output, ModelStepOutput):
            raise ValidationError("model transcript entry has no structured content")
        if output.follow_up_question is None:
            break
        answer = str(user_entry.content)
        pairs.append(
            QuestionAndAnswer(
                question=output.follow_up_question.question_text,
                options=output.follow_up_question.answer_options,
                answer=answer,
                origin=(
                    ANSWER_ORIGIN_SELECTED
                    if answer in output.follow_up_question.answer_options
                    else ANSWER_ORIGIN_FREE_TEXT
                ),
            )
        )
        index += 2

    ctx = session.context
    if session.anonymous:
        ctx = replace(ctx, device_info=replace(ctx.device_info, model=ANONYMIZED_MODEL))

    now = clock() if clock else datetime.now(timezone.utc)
    report_id = id_source() if id_source else uuid.uuid4().hex
    return FeedbackReport(
        report_id=report_id,
        app_id=session.app_id,
        created_at=now,
        context=ctx,
        predictions_offered=predictions,
        chosen_feedback=chosen,
        questions_and_answers=tuple(pairs),
        user_intent_summary=final.user_intent_summary,
        developer_summary=final.developer_summary,
        prompt_version_hash=static_prompt_hash(),
    )


def report_to_json(report: FeedbackReport) -> dict:
    """Stable field ordering; the context keeps its wire shape."""
    return {
        "schemaVersion": REPORT_SCHEMA_VERSION,
        "reportId": report.report_id,
        "appId": report.app_id,
        "createdAt": format_timestamp(report.created_at),
        "context": context_to_json(report.context),
        "predictionsOffered": list(report.predictions_offered),
        "chosenFeedback": {
            "text": report.chosen_feedback.text,
            "origin": report.chosen_feedback.origin,
        },
        "questionsAndAnswers": [
            {
                "question": pair.question,
                "options": list(pair.options),
                "answer": pair.answer,
                "origin": pair.origin,
            }
            for pair in report.questions_and_answers
        ],
        "userIntentSummary": report.user_intent_summary,
        "developerSummary": report.developer_summary,
        "promptVersionHash": report.prompt_version_hash,
    }


def serialize_report(report: FeedbackReport) -> bytes:
    return json.dumps(report_to_json(report), indent=2, ensure_ascii=False).encode("utf-8")


def report_from_json(payload: dict) -> FeedbackReport:
    try:
        return FeedbackReport(
            report_id=payload["reportId"],
            app_id=payload["appId"],
            created_at=parse_timestamp(payload["createdAt"]),
            context=context_from_json(payload["context"]),
            predictions_offered=tuple(payload["predictionsOffered"]),
            chosen_feedback=ChosenFeedback(
                text=payload["chosenFeedback"]["text"],
                origin=payload["chosenFeedback"]["origin"],
            ),
            questions_and_answers=tuple(
                QuestionAndAnswer(
                    question=pair["question"],
                    options=tuple(pair["options"]),
                    answer=pair["answer"],
                    origin=pair["origin"],
                )
                for pair in payload["questionsAndAnswers"]
            ),
            user_intent_summary=payload["userIntentSummary"],
            developer_summary=payload["developerSummary"],
            prompt_version_hash=payload["promptVersionHash"],
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"report document is malformed: {exc}") from exc


def parse_report(data: bytes | str) -> FeedbackReport:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        payload = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"report is not valid JSON: {exc}") from exc
    return report_from_json(payload)


@dataclass(frozen=True)
class ReportPage:
    items: tuple[FeedbackReport, ...]
    page: int
    page_size: int
    total_items: int

    @property
    def total_pages(self) -> int:
        if self.total_items == 0:
            return 0
        return (self.total_items + self.page_size - 1) // self.page_size


class ReportStore:
    """File-per-report persistence with an index; writes are atomic via
    write-then-rename so a listed report is always fully readable."""

    def __init__(self, data_dir: str | Path, question_count: int = DEFAULT_QUESTION_COUNT):
        self.data_dir = Path(data_dir)
        self.reports_dir = self.data_dir / "reports"
        self.index_path = self.data_dir / "index.json"
        self.question_count = question_count
        self.reports_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _read_index(self) -> dict:
        if not self.index_path.exists():
            return {}
        return json.loads(self.index_path.read_text(encoding="utf-8"))

    def _write_atomic(self, path: Path, data: bytes) -> None:
        tmp = path.with_suffix(path.suffix + f".tmp-{uuid.uuid4().hex}")
        tmp.write_bytes(data)
        tmp.replace(path)

    def store_report(self, report: FeedbackReport) -> None:
        report.validate(question_count=self.question_count)
        data = serialize_report(report)
        with self._lock:
            self._write_atomic(self.reports_dir / f"{report.report_id}.json", data)
            index = self._read_index()
            index[report.report_id] = {
                "appId": report.app_id,
                "createdAt": format_timestamp(report.created_at),
            }
            self._write_atomic(
                self.index_path,
                json.dumps(index, indent=2, ensure_ascii=False).encode("utf-8"),
            )

    def get_report(self, report_id: str) -> FeedbackReport:
        path = self.reports_dir / f"{report_id}.json"
        if not path.exists():
            raise NotFoundError(f"no report with id {report_id!r}")
        return parse_report(path.read_bytes())

    def list_reports(
        self,
        app_id: str | None = None,
        page: int = 1,
        page_size: int = 20,
    ) -> ReportPage:
        if page < 1 or page_size < 1:
            raise ValidationError("page and page_size must be >= 1")
        with self._lock:
            index = self._read_index()
        entries = [
            (report_id, meta)
            for report_id, meta in index.items()
            if app_id is None or meta["appId"] == app_id
        ]
        entries.sort(key=lambda item: parse_timestamp(item[1]["createdAt"]), reverse=True)
        total = len(entries)
        start = (page - 1) * page_size
        selected = entries[start:start + page_size]
        items = tuple(self.get_report(report_id) for report_id, _ in selected)
        return ReportPage(items=items, page=page, page_size=page_size, total_items=total)


@dataclass(frozen=True)
class WebhookSink:
    """Destination for finished reports. Delivery is at-least-once with a
    bounded number of attempts and exponential backoff between them."""

    url: str
    timeout: float = 10.0
    max_attempts: int = 4
    backoff_base_seconds: float = 0.5
    backoff_factor: float = 2.0


@dataclass(frozen=True)
class DeliveryReceipt:
    report_id: str
    status: str  # success | dead_lettered | skipped
    attempts: int
    completed_at: datetime
    detail: str = ""


def deliver_report(
    report: FeedbackReport,
    sink: WebhookSink | None,
    sleeper: Callable[[float], None] = time.sleep,
    clock: Callable[[], datetime] | None = None,
    dead_letter_dir: str | Path | None = None,
) -> DeliveryReceipt:
    """POST the serialized report to the sink, retrying on failure.

    Duplicates carry the same reportId, so downstream consumers can dedup.
    """
    now = clock if clock else lambda: datetime.now(timezone.utc)
    if sink is None:
        return DeliveryReceipt(
            report_id=report.report_id,
            status="skipped",
            attempts=0,
            completed_at=now(),
            detail="no sink configured",
        )

    body = serialize_report(report)
    detail = ""
    for attempt in range(1, sink.max_attempts + 1):
        try:
            response = httpx.post(
                sink.url,
                content=body,
                headers={"Content-Type": "application/json"},
                timeout=sink.timeout,
            )
            if 200 <= response.status_code < 300:
                return DeliveryReceipt(
                    report_id=report.report_id,
                    status="success",
                    attempts=attempt,
                    completed_at=now(),
                    detail=f"status {response.status_code}",
                )
            detail = f"status {response.status_code}"
        except httpx.HTTPError as exc:
            detail = f"transport error: {exc}"
        logger.warning(
            "delivery attempt %d/%d for report %s failed: %s",
            attempt,
            sink.max_attempts,
            report.report_id,
            detail,
        )
        if attempt < sink.max_attempts:
            sleeper(sink.backoff_base_seconds * sink.backoff_factor ** (attempt - 1))

    if dead_letter_dir is not None:
        dead_dir = Path(dead_letter_dir)
        dead_dir.mkdir(parents=True, exist_ok=True)
        (dead_dir / f"{report.report_id}.json").write_bytes(body)
    return DeliveryReceipt(
        report_id=report.report_id,
        status="dead_lettered",
        attempts=sink.max_attempts,
        completed_at=now(),
        detail=detail,
    )
