"""HTTP surface: session lifecycle for clients, report access for developers.

The API is a thin adapter over the flow engine and report store; every
endpoint's response is the serialized result of the corresponding module
operation. Errors are returned as a fixed {code, message, retryable} shape
and never leak stack traces.
"""

from __future__ import annotations

import base64
import binascii
import logging
from datetime import datetime
from typing import Callable

from fastapi import FastAPI, Header, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import ServerConfig
from .context import Screenshot, context_from_json
from .errors import (
    ConfigurationError,
    FeedAideError,
    NotFoundError,
    OptionNotOfferedError,
    ProviderError,
    SessionBusyError,
    SessionExpiredError,
    SessionFailedError,
    ValidationError,
)
from .flow import Final, FlowEngine, InputKind, NextQuestion, UserInput
from .provider import Provider
from .report import ReportStore, deliver_report, report_to_json

logger = logging.getLogger(__name__)


class ScreenshotBody(BaseModel):
    base64: str
    mediaType: str


class CreateSessionBody(BaseModel):
    appId: str
    context: dict
    screenshot: ScreenshotBody | None = None
    anonymous: bool = False


class InputBody(BaseModel):
    kind: str
    value: str


def _error_response(status: int, code: str, message: str, retryable: bool = False) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "retryable": retryable},
    )


def _decode_screenshot(body: ScreenshotBody | None) -> Screenshot | None:
    if body is None:
        return None
    try:
        data = base64.b64decode(body.base64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ValidationError(f"screenshot is not valid base64: {exc}") from exc
    screenshot = Screenshot(data=data, media_type=body.mediaType)
    screenshot.validate()
    return screenshot


def create_app(
    config: ServerConfig,
    store: ReportStore,
    provider: Provider | None = None,
    provider_factory: Callable[[], Provider] | None = None,
    clock: Callable[[], datetime] | None = None,
    id_source: Callable[[], str] | None = None,
) -> FastAPI:
    engine_kwargs = {}
    if clock is not None:
        engine_kwargs["clock"] = clock
    if id_source is not None:
        engine_kwargs["id_source"] = id_source
    engine = FlowEngine(
        apps=config.descriptions(),
        provider=provider,
        provider_factory=provider_factory,
        config=config.flow,
        **engine_kwargs,
    )

    app = FastAPI(title="feedaide", version="1")
    app.state.engine = engine
    app.state.store = store
    app.state.config = config
    app.state.receipts = []

    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(FeedAideError)
    async def handle_domain_error(request: Request, exc: FeedAideError):
        return _map_error(exc)

    @app.exception_handler(Exception)
    async def handle_unexpected(request: Request, exc: Exception):
        logger.exception("unhandled error on %s", request.url.path)
        return _error_response(500, "config_error", "internal server error")

    def _check_token(app_id: str, token: str | None) -> None:
        registered = config.apps.get(app_id)
        if registered is not None and registered.app_token is not None:
            if token != registered.app_token:
                raise ValidationError("missing or invalid X-App-Token header")

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionBody, x_app_token: str | None = Header(default=None)):
        if body.appId not in config.apps:
            return _error_response(404, "not_found", f"unknown app: {body.appId!r}")
        _check_token(body.appId, x_app_token)
        screenshot = _decode_screenshot(body.screenshot)
        ctx = context_from_json(body.context, screenshot=screenshot)
        engine.expire_sessions()
        session, predictions = engine.start_session(
            ctx, body.appId, anonymous=body.anonymous
        )
        return {"sessionId": session.session_id, "predictions": predictions}

    @app.post("/v1/sessions/{session_id}/input")
    def submit_input(session_id: str, body: InputBody, x_app_token: str | None = Header(default=None)):
        session = engine.get_session(session_id)
        if session is None:
            return _error_response(404, "not_found", f"unknown session: {session_id!r}")
        _check_token(session.app_id, x_app_token)
        if body.kind not in (InputKind.SELECTED_OPTION, InputKind.FREE_TEXT):
            raise ValidationError(f"kind must be selectedOption or freeText, got {body.kind!r}")
        result = engine.submit_input(session, UserInput(kind=body.kind, value=body.value))
        if isinstance(result, NextQuestion):
            return {"question": result.question_text, "options": list(result.options)}
        assert isinstance(result, Final)
        store.store_report(result.report)
        receipt = deliver_report(
            result.report,
            config.sink,
            dead_letter_dir=store.data_dir / "dead_letter",
        )
        app.state.receipts.append(receipt)
        if receipt.status == "dead_lettered":
            logger.error("report %s dead-lettered: %s", result.report.report_id, receipt.detail)
        return {"report": report_to_json(result.report)}

    @app.get("/v1/reports")
    def list_reports(appId: str | None = None, page: int = 1, pageSize: int = 20):
        result = store.list_reports(app_id=appId, page=page, page_size=pageSize)
        return {
            "items": [report_to_json(report) for report in result.items],
            "page": result.page,
            "pageSize": result.page_size,
            "totalItems": result.total_items,
            "totalPages": result.total_pages,
        }

    @app.get("/v1/reports/{report_id}")
    def get_report(report_id: str):
        return report_to_json(store.get_report(report_id))

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    return app


def _map_error(exc: FeedAideError) -> JSONResponse:
    if isinstance(exc, OptionNotOfferedError):
        return _error_response(422, "invalid_input", str(exc))
    if isinstance(exc, SessionBusyError):
        return _error_response(409, "session_busy", str(exc), retryable=True)
    if isinstance(exc, SessionExpiredError):
        return _error_response(410, "session_expired", str(exc))
    if isinstance(exc, (SessionFailedError, ProviderError)):
        return _error_response(502, "provider_failed", str(exc), retryable=True)
    if isinstance(exc, NotFoundError):
        return _error_response(404, "not_found", str(exc))
    if isinstance(exc, ValidationError):
        return _error_response(400, "invalid_input", str(exc))
    if isinstance(exc, ConfigurationError):
        return _error_response(500, "config_error", str(exc))
    return _error_response(500, "config_error", str(exc))
