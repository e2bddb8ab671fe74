"""Prompt assembly: static sections, per-app description, dynamic context.

The system prompt has a fixed prefix (Setting, Instructions, Constraints)
shipped as a versioned resource file, followed by the App Description
rendered from server-side configuration. The context JSON is sent as a
separate user message, never embedded in the system text; the screenshot
rides along as an attachment on that message.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources

from .context import FeedbackContext, Screenshot, context_from_json, context_to_json
from .errors import ConfigurationError, ValidationError

DEFAULT_REPLY_LANGUAGE = "en"

_LANGUAGE_RE = re.compile(r"^[a-z]{2,3}(-(?:[A-Za-z]{2}|[0-9]{3}))?$")

_CONTEXT_FENCE_RE = re.compile(r"```json\s*\n(.*?)\n```", re.DOTALL)


def load_static_prompt() -> str:
    """Read the fixed Setting/Instructions/Constraints text shipped with the package."""
    return (
        resources.files("feedaide.resources")
        .joinpath("static_prompt.md")
        .read_text(encoding="utf-8")
    )


def static_prompt_hash() -> str:
    """SHA-256 of the static prompt text; embedded in reports for provenance."""
    return hashlib.sha256(load_static_prompt().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ScreenDescription:
    name: str
    description: str


@dataclass(frozen=True)
class AppDescription:
    """Developer-authored summary of the app and its screens."""

    app_summary: str
    screens: tuple[ScreenDescription, ...] = ()

    def validate(self) -> None:
        if not self.app_summary:
            raise ConfigurationError("appSummary must be non-empty")
        names = [screen.name for screen in self.screens]
        if len(names) != len(set(names)):
            raise ConfigurationError("screen names must be unique")


@dataclass(frozen=True)
class ModelSettings:
    """Knobs forwarded to the model provider."""

    temperature: float = 1.0
    output_schema_id: str = "feedback_step_v1"
    max_output_tokens: int = 1024

    def validate(self) -> None:
        if self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ConfigurationError("maxOutputTokens must be > 0")


@dataclass(frozen=True)
class PromptBundle:
    """Everything the provider needs for the first step of a flow."""

    system_text: str
    context_message: str
    screenshot_attachment: Screenshot | None = None


def build_system_prompt(app: AppDescription) -> str:
    """Static sections verbatim, then the App Description rendered from config."""
    app.validate()
    parts = [load_static_prompt().rstrip("\n"), "", "# App Description", app.app_summary]
    if app.screens:
        parts += ["", "# Description of individual screens"]
        for screen in app.screens:
            parts += [f"## {screen.name}", screen.description, ""]
    return "\n".join(parts).rstrip("\n") + "\n"


def render_context_message(ctx: FeedbackContext) -> tuple[str, Screenshot | None]:
    """Context JSON inside a fenced code block, plus the screenshot if present."""
    document = json.dumps(context_to_json(ctx), indent=2, ensure_ascii=False)
    return f"```json\n{document}\n```", ctx.screenshot


def parse_context_message(
    text: str, attachment: Screenshot | None = None
) -> FeedbackContext:
    """Inverse of render_context_message; the attachment becomes the screenshot."""
    match = _CONTEXT_FENCE_RE.search(text)
    if not match:
        raise ValidationError("no fenced JSON block found in context message")
    try:
        payload = json.loads(match.group(1))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"context message JSON does not parse: {exc}") from exc
    return context_from_json(payload, screenshot=attachment)


def build_prompt_bundle(app: AppDescription, ctx: FeedbackContext) -> PromptBundle:
    text, attachment = render_context_message(ctx)
    return PromptBundle(
        system_text=build_system_prompt(app),
        context_message=text,
        screenshot_attachment=attachment,
    )


def resolve_reply_language(ctx: FeedbackContext) -> str:
    """Language the model should answer in; falls back to English when the
    device language is missing or not a parseable language code."""
    language = ctx.device_info.language
    if language and _LANGUAGE_RE.match(language):
        return language
    return DEFAULT_REPLY_LANGUAGE
