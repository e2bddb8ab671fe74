"""Server configuration: registered apps, webhook sink, limits, CORS.

One document (JSON or YAML) configures a server instance. Each app entry
carries the developer-authored description that becomes the App Description
prompt section, plus an optional static client token.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .flow import FlowConfig
from .prompt import AppDescription, ScreenDescription
from .report import WebhookSink


@dataclass(frozen=True)
class AppConfig:
    app_id: str
    description: AppDescription
    prompt_version: str = "1"
    app_token: str | None = None


@dataclass(frozen=True)
class ServerConfig:
    apps: dict[str, AppConfig] = field(default_factory=dict)
    flow: FlowConfig = FlowConfig()
    sink: WebhookSink | None = None
    cors_origins: tuple[str, ...] = ()
    provider_concurrency: int = 8

    def descriptions(self) -> dict[str, AppDescription]:
        return {app_id: app.description for app_id, app in self.apps.items()}


def _parse_app(raw: dict) -> AppConfig:
    for key in ("appId", "appSummary"):
        if not raw.get(key):
            raise ConfigurationError(f"app entry is missing {key}")
    screens = []
    for screen in raw.get("screens", []):
        if not screen.get("name") or not screen.get("description"):
            raise ConfigurationError(
                f"app {raw['appId']}: each screen needs name and description"
            )
        screens.append(
            ScreenDescription(name=screen["name"], description=screen["description"])
        )
    description = AppDescription(app_summary=raw["appSummary"], screens=tuple(screens))
    description.validate()
    return AppConfig(
        app_id=raw["appId"],
        description=description,
        prompt_version=str(raw.get("promptVersion", "1")),
        app_token=raw.get("appToken"),
    )


def _load_document(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    try:
        if path.suffix in (".yaml", ".yml"):
            raw = yaml.safe_load(text)
        else:
            raw = json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{path} does not parse: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path} must contain an object")
    return raw


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ServerConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("config document must be an object")
    apps = {}
    for entry in raw.get("apps", []):
        if isinstance(entry, str):
            # Reference to a standalone one-app document.
            path = Path(entry)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            entry = _load_document(path)
        app = _parse_app(entry)
        if app.app_id in apps:
            raise ConfigurationError(f"duplicate app id: {app.app_id}")
        apps[app.app_id] = app

    limits = raw.get("limits", {})
    flow_config = FlowConfig(
        question_count=int(limits.get("questionCount", FlowConfig.question_count)),
        max_retries=int(limits.get("maxRetries", FlowConfig.max_retries)),
        ban_list=tuple(raw.get("banList", FlowConfig.ban_list)),
        session_ttl_seconds=int(
            limits.get("sessionTtlSeconds", FlowConfig.session_ttl_seconds)
        ),
        free_text_max_chars=int(
            limits.get("freeTextMaxChars", FlowConfig.free_text_max_chars)
        ),
        max_context_events=int(
            limits.get("maxContextEvents", FlowConfig.max_context_events)
        ),
    )

    sink = None
    sink_raw = raw.get("sink")
    if sink_raw:
        if not sink_raw.get("url"):
            raise ConfigurationError("sink needs a url")
        sink = WebhookSink(
            url=sink_raw["url"],
            timeout=float(sink_raw.get("timeoutSeconds", WebhookSink.timeout)),
            max_attempts=int(sink_raw.get("maxAttempts", WebhookSink.max_attempts)),
            backoff_base_seconds=float(
                sink_raw.get("backoffBaseSeconds", WebhookSink.backoff_base_seconds)
            ),
        )

    return ServerConfig(
        apps=apps,
        flow=flow_config,
        sink=sink,
        cors_origins=tuple(raw.get("corsOrigins", ())),
        provider_concurrency=int(raw.get("providerConcurrency", 8)),
    )


def load_config(path: str | Path) -> ServerConfig:
    path = Path(path)
    return config_from_dict(_load_document(path), base_dir=path.parent)
