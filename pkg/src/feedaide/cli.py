"""Operator command line: serve the API, replay scripted scenarios, evaluate
report quality, and compute inter-rater agreement."""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .config import ServerConfig, load_config
from .context import (
    DeviceInfo,
    EventLog,
    record_event,
    snapshot_context,
)
from .errors import FeedAideError, ValidationError
from .flow import Final, FlowEngine, InputKind, NextQuestion, UserInput
from .prompt import AppDescription
from .provider import ScriptedProvider, load_scenario, remote_provider_from_env
from .quality import (
    BUG_DIMENSIONS,
    FEATURE_CRITERIA,
    aggregate,
    auto_rate_bug,
    auto_rate_feature_request,
    cohen_kappa,
    interpret_kappa,
    load_ratings_file,
    overlay_rating,
    pooled_matrix_from_ratings,
)
from .report import FeedbackReport, ReportStore, parse_report, report_to_json

USAGE_ERROR = 2


def _demo_context(now: datetime):
    log = EventLog()
    log = record_event(log, "app_launched", now - timedelta(minutes=2))
    log = record_event(log, "home_screen_viewed", now - timedelta(minutes=1))
    device = DeviceInfo(model="iPhone13,4", os_version="iOS 17.5", language="en")
    return snapshot_context(log, device, "1.0.0", None, now)


def _load_answers(path: str) -> list[dict]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise SystemExit(f"usage error: cannot read answers file: {exc}")
    except json.JSONDecodeError as exc:
        raise SystemExit(f"usage error: answers file is not valid JSON: {exc}")
    if not isinstance(raw, list) or not raw:
        raise SystemExit("usage error: answers file must be a non-empty JSON array")
    answers = []
    for index, entry in enumerate(raw):
        if isinstance(entry, int):
            answers.append({"step": index + 1, "kind": "optionIndex", "value": str(entry)})
        elif isinstance(entry, dict) and "kind" in entry and "value" in entry:
            answers.append(entry)
        else:
            raise SystemExit(
                f"usage error: answers entry {index} must be an integer option index "
                "or an object with step/kind/value"
            )
    return answers


def _resolve_answer(entry: dict, options: tuple[str, ...]) -> UserInput:
    kind = entry["kind"]
    value = str(entry["value"])
    if kind == "optionIndex":
        index = int(value)
        if index < 1 or index > len(options):
            raise ValidationError(
                f"option index {index} out of range; {len(options)} options offered"
            )
        return UserInput(kind=InputKind.SELECTED_OPTION, value=options[index - 1])
    if kind in (InputKind.SELECTED_OPTION, InputKind.FREE_TEXT):
        return UserInput(kind=kind, value=value)
    raise ValidationError(f"unknown answer kind: {kind!r}")


def cmd_replay(args: argparse.Namespace) -> int:
    if not args.answers:
        print("usage error: --answers <file> is required for replay", file=sys.stderr)
        return USAGE_ERROR
    answers = _load_answers(args.answers)
    scenario = load_scenario(args.scenario)
    for issue in scenario.issues:
        print(f"warning: scenario {scenario.name}: {issue}", file=sys.stderr)

    if args.config:
        config = load_config(args.config)
        if args.app not in config.apps:
            print(f"error: app {args.app!r} not in config", file=sys.stderr)
            return 1
        apps = config.descriptions()
        flow_config = config.flow
    else:
        apps = {args.app: AppDescription(app_summary=f"{args.app} (replay without config)")}
        flow_config = None

    if args.fixed_clock:
        fixed = datetime.fromisoformat(args.fixed_clock)
        clock = lambda: fixed  # noqa: E731
    else:
        clock = lambda: datetime.now(timezone.utc)  # noqa: E731
    counter = iter(range(1, 10_000))
    id_source = (lambda: f"replay-{next(counter):04d}") if args.fixed_ids else None

    engine_kwargs = {"clock": clock}
    if flow_config is not None:
        engine_kwargs["config"] = flow_config
    if id_source is not None:
        engine_kwargs["id_source"] = id_source
    engine = FlowEngine(apps=apps, provider=ScriptedProvider(scenario), **engine_kwargs)

    ctx = _demo_context(clock())
    try:
        session, predictions = engine.start_session(ctx, args.app)
        print(f"predictions: {json.dumps(predictions, ensure_ascii=False)}")
        report = None
        for entry in answers:
            user_input = _resolve_answer(entry, session.current_options())
            print(f"user: {user_input.value}")
            result = engine.submit_input(session, user_input)
            if isinstance(result, NextQuestion):
                print(f"question: {result.question_text}")
                print(f"options: {json.dumps(list(result.options), ensure_ascii=False)}")
            else:
                assert isinstance(result, Final)
                report = result.report
                break
        if report is None:
            print("error: answers exhausted before the flow finalized", file=sys.stderr)
            return 1
        print("report:")
        print(json.dumps(report_to_json(report), indent=2, ensure_ascii=False))
        return 0
    except FeedAideError as exc:
        print(f"flow failed: {exc}", file=sys.stderr)
        return 1


def _load_corpus(directory: Path) -> dict[str, FeedbackReport | str]:
    items: dict[str, FeedbackReport | str] = {}
    for path in sorted(directory.iterdir()):
        if path.name == "index.json":
            continue
        if path.suffix == ".json":
            items[path.stem] = parse_report(path.read_bytes())
        elif path.suffix == ".txt":
            items[path.stem] = path.read_text(encoding="utf-8")
    return items


def _format_table(title: str, rows: list[tuple[str, str]]) -> str:
    width = max(len(name) for name, _ in rows)
    lines = [title, "-" * len(title)]
    for name, value in rows:
        lines.append(f"{name.ljust(width)}  {value}")
    return "\n".join(lines)


def cmd_evaluate(args: argparse.Namespace) -> int:
    directory = Path(args.reports)
    if not directory.is_dir():
        print(f"error: {directory} is not a directory", file=sys.stderr)
        return 1
    corpus = _load_corpus(directory)
    if not corpus:
        print(f"error: no report JSON or .txt files in {directory}", file=sys.stderr)
        return 1

    manual_items: dict = {}
    rater = "manual"
    if args.ratings:
        document = load_ratings_file(args.ratings)
        manual_items = document["items"]
        rater = document.get("rater", "manual")

    rate = auto_rate_bug if args.rubric == "bug" else auto_rate_feature_request
    ratings = []
    for item_id, source in corpus.items():
        rating = rate(source)
        if item_id in manual_items:
            rating = overlay_rating(rating, manual_items[item_id], rater)
        ratings.append(rating)

    averages = aggregate(ratings)
    if args.rubric == "bug":
        rows = [
            (dimension, f"{averages[dimension]:.2f}")
            for dimension in BUG_DIMENSIONS
            if dimension in averages
        ]
        title = f"Average bug report quality (n={len(ratings)})"
    else:
        rows = [
            (criterion, f"{averages[criterion]:.1f}%")
            for criterion in FEATURE_CRITERIA
            if criterion in averages
        ]
        title = f"Average feature request quality (n={len(ratings)})"
    print(_format_table(title, rows))
    print(json.dumps({"rubric": args.rubric, "n": len(ratings), "averages": averages}))
    return 0


def cmd_kappa(args: argparse.Namespace) -> int:
    ratings_a = load_ratings_file(args.ratings_a)
    ratings_b = load_ratings_file(args.ratings_b)
    matrix = pooled_matrix_from_ratings(ratings_a, ratings_b)
    kappa = cohen_kappa(matrix)
    print(f"kappa: {kappa:.4f}")
    print(f"agreement: {interpret_kappa(kappa)}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import os

    import uvicorn

    from .api import create_app
    from .provider import ENV_PROVIDER

    provider_kind = args.provider or os.environ.get(ENV_PROVIDER, "scripted")
    if provider_kind not in ("scripted", "remote"):
        print(f"usage error: unknown provider {provider_kind!r}", file=sys.stderr)
        return USAGE_ERROR
    config = load_config(args.config) if args.config else ServerConfig()
    if provider_kind == "scripted":
        if not args.scenario:
            print("usage error: --provider scripted requires --scenario", file=sys.stderr)
            return USAGE_ERROR
        scenario = load_scenario(args.scenario)
        provider_kwargs = {"provider_factory": lambda: ScriptedProvider(scenario)}
    else:
        provider_kwargs = {"provider": remote_provider_from_env()}

    store = ReportStore(args.data_dir, question_count=config.flow.question_count)
    app = create_app(config, store=store, **provider_kwargs)
    host, _, port = args.listen.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feedaide")
    sub = parser.add_subparsers(dest="command", required=True)

    replay = sub.add_parser("replay", help="run a scripted scenario end-to-end")
    replay.add_argument("--scenario", required=True)
    replay.add_argument("--app", required=True)
    replay.add_argument("--answers", help="JSON array of user-side answers")
    replay.add_argument("--config", help="server config supplying the app description")
    replay.add_argument("--fixed-clock", help="ISO-8601 instant to freeze the clock at")
    replay.add_argument("--fixed-ids", action="store_true", help="sequential ids for determinism")
    replay.set_defaults(func=cmd_replay)

    evaluate = sub.add_parser("evaluate", help="auto-rate a directory of reports")
    evaluate.add_argument("--reports", required=True)
    evaluate.add_argument("--rubric", required=True, choices=("bug", "feature"))
    evaluate.add_argument("--ratings", help="manual ratings file to overlay")
    evaluate.set_defaults(func=cmd_evaluate)

    kappa = sub.add_parser("kappa", help="inter-rater agreement between two ratings files")
    kappa.add_argument("--ratings-a", required=True, dest="ratings_a")
    kappa.add_argument("--ratings-b", required=True, dest="ratings_b")
    kappa.set_defaults(func=cmd_kappa)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--config", help="server config file (JSON or YAML)")
    serve.add_argument("--data-dir", required=True, dest="data_dir")
    serve.add_argument("--listen", default="127.0.0.1:8080")
    serve.add_argument(
        "--provider",
        choices=("scripted", "remote"),
        default=None,
        help="defaults to $FEEDAIDE_PROVIDER, else scripted",
    )
    serve.add_argument("--scenario", help="scenario file for scripted mode")
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FeedAideError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
