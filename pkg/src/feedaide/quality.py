"""Report-quality rubrics, score aggregation, and inter-rater agreement.

Two rubrics are implemented: a bug rubric with three dimensions scored 0-2
(observed behavior, expected behavior, steps to reproduce) and a
feature-request rubric with nine pass/fail criteria. The automatic rater
covers the mechanically checkable parts and leaves judgement calls unset so
imported manual ratings can overlay them.

The bug heuristics are deliberately simple keyword/structure checks; they
are versioned (BUG_HEURISTICS_VERSION) so downstream consumers can detect
rule changes:

* steps to reproduce: 2 when the report embeds a non-empty interaction log
  (structured reports carry their own reproduction trace); for plain text,
  2 with two or more enumerated step lines, 1 with a single step line or a
  "steps" header, else 0.
* observed behavior: 1 when a problem indicator appears (crash, error,
  fails, ...), 2 when a precise trigger is also given (an immediacy marker
  such as "immediately after", or an explicit control interaction such as
  "pressing the ... button"), else 0.
* expected behavior: 2 with an explicit expectation marker ("should",
  "expected to", ...), 1 with an implied one ("instead", "doesn't", ...),
  else 0.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Union

from .errors import ValidationError
from .report import FeedbackReport

BUG_HEURISTICS_VERSION = "1"

BUG_DIMENSIONS = ("observedBehavior", "expectedBehavior", "stepsToReproduce")

FEATURE_CRITERIA = (
    "summary",
    "description",
    "specifyProblem",
    "correctSummary",
    "productVersion",
    "correctLanguage",
    "atomic",
    "glossary",
    "allCommentsNecessary",
)

AUTO_RATER = "auto"


@dataclass(frozen=True)
class BugQualityRating:
    observed_behavior: int
    expected_behavior: int
    steps_to_reproduce: int
    rater: str = AUTO_RATER
    auto: bool = True

    def validate(self) -> None:
        for name, value in (
            ("observedBehavior", self.observed_behavior),
            ("expectedBehavior", self.expected_behavior),
            ("stepsToReproduce", self.steps_to_reproduce),
        ):
            if value not in (0, 1, 2):
                raise ValidationError(f"{name} must be 0, 1, or 2, got {value}")

    def labels(self) -> dict[str, int]:
        return {
            "observedBehavior": self.observed_behavior,
            "expectedBehavior": self.expected_behavior,
            "stepsToReproduce": self.steps_to_reproduce,
        }


@dataclass(frozen=True)
class FeatureRequestRating:
    """Nine pass/fail criteria; None means not rated (left for manual overlay)."""

    summary: bool | None = None
    description: bool | None = None
    specify_problem: bool | None = None
    correct_summary: bool | None = None
    product_version: bool | None = None
    correct_language: bool | None = None
    atomic: bool | None = None
    glossary: bool | None = None
    all_comments_necessary: bool | None = None
    rater: str = AUTO_RATER
    auto: bool = True

    def labels(self) -> dict[str, bool | None]:
        return {
            "summary": self.summary,
            "description": self.description,
            "specifyProblem": self.specify_problem,
            "correctSummary": self.correct_summary,
            "productVersion": self.product_version,
            "correctLanguage": self.correct_language,
            "atomic": self.atomic,
            "glossary": self.glossary,
            "allCommentsNecessary": self.all_comments_necessary,
        }


# -- language detection ----------------------------------------------------

_EN_STOPWORDS = frozenset(
    "the a an and is are was were to of in on for with that this it i you my "
    "we not but have has do does did when at by from as be been can could "
    "should would will won't doesn't don't want add".split()
)
_DE_STOPWORDS = frozenset(
    "der die das und ist sind war zu von im in auf für mit dass es ich du "
    "mein wir nicht aber habe hat wenn bei aus als sein kann könnte sollte "
    "würde wird mir mich möchte hinzufügen".split()
)

_WORD_RE = re.compile(r"[a-zA-ZäöüÄÖÜß']+")


def detect_language(text: str) -> str:
    """Stop-word frequency detector for en/de; anything else is undetermined."""
    words = [word.casefold() for word in _WORD_RE.findall(text)]
    en_hits = sum(1 for word in words if word in _EN_STOPWORDS)
    de_hits = sum(1 for word in words if word in _DE_STOPWORDS)
    if en_hits == de_hits:
        return "undetermined"
    return "en" if en_hits > de_hits else "de"


# -- bug rubric heuristics ---------------------------------------------------

_PROBLEM_RE = re.compile(
    r"crash|error|fail|bug|broken|freez|frozen|stuck|reset|wrong|spinner"
    r"|hang|not work|doesn't work|does not work|won't|cannot|can't|unable"
    r"|absturz|fehler|funktioniert nicht|stürzt|hängt",
    re.IGNORECASE,
)
_PRECISION_RE = re.compile(
    r"immediately|right after|as soon as|every time|each time|directly after"
    r"|sofort|jedes mal|unmittelbar",
    re.IGNORECASE,
)
_INTERACTION_RE = re.compile(
    r"\b(press|presses|pressed|pressing|tap|taps|tapped|tapping|click|clicks"
    r"|clicked|clicking|button|drücke|drücken|gedrückt|taste|knopf)\b",
    re.IGNORECASE,
)
_EXPLICIT_EXPECTATION_RE = re.compile(
    r"\bshould\b|shouldn't|expected|supposed to|ought to|sollte|sollten|erwartet",
    re.IGNORECASE,
)
_IMPLIED_EXPECTATION_RE = re.compile(
    r"\binstead\b|nothing happens|doesn't|does not|not able|won't|wouldn't"
    r"|fails to|without|statt|anstatt",
    re.IGNORECASE,
)
_STEP_LINE_RE = re.compile(r"^\s*(\d+[.)]\s|step\b|[-*]\s)", re.IGNORECASE)
_STEPS_HEADER_RE = re.compile(r"steps to reproduce|schritte", re.IGNORECASE)


def _score_observed(text: str) -> int:
    if not _PROBLEM_RE.search(text):
        return 0
    if _PRECISION_RE.search(text) or _INTERACTION_RE.search(text):
        return 2
    return 1


def _score_expected(text: str) -> int:
    if _EXPLICIT_EXPECTATION_RE.search(text):
        return 2
    if _IMPLIED_EXPECTATION_RE.search(text):
        return 1
    return 0


def _score_steps_from_text(text: str) -> int:
    step_lines = sum(1 for line in text.splitlines() if _STEP_LINE_RE.match(line))
    if step_lines >= 2:
        return 2
    if step_lines == 1 or _STEPS_HEADER_RE.search(text):
        return 1
    return 0


def _report_text(report: FeedbackReport) -> str:
    parts = [report.chosen_feedback.text]
    for pair in report.questions_and_answers:
        parts.append(pair.question)
        parts.append(pair.answer)
    parts.append(report.user_intent_summary)
    parts.append(report.developer_summary)
    return "\n".join(parts)


def auto_rate_bug(source: Union[FeedbackReport, str]) -> BugQualityRating:
    """Deterministic partial rating; always returns, flagged auto."""
    if isinstance(source, FeedbackReport):
        text = _report_text(source)
        steps = 2 if source.context.events else _score_steps_from_text(text)
    else:
        text = source
        steps = _score_steps_from_text(text)
    rating = BugQualityRating(
        observed_behavior=_score_observed(text),
        expected_behavior=_score_expected(text),
        steps_to_reproduce=steps,
    )
    rating.validate()
    return rating


def auto_rate_feature_request(source: Union[FeedbackReport, str]) -> FeatureRequestRating:
    """Deterministic presence checks; judgement criteria stay unset."""
    if isinstance(source, FeedbackReport):
        declared = report_primary_language(source)
        detected = detect_language(_report_text(source))
        return FeatureRequestRating(
            summary=bool(source.user_intent_summary.strip()),
            description=bool(
                source.developer_summary.strip() or source.questions_and_answers
            ),
            product_version=bool(source.context.app_version.strip()),
            correct_language=(detected == declared) if detected != "undetermined" else None,
        )
    lines = source.splitlines()
    first_line = lines[0].strip() if lines else ""
    rest = "\n".join(lines[1:]).strip()
    return FeatureRequestRating(
        summary=bool(first_line),
        description=bool(rest),
        product_version=bool(re.search(r"\bv?\d+\.\d+(\.\d+)?\b|version", source, re.IGNORECASE)),
        correct_language=None,
    )


def report_primary_language(report: FeedbackReport) -> str:
    return report.context.device_info.language.split("-")[0].casefold()


# -- aggregation -------------------------------------------------------------

def aggregate(
    ratings: Iterable[Union[BugQualityRating, FeatureRequestRating]],
) -> dict[str, float]:
    """Arithmetic mean per dimension; pass/fail criteria as percentages.

    Unset (None) criteria are excluded from their dimension's denominator;
    a dimension nobody rated is omitted from the result.
    """
    ratings = list(ratings)
    if not ratings:
        raise ValidationError("cannot aggregate an empty ratings list")
    kinds = {type(rating) for rating in ratings}
    if len(kinds) != 1:
        raise ValidationError("all ratings must use the same rubric")

    sums: dict[str, float] = {}
    counts: Counter[str] = Counter()
    boolean_rubric = kinds == {FeatureRequestRating}
    for rating in ratings:
        for dimension, value in rating.labels().items():
            if value is None:
                continue
            sums[dimension] = sums.get(dimension, 0.0) + (
                (100.0 if value else 0.0) if boolean_rubric else float(value)
            )
            counts[dimension] += 1
    return {
        dimension: sums[dimension] / counts[dimension]
        for dimension in sums
    }


# -- Cohen's kappa -----------------------------------------------------------

@dataclass(frozen=True)
class RatingMatrix:
    """Paired labels from two raters over the same items."""

    items: tuple[tuple[str, str, str], ...]  # (itemId, labelA, labelB)
    label_space: frozenset[str]

    def validate(self) -> None:
        if not self.items:
            raise ValidationError("rating matrix has no items")
        if not self.label_space:
            raise ValidationError("label space is empty")
        for item_id, label_a, label_b in self.items:
            if label_a not in self.label_space or label_b not in self.label_space:
                raise ValidationError(
                    f"item {item_id!r} uses labels outside the label space: "
                    f"{label_a!r}, {label_b!r}"
                )


def cohen_kappa(matrix: RatingMatrix) -> float:
    """Chance-corrected agreement between the two raters.

    kappa = (p_o - p_e) / (1 - p_e), with p_e computed from each rater's
    marginal label frequencies. When p_e is 1 both raters used a single
    identical label throughout, so agreement is perfect and 1.0 is returned
    by convention.
    """
    matrix.validate()
    n = len(matrix.items)
    observed = sum(1 for _, a, b in matrix.items if a == b) / n
    marginals_a = Counter(a for _, a, _ in matrix.items)
    marginals_b = Counter(b for _, _, b in matrix.items)
    expected = sum(
        (marginals_a[label] / n) * (marginals_b[label] / n)
        for label in matrix.label_space
    )
    if expected >= 1.0:
        return 1.0
    return (observed - expected) / (1.0 - expected)


KAPPA_BANDS = (
    (0.00, "poor"),
    (0.20, "slight"),
    (0.40, "fair"),
    (0.60, "moderate"),
    (0.80, "substantial"),
    (1.00, "almost perfect"),
)


def interpret_kappa(kappa: float) -> str:
    """Map a kappa value to its agreement band."""
    if kappa < -1.0 or kappa > 1.0:
        raise ValidationError(f"kappa must lie in [-1, 1], got {kappa}")
    for upper, band in KAPPA_BANDS:
        if kappa <= upper:
            return band
    return "almost perfect"


# -- ratings files -----------------------------------------------------------

def load_ratings_file(path: str | Path) -> dict:
    """Ratings document: {"rater": str, "rubric": "bug"|"feature",
    "items": {itemId: {dimension: label}}}."""
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot load ratings file {path}: {exc}") from exc
    if not isinstance(document, dict) or "items" not in document:
        raise ValidationError(f"ratings file {path} must contain an items object")
    if not isinstance(document["items"], dict):
        raise ValidationError(f"ratings file {path}: items must be an object")
    return document


def pooled_matrix_from_ratings(ratings_a: dict, ratings_b: dict) -> RatingMatrix:
    """Pool per-dimension labels of two raters into a single matrix.

    Items must align exactly by id; each (item, dimension) pair rated by
    both becomes one observation.
    """
    ids_a = set(ratings_a["items"])
    ids_b = set(ratings_b["items"])
    if ids_a != ids_b:
        only_a = sorted(ids_a - ids_b)
        only_b = sorted(ids_b - ids_a)
        raise ValidationError(
            f"ratings files do not align: only in A {only_a}, only in B {only_b}"
        )
    items = []
    labels: set[str] = set()
    for item_id in sorted(ids_a):
        dims_a = ratings_a["items"][item_id]
        dims_b = ratings_b["items"][item_id]
        for dimension in sorted(set(dims_a) & set(dims_b)):
            label_a = str(dims_a[dimension]).casefold()
            label_b = str(dims_b[dimension]).casefold()
            items.append((f"{item_id}:{dimension}", label_a, label_b))
            labels.update((label_a, label_b))
    if not items:
        raise ValidationError("ratings files share no rated (item, dimension) pairs")
    return RatingMatrix(items=tuple(items), label_space=frozenset(labels))


def overlay_rating(
    auto: FeatureRequestRating | BugQualityRating,
    manual_labels: dict[str, object],
    rater: str,
):
    """Overwrite auto-rated values with manually supplied labels."""
    field_by_label = {
        "observedBehavior": "observed_behavior",
        "expectedBehavior": "expected_behavior",
        "stepsToReproduce": "steps_to_reproduce",
        "summary": "summary",
        "description": "description",
        "specifyProblem": "specify_problem",
        "correctSummary": "correct_summary",
        "productVersion": "product_version",
        "correctLanguage": "correct_language",
        "atomic": "atomic",
        "glossary": "glossary",
        "allCommentsNecessary": "all_comments_necessary",
    }
    valid_fields = {f.name for f in fields(auto)}
    updates: dict[str, object] = {}
    for label, value in manual_labels.items():
        field_name = field_by_label.get(label)
        if field_name is None or field_name not in valid_fields:
            raise ValidationError(f"unknown rating dimension: {label!r}")
        if isinstance(auto, BugQualityRating):
            value = int(value)
        else:
            value = bool(value)
        updates[field_name] = value
    return replace(auto, rater=rater, auto=False, **updates)
