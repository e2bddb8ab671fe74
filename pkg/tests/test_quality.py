"""Quality rubrics, aggregation, and Cohen's kappa."""

from __future__ import annotations

import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from feedaide.context import context_from_json
from feedaide.errors import ValidationError
from feedaide.quality import (
    BugQualityRating,
    FeatureRequestRating,
    RatingMatrix,
    aggregate,
    auto_rate_bug,
    auto_rate_feature_request,
    cohen_kappa,
    detect_language,
    interpret_kappa,
    load_ratings_file,
    overlay_rating,
    pooled_matrix_from_ratings,
)

from conftest import FIXTURES, LISTING1_JSON, complete_flow
from feedaide.flow import FlowEngine
from feedaide.provider import ScriptedProvider, load_scenario
from conftest import LINGOLEARN


def kappa_oracle(pairs):
    """Independent brute-force evaluation straight from the confusion counts."""
    labels = sorted({a for a, _ in pairs} | {b for _, b in pairs})
    n = len(pairs)
    confusion = {(x, y): 0 for x in labels for y in labels}
    for a, b in pairs:
        confusion[(a, b)] += 1
    p_o = sum(confusion[(x, x)] for x in labels) / n
    p_e = 0.0
    for x in labels:
        row = sum(confusion[(x, y)] for y in labels) / n
        col = sum(confusion[(y, x)] for y in labels) / n
        p_e += row * col
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def matrix_from_pairs(pairs) -> RatingMatrix:
    labels = frozenset(a for a, _ in pairs) | frozenset(b for _, b in pairs)
    return RatingMatrix(
        items=tuple((f"item-{i}", a, b) for i, (a, b) in enumerate(pairs)),
        label_space=frozenset(labels),
    )


def finished_report():
    scenario = load_scenario(FIXTURES / "streak_reset.json")
    engine = FlowEngine(apps={"lingolearn": LINGOLEARN}, provider=ScriptedProvider(scenario))
    _, report = complete_flow(engine, context_from_json(LISTING1_JSON))
    return report


# -- auto_rate_bug ------------------------------------------------------------

def test_report_with_logged_events_scores_full_reproduction_steps():
    report = finished_report()
    assert len(report.context.events) >= 2
    rating = auto_rate_bug(report)
    assert rating.steps_to_reproduce == 2
    assert rating.auto


def test_terse_crash_text_scores_adequate_observed_behavior():
    rating = auto_rate_bug("App crash when Concierge was called")
    assert rating.observed_behavior == 1
    assert rating.steps_to_reproduce == 0


def test_precise_crash_text_scores_perfect_observed_behavior():
    rating = auto_rate_bug(
        "The app crashes immediately after pressing the call concierge button"
    )
    assert rating.observed_behavior == 2


def test_empty_text_scores_zero_everywhere():
    rating = auto_rate_bug("")
    assert rating.observed_behavior == 0
    assert rating.expected_behavior == 0
    assert rating.steps_to_reproduce == 0


def test_enumerated_steps_detected_in_plain_text():
    text = "Crash report\n1. open the app\n2. tap concierge\n3. watch it crash"
    assert auto_rate_bug(text).steps_to_reproduce == 2
    assert auto_rate_bug("Steps to reproduce: unclear").steps_to_reproduce == 1


def test_expected_behavior_markers():
    assert auto_rate_bug("The pass should appear in the wallet").expected_behavior == 2
    assert auto_rate_bug("A spinner appears but nothing happens").expected_behavior == 1


def test_bug_rating_bounds_validated():
    with pytest.raises(ValidationError):
        BugQualityRating(observed_behavior=3, expected_behavior=0, steps_to_reproduce=0).validate()


# -- auto_rate_feature_request ---------------------------------------------------

def test_report_scores_summary_description_version():
    rating = auto_rate_feature_request(finished_report())
    assert rating.summary is True
    assert rating.description is True
    assert rating.product_version is True


def test_one_line_text_has_no_description():
    rating = auto_rate_feature_request("Add attachments to To-Dos")
    assert rating.summary is True
    assert rating.description is False
    assert rating.product_version is False
    assert rating.correct_language is None


def test_empty_summary_detected():
    rating = auto_rate_feature_request("")
    assert rating.summary is False


def test_judgement_criteria_left_unset():
    rating = auto_rate_feature_request("Add attachments to To-Dos")
    assert rating.specify_problem is None
    assert rating.correct_summary is None
    assert rating.atomic is None
    assert rating.glossary is None
    assert rating.all_comments_necessary is None


def test_language_detection():
    assert detect_language("I want to add a list of phone numbers to the app") == "en"
    assert detect_language("Ich möchte eine Liste mit Nummern in der App haben") == "de"
    assert detect_language("12345") == "undetermined"


def test_report_language_match_sets_correct_language():
    # The streak fixture summaries are English but the device reports German,
    # so the detector should mark the language as not matching.
    rating = auto_rate_feature_request(finished_report())
    assert rating.correct_language is False


# -- aggregate ----------------------------------------------------------------------

def test_perfect_steps_average_over_fourteen_reports():
    ratings = [
        BugQualityRating(observed_behavior=2, expected_behavior=2, steps_to_reproduce=2)
        for _ in range(14)
    ]
    assert aggregate(ratings)["stepsToReproduce"] == 2.00


def test_singleton_aggregate_equals_rating():
    rating = BugQualityRating(observed_behavior=1, expected_behavior=2, steps_to_reproduce=0)
    averages = aggregate([rating])
    assert averages == {
        "observedBehavior": 1.0,
        "expectedBehavior": 2.0,
        "stepsToReproduce": 0.0,
    }


def test_boolean_ratio_formats_to_one_decimal():
    ratings = [
        FeatureRequestRating(summary=(i < 7), description=True) for i in range(13)
    ]
    averages = aggregate(ratings)
    assert averages["summary"] == pytest.approx(7 / 13 * 100)
    assert f"{averages['summary']:.1f}" == "53.8"
    assert averages["description"] == 100.0
    # Unset criteria do not appear at all.
    assert "atomic" not in averages


def test_aggregate_rejects_empty_and_mixed():
    with pytest.raises(ValidationError):
        aggregate([])
    with pytest.raises(ValidationError):
        aggregate([
            BugQualityRating(observed_behavior=0, expected_behavior=0, steps_to_reproduce=0),
            FeatureRequestRating(summary=True),
        ])


@given(st.lists(st.integers(min_value=0, max_value=2), min_size=1, max_size=30))
def test_aggregate_permutation_invariant(scores):
    ratings = [
        BugQualityRating(observed_behavior=s, expected_behavior=0, steps_to_reproduce=0)
        for s in scores
    ]
    shuffled = list(ratings)
    random.Random(1).shuffle(shuffled)
    assert aggregate(ratings) == aggregate(shuffled)


# -- cohen_kappa ----------------------------------------------------------------------

def test_perfect_agreement_is_one():
    pairs = [("yes", "yes"), ("no", "no"), ("yes", "yes"), ("maybe", "maybe")]
    assert cohen_kappa(matrix_from_pairs(pairs)) == pytest.approx(1.0)


def test_confusion_counts_match_hand_arithmetic():
    # a=20 both-yes, b=5 A-yes/B-no, c=10 A-no/B-yes, d=15 both-no:
    # p_o = 35/50 = 0.7; p_e = 0.5*0.6 + 0.5*0.4 = 0.5; kappa = 0.2/0.5 = 0.4
    pairs = (
        [("yes", "yes")] * 20
        + [("yes", "no")] * 5
        + [("no", "yes")] * 10
        + [("no", "no")] * 15
    )
    value = cohen_kappa(matrix_from_pairs(pairs))
    assert value == pytest.approx(0.4)
    assert value == pytest.approx(kappa_oracle(pairs))


def test_total_disagreement_is_nonpositive():
    pairs = [("yes", "no")] * 10 + [("no", "yes")] * 10
    assert cohen_kappa(matrix_from_pairs(pairs)) <= 0


def test_degenerate_single_label_is_one():
    pairs = [("yes", "yes")] * 5
    assert cohen_kappa(matrix_from_pairs(pairs)) == 1.0


def test_empty_matrix_rejected():
    with pytest.raises(ValidationError):
        cohen_kappa(RatingMatrix(items=(), label_space=frozenset({"a"})))


def test_labels_outside_space_rejected():
    matrix = RatingMatrix(items=(("i", "x", "y"),), label_space=frozenset({"x"}))
    with pytest.raises(ValidationError):
        cohen_kappa(matrix)


def random_pairs(rng, n_labels: int, n_items: int):
    labels = [f"L{i}" for i in range(n_labels)]
    return [(rng.choice(labels), rng.choice(labels)) for _ in range(n_items)]


def test_kappa_matches_oracle_on_random_matrices():
    rng = random.Random(42)
    for _ in range(50):
        pairs = random_pairs(rng, rng.randint(2, 4), rng.randint(5, 60))
        assert cohen_kappa(matrix_from_pairs(pairs)) == pytest.approx(
            kappa_oracle(pairs), abs=1e-9
        )


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc")), min_size=1, max_size=40))
def test_kappa_symmetric_under_rater_swap(pairs):
    swapped = [(b, a) for a, b in pairs]
    assert cohen_kappa(matrix_from_pairs(pairs)) == pytest.approx(
        cohen_kappa(matrix_from_pairs(swapped))
    )


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc")), min_size=1, max_size=40))
def test_kappa_invariant_under_relabeling(pairs):
    mapping = {"a": "Z9", "b": "Q7", "c": "M3"}
    relabeled = [(mapping[a], mapping[b]) for a, b in pairs]
    assert cohen_kappa(matrix_from_pairs(pairs)) == pytest.approx(
        cohen_kappa(matrix_from_pairs(relabeled))
    )


# -- interpret_kappa ---------------------------------------------------------------

def test_reported_agreement_values_map_to_almost_perfect():
    assert interpret_kappa(0.906) == "almost perfect"
    assert interpret_kappa(0.9207) == "almost perfect"


def test_band_lookup():
    assert interpret_kappa(0.5) == "moderate"
    assert interpret_kappa(0.0) == "poor"
    assert interpret_kappa(-0.4) == "poor"
    assert interpret_kappa(0.15) == "slight"
    assert interpret_kappa(0.35) == "fair"
    assert interpret_kappa(0.7) == "substantial"
    assert interpret_kappa(1.0) == "almost perfect"


def test_out_of_range_rejected():
    with pytest.raises(ValidationError):
        interpret_kappa(1.5)
    with pytest.raises(ValidationError):
        interpret_kappa(-1.01)


# -- ratings files ------------------------------------------------------------------

def ratings_document(rater: str, items: dict) -> dict:
    return {"rater": rater, "rubric": "bug", "items": items}


def test_pooled_matrix_and_identical_files(tmp_path):
    items = {
        "r1": {"observedBehavior": 2, "stepsToReproduce": 1},
        "r2": {"observedBehavior": 0, "stepsToReproduce": 2},
    }
    path_a = tmp_path / "a.json"
    path_b = tmp_path / "b.json"
    path_a.write_text(json.dumps(ratings_document("a", items)))
    path_b.write_text(json.dumps(ratings_document("b", items)))
    matrix = pooled_matrix_from_ratings(load_ratings_file(path_a), load_ratings_file(path_b))
    assert len(matrix.items) == 4  # 2 items x 2 shared dimensions
    assert cohen_kappa(matrix) == pytest.approx(1.0)


def test_misaligned_ids_rejected():
    a = ratings_document("a", {"r1": {"observedBehavior": 1}})
    b = ratings_document("b", {"r2": {"observedBehavior": 1}})
    with pytest.raises(ValidationError) as excinfo:
        pooled_matrix_from_ratings(a, b)
    assert "r1" in str(excinfo.value) and "r2" in str(excinfo.value)


def test_overlay_rating():
    auto = auto_rate_feature_request("Add attachments to To-Dos")
    manual = overlay_rating(auto, {"specifyProblem": False, "atomic": True}, rater="expert1")
    assert manual.specify_problem is False
    assert manual.atomic is True
    assert manual.summary is True  # auto values survive
    assert manual.auto is False
    assert manual.rater == "expert1"
    with pytest.raises(ValidationError):
        overlay_rating(auto, {"bogusDimension": True}, rater="expert1")


def test_overlay_bug_rating_coerces_ints():
    auto = auto_rate_bug("App crash when Concierge was called")
    manual = overlay_rating(auto, {"expectedBehavior": 2}, rater="expert2")
    assert manual.expected_behavior == 2
    assert manual.observed_behavior == auto.observed_behavior
