"""Answer-quality metrics against frozen goldens, the brute-force oracles,
and the outcome classifier's precedence rules."""
from __future__ import annotations

import json
import math
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossrag.errors import EmptyReferenceError
from crossrag.metrics import (
    EPSILON,
    OUTCOME_ORDER,
    SUCCESS_OUTCOMES,
    MetricScores,
    OutcomeCategory,
    Pattern,
    Rubric,
    bleu,
    classify,
    length_ratio,
    meteor,
    score_answer,
)
from crossrag.stemmer import porter_stem
from crossrag.textsearch import tokenize
from oracle_metrics import bleu_oracle, meteor_oracle

GOLDEN = json.loads(
    (Path(__file__).parent / "data" / "metrics_golden.json").read_text())

WORDS = st.lists(
    st.sampled_from(("pump", "seal", "replace", "the", "filter", "valve",
                     "torque", "oil", "port", "bleed")),
    min_size=1, max_size=12).map(" ".join)


def _ids(entries) -> list[str]:
    return [f"{e['candidate'][:24]}~{e['reference'][:24]}" for e in entries]


@pytest.mark.parametrize("entry", GOLDEN, ids=_ids(GOLDEN))
def test_golden_matches_frozen_values(entry: dict) -> None:
    syn = entry["synonyms"]
    assert bleu(entry["candidate"], entry["reference"]) == pytest.approx(
        entry["bleu"], abs=1e-9)
    if entry["meteor"] is not None:
        assert meteor(entry["candidate"], entry["reference"],
                      synonyms=syn) == pytest.approx(entry["meteor"], abs=1e-9)
    assert length_ratio(entry["candidate"], entry["reference"]) == pytest.approx(
        entry["length_ratio"], abs=1e-9)


@pytest.mark.parametrize("entry", GOLDEN, ids=_ids(GOLDEN))
def test_golden_matches_oracle_recomputation(entry: dict) -> None:
    cand = tokenize(entry["candidate"])
    ref = tokenize(entry["reference"])
    assert bleu(entry["candidate"], entry["reference"]) == pytest.approx(
        bleu_oracle(cand, ref), abs=1e-9)
    if entry["meteor"] is not None and len(cand) <= 8:
        want = meteor_oracle(cand, ref, porter_stem, entry["synonyms"])
        assert meteor(entry["candidate"], entry["reference"],
                      synonyms=entry["synonyms"]) == pytest.approx(want, abs=1e-9)


def test_bleu_worked_example() -> None:
    # p1=5/6, p2=3/5, p3=1/4, p4 floored at epsilon, no brevity penalty.
    value = bleu("the cat sat on the mat", "the cat is on the mat")
    want = math.exp((math.log(5 / 6) + math.log(3 / 5) + math.log(1 / 4)
                     + math.log(EPSILON)) / 4)
    assert value == pytest.approx(want, rel=1e-12)
    assert value == pytest.approx(0.003343702, abs=1e-9)


def test_bleu_identical_is_one() -> None:
    assert bleu("replace the filter", "replace the filter") == 1.0


def test_bleu_short_candidate_uses_fewer_orders() -> None:
    # Two tokens: only 1- and 2-gram precisions; the single bigram matches.
    assert bleu("the cat", "the cat sat") == pytest.approx(
        math.exp(1.0 - 3 / 2), rel=1e-12)


def test_bleu_brevity_only_when_shorter() -> None:
    longer = bleu("the cat sat down", "the cat sat")
    assert longer == pytest.approx(
        math.exp((math.log(3 / 4) + math.log(2 / 3) + math.log(1 / 2)
                  + math.log(EPSILON)) / 4), rel=1e-12)


def test_bleu_empty_candidate() -> None:
    assert bleu("", "reference text") == 0.0
    assert bleu("...", "reference text") == 0.0


def test_bleu_empty_reference() -> None:
    with pytest.raises(EmptyReferenceError):
        bleu("something", "")
    with pytest.raises(EmptyReferenceError):
        bleu("something", "!!!")


def test_bleu_max_n_validation() -> None:
    with pytest.raises(ValueError):
        bleu("a", "a", max_n=0)


def test_bleu_max_n_changes_order_count() -> None:
    cand, ref = "a b c d e", "a b x d e"
    assert bleu(cand, ref, max_n=1) == pytest.approx(4 / 5, rel=1e-12)
    assert bleu(cand, ref, max_n=2) == pytest.approx(
        math.exp((math.log(4 / 5) + math.log(2 / 4)) / 2), rel=1e-12)


def test_meteor_identity_three_tokens() -> None:
    value = meteor("replace the filter", "replace the filter")
    assert value == pytest.approx(1 - 0.5 / 27, abs=1e-12)
    assert value == pytest.approx(0.981481481, abs=1e-9)


def test_meteor_stem_stage() -> None:
    # Both pairs align at the stem stage; one chunk of two.
    assert meteor("replacing filters", "replace filter") == 0.9375


def test_meteor_disjoint_is_zero() -> None:
    assert meteor("alpha beta", "gamma delta") == 0.0


def test_meteor_empty_candidate_is_zero() -> None:
    assert meteor("", "reference words") == 0.0


def test_meteor_empty_reference() -> None:
    with pytest.raises(EmptyReferenceError):
        meteor("candidate", "  .  ")


def test_meteor_fragmentation_counts_chunks() -> None:
    # All three tokens match but only "a b" stays contiguous: two chunks.
    assert meteor("c a b", "a b c") == pytest.approx(
        1 - 0.5 * (2 / 3) ** 3, abs=1e-12)


def test_meteor_synonyms_are_symmetric() -> None:
    syn = {"fast": ["quickly"]}
    forward = meteor("it moves fast", "it moves quickly", synonyms=syn)
    backward = meteor("it moves quickly", "it moves fast", synonyms=syn)
    assert forward == backward == pytest.approx(1 - 0.5 / 27, abs=1e-12)


def test_meteor_without_synonyms_table() -> None:
    assert meteor("it moves fast", "it moves quickly") < meteor(
        "it moves fast", "it moves quickly", synonyms={"fast": ["quickly"]})


def test_meteor_prefers_exact_matches_over_more_synonyms() -> None:
    # One exact match beats two synonym matches, even though that leaves
    # fewer total matches: staged alignment, not match-count maximization.
    syn = {"car": ["auto"], "vehicle": ["car"]}
    assert meteor("car vehicle", "car auto", synonyms=syn) == pytest.approx(
        0.25, abs=1e-12)


def test_meteor_duplicate_tokens_align_one_to_one() -> None:
    # Four copies of "the" can only consume the single reference token once.
    value = meteor("the the the the", "the")
    assert value == pytest.approx(0.384615385, abs=1e-9)


@given(text=WORDS)
@settings(max_examples=300, deadline=None)
def test_identity_invariants(text: str) -> None:
    assert bleu(text, text) == 1.0
    m = len(tokenize(text))
    assert meteor(text, text) == pytest.approx(1 - 0.5 / m ** 3, abs=1e-12)
    assert length_ratio(text, text) == 100.0


@given(candidate=st.one_of(st.just(""), WORDS), reference=WORDS)
@settings(max_examples=300, deadline=None)
def test_range_invariants(candidate: str, reference: str) -> None:
    assert 0.0 <= bleu(candidate, reference) <= 1.0
    assert 0.0 <= meteor(candidate, reference) <= 1.0


@given(candidate=st.lists(st.sampled_from("abcde"), min_size=0, max_size=6),
       reference=st.lists(st.sampled_from("abcde"), min_size=1, max_size=6))
@settings(max_examples=300, deadline=None)
def test_small_pairs_match_oracles(candidate: list[str],
                                   reference: list[str]) -> None:
    cand_text, ref_text = " ".join(candidate), " ".join(reference)
    assert bleu(cand_text, ref_text) == pytest.approx(
        bleu_oracle(candidate, reference), abs=1e-9)
    assert meteor(cand_text, ref_text) == pytest.approx(
        meteor_oracle(candidate, reference, porter_stem), abs=1e-9)


def test_length_ratio_counts_code_points() -> None:
    assert length_ratio("ab", "a") == 200.0
    assert length_ratio("", "ab") == 0.0
    assert length_ratio("é", "ée") == 50.0


def test_length_ratio_empty_reference() -> None:
    with pytest.raises(EmptyReferenceError):
        length_ratio("x", "")


def test_score_answer_bundles_all_three() -> None:
    scores = score_answer("replace the filter", "replace the filter")
    assert scores == MetricScores(
        bleu=1.0, meteor=pytest.approx(1 - 0.5 / 27), length_ratio=100.0)


# --- outcome classification ---------------------------------------------------

RUBRIC = Rubric(
    required=(Pattern("substring", "shut off"), Pattern("regex", r"\b14\b")),
    bonus=(Pattern("substring", "hazardous"),),
    forbidden=(Pattern("substring", "out of stock"),),
)


def test_classify_error_precedence() -> None:
    assert classify(None, RUBRIC) is OutcomeCategory.ERROR
    assert classify(RuntimeError("boom"), RUBRIC) is OutcomeCategory.ERROR


def test_classify_hallucination_beats_correct() -> None:
    text = "Shut off the valve. 14 in stock. Item is out of stock."
    assert classify(text, RUBRIC) is OutcomeCategory.HALLUCINATION


def test_classify_correct_with_additional_data() -> None:
    text = "Shut off the valve; 14 remain. Dispose as hazardous waste."
    assert classify(text, RUBRIC) is OutcomeCategory.CORRECT_WITH_ADDITIONAL_DATA


def test_classify_correct() -> None:
    assert classify("Shut off the valve. 14 remain.",
                    RUBRIC) is OutcomeCategory.CORRECT


def test_classify_partial() -> None:
    assert classify("Shut off the valve first.",
                    RUBRIC) is OutcomeCategory.PARTIAL


def test_classify_incorrect() -> None:
    assert classify("No idea.", RUBRIC) is OutcomeCategory.INCORRECT


def test_classify_accepts_answer_objects() -> None:
    class Carrier:
        text = "shut off everything, 14 left"
    assert classify(Carrier(), RUBRIC) is OutcomeCategory.CORRECT


def test_classify_case_insensitive() -> None:
    rubric = Rubric(required=(Pattern("substring", "TORQUE"),))
    assert classify("Apply torque evenly.", rubric) is OutcomeCategory.CORRECT
    rubric = Rubric(required=(Pattern("regex", "torque"),))
    assert classify("TORQUE to 25 Nm.", rubric) is OutcomeCategory.CORRECT


def test_classify_regex_boundary() -> None:
    rubric = Rubric(required=(Pattern("regex", r"\b14\b"),))
    assert classify("there are 140", rubric) is OutcomeCategory.INCORRECT
    assert classify("there are 14", rubric) is OutcomeCategory.CORRECT


def test_pattern_validation() -> None:
    with pytest.raises(ValueError, match="kind"):
        Pattern("glob", "x*")
    with pytest.raises(ValueError, match="regex"):
        Pattern("regex", "[unclosed")
    with pytest.raises(ValueError):
        Pattern.from_dict({"kind": "substring"})
    with pytest.raises(ValueError):
        Pattern.from_dict({"kind": "substring", "value": "x", "y": 1})


def test_rubric_requires_required() -> None:
    with pytest.raises(ValueError, match="required"):
        Rubric(required=())


def test_rubric_rejects_cross_list_duplicates() -> None:
    p = Pattern("substring", "valve")
    with pytest.raises(ValueError, match="both"):
        Rubric(required=(p,), forbidden=(p,))
    # The same pattern twice in one list is allowed (harmless).
    Rubric(required=(p, p))


def test_rubric_from_dict() -> None:
    rubric = Rubric.from_dict({
        "required": [{"kind": "substring", "value": "a"}],
        "bonus": [{"kind": "regex", "value": "b+"}],
    })
    assert rubric.forbidden == ()
    with pytest.raises(ValueError, match="unknown"):
        Rubric.from_dict({"required": [{"kind": "substring", "value": "a"}],
                          "optional": []})


def test_outcome_order_and_success_set() -> None:
    assert [o.value for o in OUTCOME_ORDER] == [
        "error", "incorrect", "partial", "correct",
        "correct_with_additional_data", "hallucination"]
    assert SUCCESS_OUTCOMES == {OutcomeCategory.CORRECT,
                                OutcomeCategory.CORRECT_WITH_ADDITIONAL_DATA}
