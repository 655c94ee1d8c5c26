"""
Answer quality metrics
======================

Answers are scored against a reference with BLEU, METEOR, and a length
ratio, then classified against a rubric of required / bonus / forbidden
facts. All of it is pure string work, no model in the loop.
"""
from crossrag.metrics import (
    Pattern,
    Rubric,
    bleu,
    classify,
    length_ratio,
    meteor,
    score_answer,
)
from crossrag.stemmer import porter_stem

reference = "the cat sat on the mat"

# BLEU is n-gram precision up to 4-grams times a brevity penalty. Orders
# with no match are floored at 1e-9 instead of zeroing the whole product,
# so a shuffled candidate scores tiny but nonzero.
for candidate in (reference, "the cat the sat on mat", "a dog stood outside"):
    print(f"bleu={bleu(candidate, reference):.3e}  {candidate!r}")

# METEOR aligns tokens in three stages: exact, Porter stem, then synonym.
# "cats" reaches "cat" through the stemmer, but stem('sitting') is "sit",
# not "sat", so that pair only matches once a synonym table says so.
# Synonym keys are surface tokens, not stems.
print("\nstem('sitting') =", porter_stem("sitting"))
candidate = "the cats were sitting on the mat"
print("meteor, no synonyms:     ",
      round(meteor(candidate, reference), 4))
print("meteor, sitting -> sat:  ",
      round(meteor(candidate, reference, synonyms={"sitting": ["sat"]}), 4))

# A perfect candidate is still penalized for being one chunk of m matches:
# the score is 1 - 0.5/m^3, not exactly 1.
print("meteor(ref, ref) =", meteor(reference, reference))

# length_ratio is plain code-point percentage.
print("length_ratio =", length_ratio("half the size.", "exactly twice as long"))

# score_answer bundles all three for the evaluation harness.
print("\n", score_answer("the cat sat on the mat today", reference), sep="")

# Rubrics turn an answer into an outcome category. Required facts must all
# appear, bonus facts upgrade a correct answer, forbidden facts trump
# everything.
rubric = Rubric(
    required=(Pattern("substring", "25 Nm"),
              Pattern("regex", r"cross\s+pattern")),
    bonus=(Pattern("substring", "torque wrench"),),
    forbidden=(Pattern("substring", "50 Nm"),))

answers = [
    "Tighten to 25 Nm in a cross pattern.",
    "Tighten to 25 Nm in a cross pattern with a torque wrench.",
    "Tighten to 25 Nm.",
    "The manual does not say.",
    "Tighten to 50 Nm in a cross pattern.",
    None,  # pipeline failure
]
for answer in answers:
    print(f"{classify(answer, rubric).value:30s} {answer!r}")
