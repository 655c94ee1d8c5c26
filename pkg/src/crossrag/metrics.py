"""Answer-quality measures and rubric-based outcome classification.

bleu: modified n-gram precision with brevity penalty, n = 1..min(max_n, |cand|),
uniform weights, epsilon floor for zero precisions.

meteor: staged one-to-one unigram alignment (exact, then Porter stem, then
synonym table when provided). The alignment maximizes match counts stage by
stage and, among those maxima, minimizes the chunk count; the search is
exhaustive up to 20 candidate tokens and greedy left-to-right beyond that.

length_ratio: candidate length as a percentage of reference length, counting
Unicode scalar values.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyReferenceError
from .stemmer import porter_stem
from .textsearch import tokenize

EPSILON = 1e-9
EXHAUSTIVE_ALIGNMENT_LIMIT = 20
_ALIGNMENT_NODE_BUDGET = 250_000


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, reference: str, max_n: int = 4) -> float:
    """Sentence BLEU of `candidate` against a single `reference`."""
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not ref:
        raise EmptyReferenceError("reference has no tokens")
    c, r = len(cand), len(ref)
    if c == 0:
        return 0.0
    n_max = min(max_n, c)
    log_sum = 0.0
    for n in range(1, n_max + 1):
        cand_ngrams = _ngram_counts(cand, n)
        ref_ngrams = _ngram_counts(ref, n)
        clipped = sum(min(count, ref_ngrams[gram])
                      for gram, count in cand_ngrams.items())
        total = c - n + 1
        p = clipped / total
        log_sum += math.log(p if p > 0.0 else EPSILON)
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_sum / n_max)


# --- METEOR ------------------------------------------------------------------

class _SearchBudgetExceeded(Exception):
    pass


def _pair_stage(c_tok: str, r_tok: str, c_stem: str, r_stem: str,
                synonyms: dict | None) -> int | None:
    if c_tok == r_tok:
        return 0
    if c_stem == r_stem:
        return 1
    if synonyms is not None and (r_tok in synonyms.get(c_tok, ())
                                 or c_tok in synonyms.get(r_tok, ())):
        return 2
    return None


def _target_counts(compat: list[list[int | None]], nc: int, nr: int) -> tuple:
    """Stage-wise maximal match counts: most exact, then stem, then synonym."""
    base = min(nc, nr) + 1
    weight = (base * base, base, 1)
    matrix = np.zeros((nc, nr), dtype=np.int64)
    for i in range(nc):
        row = compat[i]
        for j in range(nr):
            if row[j] is not None:
                matrix[i, j] = weight[row[j]]
    rows, cols = linear_sum_assignment(matrix, maximize=True)
    counts = [0, 0, 0]
    for i, j in zip(rows, cols):
        if matrix[i, j] > 0:
            counts[compat[i][j]] += 1
    return tuple(counts)


def _chunk_count(pairs: list[tuple[int, int]]) -> int:
    """Chunks of an alignment: runs contiguous and in order on both sides."""
    if not pairs:
        return 0
    pairs = sorted(pairs)
    chunks = 1
    for (c0, r0), (c1, r1) in zip(pairs, pairs[1:]):
        if not (c1 == c0 + 1 and r1 == r0 + 1):
            chunks += 1
    return chunks


def _min_chunks_exhaustive(compat: list[list[int | None]], nc: int, nr: int,
                           target: tuple) -> int | None:
    """Fewest chunks among alignments hitting `target` exactly, or None when
    the node budget runs out."""
    potential = [[0, 0, 0] for _ in range(nc + 1)]
    for i in range(nc - 1, -1, -1):
        stages = {s for s in compat[i] if s is not None}
        for s in range(3):
            potential[i][s] = potential[i + 1][s] + (1 if s in stages else 0)
    best: int | None = None
    nodes = 0

    def dfs(i: int, used: int, counts: list[int], chunks: int,
            last_c: int, last_r: int) -> None:
        nonlocal best, nodes
        nodes += 1
        if nodes > _ALIGNMENT_NODE_BUDGET:
            raise _SearchBudgetExceeded
        if best is not None and chunks >= best:
            return
        for s in range(3):
            if counts[s] + potential[i][s] < target[s]:
                return
        if i == nc:
            if tuple(counts) == target:
                best = chunks
            return
        # Try continuing the current chunk first so tight alignments are
        # found early and prune the rest of the search.
        cont = last_r + 1 if last_c == i - 1 else -1
        order = []
        if 0 <= cont < nr and compat[i][cont] is not None and not used >> cont & 1:
            order.append(cont)
        for j in range(nr):
            if j != cont and compat[i][j] is not None and not used >> j & 1:
                order.append(j)
        for j in order:
            s = compat[i][j]
            if counts[s] + 1 > target[s]:
                continue
            counts[s] += 1
            extends = last_c == i - 1 and last_r == j - 1
            dfs(i + 1, used | 1 << j, counts,
                chunks if extends else chunks + 1, i, j)
            counts[s] -= 1
        dfs(i + 1, used, counts, chunks, last_c, last_r)

    try:
        dfs(0, 0, [0, 0, 0], 0, -2, -2)
    except _SearchBudgetExceeded:
        return None
    return best


def _greedy_alignment(compat: list[list[int | None]], nc: int,
                      nr: int) -> tuple[tuple, int]:
    """Stage-by-stage left-to-right pairing; used beyond the exhaustive limit."""
    used = [False] * nr
    pairs: dict[int, int] = {}
    counts = [0, 0, 0]
    for stage in (0, 1, 2):
        for i in range(nc):
            if i in pairs:
                continue
            for j in range(nr):
                if not used[j] and compat[i][j] == stage:
                    pairs[i] = j
                    used[j] = True
                    counts[stage] += 1
                    break
    return tuple(counts), _chunk_count(sorted(pairs.items()))


def _align(cand: list[str], ref: list[str],
           synonyms: dict | None) -> tuple[int, int]:
    """Match count and chunk count of the best staged alignment."""
    nc, nr = len(cand), len(ref)
    if nc == 0 or nr == 0:
        return 0, 0
    cand_stems = [porter_stem(t) for t in cand]
    ref_stems = [porter_stem(t) for t in ref]
    compat: list[list[int | None]] = [
        [_pair_stage(cand[i], ref[j], cand_stems[i], ref_stems[j], synonyms)
         for j in range(nr)]
        for i in range(nc)
    ]
    target = _target_counts(compat, nc, nr)
    if sum(target) == 0:
        return 0, 0
    if nc <= EXHAUSTIVE_ALIGNMENT_LIMIT:
        chunks = _min_chunks_exhaustive(compat, nc, nr, target)
        if chunks is not None:
            return sum(target), chunks
    counts, chunks = _greedy_alignment(compat, nc, nr)
    return sum(counts), chunks


def meteor(candidate: str, reference: str,
           synonyms: dict[str, list[str]] | None = None) -> float:
    """METEOR score of `candidate` against a single `reference`."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not ref:
        raise EmptyReferenceError("reference has no tokens")
    matches, chunks = _align(cand, ref, synonyms)
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1.0 - penalty)


def length_ratio(candidate: str, reference: str) -> float:
    """Candidate length as a percentage of reference length (code points)."""
    if len(reference) == 0:
        raise EmptyReferenceError("reference has no characters")
    return 100.0 * len(candidate) / len(reference)


# --- outcome classification ---------------------------------------------------

class OutcomeCategory(Enum):
    ERROR = "error"
    INCORRECT = "incorrect"
    PARTIAL = "partial"
    CORRECT = "correct"
    CORRECT_WITH_ADDITIONAL_DATA = "correct_with_additional_data"
    HALLUCINATION = "hallucination"


# Categories in reporting order.
OUTCOME_ORDER = (
    OutcomeCategory.ERROR,
    OutcomeCategory.INCORRECT,
    OutcomeCategory.PARTIAL,
    OutcomeCategory.CORRECT,
    OutcomeCategory.CORRECT_WITH_ADDITIONAL_DATA,
    OutcomeCategory.HALLUCINATION,
)

SUCCESS_OUTCOMES = frozenset(
    {OutcomeCategory.CORRECT, OutcomeCategory.CORRECT_WITH_ADDITIONAL_DATA})


@dataclass(frozen=True)
class Pattern:
    """A case-insensitive substring or regex test against the answer text."""

    kind: str
    value: str

    def __post_init__(self) -> None:
        if self.kind not in ("substring", "regex"):
            raise ValueError(f"pattern kind must be substring or regex, got {self.kind!r}")
        if self.kind == "regex":
            try:
                re.compile(self.value)
            except re.error as exc:
                raise ValueError(f"bad regex {self.value!r}: {exc}") from exc

    def matches(self, text: str) -> bool:
        if self.kind == "substring":
            return self.value.lower() in text.lower()
        return re.search(self.value, text, re.IGNORECASE) is not None

    @staticmethod
    def from_dict(raw: dict) -> "Pattern":
        if set(raw.keys()) != {"kind", "value"}:
            raise ValueError(f"pattern must have exactly kind and value, got {sorted(raw)}")
        return Pattern(kind=raw["kind"], value=raw["value"])


@dataclass(frozen=True)
class Rubric:
    """Required / bonus / forbidden fact patterns for one task."""

    required: tuple[Pattern, ...]
    bonus: tuple[Pattern, ...] = ()
    forbidden: tuple[Pattern, ...] = ()

    def __post_init__(self) -> None:
        if not self.required:
            raise ValueError("rubric must have at least one required pattern")
        seen: dict[Pattern, str] = {}
        for label, patterns in (("required", self.required),
                                ("bonus", self.bonus),
                                ("forbidden", self.forbidden)):
            for p in patterns:
                if p in seen and seen[p] != label:
                    raise ValueError(
                        f"pattern {p.value!r} appears in both {seen[p]} and {label}")
                seen[p] = label

    @staticmethod
    def from_dict(raw: dict) -> "Rubric":
        allowed = {"required", "bonus", "forbidden"}
        extra = raw.keys() - allowed
        if extra:
            raise ValueError(f"unknown rubric keys: {sorted(extra)}")
        def patterns(key: str) -> tuple[Pattern, ...]:
            return tuple(Pattern.from_dict(p) for p in raw.get(key, []))
        return Rubric(required=patterns("required"), bonus=patterns("bonus"),
                      forbidden=patterns("forbidden"))


@dataclass(frozen=True)
class MetricScores:
    bleu: float
    meteor: float
    length_ratio: float


def score_answer(candidate: str, reference: str, max_n: int = 4,
                 synonyms: dict[str, list[str]] | None = None) -> MetricScores:
    return MetricScores(
        bleu=bleu(candidate, reference, max_n=max_n),
        meteor=meteor(candidate, reference, synonyms=synonyms),
        length_ratio=length_ratio(candidate, reference),
    )


def classify(result, rubric: Rubric) -> OutcomeCategory:
    """Classify a pipeline result against a rubric.

    `result` is the answer text (or an object with a `text` attribute); a
    None result or an exception means the pipeline failed. Precedence:
    Error, then Hallucination, then the correctness ladder.
    """
    if result is None or isinstance(result, BaseException):
        return OutcomeCategory.ERROR
    text = result if isinstance(result, str) else result.text
    if any(p.matches(text) for p in rubric.forbidden):
        return OutcomeCategory.HALLUCINATION
    hits = sum(1 for p in rubric.required if p.matches(text))
    if hits == len(rubric.required):
        if any(p.matches(text) for p in rubric.bonus):
            return OutcomeCategory.CORRECT_WITH_ADDITIONAL_DATA
        return OutcomeCategory.CORRECT
    if hits > 0:
        return OutcomeCategory.PARTIAL
    return OutcomeCategory.INCORRECT
