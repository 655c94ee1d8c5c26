"""Brute-force reference implementations used only by the test suite.

Everything here trades speed for obviousness: BLEU counts n-grams with
plain dict loops, the alignment search enumerates every one-to-one
mapping, and BM25 recomputes document frequencies per query token. The
package is expected to agree with these to within 1e-9 on small inputs.
"""
from __future__ import annotations

import math
from itertools import product

EPSILON = 1e-9


# --- BLEU -----------------------------------------------------------------------

def bleu_oracle(candidate: list[str], reference: list[str],
                max_n: int = 4) -> float:
    if not candidate:
        return 0.0
    orders = range(1, min(max_n, len(candidate)) + 1)
    log_sum = 0.0
    for n in orders:
        cand_ngrams = [tuple(candidate[i:i + n])
                       for i in range(len(candidate) - n + 1)]
        ref_ngrams = [tuple(reference[i:i + n])
                      for i in range(len(reference) - n + 1)]
        clipped = 0
        for gram in set(cand_ngrams):
            clipped += min(cand_ngrams.count(gram), ref_ngrams.count(gram))
        precision = clipped / len(cand_ngrams)
        log_sum += math.log(max(precision, EPSILON))
    geo_mean = math.exp(log_sum / len(list(orders)))
    if len(candidate) < len(reference):
        brevity = math.exp(1.0 - len(reference) / len(candidate))
    else:
        brevity = 1.0
    return brevity * geo_mean


# --- METEOR ---------------------------------------------------------------------

def _compatible(c_tok: str, r_tok: str, stem, synonyms) -> int | None:
    if c_tok == r_tok:
        return 0
    if stem(c_tok) == stem(r_tok):
        return 1
    if synonyms and (r_tok in synonyms.get(c_tok, ())
                     or c_tok in synonyms.get(r_tok, ())):
        return 2
    return None

def _chunks_of(pairs: list[tuple[int, int]]) -> int:
    pairs = sorted(pairs)
    chunks = 0
    previous = None
    for c, r in pairs:
        if previous is None or (c, r) != (previous[0] + 1, previous[1] + 1):
            chunks += 1
        previous = (c, r)
    return chunks


def best_alignment_oracle(candidate: list[str], reference: list[str],
                          stem, synonyms=None) -> tuple[int, int]:
    """(matches, chunks) after enumerating every one-to-one alignment.

    Maximizes exact-match count, then stem-match count, then synonym-match
    count, then minimizes chunks. Exponential; keep inputs under ~8 tokens.
    """
    nc, nr = len(candidate), len(reference)
    options: list[list[int | None]] = []
    for i in range(nc):
        slots: list[int | None] = [None]
        for j in range(nr):
            if _compatible(candidate[i], reference[j], stem, synonyms) is not None:
                slots.append(j)
        options.append(slots)

    best_counts: tuple[int, int, int] | None = None
    best_chunks = 0
    for assignment in product(*options) if options else [()]:
        used = [j for j in assignment if j is not None]
        if len(used) != len(set(used)):
            continue
        counts = [0, 0, 0]
        pairs = []
        for i, j in enumerate(assignment):
            if j is None:
                continue
            counts[_compatible(candidate[i], reference[j], stem, synonyms)] += 1
            pairs.append((i, j))
        key = tuple(counts)
        chunks = _chunks_of(pairs)
        if best_counts is None or key > best_counts \
                or (key == best_counts and chunks < best_chunks):
            best_counts, best_chunks = key, chunks
    assert best_counts is not None
    return sum(best_counts), best_chunks


def meteor_oracle(candidate: list[str], reference: list[str],
                  stem, synonyms=None) -> float:
    matches, chunks = best_alignment_oracle(candidate, reference, stem, synonyms)
    if matches == 0:
        return 0.0
    precision = matches / len(candidate)
    recall = matches / len(reference)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1 - penalty)


# --- BM25 -----------------------------------------------------------------------

def bm25_oracle(query_tokens: list[str], chunk_tokens: list[list[str]],
                k1: float = 1.2, b: float = 0.75) -> list[float]:
    """One score per chunk, recomputed straight from the formula."""
    total = len(chunk_tokens)
    avgdl = sum(len(c) for c in chunk_tokens) / total
    scores = []
    for tokens in chunk_tokens:
        dl = len(tokens)
        score = 0.0
        for term in query_tokens:
            df = sum(1 for other in chunk_tokens if term in other)
            idf = math.log((total - df + 0.5) / (df + 0.5) + 1.0)
            tf = tokens.count(term)
            score += idf * (tf * (k1 + 1)) / (tf + k1 * (1 - b + b * dl / avgdl))
        scores.append(score)
    return scores
