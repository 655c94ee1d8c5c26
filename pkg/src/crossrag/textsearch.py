"""Lexical text retrieval: tokenization, page-bounded chunking, BM25 ranking.

The tokenizer is shared with the quality metrics: lowercase, split on any
maximal run of non-alphanumeric characters, drop empties.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

from .errors import BadChunkParamsError, NoChunksError, WrongKbKindError
from .kb import KnowledgeBaseDescriptor, TextSource, load_text_source

# Unicode alphanumerics; underscore is a separator like any other punctuation.
_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    return [m.group().lower() for m in _TOKEN_RE.finditer(text)]


def _token_spans(text: str) -> list[tuple[int, int]]:
    return [m.span() for m in _TOKEN_RE.finditer(text)]


@dataclass(frozen=True)
class Chunk:
    """A token window of one page; `text` is `page[start:end]` verbatim."""

    kb_id: str
    page: int  # 1-based
    start: int
    end: int
    text: str
    token_count: int


@dataclass(frozen=True)
class ScoredChunk:
    chunk: Chunk
    score: float


@dataclass(frozen=True)
class RetrievalParams:
    chunk_tokens: int = 200
    overlap_tokens: int = 40
    k: int = 3
    k1: float = 1.2
    b: float = 0.75


def chunk_pages(kb_id: str, pages: tuple[str, ...] | list[str],
                chunk_tokens: int = 200, overlap_tokens: int = 40) -> list[Chunk]:
    """Cut pages into sliding token windows that never cross a page boundary.

    Window starts advance by `chunk_tokens - overlap_tokens`; a final short
    window is kept. Character spans are widened so that, page by page, the
    chunks cover every character: the first window starts at character 0 and
    each window runs up to the first token of the next window (or page end).
    Pages without any token yield no chunks.
    """
    if chunk_tokens < 1:
        raise BadChunkParamsError(f"chunk_tokens must be >= 1, got {chunk_tokens}")
    if overlap_tokens < 0 or overlap_tokens >= chunk_tokens:
        raise BadChunkParamsError(
            f"overlap_tokens must be in [0, chunk_tokens), got {overlap_tokens}")
    stride = chunk_tokens - overlap_tokens
    chunks: list[Chunk] = []
    for page_no, page in enumerate(pages, start=1):
        spans = _token_spans(page)
        n = len(spans)
        for ws in range(0, n, stride):
            we = min(ws + chunk_tokens, n)
            start = 0 if ws == 0 else spans[ws][0]
            end = len(page) if we == n else spans[we][0]
            chunks.append(Chunk(kb_id=kb_id, page=page_no, start=start, end=end,
                                text=page[start:end], token_count=we - ws))
    return chunks


def bm25_scores(query_tokens: list[str], chunks: list[Chunk],
                k1: float = 1.2, b: float = 0.75) -> list[ScoredChunk]:
    """Score every chunk against the query, highest first.

    idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1) over the chunk set; query
    tokens contribute with multiplicity. Ties break by (page, span start).
    """
    if not chunks:
        raise NoChunksError("cannot score an empty chunk set")
    term_counts = [Counter(tokenize(c.text)) for c in chunks]
    n = len(chunks)
    avgdl = sum(c.token_count for c in chunks) / n
    df = Counter()
    for counts in term_counts:
        df.update(counts.keys())
    scored = []
    for chunk, counts in zip(chunks, term_counts):
        norm = k1 * (1.0 - b + b * (chunk.token_count / avgdl)) if avgdl > 0 else k1
        score = 0.0
        for term in query_tokens:
            tf = counts.get(term, 0)
            if tf == 0:
                continue
            idf = math.log((n - df[term] + 0.5) / (df[term] + 0.5) + 1.0)
            score += idf * (tf * (k1 + 1.0)) / (tf + norm)
        scored.append(ScoredChunk(chunk=chunk, score=score))
    scored.sort(key=lambda s: (-s.score, s.chunk.page, s.chunk.start, s.chunk.kb_id))
    return scored


def retrieve_text(subquery: str, kb: KnowledgeBaseDescriptor, k: int,
                  pages: tuple[str, ...] | None = None,
                  params: RetrievalParams = RetrievalParams()) -> list[ScoredChunk]:
    """Top-k BM25 chunks of a text knowledge base for one subquery."""
    if kb.kind != "text":
        raise WrongKbKindError(f"kb {kb.id!r} is {kb.kind!r}, expected text")
    if pages is None:
        source: TextSource = load_text_source(kb.source_path)
        pages = source.pages
    chunks = chunk_pages(kb.id, pages, params.chunk_tokens, params.overlap_tokens)
    if not chunks:
        raise NoChunksError(f"kb {kb.id!r} has no lexical tokens")
    ranked = bm25_scores(tokenize(subquery), chunks, k1=params.k1, b=params.b)
    return ranked[:max(0, k)]
