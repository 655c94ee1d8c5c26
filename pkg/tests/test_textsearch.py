"""Tokenization, page-bounded chunking, and BM25 ranking."""
from __future__ import annotations

import math
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossrag.errors import (
    BadChunkParamsError,
    NoChunksError,
    WrongKbKindError,
)
from crossrag.kb import KnowledgeBaseDescriptor
from crossrag.textsearch import (
    Chunk,
    RetrievalParams,
    bm25_scores,
    chunk_pages,
    retrieve_text,
    tokenize,
)
from oracle_metrics import bm25_oracle

VOCAB = ("pump", "seal", "valve", "filter", "oil", "torque")


def _chunk(text: str, page: int = 1, start: int = 0) -> Chunk:
    return Chunk(kb_id="kb", page=page, start=start, end=start + len(text),
                 text=text, token_count=len(tokenize(text)))


@pytest.mark.parametrize(
    ("text", "tokens"),
    [
        ("Replace the O-ring.", ["replace", "the", "o", "ring"]),
        ("", []),
        ("ABC abc", ["abc", "abc"]),
        ("o_ring", ["o", "ring"]),
        ("  \t\n ", []),
        ("x2, y-3", ["x2", "y", "3"]),
        ("Café №7", ["café", "7"]),
    ],
)
def test_tokenize(text: str, tokens: list[str]) -> None:
    assert tokenize(text) == tokens


def test_chunk_windows_arithmetic() -> None:
    # 100 tokens, chunk=40, overlap=10: windows start at token 0, 30, 60, 90.
    page = " ".join(f"w{i}" for i in range(100))
    chunks = chunk_pages("kb", [page], chunk_tokens=40, overlap_tokens=10)
    assert [c.token_count for c in chunks] == [40, 40, 40, 10]
    firsts = [tokenize(c.text)[0] for c in chunks]
    assert firsts == ["w0", "w30", "w60", "w90"]


def test_chunk_short_page_single_window() -> None:
    chunks = chunk_pages("kb", ["only five tokens right here"], chunk_tokens=40,
                         overlap_tokens=10)
    assert len(chunks) == 1
    assert chunks[0].token_count == 5
    assert chunks[0].text == "only five tokens right here"


@pytest.mark.parametrize(
    ("chunk_tokens", "overlap_tokens"),
    [(40, 40), (40, 41), (10, -1), (0, 0), (-3, 0)],
)
def test_chunk_bad_params(chunk_tokens: int, overlap_tokens: int) -> None:
    with pytest.raises(BadChunkParamsError):
        chunk_pages("kb", ["some text"], chunk_tokens, overlap_tokens)


def test_chunks_never_cross_pages() -> None:
    pages = ["alpha beta gamma", "delta epsilon"]
    chunks = chunk_pages("kb", pages, chunk_tokens=2, overlap_tokens=0)
    for chunk in chunks:
        page = pages[chunk.page - 1]
        assert chunk.text == page[chunk.start:chunk.end]
    assert {c.page for c in chunks} == {1, 2}


def test_tokenless_page_yields_no_chunks() -> None:
    chunks = chunk_pages("kb", ["...", "real words"], chunk_tokens=5,
                         overlap_tokens=0)
    assert all(c.page == 2 for c in chunks)


@given(
    pages=st.lists(
        st.text(alphabet="ab c.\n-", min_size=0, max_size=60),
        min_size=1, max_size=4),
    chunk_tokens=st.integers(min_value=1, max_value=8),
    data=st.data(),
)
@settings(max_examples=200, deadline=None)
def test_chunk_coverage_property(pages, chunk_tokens, data) -> None:
    overlap = data.draw(st.integers(min_value=0, max_value=chunk_tokens - 1))
    chunks = chunk_pages("kb", pages, chunk_tokens, overlap)
    for page_no, page in enumerate(pages, start=1):
        page_chunks = [c for c in chunks if c.page == page_no]
        if not tokenize(page):
            assert page_chunks == []
            continue
        # Spans tile the page: start at 0, end at len(page), no gaps.
        assert page_chunks[0].start == 0
        assert page_chunks[-1].end == len(page)
        for prev, nxt in zip(page_chunks, page_chunks[1:]):
            assert nxt.start <= prev.end
        for chunk in page_chunks:
            assert chunk.text == page[chunk.start:chunk.end]
            assert 1 <= chunk.token_count <= chunk_tokens


def test_bm25_absent_term_scores_zero() -> None:
    chunks = [_chunk("pump seal"), _chunk("valve filter", page=2)]
    scored = bm25_scores(["torque"], chunks)
    assert [s.score for s in scored] == [0.0, 0.0]


def test_bm25_single_chunk_hand_value() -> None:
    # N=1, df=1 for both terms: idf = ln(0.5/1.5 + 1); tf=1 makes the
    # saturation factor (k1+1)/(1+k1) collapse to 1.
    scored = bm25_scores(["pump", "seal"], [_chunk("pump seal")])
    assert scored[0].score == pytest.approx(2 * math.log(4 / 3), abs=1e-12)


def test_bm25_matching_chunk_ranks_first() -> None:
    chunks = [_chunk("valve filter"), _chunk("pump seal", page=2)]
    scored = bm25_scores(["pump"], chunks)
    assert scored[0].chunk.page == 2
    assert scored[0].score > scored[1].score == 0.0


def test_bm25_query_multiplicity_counts() -> None:
    chunks = [_chunk("pump seal"), _chunk("valve oil", page=2)]
    once = bm25_scores(["pump"], chunks)[0].score
    twice = bm25_scores(["pump", "pump"], chunks)[0].score
    assert twice == pytest.approx(2 * once, abs=1e-12)


def test_bm25_tie_breaks_by_page_then_start() -> None:
    chunks = [
        _chunk("pump seal", page=2, start=0),
        _chunk("pump seal", page=1, start=7),
        _chunk("pump seal", page=1, start=0),
    ]
    scored = bm25_scores(["pump"], chunks)
    assert [(s.chunk.page, s.chunk.start) for s in scored] == [
        (1, 0), (1, 7), (2, 0)]


def test_bm25_empty_chunk_set() -> None:
    with pytest.raises(NoChunksError):
        bm25_scores(["pump"], [])


@given(
    texts=st.lists(
        st.lists(st.sampled_from(VOCAB), min_size=1, max_size=8).map(" ".join),
        min_size=1, max_size=10),
    query=st.lists(st.sampled_from(VOCAB), min_size=1, max_size=4),
)
@settings(max_examples=200, deadline=None)
def test_bm25_matches_oracle(texts: list[str], query: list[str]) -> None:
    chunks = [_chunk(text, page=i + 1) for i, text in enumerate(texts)]
    expected = bm25_oracle(query, [tokenize(t) for t in texts])
    scored = bm25_scores(query, chunks)
    by_page = {s.chunk.page: s.score for s in scored}
    for i, want in enumerate(expected):
        assert by_page[i + 1] == pytest.approx(want, abs=1e-9)
    scores = [s.score for s in scored]
    assert scores == sorted(scores, reverse=True)


def test_retrieve_text_top_k(tmp_path: Path) -> None:
    page = " ".join(f"word{i} pump" if i % 3 == 0 else f"word{i} seal"
                    for i in range(60))
    path = tmp_path / "doc.txt"
    path.write_text(page, encoding="utf-8")
    kb = KnowledgeBaseDescriptor(id="doc", kind="text", source_path=path,
                                 human_summary="s")
    params = RetrievalParams(chunk_tokens=10, overlap_tokens=2)
    hits = retrieve_text("pump", kb, k=3, params=params)
    assert len(hits) == 3
    scores = [h.score for h in hits]
    assert scores == sorted(scores, reverse=True)


def test_retrieve_text_k_larger_than_corpus(tmp_path: Path) -> None:
    path = tmp_path / "doc.txt"
    path.write_text("alpha beta", encoding="utf-8")
    kb = KnowledgeBaseDescriptor(id="doc", kind="text", source_path=path,
                                 human_summary="s")
    hits = retrieve_text("alpha", kb, k=5)
    assert len(hits) == 1


def test_retrieve_text_wrong_kind(data_dir: Path) -> None:
    kb = KnowledgeBaseDescriptor(id="inventory", kind="table",
                                 source_path=data_dir / "inventory.csv",
                                 human_summary="s")
    with pytest.raises(WrongKbKindError):
        retrieve_text("pump", kb, k=3)


def test_retrieve_text_tokenless_document(tmp_path: Path) -> None:
    path = tmp_path / "doc.txt"
    path.write_text("....", encoding="utf-8")
    kb = KnowledgeBaseDescriptor(id="doc", kind="text", source_path=path,
                                 human_summary="s")
    with pytest.raises(NoChunksError):
        retrieve_text("pump", kb, k=3)


def test_retrieve_text_accepts_preloaded_pages(data_dir: Path) -> None:
    kb = KnowledgeBaseDescriptor(id="manual", kind="text",
                                 source_path=data_dir / "manual.txt",
                                 human_summary="s")
    from_file = retrieve_text("filter replacement", kb, k=2)
    from crossrag.kb import load_text_source
    pages = load_text_source(kb.source_path).pages
    preloaded = retrieve_text("filter replacement", kb, k=2, pages=pages)
    assert from_file == preloaded
