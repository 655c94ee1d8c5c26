"""
Chunking and BM25 text retrieval
================================

Text knowledge bases are cut into overlapping token windows, then ranked
against a query with BM25. This walks through both steps on a small page.
"""
from crossrag.textsearch import (
    RetrievalParams,
    bm25_scores,
    chunk_pages,
    retrieve_text,
    tokenize,
)
from crossrag.kb import KnowledgeBaseDescriptor

# Tokens are maximal runs of word characters (minus underscore), lowercased.
print(tokenize("Replace the F-200 filter, then re-pressurize."))

page = ("The pump feeds the primary loop. Bleed the loop before service. "
        "Replace the filter element every six months. Torque the housing "
        "bolts to 25 Nm. Log the torque value in the service book.")

# Small windows so the sliding is visible: 8 tokens per chunk, 3 shared
# between neighbours. Spans widen to cover every character of the page,
# so chunk texts tile the page with no gaps.
chunks = chunk_pages("manual", [page], chunk_tokens=8, overlap_tokens=3)
for c in chunks:
    print(f"page {c.page} [{c.start:3d}:{c.end:3d}] "
          f"{c.token_count} tokens: {c.text!r}")
assert chunks[0].start == 0 and chunks[-1].end == len(page)

# Pages with no tokens produce no chunks at all.
print("tokenless page:", chunk_pages("manual", ["--- ~~ ---"]))

# BM25 scores every chunk; rare query terms earn a higher idf weight and
# repeated query terms count with multiplicity.
print("\nquery: torque housing bolts")
for scored in bm25_scores(tokenize("torque housing bolts"), chunks):
    print(f"  {scored.score:6.3f}  {scored.chunk.text!r}")

# retrieve_text wires the two together for a registered knowledge base.
import tempfile
from pathlib import Path

source = Path(tempfile.mkdtemp(prefix="crossrag-demo-")) / "manual.txt"
source.write_text(page, encoding="utf-8")
kb = KnowledgeBaseDescriptor(id="manual", kind="text", source_path=source,
                             human_summary="service manual")
top = retrieve_text("filter replacement interval", kb, k=2,
                    params=RetrievalParams(chunk_tokens=8, overlap_tokens=3))
print("\ntop 2 for 'filter replacement interval':")
for scored in top:
    print(f"  {scored.score:6.3f}  {scored.chunk.text!r}")
