"""Knowledge-base registry and the JSON summary handed to the router.

A knowledge base is either a `text` source (UTF-8 document(s), pages
delimited by form feed U+000C) or a `table` source (one CSV file). Sources
are parsed eagerly at registration so bad inputs fail fast. The registry is
immutable after construction; `register_kb` returns a new registry.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    DuplicateIdError,
    EmptyRegistryError,
    ManifestSyntaxError,
    MalformedCsvError,
    SourceUnreadableError,
    UnknownKbError,
)
from .tables import Table, read_csv_rows, table_from_rows

PAGE_BREAK = ""
PREVIEW_ROWS = 5
KB_KINDS = ("text", "table")

_ID_RE = re.compile(r"[A-Za-z0-9_.-]+\Z")

# Canonical JSON settings used everywhere a document must be reproducible.
_CANONICAL = {"indent": 2, "sort_keys": True, "ensure_ascii": False}


def canonical_json(document) -> str:
    return json.dumps(document, **_CANONICAL)


@dataclass(frozen=True)
class KnowledgeBaseDescriptor:
    """Identity and location of one knowledge base."""

    id: str
    kind: str
    source_path: Path
    human_summary: str

    def __post_init__(self) -> None:
        if not _ID_RE.match(self.id):
            raise ValueError(
                f"kb id must match [A-Za-z0-9_.-]+, got {self.id!r}")
        if self.kind not in KB_KINDS:
            raise ValueError(f"kb kind must be one of {KB_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "source_path", Path(self.source_path))


@dataclass(frozen=True)
class TextSource:
    """Loaded text content: pages flattened across the source documents."""

    pages: tuple[str, ...]
    document_count: int

    @property
    def page_count(self) -> int:
        return len(self.pages)


@dataclass(frozen=True)
class TableSchemaPreview:
    """Headers, inferred types, and the first rows of a table source."""

    headers: tuple[str, ...]
    inferred_types: tuple[str, ...]
    preview_rows: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class TableSource:
    table: Table
    preview: TableSchemaPreview


@dataclass(frozen=True)
class RegisteredKb:
    descriptor: KnowledgeBaseDescriptor
    payload: TextSource | TableSource


class Registry:
    """Immutable collection of registered knowledge bases."""

    def __init__(self, entries: tuple[RegisteredKb, ...] = ()) -> None:
        self._entries = tuple(entries)
        self._by_id = {e.descriptor.id: e for e in self._entries}

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __contains__(self, kb_id: str) -> bool:
        return kb_id in self._by_id

    def ids(self) -> tuple[str, ...]:
        return tuple(e.descriptor.id for e in self._entries)

    def get(self, kb_id: str) -> RegisteredKb:
        try:
            return self._by_id[kb_id]
        except KeyError:
            raise UnknownKbError(kb_id) from None

    def descriptor(self, kb_id: str) -> KnowledgeBaseDescriptor:
        return self.get(kb_id).descriptor

    def kind(self, kb_id: str) -> str:
        return self.get(kb_id).descriptor.kind


def _split_pages(text: str) -> tuple[str, ...]:
    pages = text.split(PAGE_BREAK)
    # Form feed acts as a page terminator: one trailing empty page is noise.
    if len(pages) > 1 and pages[-1] == "":
        pages.pop()
    return tuple(pages)


def load_text_source(path: Path) -> TextSource:
    """Read a text knowledge base: a UTF-8 file or a directory of .txt files."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix == ".txt")
        if not files:
            raise SourceUnreadableError(f"{path}: directory has no .txt files")
    elif path.is_file():
        files = [path]
    else:
        raise SourceUnreadableError(f"{path}: no such file")
    pages: list[str] = []
    for file in files:
        try:
            text = file.read_text(encoding="utf-8")
        except OSError as exc:
            raise SourceUnreadableError(f"{file}: {exc}") from exc
        except UnicodeDecodeError as exc:
            raise SourceUnreadableError(f"{file}: not UTF-8 text ({exc})") from exc
        pages.extend(_split_pages(text))
    return TextSource(pages=tuple(pages), document_count=len(files))


def load_table_source(path: Path, kb_id: str) -> TableSource:
    path = Path(path)
    if path.is_dir():
        raise SourceUnreadableError(f"{path}: expected a CSV file, got a directory")
    headers, rows = read_csv_rows(path)
    table = table_from_rows(kb_id, headers, rows)
    preview = TableSchemaPreview(
        headers=headers,
        inferred_types=table.column_types,
        preview_rows=tuple(rows[:PREVIEW_ROWS]),
    )
    return TableSource(table=table, preview=preview)


def _load_payload(descriptor: KnowledgeBaseDescriptor) -> TextSource | TableSource:
    if descriptor.kind == "text":
        return load_text_source(descriptor.source_path)
    return load_table_source(descriptor.source_path, descriptor.id)


def register_kb(descriptor: KnowledgeBaseDescriptor,
                registry: Registry | None = None) -> Registry:
    """Return a new registry extended with `descriptor` (sources parsed now)."""
    registry = registry if registry is not None else Registry()
    if descriptor.id in registry:
        raise DuplicateIdError(f"duplicate knowledge base id: {descriptor.id!r}")
    payload = _load_payload(descriptor)
    return Registry(tuple(registry) + (RegisteredKb(descriptor, payload),))


@dataclass(frozen=True)
class KnowledgeBaseSummary:
    """Registry digest serialized into the routing prompt."""

    entries: tuple[dict, ...]

    def to_dict(self) -> dict:
        return {"knowledge_bases": [dict(e) for e in self.entries]}

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def build_summary(registry: Registry) -> KnowledgeBaseSummary:
    """Summarize every registered kb: schema preview for tables, stats for text."""
    if len(registry) == 0:
        raise EmptyRegistryError("cannot summarize an empty registry")
    entries = []
    for item in registry:
        d = item.descriptor
        entry: dict = {"id": d.id, "kind": d.kind, "summary": d.human_summary}
        if isinstance(item.payload, TableSource):
            preview = item.payload.preview
            entry["schema"] = {
                "headers": list(preview.headers),
                "types": list(preview.inferred_types),
                "preview_rows": [list(r) for r in preview.preview_rows],
            }
        else:
            entry["stats"] = {
                "documents": item.payload.document_count,
                "pages": item.payload.page_count,
            }
        entries.append(entry)
    return KnowledgeBaseSummary(entries=tuple(entries))


_MANIFEST_KEYS = {"id", "kind", "path", "summary"}


def load_manifest(path: Path) -> Registry:
    """Build a registry from a JSON manifest: a list of {id, kind, path, summary}.

    Relative source paths are resolved against the manifest's directory.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SourceUnreadableError(f"{path}: {exc}") from exc
    try:
        document = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ManifestSyntaxError(f"{path}: {exc}") from exc
    if not isinstance(document, list):
        raise ManifestSyntaxError(f"{path}: manifest must be a JSON array")
    registry = Registry()
    for i, entry in enumerate(document):
        where = f"{path}: entry {i}"
        if not isinstance(entry, dict):
            raise ManifestSyntaxError(f"{where}: expected an object")
        missing = _MANIFEST_KEYS - entry.keys()
        extra = entry.keys() - _MANIFEST_KEYS
        if missing:
            raise ManifestSyntaxError(f"{where}: missing keys {sorted(missing)}")
        if extra:
            raise ManifestSyntaxError(f"{where}: unknown keys {sorted(extra)}")
        if not all(isinstance(entry[k], str) for k in _MANIFEST_KEYS):
            raise ManifestSyntaxError(f"{where}: all fields must be strings")
        try:
            descriptor = KnowledgeBaseDescriptor(
                id=entry["id"],
                kind=entry["kind"],
                source_path=path.parent / entry["path"],
                human_summary=entry["summary"],
            )
        except ValueError as exc:
            raise ManifestSyntaxError(f"{where}: {exc}") from exc
        try:
            registry = register_kb(descriptor, registry)
        except (DuplicateIdError, SourceUnreadableError, MalformedCsvError) as exc:
            raise type(exc)(f"{where}: {exc}") from exc
    return registry


def save_manifest(registry: Registry, path: Path) -> None:
    """Write the registry back out as a manifest (paths relative to `path`)."""
    path = Path(path)
    entries = []
    for item in registry:
        d = item.descriptor
        source = d.source_path
        try:
            rendered = str(source.relative_to(path.parent))
        except ValueError:
            rendered = str(source)
        entries.append({"id": d.id, "kind": d.kind, "path": rendered,
                        "summary": d.human_summary})
    path.write_text(canonical_json(entries) + "\n", encoding="utf-8")
