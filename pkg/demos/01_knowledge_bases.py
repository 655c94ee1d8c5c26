"""
Registering knowledge bases
===========================

A knowledge base is a text document (form feeds separate pages) or a CSV
table. Registration parses the source eagerly and a manifest file makes a
set of registrations reloadable.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

from crossrag.kb import (
    KnowledgeBaseDescriptor,
    build_summary,
    load_manifest,
    register_kb,
    save_manifest,
)

workdir = Path(tempfile.mkdtemp(prefix="crossrag-demo-"))

# A two-page maintenance manual. The form feed ends page one.
manual = workdir / "manual.txt"
manual.write_text(
    "Pump P-3 requires monthly inspection. Replace the seal when worn.\f"
    "To replace filter F-200, shut off the inlet valve and release the "
    "system pressure at the bleed port.",
    encoding="utf-8")

# A spare-part inventory table.
inventory = workdir / "inventory.csv"
inventory.write_text(
    "part_id,description,quantity\n"
    "F-200,hydraulic filter element,14\n"
    "P-3,coolant pump assembly,2\n",
    encoding="utf-8")

registry = register_kb(KnowledgeBaseDescriptor(
    id="manual", kind="text", source_path=manual,
    human_summary="pump and filter service manual"))
registry = register_kb(KnowledgeBaseDescriptor(
    id="inventory", kind="table", source_path=inventory,
    human_summary="spare part stock levels"), registry)

print("registered:", ", ".join(registry.ids()))

# Text sources report page counts; table sources expose an inferred schema.
pages = registry.get("manual").payload.pages
print(f"manual has {len(pages)} pages; page 2 starts:",
      pages[1][:34], "...")

preview = registry.get("inventory").payload.preview
for name, kind in zip(preview.headers, preview.inferred_types):
    print(f"  column {name}: {kind}")

# The summary is what the routing model sees: one JSON digest of every
# registered source, including the first rows of each table.
print("\nrouting summary:")
print(build_summary(registry).to_json())

# Manifests round-trip the registry through a JSON file.
manifest = workdir / "manifest.json"
save_manifest(registry, manifest)
reloaded = load_manifest(manifest)
print("\nreloaded from manifest:", ", ".join(reloaded.ids()))
