"""JSON report of estimation results."""

from __future__ import annotations

from pathlib import Path

from ..io import write_json


def fits_report(path: Path, **sections) -> dict:
    """Write each named result via its ``to_dict``; plain dicts pass through."""
    doc = {name: (obj.to_dict() if hasattr(obj, "to_dict") else obj) for name, obj in sections.items()}
    write_json(path, doc)
    return doc
