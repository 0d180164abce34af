"""Atomic artifact writes, content hashes and the run manifest."""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any

import pandas as pd

from .errors import MissingArtifactError, SchemaError

MANIFEST = "manifest.json"
FLOAT_FORMAT = "%.17g"


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: Path, obj: Any) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    import numpy as np

    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def csv_text(df: pd.DataFrame) -> str:
    buf = io.StringIO()
    df.to_csv(buf, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buf.getvalue()


def write_csv(path: Path, df: pd.DataFrame) -> None:
    atomic_write_text(path, csv_text(df))


def read_csv(path: Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"missing artifact {path}; run the stage that produces it first")
    return pd.read_csv(path, float_precision="round_trip")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Maps artifact names (relative paths) to their producing stage and sha256."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.path = self.root / MANIFEST
        if self.path.exists():
            try:
                self.data = json.loads(self.path.read_text())
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{self.path}: corrupt manifest ({exc})") from exc
        else:
            self.data = {"artifacts": {}}

    def record(self, stage: str, *paths: Path) -> None:
        for p in paths:
            rel = str(Path(p).relative_to(self.root))
            self.data["artifacts"][rel] = {"stage": stage, "sha256": sha256_file(p)}
        self.save()

    def save(self) -> None:
        write_json(self.path, self.data)

    def require(self, *names: str) -> list[Path]:
        """Paths of required artifacts; verifies presence and hash."""
        out = []
        for name in names:
            entry = self.data["artifacts"].get(name)
            p = self.root / name
            if entry is None or not p.exists():
                raise MissingArtifactError(f"missing artifact {p}; run the stage that produces it first")
            if sha256_file(p) != entry["sha256"]:
                raise SchemaError(f"{p}: content hash differs from the manifest; rerun its stage")
            out.append(p)
        return out

    def hashes(self) -> dict[str, str]:
        return {k: v["sha256"] for k, v in sorted(self.data["artifacts"].items())}
