"""Schema and invariant checks for the CSV artifacts."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import SchemaError, UsageError
from .io import read_csv

INT, FLOAT, STR, BINARY, PROB = "int", "float", "str", "binary", "prob"

SCHEMAS: dict[str, dict[str, str]] = {
    "log": {
        "seeker_id": INT, "arm": STR, "vacancy_id": INT, "slot": INT, "u_score": PROB, "p_score": PROB,
        "score_u_rec": FLOAT, "score_vadore0": FLOAT, "score_vadore2": FLOAT, "score_application": FLOAT,
        "score_xgboost": FLOAT, "clicked": BINARY, "applied": BINARY, "hired": BINARY,
        "true_p": PROB, "true_U": FLOAT, "true_pa": PROB, "true_gamma": FLOAT, "short_list": BINARY,
    },
    "scores": {"seeker_id": INT, "vacancy_id": INT, "algo": STR, "score": FLOAT, "rank": INT},
    "pool": {"seeker_id": INT, "vacancy_id": INT, "score_u_rec": FLOAT, "score_vadore0": FLOAT,
             "score_vadore2": FLOAT, "score_application": FLOAT, "score_xgboost": FLOAT},
    "assignment": {"seeker_id": INT, "arm": STR},
    "arm-comparison": {"arm": STR, "metric": STR, "estimate": FLOAT, "ci_low": FLOAT, "ci_high": FLOAT},
    "history": {"seeker_id": INT, "vacancy_id": INT, "order": INT, "hired": BINARY},
}

MAX_LISTED = 20


@dataclass
class ValidationReport:
    path: str
    schema: str
    rows: int
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        head = f"{self.path}: schema '{self.schema}', {self.rows} rows, "
        if self.ok:
            return head + "ok"
        return head + f"{len(self.violations)} violation(s)\n" + "\n".join(f"  {v}" for v in self.violations)


def _rows(mask: np.ndarray, limit: int = 10) -> str:
    # data rows are numbered from 1; the header is line 1 of the file
    idx = np.flatnonzero(mask)
    shown = ", ".join(str(i + 1) for i in idx[:limit])
    more = f" and {idx.size - limit} more" if idx.size > limit else ""
    return f"row(s) {shown}{more}"


def check_frame(df: pd.DataFrame, schema: str, path: str = "<frame>") -> ValidationReport:
    if schema not in SCHEMAS:
        raise UsageError(f"unknown schema {schema!r}; expected one of {tuple(SCHEMAS)}")
    spec = SCHEMAS[schema]
    rep = ValidationReport(path, schema, len(df))
    missing = [c for c in spec if c not in df.columns]
    for c in missing:
        rep.violations.append(f"missing column '{c}'")
    if len(df) == 0:
        rep.violations.append("no data rows")
    for col, kind in spec.items():
        if col in missing:
            continue
        v = df[col]
        if kind == STR:
            bad = v.isna().to_numpy()
            if bad.any():
                rep.violations.append(f"column '{col}': empty value at {_rows(bad)}")
            continue
        num = pd.to_numeric(v, errors="coerce").to_numpy(dtype=float)
        bad = np.isnan(num) & ~(v.isna().to_numpy() & (kind == FLOAT))
        if kind in (INT, BINARY, PROB):
            bad |= np.isnan(num)
        if bad.any():
            rep.violations.append(f"column '{col}': non-numeric value at {_rows(bad)}")
        ok = ~np.isnan(num)
        if kind == INT and np.any(ok & (num != np.round(num))):
            rep.violations.append(f"column '{col}': non-integer value at {_rows(ok & (num != np.round(num)))}")
        if kind == BINARY and np.any(ok & (num != 0) & (num != 1)):
            rep.violations.append(f"column '{col}': value outside {{0, 1}} at {_rows(ok & (num != 0) & (num != 1))}")
        if kind == PROB and np.any(ok & ((num < 0) | (num > 1))):
            rep.violations.append(f"column '{col}': probability outside [0, 1] at {_rows(ok & ((num < 0) | (num > 1)))}")
    if not rep.violations:
        _invariants(df, schema, rep)
    return rep


def _invariants(df: pd.DataFrame, schema: str, rep: ValidationReport) -> None:
    if schema == "log":
        a, c, h = (df[x].to_numpy() for x in ("applied", "clicked", "hired"))
        if np.any(h > a):
            rep.violations.append(f"hired without application at {_rows(h > a)}")
        if np.any(a > c):
            rep.violations.append(f"application without click at {_rows(a > c)}")
        slot = df["slot"].to_numpy()
        if np.any((slot < 1) | (slot > MAX_LISTED)):
            rep.violations.append(f"slot outside 1..{MAX_LISTED} (row not on a displayed list) at {_rows((slot < 1) | (slot > MAX_LISTED))}")
        dup = df.duplicated(["seeker_id", "vacancy_id"]).to_numpy()
        if dup.any():
            rep.violations.append(f"vacancy listed twice for a seeker at {_rows(dup)}")
        if df.groupby("seeker_id")["arm"].nunique().max() > 1:
            rep.violations.append("a seeker appears under more than one arm")
    elif schema in ("scores", "pool"):
        keys = ["seeker_id", "vacancy_id"] + (["algo"] if schema == "scores" else [])
        dup = df.duplicated(keys).to_numpy()
        if dup.any():
            rep.violations.append(f"duplicate {'/'.join(keys)} at {_rows(dup)}")
        if schema == "scores" and np.any(df["rank"].to_numpy() < 1):
            rep.violations.append(f"rank below 1 at {_rows(df['rank'].to_numpy() < 1)}")
    elif schema == "assignment":
        dup = df.duplicated("seeker_id").to_numpy()
        if dup.any():
            rep.violations.append(f"seeker assigned twice at {_rows(dup)}")
    elif schema == "arm-comparison":
        lo, est, hi = (df[x].to_numpy() for x in ("ci_low", "estimate", "ci_high"))
        bad = (lo > est + 1e-12) | (est > hi + 1e-12)
        if bad.any():
            rep.violations.append(f"estimate outside its interval at {_rows(bad)}")
    elif schema == "history":
        h = df.sort_values(["seeker_id", "order"], kind="stable")
        after = (h.groupby("seeker_id")["hired"].cumsum() - h["hired"]).to_numpy() > 0
        if after.any():
            rep.violations.append(f"application after a hire at {_rows(np.isin(df.index, h.index[after]))}")


def validate_dataset(path: str | Path, schema: str) -> ValidationReport:
    if schema not in SCHEMAS:
        raise UsageError(f"unknown schema {schema!r}; expected one of {tuple(SCHEMAS)}")
    try:
        df = read_csv(Path(path))
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise SchemaError(f"{path}: unreadable CSV ({exc})") from exc
    except pd.errors.EmptyDataError:
        df = pd.DataFrame()
    return check_frame(df, schema, str(path))
