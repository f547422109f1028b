"""CSV datasets, profile JSON files, and output tables."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .balance import FeatureSpec, Profile
from .errors import ConfigError, DataError, ParseError, ProfileFormatError


@dataclass
class ColumnRoles:
    treatment: str | None = None
    outcome: str | None = None
    selection: str | None = None
    covariates: list[str] = field(default_factory=list)

    def required(self) -> list[str]:
        cols = [c for c in (self.treatment, self.outcome, self.selection) if c]
        return cols + [c for c in self.covariates if c not in cols]


@dataclass
class Dataset:
    header: list[str]
    raw: list[list[str]]  # cells as read, for lossless output
    columns: dict  # parsed role columns
    roles: ColumnRoles
    missing: dict  # column -> count of empty cells

    @property
    def n(self) -> int:
        return len(self.raw)

    def numeric(self, col: str) -> np.ndarray:
        if col in self.columns:
            return self.columns[col]
        return _parse_numeric(self, col)


def _parse_numeric(ds: Dataset, col: str) -> np.ndarray:
    if col not in ds.header:
        raise ConfigError(f"column {col!r} not in file header")
    j = ds.header.index(col)
    out = np.empty(ds.n)
    for i, row in enumerate(ds.raw):
        cell = row[j].strip()
        if cell == "":
            out[i] = math.nan
            continue
        try:
            out[i] = float(cell)
        except ValueError:
            raise ParseError(f"row {i + 1}, column {col}: cannot parse {cell!r} as a number") from None
    return out


def _parse_label(ds: Dataset, col: str) -> np.ndarray:
    """Integer labels as floats; empty cells become NaN (e.g. treatment of target rows)."""
    j = ds.header.index(col)
    out = np.empty(ds.n)
    for i, row in enumerate(ds.raw):
        cell = row[j].strip()
        if cell == "":
            out[i] = math.nan
            continue
        try:
            v = float(cell)
            if v != int(v):
                raise ValueError
            out[i] = v
        except (ValueError, OverflowError):
            raise ParseError(f"row {i + 1}, column {col}: expected an integer label, got {cell!r}") from None
    return out


def load_dataset(path: str, roles: ColumnRoles) -> Dataset:
    """Read a headed CSV; role columns must exist and parse."""
    if not os.path.isfile(path):
        raise ConfigError(f"input file {path!r} not found")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise ParseError(f"row {i + 1}: expected {len(header)} cells, found {len(r)}")
    for col in roles.required():
        if col not in header:
            raise ConfigError(f"column {col!r} required by the command is missing from {path}")
    missing = {h: sum(1 for r in body if r[j].strip() == "") for j, h in enumerate(header)}
    ds = Dataset(header, body, {}, roles, missing)
    for col in roles.covariates + [roles.outcome]:
        if col:
            ds.columns[col] = _parse_numeric(ds, col)
    for col in (roles.treatment, roles.selection):
        if col:
            ds.columns[col] = _parse_label(ds, col)
    return ds


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_matched(path: str, ds: Dataset, matched: np.ndarray, pair_id: np.ndarray | None = None) -> None:
    """Original cells plus ``matched`` and, for pair matching, ``pair_id``."""
    header = list(ds.header) + ["matched"] + (["pair_id"] if pair_id is not None else [])
    rows = []
    for i, r in enumerate(ds.raw):
        extra = [str(int(matched[i]))]
        if pair_id is not None:
            extra.append("" if pair_id[i] < 0 else str(int(pair_id[i])))
        rows.append(list(r) + extra)
    write_csv(path, header, rows)


# profile files

def profile_to_dict(profile: Profile) -> dict:
    doc = {
        "features": [
            {"name": f.name, "terms": [{"col": c, "pow": p} for c, p in f.terms]} for f in profile.features
        ],
        "targets": [float(v) for v in profile.targets],
        "tolerances": [float(v) for v in profile.tolerances],
    }
    if profile.scale_sds is not None:
        doc["scale_sds"] = [float(v) for v in profile.scale_sds]
    if profile.multiplier is not None:
        doc["multiplier"] = float(profile.multiplier)
    if profile.scale is not None:
        doc["scale"] = profile.scale
    return doc


def write_profile(path: str, profile: Profile) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(profile_to_dict(profile), fh, indent=2)
        fh.write("\n")


def _fail(pointer: str, msg: str):
    err = ProfileFormatError(f"{pointer or '/'}: {msg}")
    err.pointer = pointer or "/"
    raise err


def _number_list(doc, key, k, nonneg=False):
    v = doc[key]
    if not isinstance(v, list) or len(v) != k:
        _fail(f"/{key}", f"expected a list of {k} numbers")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            _fail(f"/{key}/{i}", "expected a finite number")
        if nonneg and x < 0:
            _fail(f"/{key}/{i}", "must be nonnegative")
        out.append(float(x))
    return np.array(out)


def profile_from_dict(doc) -> Profile:
    if not isinstance(doc, dict):
        _fail("", "profile must be a JSON object")
    for key in ("features", "targets", "tolerances"):
        if key not in doc:
            _fail(f"/{key}", "required field missing")
    feats = doc["features"]
    if not isinstance(feats, list):
        _fail("/features", "expected a list")
    features = []
    for i, f in enumerate(feats):
        base = f"/features/{i}"
        if not isinstance(f, dict):
            _fail(base, "expected an object")
        name = f.get("name")
        if not isinstance(name, str) or not name:
            _fail(f"{base}/name", "expected a nonempty string")
        terms = f.get("terms")
        if not isinstance(terms, list):
            _fail(f"{base}/terms", "expected a list")
        parsed = []
        for j, t in enumerate(terms):
            tp = f"{base}/terms/{j}"
            if not isinstance(t, dict) or not isinstance(t.get("col"), str):
                _fail(tp, "expected an object with a string 'col'")
            pw = t.get("pow", 1)
            if isinstance(pw, bool) or not isinstance(pw, int) or pw < 1:
                _fail(f"{tp}/pow", "expected an integer >= 1")
            parsed.append((t["col"], pw))
        features.append(FeatureSpec(name, tuple(parsed)))
    k = len(features)
    targets = _number_list(doc, "targets", k)
    tolerances = _number_list(doc, "tolerances", k, nonneg=True)
    scale_sds = _number_list(doc, "scale_sds", k, nonneg=True) if doc.get("scale_sds") is not None else None
    mult = doc.get("multiplier")
    if mult is not None and (isinstance(mult, bool) or not isinstance(mult, (int, float)) or mult < 0):
        _fail("/multiplier", "expected a nonnegative number")
    scale = doc.get("scale")
    if scale is not None and not isinstance(scale, str):
        _fail("/scale", "expected a string")
    return Profile(features, targets, tolerances, scale_sds, None if mult is None else float(mult), scale)


def read_profile(path: str) -> Profile:
    if not os.path.isfile(path):
        raise ConfigError(f"profile file {path!r} not found")
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProfileFormatError(f"/: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return profile_from_dict(doc)
