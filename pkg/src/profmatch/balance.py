"""Balance features, target profiles, and balance diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ColumnError, DataError, DegenerateWeightsError, DomainError, ZeroVarianceError

DEFAULT_MULTIPLIER = 0.05


@dataclass(frozen=True)
class FeatureSpec:
    """Product of integer powers of raw columns; no terms means the constant 1."""

    name: str
    terms: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        terms = tuple((str(c), int(p)) for c, p in self.terms)
        for col, pw in terms:
            if pw < 1:
                raise DomainError(f"feature {self.name!r}: exponent of {col!r} must be >= 1")
        object.__setattr__(self, "terms", terms)

    @property
    def columns(self) -> list[str]:
        return [c for c, _ in self.terms]

    @classmethod
    def raw(cls, col: str) -> "FeatureSpec":
        return cls(col, ((col, 1),))

    @classmethod
    def parse(cls, text: str) -> "FeatureSpec":
        """Parse ``"X1*X3"``, ``"X2^2"`` or ``"1"``."""
        text = text.strip()
        if text == "1":
            return cls("1", ())
        terms = []
        for part in text.split("*"):
            col, _, pw = part.strip().partition("^")
            if not col:
                raise DomainError(f"cannot parse feature {text!r}")
            terms.append((col, int(pw) if pw else 1))
        return cls(text.replace(" ", ""), tuple(terms))


@dataclass
class Profile:
    features: list[FeatureSpec]
    targets: np.ndarray
    tolerances: np.ndarray
    scale_sds: np.ndarray | None = None
    multiplier: float | None = None
    scale: str | None = None

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=float)
        self.tolerances = np.asarray(self.tolerances, dtype=float)
        if self.scale_sds is not None:
            self.scale_sds = np.asarray(self.scale_sds, dtype=float)
        k = len(self.features)
        if self.targets.shape != (k,) or self.tolerances.shape != (k,):
            raise DomainError("features, targets and tolerances must have equal length")
        if self.scale_sds is not None and self.scale_sds.shape != (k,):
            raise DomainError("scale_sds must match the feature count")
        if np.any(self.tolerances < 0) or not np.all(np.isfinite(self.tolerances)):
            raise DomainError("tolerances must be finite and nonnegative")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def __eq__(self, other):
        if not isinstance(other, Profile):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)

        return (
            self.features == other.features
            and same(self.targets, other.targets)
            and same(self.tolerances, other.tolerances)
            and same(self.scale_sds, other.scale_sds)
            and self.multiplier == other.multiplier
            and self.scale == other.scale
        )


def _column(data: Mapping[str, np.ndarray], col: str) -> np.ndarray:
    try:
        v = data[col]
    except KeyError:
        raise ColumnError(f"column {col!r} not found") from None
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DataError(f"column {col!r} contains non-finite values")
    return v


def eval_features(data: Mapping[str, np.ndarray], features: Sequence[FeatureSpec]) -> np.ndarray:
    """Evaluate features on column data; returns an ``n x K`` matrix."""
    n = None
    for col_values in data.values():
        n = len(col_values)
        break
    cols = {}
    out = []
    for f in features:
        v = None
        for col, pw in f.terms:
            if col not in cols:
                cols[col] = _column(data, col)
            x = cols[col] ** pw
            v = x if v is None else v * x
        if v is None:
            v = np.ones(n or 0)
        out.append(v)
    if not out:
        return np.zeros((n or 0, 0))
    return np.column_stack(out)


def _sds(B: np.ndarray) -> np.ndarray:
    if B.shape[0] < 2:
        raise DomainError("need at least two rows to compute a standard deviation")
    return B.std(axis=0, ddof=1)


def profile_from_target(
    target_data: Mapping[str, np.ndarray],
    features: Sequence[FeatureSpec],
    multiplier: float = DEFAULT_MULTIPLIER,
    scale_data: Mapping[str, np.ndarray] | None = None,
    scale_sds: np.ndarray | None = None,
    scale: str = "cohort",
) -> Profile:
    """Targets are feature means over the target rows.

    Tolerances are ``multiplier * sd`` where the sd comes from ``scale_sds`` if
    given, else from ``scale_data``, else from the target rows themselves.
    """
    if multiplier < 0:
        raise DomainError("multiplier must be nonnegative")
    features = list(features)
    B = eval_features(target_data, features)
    if B.shape[0] == 0:
        raise DomainError("target population is empty")
    targets = B.mean(axis=0)
    if scale_sds is None:
        S = B if scale_data is None else eval_features(scale_data, features)
        scale_sds = _sds(S)
    scale_sds = np.asarray(scale_sds, dtype=float)
    if multiplier > 0:
        for f, s in zip(features, scale_sds):
            if s <= 0:
                raise ZeroVarianceError(f"feature {f.name!r} has zero standard deviation")
    return Profile(features, targets, multiplier * scale_sds, scale_sds, float(multiplier), scale)


def three_way_pooled_sd(s0: float, s1: float, s2: float) -> float:
    return math.sqrt((s0 * s0 + s1 * s1 + s2 * s2) / 3.0)


def pooled_sds(groups: Sequence[np.ndarray]) -> np.ndarray:
    """Root-mean of per-group feature variances (three-way pooling generalised)."""
    var = np.vstack([_sds(g) ** 2 for g in groups])
    return np.sqrt(var.mean(axis=0))


def tasmd(sample_mean, target_mean, scale_sd):
    s = np.asarray(scale_sd, dtype=float)
    if np.any(s <= 0):
        raise ZeroVarianceError("TASMD scale sd must be positive")
    out = np.abs(np.asarray(sample_mean, dtype=float) - np.asarray(target_mean, dtype=float)) / s
    return float(out) if out.ndim == 0 else out


def asmd(mean_a, mean_b, scale_sd):
    return tasmd(mean_a, mean_b, scale_sd)


def kish_ess(weights) -> float:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise DegenerateWeightsError("all weights are zero")
    return float(total * total / np.dot(w, w))


def weighted_means(B: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    if weights is None:
        return B.mean(axis=0)
    w = np.asarray(weights, dtype=float)
    return (w[:, None] * B).sum(axis=0) / w.sum()
