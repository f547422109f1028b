"""Seeded random streams, sampling, and a few special functions.

Random streams are PCG64 generators seeded from a SplitMix64 mix of
``(master_seed, stream_id)``. Standard normals use the Marsaglia polar
method, so a stream's output depends only on its seed and the order of
calls made on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DomainError, EmptyInputError, FactorizationError

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 output step; a full-avalanche 64-bit mix."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_seed(master_seed: int, stream_id: int) -> int:
    return splitmix64(splitmix64(master_seed & _MASK64) ^ (stream_id & _MASK64))


class RngStream:
    """Single-owner random stream. Do not share one across threads."""

    def __init__(self, master_seed: int, stream_id: int = 0):
        if stream_id < 0:
            raise DomainError("stream_id must be nonnegative")
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self._gen = np.random.Generator(np.random.PCG64(mix_seed(self.master_seed, self.stream_id)))

    def uniform(self, n: int) -> np.ndarray:
        """Draws on [0, 1)."""
        return self._gen.random(n)

    def standard_normal(self, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            need = n - filled
            # acceptance rate is pi/4; each accepted pair yields two normals
            m = max(8, int(need * 0.66) + 8)
            u = 2.0 * self._gen.random(2 * m).reshape(m, 2) - 1.0
            s = (u * u).sum(axis=1)
            ok = (s > 0.0) & (s < 1.0)
            u, s = u[ok], s[ok]
            f = np.sqrt(-2.0 * np.log(s) / s)
            z = (u * f[:, None]).ravel()
            take = min(need, z.size)
            out[filled:filled + take] = z[:take]
            filled += take
        return out

    def integers(self, high: int, n: int) -> np.ndarray:
        """Uniform integers on [0, high)."""
        return self._gen.integers(0, high, size=n)


def derive_substream(master_seed: int, stream_id: int) -> RngStream:
    return RngStream(master_seed, stream_id)


@dataclass(frozen=True)
class DistSpec:
    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def standard_normal(cls):
        return cls("standard_normal")

    @classmethod
    def normal(cls, mu: float, sigma: float):
        if not sigma > 0:
            raise DomainError("normal sigma must be positive")
        return cls("normal", {"mu": float(mu), "sigma": float(sigma)})

    @classmethod
    def uniform(cls, a: float, b: float):
        if not a < b:
            raise DomainError("uniform requires a < b")
        return cls("uniform", {"a": float(a), "b": float(b)})

    @classmethod
    def chi_square_1(cls):
        return cls("chi_square_1")

    @classmethod
    def bernoulli(cls, p: float):
        if not 0.0 <= p <= 1.0:
            raise DomainError("bernoulli p must lie in [0, 1]")
        return cls("bernoulli", {"p": float(p)})

    @classmethod
    def mvn(cls, mean, cov):
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise DomainError("covariance shape does not match mean")
        if not np.allclose(cov, cov.T):
            raise DomainError("covariance must be symmetric")
        return cls("mvn", {"mean": mean, "cov": cov, "factor": mvn_factor(cov)})


def mvn_factor(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular factor of ``cov``; eigen factor if only semidefinite."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -1e-10 * max(1.0, np.abs(vals).max()):
        raise FactorizationError("covariance matrix is not positive semidefinite")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample(stream: RngStream, dist: DistSpec, n: int) -> np.ndarray:
    kind, p = dist.kind, dist.params
    if kind == "standard_normal":
        return stream.standard_normal(n)
    if kind == "normal":
        return p["mu"] + p["sigma"] * stream.standard_normal(n)
    if kind == "uniform":
        return p["a"] + (p["b"] - p["a"]) * stream.uniform(n)
    if kind == "chi_square_1":
        return stream.standard_normal(n) ** 2
    if kind == "bernoulli":
        return (stream.uniform(n) < p["p"]).astype(float)
    if kind == "mvn":
        d = p["mean"].size
        z = stream.standard_normal(n * d).reshape(n, d)
        return p["mean"] + z @ p["factor"].T
    raise DomainError(f"unknown distribution kind {kind!r}")


def normal_cdf(x):
    return special.ndtr(x)


def normal_quantile(p):
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError("normal_quantile requires 0 < p < 1")
    return special.ndtri(p)


def expit(x):
    return special.expit(x)


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    n: int


def summary(values, weights=None) -> Summary:
    """Mean and n-1 standard deviation; weighted mean if ``weights`` given.

    ``sd`` is only defined for two or more values; asking a single value for
    its sd raises :class:`EmptyInputError`.
    """
    y = np.asarray(values, dtype=float)
    if y.size == 0:
        raise EmptyInputError("summary of an empty vector")
    if weights is None:
        mean = float(y.mean())
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != y.shape or np.any(w < 0) or w.sum() <= 0:
            raise DomainError("weights must be nonnegative, not all zero, and match values")
        mean = float((w * y).sum() / w.sum())
    if y.size < 2:
        raise EmptyInputError("sd needs at least two values")
    return Summary(mean=mean, sd=float(y.std(ddof=1)), n=int(y.size))
