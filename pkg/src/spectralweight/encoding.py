"""Bag-of-geometric-words encoding of per-vertex signatures."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans

from .errors import ArgumentError, VersionError

DICTIONARY_VERSION = 1
DEFAULT_K = 32
MAX_ITER = 300
TOL = 1e-6
# exp(-x) underflows to zero in float64 beyond this
_UNDERFLOW = 745.0


@dataclass(frozen=True)
class Dictionary:
    """``k`` geometric words (rows of ``centers``) and a soft-assignment bandwidth."""

    centers: np.ndarray
    sigma: float

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def p(self) -> int:
        return self.centers.shape[1]

    def to_dict(self) -> dict:
        return {
            "format": "spectralweight.dictionary",
            "version": DICTIONARY_VERSION,
            "k": self.k,
            "p": self.p,
            "sigma": self.sigma,
            "centers": self.centers.ravel().tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "Dictionary":
        if d.get("version") != DICTIONARY_VERSION:
            raise VersionError(f"unsupported dictionary version {d.get('version')!r}")
        try:
            k, p = int(d["k"]), int(d["p"])
            centers = np.array(d["centers"], dtype=np.float64).reshape(k, p)
            sigma = float(d["sigma"])
        except (KeyError, TypeError, ValueError) as exc:
            raise VersionError(f"malformed dictionary: {exc}") from None
        return cls(centers, sigma)

    @classmethod
    def from_json(cls, text: str) -> "Dictionary":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise VersionError(f"dictionary is not valid JSON: {exc}") from None


def _sq_dists(x, c):
    # (n, k) squared distances; the expansion can go slightly negative
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(x, k, rng):
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = ((x - centers[0]) ** 2).sum(1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(np.argmax(closest))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[i] = x[idx]
        np.minimum(closest, ((x - centers[i]) ** 2).sum(1), out=closest)
    return centers


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iter: int = MAX_ITER, tol: float = TOL):
    """Lloyd's algorithm from a seeded k-means++ start.

    ``points`` is ``(n, p)``. Iteration stops once no center moves more than
    ``tol`` times the RMS norm of the data, or after ``max_iter`` rounds.
    Returns ``(centers, labels, inertia)``.

    Notes
    -----
    The Lloyd loop is scikit-learn's compiled one. It stops when the summed
    squared center shift is at most its absolute tolerance; we pass
    ``(tol * rms)**2`` so that every individual center has moved less than
    ``tol * rms``.
    """
    x = np.ascontiguousarray(points, dtype=np.float64)
    rng = np.random.default_rng(seed)
    init = _kmeanspp(x, k, rng)
    scale = math.sqrt(float((x * x).sum(1).mean())) or 1.0
    spread = float(x.var(axis=0).mean())
    # scikit-learn multiplies its tol by the mean per-feature variance
    rel = (tol * scale) ** 2 / spread if spread > 0 else 0.0
    km = KMeans(k, init=init, n_init=1, max_iter=max_iter, tol=rel, algorithm="lloyd").fit(x)
    centers = km.cluster_centers_.copy()
    labels = np.argmin(_sq_dists(x, centers), axis=1)
    # closing mean update in plain float64 sums, so a singleton cluster sits exactly on its point
    counts = np.bincount(labels, minlength=k)
    sums = np.column_stack([np.bincount(labels, weights=col, minlength=k) for col in x.T])
    nz = counts > 0
    centers[nz] = sums[nz] / counts[nz, None]
    labels = np.argmin(_sq_dists(x, centers), axis=1)
    inertia = float(((x - centers[labels]) ** 2).sum())
    return centers, labels, inertia


def learn_dictionary(signatures: np.ndarray, k: int = DEFAULT_K, seed: int = 0) -> Dictionary:
    """Cluster the columns of a ``p x N`` signature matrix into ``k`` words.

    The soft-assignment bandwidth is the mean distance from each column to its
    nearest center.
    """
    s = np.asarray(signatures, dtype=np.float64)
    p = s.shape[0]
    if k <= p:
        raise ArgumentError(f"dictionary size k={k} must exceed signature size p={p}")
    x = s.T
    if len(np.unique(x, axis=0)) < k:
        raise ArgumentError(f"need at least k={k} distinct signature columns")
    centers, labels, _ = kmeans(x, k, seed)
    dist = np.sqrt(((x - centers[labels]) ** 2).sum(1))
    sigma = float(dist.mean())
    if sigma <= 0:
        # every column sits on a center; any small positive bandwidth is exact here
        sigma = 1e-12 * (math.sqrt(float((x * x).sum(1).mean())) or 1.0)
    return Dictionary(centers, sigma)


def soft_assign(signature, dictionary: Dictionary) -> np.ndarray:
    """Gaussian-kernel codes, ``k x m``, each column summing to one.

    Columns whose kernel values all underflow fall back to a one-hot code at
    the nearest word.
    """
    data = getattr(signature, "data", signature)
    data = np.asarray(data, dtype=np.float64)
    if data.shape[0] != dictionary.p:
        raise ArgumentError(f"signature has {data.shape[0]} rows, dictionary expects {dictionary.p}")
    # (d / sigma)^2 rather than d^2 / sigma^2 so a tiny sigma overflows to inf instead of 0/0
    with np.errstate(over="ignore", invalid="ignore"):
        d2 = _sq_dists(data.T, dictionary.centers).T  # k x m
        expo = 0.5 * (np.sqrt(d2) / dictionary.sigma) ** 2
        best = expo.min(axis=0)
        codes = np.exp(-(expo - best))
        codes /= codes.sum(axis=0)
    under = ~(best <= _UNDERFLOW)
    if under.any():
        hard = np.zeros((dictionary.k, int(under.sum())))
        hard[np.argmin(d2[:, under], axis=0), np.arange(hard.shape[1])] = 1.0
        codes[:, under] = hard
    return codes


def pool(codes: np.ndarray) -> np.ndarray:
    """Sum-pool codes over vertices into a ``k`` histogram."""
    return np.asarray(codes).sum(axis=1)


@dataclass(frozen=True)
class FeatureVector:
    histogram: np.ndarray
    geodesic_diameter: float
    volume: float
    carcass_weight: float

    def to_array(self) -> np.ndarray:
        """``[h_1..h_k, diameter, volume, weight]``; this order is persisted in models."""
        return np.concatenate([self.histogram, [self.geodesic_diameter, self.volume, self.carcass_weight]])

    def __len__(self):
        return len(self.histogram) + 3


def assemble_features(histogram, diameter: float, volume: float, carcass_weight: float) -> FeatureVector:
    h = np.asarray(histogram, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise ArgumentError("histogram must be finite")
    for name, val in (("diameter", diameter), ("volume", volume), ("carcass_weight", carcass_weight)):
        if not (math.isfinite(val) and val > 0):
            raise ArgumentError(f"{name} must be positive and finite, got {val}")
    return FeatureVector(h, float(diameter), float(volume), float(carcass_weight))


def feature_names(k: int) -> list[str]:
    return [f"h{r:02d}" for r in range(1, k + 1)] + ["geodesic_diameter", "volume", "carcass_weight"]


def encode(signature, dictionary: Dictionary) -> np.ndarray:
    """Histogram for one mesh: ``pool(soft_assign(...))``."""
    return pool(soft_assign(signature, dictionary))
