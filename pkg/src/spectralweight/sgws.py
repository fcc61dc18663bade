"""Spectral graph wavelet signatures (SGWS) from a truncated eigensystem."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import cache
from .errors import ArgumentError
from .spectral import EigenSystem

SIG_MAGIC = b"SWSIG1"
DEFAULT_RESOLUTION = 2
MIN_RATIO = 20.0
SCALING_WIDTH = 0.6


def wavelet_kernel(x):
    """Band-pass generating kernel ``g(x) = x exp(-x)``; peak ``1/e`` at ``x = 1``."""
    x = np.asarray(x, dtype=np.float64)
    return x * np.exp(-x)


def scaling_kernel(x, lambda_min: float, gain: float = math.exp(-1.0)):
    """Low-pass kernel ``h(x) = gain * exp(-(x / (0.6 lambda_min))**4)``."""
    x = np.asarray(x, dtype=np.float64)
    return gain * np.exp(-((x / (SCALING_WIDTH * lambda_min)) ** 4))


@dataclass(frozen=True)
class WaveletFilterBank:
    """Scales per resolution level plus kernel parameters.

    ``levels[L - 1]`` holds the ``L`` scales of level ``L`` in decreasing order.
    """

    resolution: int
    lambda_max: float
    levels: tuple
    gain: float

    @property
    def lambda_min(self) -> float:
        return self.lambda_max / MIN_RATIO

    @property
    def signature_size(self) -> int:
        return sum(len(s) + 1 for s in self.levels)

    def row_labels(self) -> list[str]:
        """Human-readable label for every signature row, in row order."""
        out = []
        for L, scales in enumerate(self.levels, start=1):
            out += [f"L{L}:W(t={t:.6g})" for t in scales]
            out.append(f"L{L}:S")
        return out

    def g(self, x):
        return wavelet_kernel(x)

    def h(self, x):
        return scaling_kernel(x, self.lambda_min, self.gain)


def design_filter_bank(lambda_max: float, resolution: int = DEFAULT_RESOLUTION) -> WaveletFilterBank:
    """Log-spaced wavelet scales in ``[2/lambda_max, 2/lambda_min]`` per level.

    Level ``L`` gets ``L`` scales running from the coarsest ``2/lambda_min``
    down to the finest ``2/lambda_max``. A single-scale level uses the coarsest.
    The scaling gain makes ``h(0)`` equal the peak of ``g``.
    """
    if not (lambda_max > 0 and math.isfinite(lambda_max)):
        raise ArgumentError(f"lambda_max must be positive, got {lambda_max}")
    if resolution < 1:
        raise ArgumentError(f"resolution must be >= 1, got {resolution}")
    lambda_min = lambda_max / MIN_RATIO
    t_max, t_min = 2.0 / lambda_min, 2.0 / lambda_max
    levels = tuple(tuple(np.geomspace(t_max, t_min, L).tolist()) for L in range(1, resolution + 1))
    return WaveletFilterBank(resolution, float(lambda_max), levels, gain=math.exp(-1.0))


def _check_vertex(eigs: EigenSystem, j: int):
    if not 0 <= j < eigs.vertex_count:
        raise ArgumentError(f"vertex index {j} out of range [0, {eigs.vertex_count})")


def wavelet_coefficient(eigs: EigenSystem, t: float, j: int) -> float:
    """``sum_l g(t lam_l) xi_l(j)^2``."""
    _check_vertex(eigs, j)
    if not t > 0:
        raise ArgumentError(f"scale must be positive, got {t}")
    return float(wavelet_kernel(t * eigs.eigenvalues) @ (eigs.eigenvectors[j] ** 2))


def scaling_coefficient(eigs: EigenSystem, j: int, bank: WaveletFilterBank | None = None) -> float:
    """``sum_l h(lam_l) xi_l(j)^2`` with ``h`` designed from this eigensystem's top eigenvalue
    unless ``bank`` is given."""
    _check_vertex(eigs, j)
    if bank is None:
        bank = design_filter_bank(eigs.lambda_max)
    return float(bank.h(eigs.eigenvalues) @ (eigs.eigenvectors[j] ** 2))


@dataclass(frozen=True)
class SignatureMatrix:
    """``p x m`` per-vertex descriptors; column ``j`` belongs to vertex ``j``."""

    data: np.ndarray

    @property
    def shape(self):
        return self.data.shape

    def to_bytes(self, key: str = "") -> bytes:
        return cache.pack(SIG_MAGIC, key, [self.data])

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SignatureMatrix":
        _, (data,) = cache.unpack(blob, SIG_MAGIC)
        return cls(data)


def compute_signature(eigs: EigenSystem, bank: WaveletFilterBank) -> SignatureMatrix:
    """Stack, for each level, its wavelet rows (scale order) then the scaling row."""
    lm = eigs.lambda_max
    if abs(bank.lambda_max - lm) > 1e-6 * abs(lm):
        raise ArgumentError(
            f"filter bank designed for lambda_max={bank.lambda_max:.9g}, eigensystem has {lm:.9g}"
        )
    sq = eigs.eigenvectors**2  # m x count
    lam = eigs.eigenvalues
    scaling_row = sq @ bank.h(lam)
    rows = []
    for scales in bank.levels:
        kernels = wavelet_kernel(np.outer(scales, lam))  # L x count
        rows.append(kernels @ sq.T)
        rows.append(scaling_row[None, :])
    data = np.vstack(rows)
    data.flags.writeable = False
    return SignatureMatrix(data)
