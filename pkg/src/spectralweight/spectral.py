"""Cotangent Laplace-Beltrami discretisation and its truncated spectrum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from . import cache
from .errors import ArgumentError, NumericalError
from .mesh import DEGENERATE_AREA_FACTOR, TriangleMesh

EIG_MAGIC = b"SWEIG1"
DEFAULT_EIG_COUNT = 301
SHIFT = -1e-8
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class CotanLaplacian:
    """Stiffness ``C = D - W`` (sparse, symmetric) and lumped mass diagonal."""

    stiffness: sparse.csr_matrix
    mass: np.ndarray

    @property
    def size(self) -> int:
        return self.stiffness.shape[0]

    @property
    def mass_matrix(self) -> sparse.csr_matrix:
        return sparse.diags(self.mass, format="csr")


@dataclass(frozen=True)
class EigenSystem:
    """Smallest generalized eigenpairs of ``C x = lam A x``.

    ``eigenvectors[:, l]`` is A-orthonormal and sign-normalised so that its
    largest-magnitude entry is positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mass: np.ndarray

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    @property
    def vertex_count(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def truncated(self, count: int) -> "EigenSystem":
        return EigenSystem(self.eigenvalues[:count], self.eigenvectors[:, :count], self.mass)

    def to_bytes(self, key: str = "") -> bytes:
        return cache.pack(EIG_MAGIC, key, [self.eigenvalues, self.eigenvectors, self.mass])

    @classmethod
    def from_bytes(cls, blob: bytes) -> "EigenSystem":
        _, (vals, vecs, mass) = cache.unpack(blob, EIG_MAGIC)
        return cls(vals, vecs, mass)


def _corner_cotangents(mesh: TriangleMesh):
    """Per-face cotangents at the three corners and squared opposite edge lengths."""
    p = mesh.vertices[mesh.faces]
    # edge opposite corner k: e[:, k]
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    double_area = np.linalg.norm(np.cross(e[:, 0], e[:, 1]), axis=1)
    diag = mesh.bbox_diagonal()
    bad = double_area < 2.0 * DEGENERATE_AREA_FACTOR * diag**2
    if bad.any():
        raise NumericalError(f"degenerate face {int(np.flatnonzero(bad)[0])}: cotangent weight overflows")
    # angle at corner k is between the two edges meeting there: -e[k+1] and e[k+2]
    cot = np.empty((len(p), 3))
    for k in range(3):
        a = -e[:, (k + 1) % 3]
        b = e[:, (k + 2) % 3]
        cot[:, k] = np.einsum("ij,ij->i", a, b) / double_area
    sq = np.einsum("ijk,ijk->ij", e, e)
    return cot, sq, 0.5 * double_area


def mixed_areas(mesh: TriangleMesh, cot=None, sq=None, area=None) -> np.ndarray:
    """Mixed Voronoi vertex areas (obtuse faces split 1/2 at the obtuse corner, 1/4 elsewhere)."""
    if cot is None:
        cot, sq, area = _corner_cotangents(mesh)
    f = mesh.faces
    contrib = np.empty_like(cot)
    for k in range(3):
        j, l = (k + 1) % 3, (k + 2) % 3
        # Voronoi share of corner k: edges k-j (opposite l) and k-l (opposite j)
        contrib[:, k] = (sq[:, l] * cot[:, l] + sq[:, j] * cot[:, j]) / 8.0
    obtuse = cot < 0
    any_obtuse = obtuse.any(axis=1)
    contrib[any_obtuse] = (area[any_obtuse, None] / 4.0) * np.where(obtuse[any_obtuse], 2.0, 1.0)
    a = np.bincount(f.ravel(), weights=contrib.ravel(), minlength=mesh.vertex_count)
    return a


def build_laplacian(mesh: TriangleMesh) -> CotanLaplacian:
    """Assemble the cotangent stiffness matrix and mixed-area mass.

    ``w_ij = (cot a_ij + cot b_ij) / 2`` summed over the faces sharing edge
    ``ij`` (a single term on boundary edges). Area normalisation is left to the
    mass matrix of the generalized eigenproblem.
    """
    cot, sq, area = _corner_cotangents(mesh)
    f = mesh.faces
    # corner k weights the edge between the other two corners
    i = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    j = np.concatenate([f[:, 2], f[:, 0], f[:, 1]])
    w = 0.5 * np.concatenate([cot[:, 0], cot[:, 1], cot[:, 2]])
    m = mesh.vertex_count
    W = sparse.coo_matrix((w, (i, j)), shape=(m, m)).tocsr()
    W = (W + W.T).tocsr()
    C = (sparse.diags(np.asarray(W.sum(axis=1)).ravel()) - W).tocsr()
    C.sum_duplicates()
    C.sort_indices()
    a = mixed_areas(mesh, cot, sq, area)
    if np.any(a <= 0):
        raise NumericalError(f"nonpositive mixed area at vertex {int(np.flatnonzero(a <= 0)[0])}")
    return CotanLaplacian(C, a)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    s = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    s[s == 0] = 1.0
    return vecs * s


def solve_eigs(lap: CotanLaplacian, count: int = DEFAULT_EIG_COUNT, maxiter=None) -> EigenSystem:
    """Smallest ``count`` eigenpairs of ``C x = lam A x`` by shift-invert Lanczos.

    The shift sits just below zero so the factorisation of ``C - shift*A``
    stays definite. Converged Ritz vectors get one Rayleigh-Ritz pass to make
    them A-orthonormal to rounding and diagonalise the projected stiffness.
    """
    m = lap.size
    if not 1 <= count <= m - 1:
        raise ArgumentError(f"count must be in [1, {m - 1}], got {count}")
    C = lap.stiffness
    A = lap.mass_matrix
    if maxiter is None:
        maxiter = 50 * count
    v0 = np.ones(m)  # fixed start vector keeps results reproducible
    try:
        vals, vecs = eigsh(C, k=count, M=A, sigma=SHIFT, which="LM", v0=v0, maxiter=maxiter, tol=0)
    except ArpackNoConvergence as exc:
        raise NumericalError(
            f"Lanczos did not converge after {maxiter} iterations: "
            f"{len(exc.eigenvalues)} of {count} eigenpairs converged"
        ) from None
    order = np.argsort(vals)
    vecs = vecs[:, order]

    # Rayleigh-Ritz in the converged subspace
    G = vecs.T @ (A @ vecs)
    K = vecs.T @ (C @ vecs)
    G = 0.5 * (G + G.T)
    K = 0.5 * (K + K.T)
    vals, Q = eigh(K, G)
    vecs = vecs @ Q
    vals = np.maximum(vals, 0.0)
    vecs = _fix_signs(vecs)

    res = residuals(lap, vals, vecs)
    cnorm = abs(C).sum(axis=1).max()
    worst = int(np.argmax(res))
    if res[worst] > RESIDUAL_TOL * cnorm:
        raise NumericalError(
            f"eigenpair {worst} residual {res[worst]:.3e} exceeds {RESIDUAL_TOL * cnorm:.3e}"
        )
    vals.flags.writeable = False
    vecs.flags.writeable = False
    return EigenSystem(vals, vecs, lap.mass.copy())


def residuals(lap: CotanLaplacian, vals, vecs) -> np.ndarray:
    """Per-pair ``||C x - lam A x||_2``."""
    r = lap.stiffness @ vecs - (lap.mass[:, None] * vecs) * vals[None, :]
    return np.linalg.norm(r, axis=0)


def eigensystem(mesh: TriangleMesh, count: int = DEFAULT_EIG_COUNT) -> EigenSystem:
    """Laplacian assembly plus eigensolve; ``count`` is clipped to ``m - 1``."""
    lap = build_laplacian(mesh)
    return solve_eigs(lap, min(count, lap.size - 1))
