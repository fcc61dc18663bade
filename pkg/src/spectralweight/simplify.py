"""Quadric error metric edge-collapse decimation."""

from __future__ import annotations

import heapq
import warnings

import numpy as np

from .errors import ArgumentError, SimplificationWarning
from .mesh import TriangleMesh

BOUNDARY_WEIGHT = 100.0
# minimum cosine between a face normal before and after a collapse
MIN_NORMAL_COS = 0.2


def _plane_quadrics(v, f):
    p = v[f]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norm = np.linalg.norm(n, axis=1)
    ok = norm > 0
    n[ok] /= norm[ok, None]
    n[~ok] = 0.0
    d = -np.einsum("ij,ij->i", n, p[:, 0])
    plane = np.column_stack([n, d])
    return np.einsum("fi,fj->fij", plane, plane)


def _boundary_quadric(a, b, face_normal):
    # plane through edge a-b, perpendicular to the adjacent face
    e = b - a
    n = np.cross(e, face_normal)
    ln = np.linalg.norm(n)
    if ln == 0:
        return np.zeros((4, 4))
    n /= ln
    plane = np.append(n, -n @ a)
    return BOUNDARY_WEIGHT * np.outer(plane, plane)


class _Decimator:
    def __init__(self, mesh: TriangleMesh):
        self.v = mesh.vertices.copy()
        self.f = mesh.faces.copy()
        m = len(self.v)
        self.lo = self.v.min(axis=0)
        self.hi = self.v.max(axis=0)
        self.face_alive = np.ones(len(self.f), dtype=bool)
        self.vert_alive = np.zeros(m, dtype=bool)
        self.vert_alive[np.unique(self.f)] = True
        self.isolated = ~self.vert_alive
        self.vfaces = [set() for _ in range(m)]
        for fi, (a, b, c) in enumerate(self.f.tolist()):
            self.vfaces[a].add(fi)
            self.vfaces[b].add(fi)
            self.vfaces[c].add(fi)
        self.nbrs = [set() for _ in range(m)]
        for a, b, c in self.f.tolist():
            self.nbrs[a].update((b, c))
            self.nbrs[b].update((a, c))
            self.nbrs[c].update((a, b))
        fq = _plane_quadrics(self.v, self.f)
        self.Q = np.zeros((m, 4, 4))
        np.add.at(self.Q, self.f[:, 0], fq)
        np.add.at(self.Q, self.f[:, 1], fq)
        np.add.at(self.Q, self.f[:, 2], fq)
        self._add_boundary_quadrics()
        self.version = np.zeros(m, dtype=np.int64)
        self.heap = []
        e = mesh.edges()
        self._push_many(e[:, 0], e[:, 1])

    def _add_boundary_quadrics(self):
        edge_faces = {}
        for fi, (a, b, c) in enumerate(self.f.tolist()):
            for x, y in ((a, b), (b, c), (c, a)):
                edge_faces.setdefault((min(x, y), max(x, y)), []).append(fi)
        self.boundary_vertex = np.zeros(len(self.v), dtype=bool)
        for (a, b), fs in edge_faces.items():
            if len(fs) == 1:
                self.boundary_vertex[[a, b]] = True
                tri = self.v[self.f[fs[0]]]
                n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
                bq = _boundary_quadric(self.v[a], self.v[b], n)
                self.Q[a] += bq
                self.Q[b] += bq

    def _optimal_many(self, a, b):
        """Best clamped collapse position and its quadric cost for edge arrays ``a``, ``b``."""
        Q = self.Q[a] + self.Q[b]
        A = Q[:, :3, :3]
        rhs = -Q[:, :3, 3]
        cand = np.stack([self.v[a], self.v[b], 0.5 * (self.v[a] + self.v[b]), self.v[a]], axis=1)
        scale = np.abs(A).sum(axis=(1, 2)) / 3.0
        det = np.linalg.det(A)
        ok = np.abs(det) > 1e-10 * scale**3
        if ok.any():
            cand[ok, 3] = np.linalg.solve(A[ok], rhs[ok][..., None])[..., 0]
        cand = np.clip(cand, self.lo, self.hi)
        h = np.concatenate([cand, np.ones(cand.shape[:2] + (1,))], axis=2)
        cost = np.einsum("eci,eij,ecj->ec", h, Q, h)
        best = np.argmin(cost, axis=1)
        idx = np.arange(len(a))
        return np.maximum(cost[idx, best], 0.0), cand[idx, best]

    def _push_many(self, a, b):
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        if not len(a):
            return
        cost, _ = self._optimal_many(a, b)
        va, vb = self.version[a], self.version[b]
        for item in zip(cost.tolist(), a.tolist(), b.tolist(), va.tolist(), vb.tolist()):
            heapq.heappush(self.heap, item)

    def _edge_faces(self, a, b):
        return self.vfaces[a] & self.vfaces[b]

    def _can_collapse(self, a, b, p):
        shared = self._edge_faces(a, b)
        if not shared or len(shared) > 2:
            return False
        opposite = set()
        for fi in shared:
            opposite.update(self.f[fi].tolist())
        opposite -= {a, b}
        # link condition keeps the surface manifold
        if (self.nbrs[a] & self.nbrs[b]) != opposite:
            return False
        if len(shared) == 2 and self.boundary_vertex[a] and self.boundary_vertex[b]:
            return False
        # a face of b that would duplicate an existing face of a
        a_pairs = set()
        for fi in self.vfaces[a] - shared:
            tri = self.f[fi].tolist()
            tri.remove(a)
            a_pairs.add(frozenset(tri))
        for fi in self.vfaces[b] - shared:
            tri = self.f[fi].tolist()
            tri.remove(b)
            if frozenset(tri) in a_pairs:
                return False
        for x in (a, b):
            for fi in self.vfaces[x] - shared:
                tri = self.f[fi]
                old = self.v[tri]
                new = old.copy()
                new[tri == x] = p
                n0 = np.cross(old[1] - old[0], old[2] - old[0])
                n1 = np.cross(new[1] - new[0], new[2] - new[0])
                l0, l1 = np.linalg.norm(n0), np.linalg.norm(n1)
                if l1 <= 1e-12 * max(l0, 1e-300) or n0 @ n1 < MIN_NORMAL_COS * l0 * l1:
                    return False
        return True

    def _collapse(self, a, b, p):
        shared = self._edge_faces(a, b)
        for fi in shared:
            self.face_alive[fi] = False
            for x in self.f[fi].tolist():
                self.vfaces[x].discard(fi)
        for fi in self.vfaces[b]:
            row = self.f[fi]
            row[row == b] = a
            self.vfaces[a].add(fi)
        self.vfaces[b] = set()
        for w in self.nbrs[b]:
            self.nbrs[w].discard(b)
            if w != a:
                self.nbrs[w].add(a)
                self.nbrs[a].add(w)
        self.nbrs[a].discard(b)
        self.nbrs[b] = set()
        self.v[a] = p
        self.Q[a] += self.Q[b]
        self.boundary_vertex[a] |= self.boundary_vertex[b]
        self.vert_alive[b] = False
        self.version[a] += 1
        self.version[b] += 1
        w = sorted(self.nbrs[a])
        self._push_many([min(a, x) for x in w], [max(a, x) for x in w])

    def run(self, target: int) -> bool:
        alive = int(self.vert_alive.sum() + self.isolated.sum())
        while alive > target and self.heap:
            cost, a, b, va, vb = heapq.heappop(self.heap)
            if not (self.vert_alive[a] and self.vert_alive[b]):
                continue
            if va != self.version[a] or vb != self.version[b]:
                continue
            _, p = self._optimal_many(np.array([a]), np.array([b]))
            p = p[0]
            if not self._can_collapse(a, b, p):
                continue
            self._collapse(a, b, p)
            alive -= 1
        return alive <= target

    def result(self) -> TriangleMesh:
        keep = self.vert_alive | self.isolated
        remap = -np.ones(len(self.v), dtype=np.int64)
        remap[keep] = np.arange(int(keep.sum()))
        faces = remap[self.f[self.face_alive]]
        return TriangleMesh(self.v[keep], faces)


def simplify(mesh: TriangleMesh, target_vertices: int) -> TriangleMesh:
    """Decimate ``mesh`` to ``target_vertices`` by quadric-error edge collapse.

    Collapses that would break manifoldness or flip a face normal are skipped;
    new vertex positions are clamped to the input bounding box. A mesh already
    at or below the target is returned unchanged. If no admissible collapse is
    left before the target is reached, the partially decimated mesh is returned
    with a :class:`SimplificationWarning`.
    """
    if target_vertices < 4:
        raise ArgumentError(f"target_vertices must be >= 4, got {target_vertices}")
    if mesh.vertex_count <= target_vertices:
        return mesh
    dec = _Decimator(mesh)
    if not dec.run(target_vertices):
        out = dec.result()
        warnings.warn(
            f"simplification stopped at {out.vertex_count} vertices (target {target_vertices})",
            SimplificationWarning,
            stacklevel=2,
        )
        return out
    return dec.result()
