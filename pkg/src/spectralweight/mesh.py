"""Triangle mesh container, OBJ I/O, validation and global shape scalars."""

from __future__ import annotations

import hashlib
import io
import json
import os
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import MeshParseError, MeshWarning, StructuralError

DEGENERATE_AREA_FACTOR = 1e-12


class TriangleMesh:
    """Immutable indexed triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (m, 3)
        Vertex coordinates (cm by convention).
    faces : array_like, shape (f, 3)
        Zero-based vertex indices, counterclockwise seen from outside.
    """

    __slots__ = ("vertices", "faces", "_hash")

    def __init__(self, vertices, faces):
        v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise StructuralError("vertex coordinates must be finite")
        if f.size:
            lo, hi = int(f.min()), int(f.max())
            if lo < 0 or hi >= len(v):
                bad = lo if lo < 0 else hi
                raise StructuralError(
                    f"face index {bad} out of range for {len(v)} vertices"
                )
            rep = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if rep.any():
                raise StructuralError(
                    f"face {int(np.flatnonzero(rep)[0])} repeats a vertex"
                )
        v.flags.writeable = False
        f.flags.writeable = False
        self.vertices = v
        self.faces = f
        self._hash = None

    def __repr__(self):
        return f"TriangleMesh(vertices={self.vertex_count}, faces={self.face_count})"

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def content_hash(self) -> str:
        """SHA-256 of the vertex and face arrays (little-endian)."""
        if self._hash is None:
            h = hashlib.sha256()
            h.update(np.int64(self.vertex_count).astype("<i8").tobytes())
            h.update(self.vertices.astype("<f8").tobytes())
            h.update(self.faces.astype("<i8").tobytes())
            self._hash = h.hexdigest()
        return self._hash

    def transformed(self, rotation=None, translation=None, scale=1.0) -> "TriangleMesh":
        """Return a copy with ``x -> scale * R x + t`` applied to every vertex."""
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=np.float64).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        return TriangleMesh(v, self.faces)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs, shape (e, 2)."""
        return unique_edges(self.faces)

    def face_areas(self) -> np.ndarray:
        p = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    def bbox_diagonal(self) -> float:
        if self.vertex_count == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))


def unique_edges(faces: np.ndarray) -> np.ndarray:
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def edge_graph(mesh: TriangleMesh, weighted: bool = True) -> sparse.csr_matrix:
    """Symmetric sparse adjacency; entries are Euclidean edge lengths when ``weighted``."""
    e = mesh.edges()
    if weighted:
        w = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    else:
        w = np.ones(len(e))
    m = mesh.vertex_count
    g = sparse.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(m, m)).tocsr()
    return (g + g.T).tocsr()


# ---------------------------------------------------------------------------
# OBJ I/O


def _open_text(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("ascii", errors="replace"))
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="ascii", errors="replace")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="ascii", errors="replace")


def _parse_index(token, nverts, lineno):
    head = token.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError:
        raise MeshParseError(f"bad face index {token!r}", lineno) from None
    if idx > 0:
        return idx - 1
    if idx < 0:
        # relative index, resolved against vertices seen so far
        return nverts + idx
    raise StructuralError(f"line {lineno}: face index 0 is invalid in OBJ")


def load_obj(source) -> TriangleMesh:
    """Read an ASCII Wavefront OBJ.

    Only ``v`` and ``f`` records are used. Polygons are fan-triangulated from
    their first corner; normals, texture coordinates, groups and materials are
    skipped.

    Parameters
    ----------
    source : path, bytes or file object (binary or text)

    Raises
    ------
    MeshParseError
        A ``v`` or ``f`` record cannot be parsed (message carries the line number).
    StructuralError
        A face refers to a vertex that does not exist.
    """
    fh = _open_text(source)
    close = isinstance(source, (str, os.PathLike))
    verts, faces = [], []
    try:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshParseError("vertex needs 3 coordinates", lineno)
                try:
                    verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError:
                    raise MeshParseError(f"bad vertex coordinate in {line!r}", lineno) from None
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshParseError("face needs at least 3 vertices", lineno)
                idx = [_parse_index(t, len(verts), lineno) for t in parts[1:]]
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
    finally:
        if close:
            fh.close()
    return TriangleMesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh: TriangleMesh, target) -> None:
    """Write ``mesh`` as ASCII OBJ with 17 significant digits per coordinate."""
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}\n" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}\n" for a, b, c in mesh.faces.tolist()]
    text = "".join(lines)
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    elif isinstance(target, io.TextIOBase):
        target.write(text)
    else:
        target.write(text.encode("ascii"))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class MeshReport:
    vertex_count: int
    face_count: int
    is_watertight: bool
    component_count: int
    degenerate_face_count: int

    @property
    def ok(self) -> bool:
        """True when the mesh is usable by the spectral pipeline."""
        return (
            self.component_count == 1
            and self.degenerate_face_count == 0
            and self.face_count > 0
        )

    def problems(self) -> list[str]:
        out = []
        if self.face_count == 0:
            out.append("mesh has no faces")
        if self.component_count != 1:
            out.append(f"{self.component_count} connected components")
        if self.degenerate_face_count:
            out.append(f"{self.degenerate_face_count} degenerate faces")
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _edge_face_counts(faces):
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return counts


def component_count(mesh: TriangleMesh) -> int:
    if mesh.vertex_count == 0:
        return 0
    n, _ = csgraph.connected_components(edge_graph(mesh, weighted=False), directed=False)
    return int(n)


def validate(mesh: TriangleMesh) -> MeshReport:
    """Compute a :class:`MeshReport`; never raises."""
    faces = mesh.faces
    if len(faces):
        counts = _edge_face_counts(faces)
        watertight = bool(np.all(counts == 2))
        diag = mesh.bbox_diagonal()
        degenerate = int(np.sum(mesh.face_areas() < DEGENERATE_AREA_FACTOR * diag**2))
    else:
        watertight = False
        degenerate = 0
    return MeshReport(
        vertex_count=mesh.vertex_count,
        face_count=mesh.face_count,
        is_watertight=watertight,
        component_count=component_count(mesh),
        degenerate_face_count=degenerate,
    )


# ---------------------------------------------------------------------------
# global scalars


def signed_volume(mesh: TriangleMesh) -> float:
    p = mesh.vertices[mesh.faces]
    return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)


def volume(mesh: TriangleMesh) -> float:
    """Enclosed volume from the divergence theorem (sum of origin tetrahedra).

    On an open mesh the result depends on the origin; a :class:`MeshWarning`
    is issued and the value is returned anyway.
    """
    if not validate(mesh).is_watertight:
        warnings.warn("volume of a non-watertight mesh is approximate", MeshWarning, stacklevel=2)
    return abs(signed_volume(mesh))


def _sweep_starts(vertices):
    # geometric choices, so the estimate does not depend on vertex numbering or pose
    c = vertices - vertices.mean(axis=0)
    _, axes = np.linalg.eigh(c.T @ c)
    proj = c @ axes
    starts = {int(np.argmax((c * c).sum(axis=1)))}
    starts.update(int(i) for i in np.argmax(proj, axis=0))
    starts.update(int(i) for i in np.argmin(proj, axis=0))
    return sorted(starts)


def geodesic_diameter(mesh: TriangleMesh, max_sweeps: int = 16) -> float:
    """Approximate geodesic diameter by repeated farthest-point Dijkstra sweeps.

    Distances are shortest paths along mesh edges. A sweep chain jumps from
    its current source to the farthest vertex found, and stops once the
    estimate no longer grows (after at least two sweeps). Chains start at the
    vertex farthest from the centroid and at the extreme vertices along each
    principal axis; the largest distance found is returned.
    """
    if mesh.vertex_count == 0:
        raise StructuralError("empty mesh has no diameter")
    g = edge_graph(mesh)
    ncomp, _ = csgraph.connected_components(g, directed=False)
    if ncomp != 1:
        raise StructuralError(f"geodesic diameter needs a connected mesh, got {ncomp} components")
    overall = 0.0
    for source in _sweep_starts(mesh.vertices):
        best = -1.0
        for sweep in range(max_sweeps):
            dist = csgraph.dijkstra(g, directed=False, indices=source)
            far = int(np.argmax(dist))
            d = float(dist[far])
            if sweep >= 1 and d <= best:
                break
            best = max(best, d)
            source = far
        overall = max(overall, best)
    return overall
