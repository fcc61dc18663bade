"""Procedural test meshes: platonic solids, spheres, strips."""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull

from .mesh import TriangleMesh


def tetrahedron() -> TriangleMesh:
    v = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
    f = [(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)]
    return TriangleMesh(v, f)


def unit_cube() -> TriangleMesh:
    """Axis-aligned cube [0, 1]^3, 12 outward-facing triangles."""
    v = [(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)]
    # vertex index = 4x + 2y + z
    quads = [
        (0, 1, 3, 2),  # x = 0
        (4, 6, 7, 5),  # x = 1
        (0, 4, 5, 1),  # y = 0
        (2, 3, 7, 6),  # y = 1
        (0, 2, 6, 4),  # z = 0
        (1, 5, 7, 3),  # z = 1
    ]
    f = []
    for a, b, c, d in quads:
        f += [(a, b, c), (a, c, d)]
    return TriangleMesh(v, f)


def _orient_outward(vertices, faces):
    p = vertices[faces]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    centre = vertices.mean(axis=0)
    flip = np.einsum("ij,ij->i", n, p.mean(axis=1) - centre) < 0
    faces = faces.copy()
    faces[flip] = faces[flip][:, ::-1]
    return faces


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """Subdivided icosahedron with ``10 * 4**subdivisions + 2`` vertices."""
    t = (1.0 + 5**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    v = np.array(verts) * radius
    return TriangleMesh(v, _orient_outward(v, np.array(faces)))


def fibonacci_directions(n: int) -> np.ndarray:
    """``n`` nearly uniform unit vectors on a golden-angle spiral."""
    i = np.arange(n, dtype=np.float64) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - 5**0.5) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def sphere_mesh(n: int, radius: float = 1.0) -> TriangleMesh:
    """Sphere with exactly ``n`` vertices (golden-spiral points, hull triangulation)."""
    v = fibonacci_directions(n)
    hull = ConvexHull(v)
    faces = _orient_outward(v, hull.simplices.astype(np.int64))
    return TriangleMesh(v * radius, faces)


def strip(length: float = 10.0, width: float = 1.0, segments: int = 10) -> TriangleMesh:
    """Flat rectangular strip along x, two rows of vertices."""
    xs = np.linspace(0.0, length, segments + 1)
    v = np.concatenate([np.column_stack([xs, np.zeros_like(xs), np.zeros_like(xs)]),
                        np.column_stack([xs, np.full_like(xs, width), np.zeros_like(xs)])])
    n = segments + 1
    f = []
    for i in range(segments):
        f += [(i, i + 1, n + i + 1), (i, n + i + 1, n + i)]
    return TriangleMesh(v, f)


def random_rotation(rng) -> np.ndarray:
    """Uniform random proper rotation matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
