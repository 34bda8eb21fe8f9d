"""Synthetic shapes used by tests, scripts and acceptance runs."""

from __future__ import annotations

import numpy as np

from .geometry import TriMesh

_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)


def _icosahedron():
    t = (1.0 + 5.0 ** 0.5) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    # rotate so vertex 0 sits on the north pole; its antipode (vertex 3) lands on the south pole
    a = v[0]
    z = np.array([0.0, 0.0, 1.0])
    axis = np.cross(a, z)
    s = np.linalg.norm(axis)
    c = float(a @ z)
    axis /= s
    kx = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    rot = np.eye(3) + s * kx + (1 - c) * (kx @ kx)
    return v @ rot.T


def icosphere(frequency: int = 8, radius: float = 1.0) -> TriMesh:
    """Geodesic sphere from an icosahedron with each edge split `frequency` times.

    Produces ``10 f^2 + 2`` vertices and ``20 f^2`` faces; ``frequency=2**k``
    matches ``k`` rounds of midpoint subdivision (642 vertices for k=3).
    Vertex 0 is the north pole and vertex 3 the south pole.
    """
    f = int(frequency)
    if f < 1:
        raise ValueError("frequency must be >= 1")
    base = _icosahedron()
    index = {}
    points = []
    faces = []

    def vid(key):
        j = index.get(key)
        if j is None:
            j = len(points)
            index[key] = j
            p = sum(base[v] * w for v, w in key) / f
            points.append(p)
        return j

    # base vertices keep their icosahedron indices
    for k in range(base.shape[0]):
        vid(((k, f),))
    for a, b, c in _ICO_FACES:
        grid = {}
        for i in range(f + 1):
            for j in range(f + 1 - i):
                w = {a: f - i - j, b: 0, c: 0}
                w[b] += i
                w[c] += j
                key = tuple(sorted((v, x) for v, x in w.items() if x > 0))
                grid[i, j] = vid(key)
        for i in range(f):
            for j in range(f - i):
                faces.append((grid[i, j], grid[i + 1, j], grid[i, j + 1]))
                if i + j < f - 1:
                    faces.append((grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]))
    pts = np.array(points)
    pts *= radius / np.linalg.norm(pts, axis=1, keepdims=True)
    return TriMesh(pts, np.array(faces))


def bumpy(mesh: TriMesh, amplitude: float = 0.15) -> TriMesh:
    """Radially modulate a sphere-like mesh to break its symmetries."""
    v = mesh.vertices
    r = np.linalg.norm(v, axis=1, keepdims=True)
    u = v / r
    x, y, z = u.T
    g = 1.0 + amplitude * (np.sin(3.0 * x + 0.4) * np.cos(2.0 * y - 0.3) + 0.6 * z * z * z + 0.5 * x * y)
    return TriMesh(v * g[:, None], mesh.faces)


def near_isometric(mesh: TriMesh, scale=(1.05, 0.97, 1.0), jitter: float = 0.002, seed: int = 0) -> TriMesh:
    """Mildly stretched and jittered copy with the same connectivity."""
    rng = np.random.default_rng(seed)
    v = mesh.vertices * np.asarray(scale)
    v = v + rng.normal(scale=jitter, size=v.shape)
    return TriMesh(v, mesh.faces)


def permuted(mesh: TriMesh, perm) -> TriMesh:
    """Reorder vertices so that new vertex ``perm[i]`` is old vertex ``i``."""
    perm = np.asarray(perm)
    n = mesh.n_vertices
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    return TriMesh(mesh.vertices[inv], perm[mesh.faces])


def circle_band(n: int, radius: float = 1.0, height: float = 0.1) -> TriMesh:
    """Closed cylindrical band; vertex ``i`` and ``n + i`` sit at angle ``2 pi i / n``."""
    t = 2.0 * np.pi * np.arange(n) / n
    ring = np.stack([radius * np.cos(t), radius * np.sin(t), np.zeros(n)], axis=1)
    v = np.concatenate([ring, ring + [0.0, 0.0, height]])
    faces = []
    for i in range(n):
        j = (i + 1) % n
        faces.append((i, j, n + i))
        faces.append((j, n + j, n + i))
    return TriMesh(v, np.array(faces))
