"""Correspondence quality: geodesic errors, cumulative error curves, color transfer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import Permutation
from .geometry import TriMesh, write_mesh
from .metric import MetricSpace

DEFAULT_THRESHOLDS = np.round(np.arange(0, 101) * 0.0025, 10)


@dataclass(frozen=True)
class ErrorCurve:
    thresholds: np.ndarray
    fractions: np.ndarray

    def __post_init__(self):
        if self.thresholds.shape != self.fractions.shape:
            raise ValueError("thresholds and fractions differ in length")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("threshold,fraction\n")
            for t, f in zip(self.thresholds, self.fractions):
                fh.write(f"{float(t)!r},{float(f)!r}\n")

    @classmethod
    def read_csv(cls, path) -> "ErrorCurve":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0].copy(), data[:, 1].copy())


def _forward(p):
    return np.asarray(p.forward if isinstance(p, Permutation) else p, dtype=np.int64)


def geodesic_errors(perm, truth, space_y: MetricSpace, diameter: float) -> np.ndarray:
    """``d_Y(perm[i], truth[i]) / diameter`` for every source point.

    Distance columns are taken at whichever of the mismatched targets has
    fewer distinct values (predicted or true).
    """
    p = _forward(perm)
    g = _forward(truth)
    if p.size != g.size:
        raise ValueError(f"map sizes differ: {p.size} vs {g.size}")
    if not diameter > 0:
        raise ValueError("diameter must be positive")
    err = np.zeros(p.size)
    wrong = np.flatnonzero(p != g)
    if wrong.size == 0:
        return err
    a, b = p[wrong], g[wrong]
    if np.unique(a).size < np.unique(b).size:
        a, b = b, a
    # columns at the targets in b, read at a
    for u in np.unique(b):
        sel = b == u
        err[wrong[sel]] = space_y.distance_column(int(u))[a[sel]]
    return err / diameter


def error_curve(errors, thresholds=None) -> ErrorCurve:
    """Fraction of points whose error is at most each threshold."""
    e = np.sort(np.asarray(errors, dtype=np.float64))
    t = DEFAULT_THRESHOLDS if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    if (t < 0).any() or (np.diff(t) <= 0).any():
        raise ValueError("thresholds must be non-negative and strictly increasing")
    frac = np.searchsorted(e, t, side="right") / e.size
    return ErrorCurve(t.copy(), frac)


def position_colors(mesh: TriMesh) -> np.ndarray:
    """RGB in [0, 255] from bounding-box-normalized vertex coordinates."""
    v = mesh.vertices
    lo = v.min(axis=0)
    span = v.max(axis=0) - lo
    span[span == 0] = 1.0
    u = (v - lo) / span
    return np.rint(255.0 * u).astype(np.int64)


def transfer_colors(mesh_x: TriMesh, perm) -> np.ndarray:
    """Colors for Y: vertex ``j`` takes the color of X vertex ``perm^-1(j)``."""
    p = perm if isinstance(perm, Permutation) else Permutation(perm)
    if len(p) != mesh_x.n_vertices:
        raise ValueError(f"map has {len(p)} entries, X has {mesh_x.n_vertices} vertices")
    return position_colors(mesh_x)[p.inverse]


def color_transfer_export(mesh_x: TriMesh, mesh_y: TriMesh, perm, out) -> None:
    """Write `mesh_y` as ASCII PLY colored through the map from `mesh_x`."""
    if mesh_x.n_vertices != mesh_y.n_vertices:
        raise ValueError(f"vertex counts differ: {mesh_x.n_vertices} vs {mesh_y.n_vertices}")
    write_mesh(mesh_y, out, format="ply", colors=transfer_colors(mesh_x, perm))


def write_permutation(perm, path) -> None:
    """``i p_i`` per line."""
    p = _forward(perm)
    with open(path, "w", encoding="ascii") as fh:
        for i, j in enumerate(p.tolist()):
            fh.write(f"{i} {j}\n")


def read_permutation(path) -> Permutation:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].split()
            if not s:
                continue
            if len(s) == 1:
                rows.append((len(rows), int(s[0])))
            elif len(s) == 2:
                rows.append((int(s[0]), int(s[1])))
            else:
                raise ValueError(f"{path}:{lineno}: expected 'i p_i'")
    if not rows:
        raise ValueError(f"{path}: empty permutation file")
    idx = np.array([r[0] for r in rows])
    if not np.array_equal(np.sort(idx), np.arange(idx.size)):
        raise ValueError(f"{path}: source indices must cover 0..{idx.size - 1} exactly once")
    p = np.empty(idx.size, dtype=np.int64)
    p[idx] = [r[1] for r in rows]
    return Permutation(p)
