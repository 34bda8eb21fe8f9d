"""Finite metric spaces with on-demand distance columns.

A column ``d(., source)`` is the only primitive the filter needs; full
matrices are assembled only for small spaces (see `DEFAULT_MATRIX_CAP`).
Mesh geodesics are approximated by shortest paths on the edge graph
weighted by Euclidean edge length, which overestimates the true geodesic
by at most O(edge length).
"""

from __future__ import annotations

import logging
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor

import numba
import numpy as np

from .geometry import TriMesh, mesh_area

logger = logging.getLogger(__name__)

DEFAULT_MATRIX_CAP = 4096
DEFAULT_CACHE_BYTES = 256 * 2**20


class MetricError(ValueError):
    pass


class MatrixCapExceeded(MetricError):
    pass


class MetricSpace:
    """Base class: `n` points and a distance-column oracle.

    Subclasses implement `_compute(sources, limit)` returning a float64
    array of shape ``(len(sources), n)``; entries farther than `limit`
    may be ``inf``.
    """

    kind = "abstract"

    def __init__(self, n: int, cache_entries: int | None = None, cache_bytes: int = DEFAULT_CACHE_BYTES,
                 matrix_cap: int = DEFAULT_MATRIX_CAP):
        if n < 1:
            raise MetricError("metric space needs at least one point")
        self.n = int(n)
        self.matrix_cap = int(matrix_cap)
        self.cache_entries = cache_entries
        self.cache_bytes = int(cache_bytes)
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._lock = threading.Lock()
        self.threads = 1
        self.columns_computed = 0
        self.dense_matrices_built = 0

    def __len__(self):
        return self.n

    # -- hooks -------------------------------------------------------------

    def _compute(self, sources: np.ndarray, limit: float) -> np.ndarray:
        raise NotImplementedError

    def area(self) -> float:
        """Surface area, or the documented surrogate for non-mesh spaces."""
        raise NotImplementedError

    # -- columns -----------------------------------------------------------

    def _check_sources(self, sources) -> np.ndarray:
        src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        if src.ndim != 1:
            raise MetricError("sources must be a 1-D index list")
        if src.size and (src.min() < 0 or src.max() >= self.n):
            bad = src[(src < 0) | (src >= self.n)][0]
            raise MetricError(f"source index {bad} out of range [0, {self.n})")
        return src

    def _cache_capacity(self) -> int:
        by_bytes = max(1, self.cache_bytes // (8 * self.n))
        if self.cache_entries is None:
            return by_bytes
        return max(1, min(self.cache_entries, by_bytes))

    def distance_column(self, source: int) -> np.ndarray:
        """Distances from every point to `source` (read-only, cached)."""
        src = int(self._check_sources([source])[0])
        with self._lock:
            col = self._cache.get(src)
            if col is not None:
                self._cache.move_to_end(src)
                return col
        col = self._compute(np.array([src]), np.inf)[0]
        if np.isinf(col).any():
            j = int(np.flatnonzero(np.isinf(col))[0])
            raise MetricError(f"vertex {j} is unreachable from {src}")
        col.flags.writeable = False
        self.columns_computed += 1
        with self._lock:
            if src not in self._cache:
                self._cache[src] = col
                cap = self._cache_capacity()
                while len(self._cache) > cap:
                    self._cache.popitem(last=False)
            return self._cache[src]

    def distance_columns(self, sources, limit: float = np.inf, cache: bool = True,
                         block: int = 256) -> np.ndarray:
        """Stack of distance columns, shape ``(len(sources), n)``.

        With ``cache=False`` the cache is neither read nor filled, which
        keeps memory bounded when streaming many sources. A finite
        `limit` leaves distances beyond it as ``inf``.
        """
        src = self._check_sources(sources)
        if cache and not np.isfinite(limit):
            return np.stack([self.distance_column(s) for s in src]) if src.size else np.empty((0, self.n))
        out = np.empty((src.size, self.n))
        chunks = [src[i : i + block] for i in range(0, src.size, block)]

        def work(i):
            lo = i * block
            out[lo : lo + chunks[i].size] = self._compute(chunks[i], limit)

        if self.threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                list(ex.map(work, range(len(chunks))))
        else:
            for i in range(len(chunks)):
                work(i)
        self.columns_computed += src.size
        return out

    def distance(self, i: int, j: int) -> float:
        return float(self.distance_column(j)[i])

    def full_distance_matrix(self) -> np.ndarray:
        """All pairwise distances; refused above `matrix_cap` points."""
        if self.n > self.matrix_cap:
            raise MatrixCapExceeded(
                f"refusing to build a {self.n}x{self.n} distance matrix (cap {self.matrix_cap}); "
                "use distance_column / distance_columns instead"
            )
        d = self._full()
        if not np.isfinite(d).all():
            raise MetricError("distance matrix has unreachable pairs")
        asym = np.abs(d - d.T).max() if self.n > 1 else 0.0
        if asym > 1e-9:
            raise MetricError(f"distance matrix is not symmetric (max asymmetry {asym:g})")
        self.dense_matrices_built += 1
        return d

    def _full(self) -> np.ndarray:
        return self.distance_columns(np.arange(self.n), cache=False)


@numba.njit(cache=True, nogil=True)
def _dijkstra_csr(indptr, indices, weights, sources, limit, out):
    # binary heap with lazy deletion; out[i] receives the column of sources[i]
    n = indptr.size - 1
    heap_d = np.empty(indices.size + 1, np.float64)
    heap_v = np.empty(indices.size + 1, np.int64)
    done = np.zeros(n, np.bool_)
    for si in range(sources.size):
        d = out[si]
        d[:] = np.inf
        done[:] = False
        s = sources[si]
        d[s] = 0.0
        heap_d[0] = 0.0
        heap_v[0] = s
        size = 1
        while size > 0:
            du = heap_d[0]
            u = heap_v[0]
            size -= 1
            if size > 0:
                ld = heap_d[size]
                lv = heap_v[size]
                i = 0
                while True:
                    c = 2 * i + 1
                    if c >= size:
                        break
                    if c + 1 < size and heap_d[c + 1] < heap_d[c]:
                        c += 1
                    if heap_d[c] >= ld:
                        break
                    heap_d[i] = heap_d[c]
                    heap_v[i] = heap_v[c]
                    i = c
                heap_d[i] = ld
                heap_v[i] = lv
            if done[u]:
                continue
            done[u] = True
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                nd = du + weights[e]
                if nd < d[v] and nd <= limit:
                    d[v] = nd
                    i = size
                    size += 1
                    while i > 0:
                        p = (i - 1) // 2
                        if heap_d[p] <= nd:
                            break
                        heap_d[i] = heap_d[p]
                        heap_v[i] = heap_v[p]
                        i = p
                    heap_d[i] = nd
                    heap_v[i] = v
    return out


class MeshGeodesicSpace(MetricSpace):
    """Shortest-path distances on the edge graph of a `TriMesh`."""

    kind = "mesh-geodesic"

    def __init__(self, mesh: TriMesh, **kw):
        super().__init__(mesh.n_vertices, **kw)
        self.mesh = mesh
        g = mesh.adjacency
        self._indptr = g.indptr.astype(np.int64)
        self._indices = g.indices.astype(np.int64)
        self._weights = g.data.astype(np.float64)

    def _compute(self, sources, limit):
        src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        out = np.empty((src.size, self.n))
        return _dijkstra_csr(self._indptr, self._indices, self._weights, src, float(limit), out)

    def area(self) -> float:
        return mesh_area(self.mesh)


class CircleSpace(MetricSpace):
    """`n` equally spaced points on a circle of the given circumference."""

    kind = "circle"

    def __init__(self, n: int, circumference: float | None = None, **kw):
        super().__init__(n, **kw)
        self.circumference = float(n if circumference is None else circumference)
        if not self.circumference > 0:
            raise MetricError("circumference must be positive")
        self.step = self.circumference / self.n

    def _compute(self, sources, limit):
        j = np.arange(self.n)
        k = np.abs(j[None, :] - sources[:, None])
        d = self.step * np.minimum(k, self.n - k)
        if np.isfinite(limit):
            d[d > limit] = np.inf
        return d.astype(np.float64)

    def area(self) -> float:
        # sphere whose great circle is this circle: (C / 2 pi)^2 * 4 pi
        return self.circumference**2 / np.pi


class ExplicitSpace(MetricSpace):
    """Metric given by a stored symmetric matrix.

    Parameters
    ----------
    matrix : array_like, shape (n, n)
    area : float, optional
        Area used to resolve relative kernel widths. Defaults to the
        surrogate ``4 diam^2 / pi`` (the sphere whose geodesic diameter is
        the largest stored distance), which agrees with `CircleSpace`.
    """

    kind = "explicit"

    def __init__(self, matrix, area: float | None = None, check: bool = True, seed: int = 0, **kw):
        d = np.array(matrix, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise MetricError(f"explicit metric must be square, got shape {d.shape}")
        super().__init__(d.shape[0], **kw)
        if check:
            _check_metric(d, seed=seed)
        d.flags.writeable = False
        self.matrix = d
        self._area = area

    def _compute(self, sources, limit):
        d = self.matrix[sources].copy()
        if np.isfinite(limit):
            d[d > limit] = np.inf
        return d

    def _full(self):
        return self.matrix

    def area(self) -> float:
        if self._area is not None:
            return float(self._area)
        diam = float(self.matrix.max())
        if diam <= 0:
            raise MetricError("cannot derive an area surrogate for a zero metric")
        return 4.0 * diam**2 / np.pi


class SubsetSpace(MetricSpace):
    """Restriction of a parent space to a subset of its points.

    Columns are computed on the parent and read at `indices`; the area is
    inherited from the parent so relative kernel widths stay comparable.
    """

    kind = "subset"

    def __init__(self, parent: MetricSpace, indices, **kw):
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise MetricError("subset needs a non-empty 1-D index list")
        if idx.min() < 0 or idx.max() >= parent.n:
            raise MetricError("subset index out of parent range")
        if np.unique(idx).size != idx.size:
            raise MetricError("subset indices must be distinct")
        super().__init__(idx.size, **kw)
        self.parent = parent
        self.indices = idx

    def _compute(self, sources, limit):
        d = self.parent.distance_columns(self.indices[sources], limit=limit, cache=False)
        return d[:, self.indices]

    def area(self) -> float:
        return self.parent.area()


def _check_metric(d: np.ndarray, seed: int = 0, exhaustive_cap: int = 64, samples: int = 20000):
    n = d.shape[0]
    if not np.isfinite(d).all():
        raise MetricError("explicit metric has non-finite entries")
    if (np.diag(d) != 0).any():
        i = int(np.flatnonzero(np.diag(d) != 0)[0])
        raise MetricError(f"dist({i},{i}) must be 0")
    if (d < 0).any():
        i, j = np.argwhere(d < 0)[0]
        raise MetricError(f"negative distance at ({i},{j})")
    if not np.array_equal(d, d.T):
        i, j = np.argwhere(d != d.T)[0]
        raise MetricError(f"explicit metric is not symmetric at ({i},{j})")
    tol = 1e-9 * max(1.0, float(d.max()))
    if n <= exhaustive_cap:
        # d[i,j] <= d[i,k] + d[k,j] for every k
        viol = d[:, None, :] > d[:, :, None] + d[None, :, :] + tol
        if viol.any():
            i, k, j = np.argwhere(viol)[0]
            raise MetricError(f"triangle inequality fails: d({i},{j}) > d({i},{k}) + d({k},{j})")
    else:
        rng = np.random.default_rng(seed)
        i, j, k = rng.integers(0, n, size=(3, samples))
        bad = d[i, j] > d[i, k] + d[k, j] + tol
        if bad.any():
            t = int(np.flatnonzero(bad)[0])
            raise MetricError(
                f"triangle inequality fails: d({i[t]},{j[t]}) > d({i[t]},{k[t]}) + d({k[t]},{j[t]})"
            )


def load_explicit(path, **kw) -> ExplicitSpace:
    """Read a whitespace-separated matrix file: first line ``n``, then n rows."""
    with open(path, "r", encoding="ascii") as fh:
        rows = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise MetricError(f"{path}: empty matrix file")
    try:
        n = int(rows[0][0])
    except ValueError:
        raise MetricError(f"{path}:1: first line must be the point count") from None
    body = rows[1:]
    if len(body) != n or any(len(r) != n for r in body):
        raise MetricError(f"{path}: expected {n} rows of {n} values")
    try:
        mat = np.array([[float(x) for x in r] for r in body])
    except ValueError:
        raise MetricError(f"{path}: non-numeric entry") from None
    return ExplicitSpace(mat, **kw)


def write_explicit(matrix, path) -> None:
    m = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{m.shape[0]}\n")
        for row in m:
            fh.write(" ".join(repr(float(x)) for x in row))
            fh.write("\n")


def distance_column(space: MetricSpace, source: int) -> np.ndarray:
    return space.distance_column(source)


def full_distance_matrix(space: MetricSpace) -> np.ndarray:
    return space.full_distance_matrix()
