"""Kernel density estimation in the product space.

The unnormalized Gaussian kernel ``K(d) = exp(-d^2 / (2 sigma^2))`` is
evaluated on distance columns; the dense payoff is ``F = K_X diag(w) K_Y^T``
and the multiscale payoff is the same sum restricted to a mask of
allowed pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import sparse

from .metric import MetricSpace

DEFAULT_SIGMA_SQ_REL = 0.02
DEFAULT_KERNEL_FLOOR = 1e-12


class InfeasibleMaskError(ValueError):
    """Some fine-scale point has no admissible partner under the mask."""

    def __init__(self, message, side=None, index=None, nearest=None):
        super().__init__(message)
        self.side = side
        self.index = index
        self.nearest = nearest


@dataclass(frozen=True)
class KernelParams:
    """Kernel width, given relative to the target area.

    ``sigma_sq = sigma_sq_rel * area(target)``. An absolute `sigma_sq`
    overrides the relative value (library use only; the CLI exposes the
    relative form exclusively).
    """

    sigma_sq_rel: float = DEFAULT_SIGMA_SQ_REL
    sigma_sq: float | None = None
    floor: float = DEFAULT_KERNEL_FLOOR

    def __post_init__(self):
        if not self.sigma_sq_rel > 0:
            raise ValueError("sigma_sq_rel must be positive")
        if self.sigma_sq is not None and not self.sigma_sq > 0:
            raise ValueError("sigma_sq must be positive")

    def resolve(self, target: MetricSpace) -> "KernelParams":
        if self.sigma_sq is not None:
            return self
        return KernelParams(self.sigma_sq_rel, self.sigma_sq_rel * target.area(), self.floor)

    @property
    def resolved(self) -> float:
        if self.sigma_sq is None:
            raise ValueError("kernel width not resolved; call resolve(target) first")
        return self.sigma_sq

    @property
    def cutoff(self) -> float:
        """Distance beyond which the kernel drops below `floor`."""
        return math.sqrt(2.0 * self.resolved * math.log(1.0 / self.floor))


@dataclass(frozen=True)
class MatchSet:
    """Noisy correspondence sample: pairs ``(xi[k], eta[k])`` with weights."""

    xi: np.ndarray
    eta: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=np.int64).reshape(-1)
        eta = np.asarray(self.eta, dtype=np.int64).reshape(-1)
        if xi.size == 0:
            raise ValueError("match set is empty")
        if xi.size != eta.size:
            raise ValueError(f"match set sides differ in length: {xi.size} vs {eta.size}")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "eta", eta)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
            if w.size != xi.size:
                raise ValueError("one weight per pair is required")
            if not (w > 0).all():
                raise ValueError("match weights must be positive")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return int(self.xi.size)

    @property
    def w(self) -> np.ndarray:
        return np.ones(len(self)) if self.weights is None else self.weights

    def check_range(self, n_x: int, n_y: int) -> None:
        for name, arr, n in (("xi", self.xi, n_x), ("eta", self.eta, n_y)):
            bad = (arr < 0) | (arr >= n)
            if bad.any():
                k = int(np.flatnonzero(bad)[0])
                raise ValueError(f"match {k}: {name}={arr[k]} out of range [0, {n})")

    @classmethod
    def from_permutation(cls, p) -> "MatchSet":
        p = np.asarray(p, dtype=np.int64)
        return cls(np.arange(p.size), p)


def load_matches(path) -> MatchSet:
    """Read ``xi eta [weight]`` lines (0-based, '#' comments)."""
    xi, eta, w = [], [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].split()
            if not s:
                continue
            if len(s) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 'xi eta [weight]'")
            try:
                xi.append(int(s[0]))
                eta.append(int(s[1]))
                w.append(float(s[2]) if len(s) == 3 else 1.0)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed match line") from None
    if not xi:
        raise ValueError(f"{path}: no matches")
    weights = None if all(x == 1.0 for x in w) else np.array(w)
    return MatchSet(np.array(xi), np.array(eta), weights)


def write_matches(m: MatchSet, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for k in range(len(m)):
            if m.weights is None:
                fh.write(f"{int(m.xi[k])} {int(m.eta[k])}\n")
            else:
                fh.write(f"{int(m.xi[k])} {int(m.eta[k])} {float(m.weights[k])!r}\n")


@dataclass
class PayoffMatrix:
    """Dense ``n x n`` payoff or a CSR payoff restricted to a mask."""

    dense: np.ndarray | None = None
    sparse: sparse.csr_matrix | None = None
    sigma_sq: float | None = None
    m: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def is_sparse(self) -> bool:
        return self.sparse is not None

    @property
    def shape(self):
        return self.sparse.shape if self.is_sparse else self.dense.shape

    @property
    def n(self) -> int:
        return self.shape[0]


@dataclass(frozen=True)
class WeightMask:
    """Allowed ``(s, t)`` pairs as a CSR pattern with sorted column lists."""

    pattern: sparse.csr_matrix
    factor: float = 2.0

    @property
    def shape(self):
        return self.pattern.shape

    @property
    def nnz(self) -> int:
        return int(self.pattern.indices.size)

    def allowed(self, s: int) -> np.ndarray:
        p = self.pattern
        return p.indices[p.indptr[s] : p.indptr[s + 1]]

    def pairs(self):
        p = self.pattern
        rows = np.repeat(np.arange(p.shape[0]), np.diff(p.indptr))
        return rows, p.indices

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        r, c = self.pairs()
        out[r, c] = True
        return out

    @classmethod
    def from_dense(cls, allowed, factor: float = 2.0) -> "WeightMask":
        a = np.asarray(allowed, dtype=bool)
        r, c = np.nonzero(a)
        return cls(_pattern(r, c, a.shape), factor)


def _pattern(rows, cols, shape) -> sparse.csr_matrix:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(shape[0] + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return sparse.csr_matrix((np.ones(cols.size, dtype=np.int8), cols, indptr), shape=shape)


# ----------------------------------------------------------------------------
# kernels and payoffs


def kernel_value(d, params: KernelParams):
    """Unnormalized Gaussian ``exp(-d^2 / (2 sigma^2))``."""
    s2 = params.resolved
    d = np.asarray(d, dtype=np.float64)
    if (d < 0).any():
        raise ValueError("distances must be non-negative")
    out = np.exp(-(d * d) / (2.0 * s2))
    return float(out) if out.ndim == 0 else out


def kernel_matrix(space: MetricSpace, anchors, params: KernelParams) -> np.ndarray:
    """``n x m`` matrix with entry ``(i, k) = K(d(i, anchors[k]))``."""
    anchors = np.asarray(anchors, dtype=np.int64).reshape(-1)
    if anchors.size == 0:
        raise ValueError("need at least one anchor")
    d = space.distance_columns(anchors, cache=anchors.size <= 2 * space._cache_capacity())
    return kernel_value(d, params).T.copy()


def payoff_dense(kx, ky, weights=None) -> PayoffMatrix:
    """``F[i, j] = sum_k w_k kx[i, k] ky[j, k]``, the Parzen sum on all pairs."""
    kx = np.asarray(kx, dtype=np.float64)
    ky = np.asarray(ky, dtype=np.float64)
    if kx.ndim != 2 or ky.ndim != 2 or kx.shape[1] != ky.shape[1]:
        raise ValueError(f"kernel matrices must share the anchor count: {kx.shape} vs {ky.shape}")
    m = kx.shape[1]
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.size != m:
            raise ValueError(f"expected {m} weights, got {w.size}")
        if not (w > 0).all():
            raise ValueError("weights must be positive")
        kx = kx * w
    return PayoffMatrix(dense=kx @ ky.T, m=m)


@numba.njit(cache=True)
def _sddmm(rows, cols, kx, ky, out):
    m = kx.shape[1]
    for e in range(rows.size):
        s = rows[e]
        t = cols[e]
        acc = 0.0
        for k in range(m):
            acc += kx[s, k] * ky[t, k]
        out[e] += acc


def accumulate_pairs(rows, cols, kx, ky, out) -> None:
    """``out[e] += sum_k kx[rows[e], k] * ky[cols[e], k]`` in place."""
    _sddmm(
        np.ascontiguousarray(rows, dtype=np.int64),
        np.ascontiguousarray(cols, dtype=np.int64),
        np.ascontiguousarray(kx, dtype=np.float64),
        np.ascontiguousarray(ky, dtype=np.float64),
        out,
    )


def payoff_sparse(kx, ky, weights, mask: WeightMask, floor: float = DEFAULT_KERNEL_FLOOR) -> PayoffMatrix:
    """Parzen sum evaluated only at the pairs allowed by `mask`.

    Kernel entries below `floor` are treated as exact zeros. Allowed pairs
    are kept in the structure even when their value is zero.
    """
    kx = np.asarray(kx, dtype=np.float64)
    ky = np.asarray(ky, dtype=np.float64)
    if kx.shape[1] != ky.shape[1]:
        raise ValueError("kernel matrices must share the anchor count")
    if mask.shape != (kx.shape[0], ky.shape[0]):
        raise ValueError(f"mask shape {mask.shape} does not match ({kx.shape[0]}, {ky.shape[0]})")
    _check_mask_nonempty(mask)
    if weights is not None:
        kx = kx * np.asarray(weights, dtype=np.float64)
    kx = np.where(kx < floor, 0.0, kx)
    ky = np.where(ky < floor, 0.0, ky)
    rows, cols = mask.pairs()
    vals = np.zeros(cols.size)
    accumulate_pairs(rows, cols, kx, ky, vals)
    p = mask.pattern
    F = sparse.csr_matrix((vals, p.indices.copy(), p.indptr.copy()), shape=p.shape)
    return PayoffMatrix(sparse=F, m=kx.shape[1])


def _check_mask_nonempty(mask: WeightMask):
    p = mask.pattern
    empty = np.flatnonzero(np.diff(p.indptr) == 0)
    if empty.size:
        raise InfeasibleMaskError(f"row {empty[0]} of the mask allows no column", "x", int(empty[0]))
    hit = np.zeros(p.shape[1], dtype=bool)
    hit[p.indices] = True
    if not hit.all():
        t = int(np.flatnonzero(~hit)[0])
        raise InfeasibleMaskError(f"column {t} of the mask is allowed for no row", "y", t)


# ----------------------------------------------------------------------------
# multiscale mask


def _near_lists(space, sources, targets, r, factor, block):
    """Sparse (target, source) pairs with d < r and with d <= factor * r."""
    near_r, near_c, in_r, in_c = [], [], [], []
    for lo in range(0, sources.size, block):
        kb = sources[lo : lo + block]
        d = space.distance_columns(kb, limit=factor * r, cache=False)[:, targets]
        k_loc, t_loc = np.nonzero(d < r)
        near_r.append(t_loc)
        near_c.append(k_loc + lo)
        k_loc, t_loc = np.nonzero(d <= factor * r)
        in_r.append(t_loc)
        in_c.append(k_loc + lo)
    shape = (targets.size, sources.size)
    near = _pattern(np.concatenate(near_r), np.concatenate(near_c), shape)
    within = _pattern(np.concatenate(in_r), np.concatenate(in_c), shape)
    return near, within


def weight_mask(space_x: MetricSpace, space_y: MetricSpace, coarse_x, coarse_images, radius_x: float,
                radius_y: float, fine_x, fine_y, factor: float = 2.0, block: int = 256) -> WeightMask:
    """Admissible fine-scale pairs given a coarse-scale map.

    Fine pair ``(s, t)`` is excluded iff some coarse sample ``k`` has
    ``d_X(s, x_k) < r_X`` and ``d_Y(t, y_{p(k)}) > factor * r_Y``, or
    ``d_Y(t, y_{p(k)}) < r_Y`` and ``d_X(s, x_k) > factor * r_X``.

    Parameters
    ----------
    coarse_x : array of int
        Coarse sample vertices on X.
    coarse_images : array of int
        Vertex on Y matched to each coarse sample (``y_{p(k)}``).
    fine_x, fine_y : array of int
        Fine-level vertices; rows and columns of the mask index these.
    factor : float
        Vicinity multiplier, 2 by default.
    """
    cx = np.asarray(coarse_x, dtype=np.int64)
    cy = np.asarray(coarse_images, dtype=np.int64)
    fx = np.asarray(fine_x, dtype=np.int64)
    fy = np.asarray(fine_y, dtype=np.int64)
    if cx.size != cy.size:
        raise ValueError("coarse samples and images differ in length")
    if np.unique(cy).size != cy.size:
        raise ValueError("coarse map is not injective")
    if not (radius_x > 0 and radius_y > 0):
        raise ValueError("mask construction needs positive coarse radii")
    nx_near, nx_in = _near_lists(space_x, cx, fx, radius_x, factor, block)
    ny_near, ny_in = _near_lists(space_y, cy, fy, radius_y, factor, block)
    cnt_x = np.diff(nx_near.indptr)
    cnt_y = np.diff(ny_near.indptr)
    nf_x, nf_y = fx.size, fy.size

    # condition 1: every k near s must have its image within factor*r of t
    c1 = (nx_near.astype(np.int64) @ ny_in.astype(np.int64).T).tocsr()
    c1.sort_indices()
    r1 = np.repeat(np.arange(nf_x), np.diff(c1.indptr))
    ok1 = c1.data == cnt_x[r1]
    rows1, cols1 = r1[ok1], c1.indices[ok1]
    free_rows = np.flatnonzero(cnt_x == 0)
    if free_rows.size:
        rows1 = np.concatenate([rows1, np.repeat(free_rows, nf_y)])
        cols1 = np.concatenate([cols1, np.tile(np.arange(nf_y), free_rows.size)])

    # condition 2: every k whose image is near t must be within factor*r of s
    c2 = (nx_in.astype(np.int64) @ ny_near.astype(np.int64).T).tocoo()
    ok2 = c2.data == cnt_y[c2.col]
    good2 = c2.row[ok2].astype(np.int64) * nf_y + c2.col[ok2]
    keys = rows1 * nf_y + cols1
    keep = (cnt_y[cols1] == 0) | np.isin(keys, good2)
    rows, cols = rows1[keep], cols1[keep]

    mask = WeightMask(_pattern(rows, cols, (nf_x, nf_y)), factor)
    row_cnt = np.diff(mask.pattern.indptr)
    if (row_cnt == 0).any():
        s = int(np.flatnonzero(row_cnt == 0)[0])
        near = nx_in.indices[nx_in.indptr[s] : nx_in.indptr[s + 1]]
        raise InfeasibleMaskError(
            f"fine point {s} (vertex {fx[s]}) on X has no admissible partner; nearby coarse samples "
            f"{cx[near].tolist()}; widen the vicinity factor (currently {factor:g})",
            "x", s, cx[near].tolist(),
        )
    col_hit = np.zeros(nf_y, dtype=bool)
    col_hit[cols] = True
    if not col_hit.all():
        t = int(np.flatnonzero(~col_hit)[0])
        near = ny_in.indices[ny_in.indptr[t] : ny_in.indptr[t + 1]]
        raise InfeasibleMaskError(
            f"fine point {t} (vertex {fy[t]}) on Y has no admissible partner; nearby coarse images "
            f"{cy[near].tolist()}; widen the vicinity factor (currently {factor:g})",
            "y", t, cy[near].tolist(),
        )
    return mask
