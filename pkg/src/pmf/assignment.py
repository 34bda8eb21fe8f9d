"""Linear assignment solvers, maximization form throughout.

* `lap_bruteforce` enumerates permutations (test oracle, n <= 9).
* `lap_exact` wraps scipy's Jonker-Volgenant solver.
* `lap_auction` / `lap_auction_sparse` are forward auctions with
  epsilon-scaling; the sparse variant works on masked payoffs and reports
  a Hall-violating row set when no perfect matching exists.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment

from .density import PayoffMatrix

logger = logging.getLogger(__name__)


class BijectionError(ValueError):
    pass


class InfeasibleAssignmentError(ValueError):
    """No perfect matching exists inside the allowed pairs.

    ``rows`` is a set of rows whose allowed columns ``cols`` number fewer
    than the rows (a Hall violation).
    """

    def __init__(self, message, rows=(), cols=()):
        super().__init__(message)
        self.rows = list(rows)
        self.cols = list(cols)


class AuctionStalled(RuntimeError):
    pass


# bijection checks performed / failed in this process, reported by the test suite;
# the "output" counters cover only maps returned by solvers and filters
BIJECTION_CHECKS = {"checked": 0, "failed": 0, "outputs": 0, "output_failures": 0}


class Permutation:
    """Bijection ``i -> forward[i]`` on ``{0, ..., n-1}``; validated on construction."""

    __slots__ = ("forward", "inverse")

    def __init__(self, forward):
        p = np.array(forward, dtype=np.int64).reshape(-1)
        n = p.size
        BIJECTION_CHECKS["checked"] += 1
        ok = n > 0 and p.min() >= 0 and p.max() < n
        if ok:
            inv = np.full(n, -1, dtype=np.int64)
            inv[p] = np.arange(n)
            ok = bool((inv >= 0).all())
        if not ok:
            BIJECTION_CHECKS["failed"] += 1
            raise BijectionError(f"not a bijection on {n} elements")
        p.flags.writeable = False
        inv.flags.writeable = False
        self.forward = p
        self.inverse = inv

    @classmethod
    def output(cls, forward) -> "Permutation":
        """Validate a map produced by a solver (tracked separately from user input)."""
        BIJECTION_CHECKS["outputs"] += 1
        try:
            return cls(forward)
        except BijectionError:
            BIJECTION_CHECKS["output_failures"] += 1
            raise

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    def __len__(self):
        return self.forward.size

    def __getitem__(self, i):
        return self.forward[i]

    def __eq__(self, other):
        if isinstance(other, Permutation):
            return np.array_equal(self.forward, other.forward)
        return NotImplemented

    def __hash__(self):
        return hash(self.forward.tobytes())

    def __repr__(self):
        head = self.forward[:8].tolist()
        return f"Permutation(n={len(self)}, forward={head}{'...' if len(self) > 8 else ''})"

    def inverted(self) -> "Permutation":
        return Permutation(self.inverse)

    def matrix(self) -> np.ndarray:
        n = len(self)
        P = np.zeros((n, n))
        P[np.arange(n), self.forward] = 1.0
        return P


@dataclass
class AuctionConfig:
    """Epsilon-scaling schedule; ``None`` fields are derived from the payoff.

    Defaults: ``eps_start = (max - min) / 2``, factor 1/4,
    ``eps_final = 1e-9 * max|F|``.
    """

    eps_start: float | None = None
    eps_scale_factor: float = 0.25
    eps_final: float | None = None
    max_rounds: int = 200_000_000

    def __post_init__(self):
        if not 0.0 < self.eps_scale_factor < 1.0:
            raise ValueError("eps_scale_factor must lie in (0, 1)")
        if self.eps_final is not None and not self.eps_final > 0:
            raise ValueError("eps_final must be positive")
        if self.eps_start is not None and self.eps_final is not None and self.eps_start < self.eps_final:
            raise ValueError("eps_start must be >= eps_final")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be positive")

    def resolve(self, fmin: float, fmax: float) -> "AuctionConfig":
        scale = max(abs(fmax), abs(fmin))
        eps_final = self.eps_final
        if eps_final is None:
            eps_final = 1e-9 * scale if scale > 0 else 1e-9
        eps_start = self.eps_start
        if eps_start is None:
            eps_start = (fmax - fmin) / 2.0
        eps_start = max(eps_start, eps_final)
        return AuctionConfig(eps_start, self.eps_scale_factor, eps_final, self.max_rounds)


@dataclass
class Assignment:
    perm: Permutation
    objective: float
    stats: dict = field(default_factory=dict)

    def __iter__(self):
        # unpack as (perm, objective)
        yield self.perm
        yield self.objective


def assignment_objective(F, p) -> float:
    """``<P, F> = sum_i F[i, p[i]]`` for dense or CSR payoffs."""
    p = np.asarray(p.forward if isinstance(p, Permutation) else p, dtype=np.int64)
    if isinstance(F, PayoffMatrix):
        F = F.sparse if F.is_sparse else F.dense
    if sparse.issparse(F):
        F = F.tocsr()
        vals = np.empty(p.size)
        for i in range(p.size):
            lo, hi = F.indptr[i], F.indptr[i + 1]
            j = np.searchsorted(F.indices[lo:hi], p[i])
            if j >= hi - lo or F.indices[lo + j] != p[i]:
                raise ValueError(f"row {i} assigned to column {p[i]} outside the allowed set")
            vals[i] = F.data[lo + j]
        return float(vals.sum())
    return float(np.asarray(F)[np.arange(p.size), p].sum())


def _dense(F) -> np.ndarray:
    if isinstance(F, PayoffMatrix):
        if F.is_sparse:
            raise ValueError("dense payoff expected")
        F = F.dense
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValueError(f"payoff must be square, got shape {F.shape}")
    if np.isnan(F).any():
        raise ValueError("payoff contains NaN")
    if not np.isfinite(F).all():
        raise ValueError("payoff contains infinite entries")
    return F


# ----------------------------------------------------------------------------
# brute force and exact


@lru_cache(maxsize=10)
def _perm_table(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)


def lap_bruteforce(F) -> Assignment:
    """Enumerate all permutations; ties go to the lexicographically smallest."""
    F = _dense(F)
    n = F.shape[0]
    if n > 9:
        raise ValueError(f"brute force is limited to n <= 9, got {n}")
    table = _perm_table(n)
    vals = F[np.arange(n)[None, :], table].sum(axis=1)
    best = int(np.argmax(vals))
    perm = Permutation.output(table[best])
    return Assignment(perm, assignment_objective(F, perm), {"solver": "bruteforce"})


def lap_exact(F) -> Assignment:
    """Exact O(n^3) maximizer (scipy ``linear_sum_assignment``)."""
    F = _dense(F)
    rows, cols = linear_sum_assignment(F, maximize=True)
    p = np.empty(F.shape[0], dtype=np.int64)
    p[rows] = cols
    perm = Permutation.output(p)
    return Assignment(perm, assignment_objective(F, perm), {"solver": "exact"})


# ----------------------------------------------------------------------------
# auction


@numba.njit(cache=True)
def _auction_dense(A, prices, eps_list, max_bids):
    n = A.shape[0]
    owner = np.full(n, -1, np.int64)
    assigned = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    snapshot = np.full(n, -1, np.int64)
    bids = 0
    phases_with_bids = 0
    last_change = 0
    for ph in range(eps_list.size):
        eps = eps_list[ph]
        # keep assignments that still satisfy eps-complementary slackness
        head = 0
        tail = 0
        for i in range(n):
            j = assigned[i]
            if j >= 0:
                best = -np.inf
                for c in range(n):
                    v = A[i, c] - prices[c]
                    if v > best:
                        best = v
                if A[i, j] - prices[j] < best - eps:
                    owner[j] = -1
                    assigned[i] = -1
            if assigned[i] < 0:
                queue[tail] = i
                tail += 1
        count = tail
        tail = tail % n
        if count > 0:
            phases_with_bids += 1
        while count > 0:
            i = queue[head]
            head = (head + 1) % n
            count -= 1
            best = -np.inf
            second = -np.inf
            jb = -1
            for c in range(n):
                v = A[i, c] - prices[c]
                if v > best:
                    second = best
                    best = v
                    jb = c
                elif v > second:
                    second = v
            if n == 1:
                second = best
            prices[jb] += best - second + eps
            prev = owner[jb]
            owner[jb] = i
            assigned[i] = jb
            if prev >= 0:
                assigned[prev] = -1
                queue[tail] = prev
                tail = (tail + 1) % n
                count += 1
            bids += 1
            if bids > max_bids:
                return assigned, bids, ph, phases_with_bids, -1
        for i in range(n):
            if assigned[i] != snapshot[i]:
                last_change = ph + 1
                snapshot[i] = assigned[i]
    return assigned, bids, eps_list.size - 1, phases_with_bids, last_change


@numba.njit(cache=True)
def _auction_sparse(indptr, indices, data, n_cols, prices, eps_list, max_bids, lone_bid):
    n = indptr.size - 1
    owner = np.full(n_cols, -1, np.int64)
    assigned = np.full(n, -1, np.int64)
    slot = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    snapshot = np.full(n, -1, np.int64)
    bids = 0
    phases_with_bids = 0
    last_change = 0
    for ph in range(eps_list.size):
        eps = eps_list[ph]
        head = 0
        tail = 0
        for i in range(n):
            j = assigned[i]
            if j >= 0:
                best = -np.inf
                for e in range(indptr[i], indptr[i + 1]):
                    v = data[e] - prices[indices[e]]
                    if v > best:
                        best = v
                if data[slot[i]] - prices[j] < best - eps:
                    owner[j] = -1
                    assigned[i] = -1
            if assigned[i] < 0:
                queue[tail] = i
                tail += 1
        count = tail
        tail = tail % n
        if count > 0:
            phases_with_bids += 1
        while count > 0:
            i = queue[head]
            head = (head + 1) % n
            count -= 1
            best = -np.inf
            second = -np.inf
            jb = -1
            eb = -1
            for e in range(indptr[i], indptr[i + 1]):
                c = indices[e]
                v = data[e] - prices[c]
                if v > best:
                    second = best
                    best = v
                    jb = c
                    eb = e
                elif v > second:
                    second = v
            if second == -np.inf:
                inc = lone_bid + eps
            else:
                inc = best - second + eps
            prices[jb] += inc
            prev = owner[jb]
            owner[jb] = i
            assigned[i] = jb
            slot[i] = eb
            if prev >= 0:
                assigned[prev] = -1
                queue[tail] = prev
                tail = (tail + 1) % n
                count += 1
            bids += 1
            if bids > max_bids:
                return assigned, bids, ph, phases_with_bids, -1
        for i in range(n):
            if assigned[i] != snapshot[i]:
                last_change = ph + 1
                snapshot[i] = assigned[i]
    return assigned, bids, eps_list.size - 1, phases_with_bids, last_change


def _eps_schedule(cfg: AuctionConfig) -> np.ndarray:
    eps = [cfg.eps_start]
    while eps[-1] > cfg.eps_final:
        eps.append(max(eps[-1] * cfg.eps_scale_factor, cfg.eps_final))
    return np.array(eps)


def lap_auction(F, cfg: AuctionConfig | None = None) -> Assignment:
    """Forward auction with epsilon-scaling on a dense payoff.

    The result is within ``n * eps_final`` of the optimum. Bidders are
    served in ascending row order, evicted bidders re-queue at the back,
    and ties go to the smaller column.
    """
    F = _dense(F)
    n = F.shape[0]
    cfg = (cfg or AuctionConfig()).resolve(float(F.min()), float(F.max()))
    eps = _eps_schedule(cfg)
    prices = np.zeros(n)
    p, bids, ph, active, stable = _auction_dense(np.ascontiguousarray(F), prices, eps, cfg.max_rounds)
    if stable < 0:
        raise AuctionStalled(f"auction exceeded {cfg.max_rounds} bids at eps={eps[ph]:g} (phase {ph})")
    perm = Permutation.output(p)
    stats = {
        "solver": "auction",
        "bids": int(bids),
        "phases": int(eps.size),
        "phases_with_bids": int(active),
        "stable_after_phase": int(stable),
        "eps_start": float(cfg.eps_start),
        "eps_final": float(eps[-1]),
        "eps_scale_factor": cfg.eps_scale_factor,
    }
    return Assignment(perm, assignment_objective(F, perm), stats)


@numba.njit(cache=True)
def _hopcroft_karp(indptr, indices, n_cols):
    n = indptr.size - 1
    match_r = np.full(n, -1, np.int64)
    match_c = np.full(n_cols, -1, np.int64)
    dist = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    ptr = np.empty(n, np.int64)
    stack = np.empty(n, np.int64)
    chosen = np.empty(n, np.int64)
    inf = n + 1
    while True:
        head = 0
        tail = 0
        for r in range(n):
            if match_r[r] < 0:
                dist[r] = 0
                queue[tail] = r
                tail += 1
            else:
                dist[r] = inf
        found = False
        while head < tail:
            u = queue[head]
            head += 1
            for e in range(indptr[u], indptr[u + 1]):
                w = match_c[indices[e]]
                if w < 0:
                    found = True
                elif dist[w] == inf:
                    dist[w] = dist[u] + 1
                    queue[tail] = w
                    tail += 1
        if not found:
            break
        ptr[:] = indptr[:-1]
        for r0 in range(n):
            if match_r[r0] >= 0:
                continue
            top = 0
            stack[0] = r0
            while top >= 0:
                u = stack[top]
                if ptr[u] == indptr[u + 1]:
                    dist[u] = inf
                    top -= 1
                    continue
                c = indices[ptr[u]]
                ptr[u] += 1
                w = match_c[c]
                if w < 0:
                    chosen[top] = c
                    for lv in range(top + 1):
                        match_r[stack[lv]] = chosen[lv]
                        match_c[chosen[lv]] = stack[lv]
                        dist[stack[lv]] = inf
                    break
                if dist[w] == dist[u] + 1:
                    chosen[top] = c
                    top += 1
                    stack[top] = w
    return match_r, match_c


@numba.njit(cache=True)
def _alternating_reach(indptr, indices, match_c, start, n_cols):
    n = indptr.size - 1
    seen_r = np.zeros(n, np.bool_)
    seen_c = np.zeros(n_cols, np.bool_)
    stack = np.empty(n, np.int64)
    seen_r[start] = True
    stack[0] = start
    top = 1
    while top > 0:
        top -= 1
        u = stack[top]
        for e in range(indptr[u], indptr[u + 1]):
            c = indices[e]
            if seen_c[c]:
                continue
            seen_c[c] = True
            o = match_c[c]
            if o >= 0 and not seen_r[o]:
                seen_r[o] = True
                stack[top] = o
                top += 1
    return seen_r, seen_c


def maximum_matching(pattern: sparse.csr_matrix) -> np.ndarray:
    """Row-to-column maximum matching of a bipartite pattern (-1 where unmatched)."""
    p = sparse.csr_matrix(pattern)
    match_r, _ = _hopcroft_karp(p.indptr.astype(np.int64), p.indices.astype(np.int64), p.shape[1])
    return match_r


def hall_violation(pattern: sparse.csr_matrix):
    """Return ``(rows, cols)`` with ``|cols| < |rows|`` if no perfect matching exists, else None.

    Rows reachable from an unmatched row by alternating paths form the
    violating set; their neighbourhood is exactly the columns reached.
    """
    p = sparse.csr_matrix(pattern)
    n_rows, n_cols = p.shape
    indptr = p.indptr.astype(np.int64)
    indices = p.indices.astype(np.int64)
    match_r, match_c = _hopcroft_karp(indptr, indices, n_cols)
    free = np.flatnonzero(match_r < 0)
    if free.size == 0:
        if n_rows == n_cols:
            return None
        # every row matched, so only a column excess remains
        return list(range(n_rows)), list(range(n_cols))
    seen_r, seen_c = _alternating_reach(indptr, indices, match_c, int(free[0]), n_cols)
    return np.flatnonzero(seen_r).tolist(), np.flatnonzero(seen_c).tolist()


def lap_auction_sparse(F, cfg: AuctionConfig | None = None) -> Assignment:
    """Auction restricted to the stored entries of a CSR payoff.

    Feasibility is checked first; without a perfect matching inside the
    pattern an `InfeasibleAssignmentError` carries a Hall-violating row set.
    """
    if isinstance(F, PayoffMatrix):
        if not F.is_sparse:
            raise ValueError("sparse payoff expected")
        F = F.sparse
    F = sparse.csr_matrix(F)
    F.sort_indices()
    n, n_cols = F.shape
    if n != n_cols:
        raise ValueError(f"payoff must be square, got shape {F.shape}")
    data = np.asarray(F.data, dtype=np.float64)
    if np.isnan(data).any() or not np.isfinite(data).all():
        raise ValueError("payoff contains NaN or infinite entries")
    pattern = sparse.csr_matrix((np.ones(data.size, dtype=np.int8), F.indices, F.indptr), shape=F.shape)
    bad = hall_violation(pattern)
    if bad is not None:
        rows, cols = bad
        raise InfeasibleAssignmentError(
            f"no perfect matching inside the mask: rows {rows[:10]}{'...' if len(rows) > 10 else ''} "
            f"({len(rows)}) can only reach {len(cols)} columns {cols[:10]}{'...' if len(cols) > 10 else ''}",
            rows, cols,
        )
    fmin = float(data.min()) if data.size else 0.0
    fmax = float(data.max()) if data.size else 0.0
    cfg = (cfg or AuctionConfig()).resolve(fmin, fmax)
    eps = _eps_schedule(cfg)
    prices = np.zeros(n)
    lone = (fmax - fmin) + cfg.eps_start
    p, bids, ph, active, stable = _auction_sparse(
        F.indptr.astype(np.int64), F.indices.astype(np.int64), data, n, prices, eps, cfg.max_rounds, lone
    )
    if stable < 0:
        raise AuctionStalled(f"sparse auction exceeded {cfg.max_rounds} bids at eps={eps[ph]:g} (phase {ph})")
    perm = Permutation.output(p)
    stats = {
        "solver": "auction-sparse",
        "bids": int(bids),
        "phases": int(eps.size),
        "phases_with_bids": int(active),
        "stable_after_phase": int(stable),
        "eps_start": float(cfg.eps_start),
        "eps_final": float(eps[-1]),
        "eps_scale_factor": cfg.eps_scale_factor,
        "nnz": int(data.size),
    }
    return Assignment(perm, assignment_objective(F, perm), stats)


def solve(F, solver: str = "exact", auction: AuctionConfig | None = None) -> Assignment:
    """Dispatch on payoff kind and solver name."""
    if isinstance(F, PayoffMatrix) and F.is_sparse or sparse.issparse(F):
        return lap_auction_sparse(F, auction)
    if solver == "exact":
        return lap_exact(F)
    if solver == "auction":
        return lap_auction(F, auction)
    if solver == "bruteforce":
        return lap_bruteforce(F)
    raise ValueError(f"unknown solver {solver!r}")
