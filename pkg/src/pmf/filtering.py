"""The product manifold filter.

Single scale: build the Parzen payoff from the current matches, solve a
linear assignment problem, feed the resulting bijection back as the next
match set. Multiscale: solve the coarsest farthest-point level that way,
then at each finer level solve one assignment problem over a sparse
payoff whose kernel anchors are the coarser level's matches and whose
support is restricted by the vicinity mask.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .assignment import (
    AuctionConfig,
    InfeasibleAssignmentError,
    Permutation,
    hall_violation,
    lap_auction_sparse,
    solve,
)
from .density import (
    InfeasibleMaskError,
    KernelParams,
    MatchSet,
    PayoffMatrix,
    accumulate_pairs,
    kernel_matrix,
    kernel_value,
    payoff_dense,
    weight_mask,
)
from .metric import ExplicitSpace, MetricSpace, SubsetSpace
from .sampling import SamplingHierarchy

logger = logging.getLogger(__name__)


@dataclass
class PmfConfig:
    kernel: KernelParams = field(default_factory=KernelParams)
    max_iters: int = 10
    stop_on_fixed_point: bool = True
    solver: str = "exact"
    auction: AuctionConfig = field(default_factory=AuctionConfig)
    record_history: bool = False
    # multiscale only: assignment solves per level (1 = a single constrained LAP)
    level_iters: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.level_iters < 1:
            raise ValueError("level_iters must be >= 1")
        if self.solver not in ("exact", "auction"):
            raise ValueError(f"solver must be 'exact' or 'auction', got {self.solver!r}")


@dataclass
class PmfResult:
    final: Permutation
    objective_trace: list[float]
    iterations_run: int
    history: list[Permutation] | None = None
    meta: dict = field(default_factory=dict)


class SizeMismatchError(ValueError):
    pass


def pointwise_estimate(F) -> np.ndarray:
    """Row-wise argmax of the payoff (not necessarily bijective)."""
    if isinstance(F, PayoffMatrix):
        F = F.dense
    return np.argmax(np.asarray(F), axis=1).astype(np.int64)


def _kernel_full(space: MetricSpace, params: KernelParams) -> np.ndarray:
    return kernel_value(space.full_distance_matrix(), params)


def pmf_single_scale(space_x: MetricSpace, space_y: MetricSpace, init: MatchSet,
                     cfg: PmfConfig | None = None) -> PmfResult:
    """Iterate density estimation and bijective assignment on all points.

    The first payoff uses the (possibly sparse, weighted) `init` anchors;
    later ones use the full match set ``{(i, p[i])}``. Stops when an
    iterate repeats the previous one or after ``cfg.max_iters`` solves.
    """
    cfg = cfg or PmfConfig()
    n = space_x.n
    if space_y.n != n:
        raise SizeMismatchError(
            f"spaces differ in size ({space_x.n} vs {space_y.n}); resample the larger shape "
            "to a common count first (see the 'resample' command)"
        )
    init.check_range(n, n)
    params = cfg.kernel.resolve(space_y)
    t0 = time.perf_counter()

    prev = None
    if len(init) == n and np.array_equal(np.sort(init.xi), np.arange(n)):
        q = np.empty(n, dtype=np.int64)
        q[init.xi] = init.eta
        if np.unique(q).size == n:
            prev = q

    kx = ky = None
    trace, hist, stats = [], [], []
    perm = None
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if it == 1:
            F = payoff_dense(
                kernel_matrix(space_x, init.xi, params),
                kernel_matrix(space_y, init.eta, params),
                init.weights,
            )
        else:
            if kx is None:
                kx = _kernel_full(space_x, params)
                ky = _kernel_full(space_y, params)
            # anchors (k, p[k]): K_Y[:, p] == K_Y[p, :].T by symmetry
            F = PayoffMatrix(dense=kx @ ky[perm.forward, :], m=n)
        res = solve(F, cfg.solver, cfg.auction)
        perm = res.perm
        trace.append(res.objective)
        stats.append(res.stats)
        if cfg.record_history:
            hist.append(perm)
        if len(trace) > 1 and trace[-1] < trace[-2]:
            logger.info("objective decreased at iteration %d: %.6g -> %.6g", it, trace[-2], trace[-1])
        if cfg.stop_on_fixed_point and prev is not None and np.array_equal(prev, perm.forward):
            break
        prev = perm.forward
    meta = {
        "sigma_sq": params.resolved,
        "sigma_sq_rel": params.sigma_sq_rel,
        "solver": cfg.solver,
        "solver_stats": stats,
        "seconds": time.perf_counter() - t0,
        "fixed_point": bool(prev is not None and np.array_equal(prev, perm.forward)),
    }
    return PmfResult(perm, trace, it, hist if cfg.record_history else None, meta)


# ----------------------------------------------------------------------------
# multiscale


@dataclass
class WidenPolicy:
    """On mask infeasibility: ``fail``, or multiply the factor by `step` (up to `retries` times)."""

    mode: str = "widen"
    step: float = 1.5
    retries: int = 3

    def __post_init__(self):
        if self.mode not in ("fail", "widen"):
            raise ValueError("widen policy mode must be 'fail' or 'widen'")
        if self.mode == "widen" and not self.step > 1.0:
            raise ValueError("widen step must exceed 1")


def _snap(space: MetricSpace, vertices, samples) -> np.ndarray:
    """Local index of the nearest sample to each vertex."""
    vertices = np.asarray(vertices, dtype=np.int64)
    pos = {int(v): i for i, v in enumerate(samples)}
    out = np.empty(vertices.size, dtype=np.int64)
    for k, v in enumerate(vertices):
        j = pos.get(int(v))
        if j is None:
            col = space.distance_column(int(v))
            j = int(np.argmin(col[samples]))
        out[k] = j
    return out


def _sparse_level_payoff(space_x, space_y, coarse_x, coarse_img, fine_x, fine_y, mask, params, block=256):
    """Masked Parzen payoff with anchors ``(coarse_x[k], coarse_img[k])``.

    Anchor columns are streamed in blocks so that at most
    ``block x n`` distances are held at a time.
    """
    rows, cols = mask.pairs()
    vals = np.zeros(cols.size)
    lim = params.cutoff
    for lo in range(0, coarse_x.size, block):
        dx = space_x.distance_columns(coarse_x[lo : lo + block], limit=lim, cache=False)[:, fine_x]
        dy = space_y.distance_columns(coarse_img[lo : lo + block], limit=lim, cache=False)[:, fine_y]
        kx = np.exp(-(dx * dx) / (2.0 * params.resolved)).T
        ky = np.exp(-(dy * dy) / (2.0 * params.resolved)).T
        kx[kx < params.floor] = 0.0
        ky[ky < params.floor] = 0.0
        accumulate_pairs(rows, cols, kx, ky, vals)
    p = mask.pattern
    F = sparse.csr_matrix((vals, p.indices.copy(), p.indptr.copy()), shape=p.shape)
    return PayoffMatrix(sparse=F, sigma_sq=params.resolved, m=int(coarse_x.size))


def pmf_multiscale(space_x: MetricSpace, space_y: MetricSpace, hier_x: SamplingHierarchy,
                   hier_y: SamplingHierarchy, init: MatchSet, cfg: PmfConfig | None = None,
                   widen: WidenPolicy | None = None, block: int = 256) -> PmfResult:
    """Coarse-to-fine filter over two farthest-point hierarchies.

    `init` holds vertex indices of the full spaces. Pairs whose vertices
    are not level-1 samples are snapped to the nearest level-1 sample on
    each side (recorded in ``meta['snapped']``).

    The level-1 problem is the single-scale filter on the sample subsets.
    Level ``i + 1`` solves one constrained assignment problem whose
    payoff uses the level-``i`` matches as anchors; with
    ``cfg.level_iters > 1`` the level is re-solved using its own matches
    as anchors under the same mask. With ``cfg.record_history`` the final
    level-local map of every level is kept in ``meta['level_maps']``.
    """
    cfg = cfg or PmfConfig()
    widen = widen or WidenPolicy()
    if space_x.n != space_y.n:
        raise SizeMismatchError(
            f"spaces differ in size ({space_x.n} vs {space_y.n}); resample to a common count first"
        )
    if hier_x.sizes != hier_y.sizes:
        raise ValueError(f"hierarchies must share level sizes: {hier_x.sizes} vs {hier_y.sizes}")
    if hier_x.sizes[-1] != space_x.n:
        raise ValueError("the finest level must contain every point")
    init.check_range(space_x.n, space_y.n)
    params = cfg.kernel.resolve(space_y)
    t_start = time.perf_counter()

    lv_x, lv_y = hier_x.levels[0], hier_y.levels[0]
    sx = _snap(space_x, init.xi, lv_x.indices)
    sy = _snap(space_y, init.eta, lv_y.indices)
    snapped = int(((lv_x.indices[sx] != init.xi) | (lv_y.indices[sy] != init.eta)).sum())
    if snapped:
        logger.info("snapped %d initial matches onto level-1 samples", snapped)

    sub_x = ExplicitSpace(SubsetSpace(space_x, lv_x.indices).full_distance_matrix(), area=space_x.area(),
                          check=False)
    sub_y = ExplicitSpace(SubsetSpace(space_y, lv_y.indices).full_distance_matrix(), area=space_y.area(),
                          check=False)
    first_cfg = PmfConfig(params, cfg.max_iters, cfg.stop_on_fixed_point, cfg.solver, cfg.auction,
                          cfg.record_history)
    res1 = pmf_single_scale(sub_x, sub_y, MatchSet(sx, sy, init.weights), first_cfg)

    trace = list(res1.objective_trace)
    history = list(res1.history or [])
    levels_meta = [{
        "size": lv_x.size,
        "radius_x": lv_x.radius,
        "radius_y": lv_y.radius,
        "iterations": res1.iterations_run,
        "objective": res1.objective_trace[-1],
        "seconds": res1.meta["seconds"],
    }]
    widenings = []
    # level-local map: sample s of X level -> sample q[s] of Y level
    q = res1.final.forward
    level_maps = [q] if cfg.record_history else None
    for li in range(1, len(hier_x.levels)):
        t0 = time.perf_counter()
        cx_lv, cy_lv = hier_x.levels[li - 1], hier_y.levels[li - 1]
        fx_lv, fy_lv = hier_x.levels[li], hier_y.levels[li]
        coarse_x = cx_lv.indices
        coarse_img = cy_lv.indices[q]
        fine_x, fine_y = fx_lv.indices, fy_lv.indices
        factor = 2.0
        attempt = 0
        while True:
            try:
                mask = weight_mask(space_x, space_y, coarse_x, coarse_img, cx_lv.radius, cy_lv.radius,
                                   fine_x, fine_y, factor=factor, block=block)
                bad = hall_violation(mask.pattern)
                if bad is not None:
                    raise InfeasibleAssignmentError(
                        f"mask at level {li + 1} admits no bijection: {len(bad[0])} rows reach only "
                        f"{len(bad[1])} columns", *bad)
                break
            except (InfeasibleMaskError, InfeasibleAssignmentError) as exc:
                if widen.mode == "fail" or attempt >= widen.retries:
                    raise
                attempt += 1
                factor *= widen.step
                widenings.append({"level": li + 1, "factor": factor, "reason": str(exc)[:200]})
                logger.warning("level %d infeasible (%s); widening factor to %g", li + 1, exc, factor)
        F = _sparse_level_payoff(space_x, space_y, coarse_x, coarse_img, fine_x, fine_y, mask, params, block)
        res = lap_auction_sparse(F, cfg.auction)
        trace.append(res.objective)
        if cfg.record_history:
            history.append(res.perm)
        inner = 1
        q_new = res.perm.forward
        while inner < cfg.level_iters:
            F = _sparse_level_payoff(space_x, space_y, fine_x, fine_y[q_new], fine_x, fine_y, mask, params,
                                     block)
            res = lap_auction_sparse(F, cfg.auction)
            trace.append(res.objective)
            if cfg.record_history:
                history.append(res.perm)
            inner += 1
            if cfg.stop_on_fixed_point and np.array_equal(res.perm.forward, q_new):
                q_new = res.perm.forward
                break
            q_new = res.perm.forward
        q = q_new
        if level_maps is not None:
            level_maps.append(q)
        levels_meta.append({
            "size": fx_lv.size,
            "radius_x": fx_lv.radius,
            "radius_y": fy_lv.radius,
            "mask_factor": factor,
            "mask_nnz": mask.nnz,
            "iterations": inner,
            "objective": res.objective,
            "solver_stats": res.stats,
            "seconds": time.perf_counter() - t0,
        })
        logger.info("level %d (%d points): objective %.6g, mask nnz %d, %.1fs", li + 1, fx_lv.size,
                    res.objective, mask.nnz, time.perf_counter() - t0)

    # level-local map to vertex indices
    fx, fy = hier_x.levels[-1].indices, hier_y.levels[-1].indices
    p = np.empty(space_x.n, dtype=np.int64)
    p[fx] = fy[q]
    meta = {
        "sigma_sq": params.resolved,
        "sigma_sq_rel": params.sigma_sq_rel,
        "solver": cfg.solver,
        "levels": levels_meta,
        "widenings": widenings,
        "snapped": snapped,
        "seconds": time.perf_counter() - t_start,
    }
    if level_maps is not None:
        meta["level_maps"] = level_maps
    return PmfResult(Permutation.output(p), trace, len(trace), history if cfg.record_history else None, meta)


# ----------------------------------------------------------------------------
# one-dimensional three point analysis


def _k(d, s2):
    return math.exp(-d * d / (2.0 * s2))


def _k2(d, s2):
    # second derivative of the kernel
    return (d * d / (s2 * s2) - 1.0 / s2) * _k(d, s2)


def golden_max(f, lo, hi, tol=1e-10, max_iter=500):
    """Maximize a unimodal `f` on ``[lo, hi]`` by golden-section search."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class ThreePointResult:
    y_hat: float
    c_closed_form: float
    L0: float
    L_hat: float


def three_point_1d(a: float, b: float, delta: float, sigma: float, tol: float = 1e-10) -> ThreePointResult:
    """Maximizer of the three-point density and the curve lengths before/after.

    Points ``{-b, 0, b}`` on X are matched to ``{-a, 0, a + delta}`` on Y.
    ``h(y) = K(y) + K(b) (K(y + a) + K(y - a - delta))`` is maximized near
    0; the first-order prediction is ``y ~ c delta`` with
    ``c = 1 / (2 + K''(0) / (K(b) K''(a)))``.
    """
    if not (a > 0 and b > 0 and sigma > 0):
        raise ValueError("a, b and sigma must be positive")
    s2 = sigma * sigma
    kb = _k(b, s2)

    def h(y):
        return _k(y, s2) + kb * (_k(y + a, s2) + _k(y - a - delta, s2))

    c = 1.0 / (2.0 + _k2(0.0, s2) / (kb * _k2(a, s2)))
    if delta == 0.0:
        # h is even, and h''(0) < 0 whenever a < sigma
        y_hat = 0.0
    else:
        lo, hi = -a / 2.0, a / 2.0
        y_hat = golden_max(h, lo, hi, tol)
        if y_hat - lo <= 2 * tol or hi - y_hat <= 2 * tol:
            raise ValueError(
                f"maximizer not bracketed in [{lo:g}, {hi:g}] (a={a}, b={b}, delta={delta}, sigma={sigma}); "
                "parameters are outside the small-delta regime"
            )
    L0 = math.hypot(b, a) + math.hypot(b, a + delta)
    L_hat = math.hypot(b, a + y_hat) + math.hypot(b, a + delta - y_hat)
    return ThreePointResult(y_hat, c, L0, L_hat)
