import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmf.assignment import lap_auction_sparse
from pmf.density import (
    InfeasibleMaskError,
    KernelParams,
    MatchSet,
    WeightMask,
    kernel_matrix,
    kernel_value,
    load_matches,
    payoff_dense,
    payoff_sparse,
    weight_mask,
    write_matches,
)
from pmf.metric import CircleSpace, ExplicitSpace, MeshGeodesicSpace
from pmf.sampling import farthest_point_sampling
from pmf.synthetic import bumpy, icosphere

from oracles import excluded_pairs, parzen_bruteforce


def test_kernel_values():
    p = KernelParams(sigma_sq=4.0)
    assert kernel_value(0.0, p) == 1.0
    assert kernel_value(2.0, p) == pytest.approx(np.exp(-0.5), rel=1e-15)
    assert kernel_value(6.0, p) == pytest.approx(0.011108996538242306, rel=1e-12)


def test_kernel_matrix_examples():
    s = CircleSpace(8, 8.0)
    p = KernelParams(sigma_sq=2.0)
    col = kernel_matrix(s, [0], p)[:, 0]
    expect = np.exp(-np.array([0, 1, 4, 9, 16, 9, 4, 1]) / 4.0)
    np.testing.assert_allclose(col, expect, rtol=1e-15)
    K = kernel_matrix(s, [3, 5], p)
    assert K[3, 0] == 1.0 and K[5, 1] == 1.0
    R = kernel_matrix(s, [2, 2, 2], p)
    assert np.linalg.matrix_rank(R) == 1 and np.array_equal(R[:, 0], R[:, 2])


def test_sigma_resolves_against_target_area():
    target = CircleSpace(16, 10.0)
    p = KernelParams().resolve(target)
    assert p.resolved == pytest.approx(0.02 * 100.0 / np.pi)
    assert KernelParams(sigma_sq=3.0).resolve(target).resolved == 3.0


def test_single_match_peak():
    sx, sy = CircleSpace(9, 9.0), CircleSpace(9, 9.0)
    p = KernelParams(sigma_sq=2.0)
    F = payoff_dense(kernel_matrix(sx, [2], p), kernel_matrix(sy, [5], p)).dense
    assert F[2, 5] == 1.0
    assert np.argmax(F) == 2 * 9 + 5
    assert (F[F != F.max()] < 1.0).all()
    np.testing.assert_allclose(F, np.outer(kernel_matrix(sx, [2], p), kernel_matrix(sy, [5], p)), rtol=1e-15)


def test_sharp_kernel_diagonal_dominant():
    s = CircleSpace(10, 10.0)
    p = KernelParams(sigma_sq_rel=1e-12).resolve(s)
    idx = np.arange(10)
    F = payoff_dense(kernel_matrix(s, idx, p), kernel_matrix(s, idx, p)).dense
    assert (np.diag(F) > F.sum(axis=1) - np.diag(F)).all()


@pytest.mark.parametrize("seed", range(5))
def test_parzen_equivalence_circle(seed):
    rng = np.random.default_rng(seed)
    n = 8
    s = CircleSpace(n, 8.0)
    D = s.full_distance_matrix()
    xi, eta = rng.integers(0, n, 3), rng.integers(0, n, 3)
    w = rng.uniform(0.5, 2.0, 3)
    p = KernelParams(sigma_sq=1.7)
    F = payoff_dense(kernel_matrix(s, xi, p), kernel_matrix(s, eta, p), w).dense
    ref = parzen_bruteforce(D, D, xi, eta, 1.7, w)
    np.testing.assert_allclose(F, ref, rtol=1e-12, atol=0)


def test_swap_symmetry():
    sx = MeshGeodesicSpace(bumpy(icosphere(3)))
    sy = MeshGeodesicSpace(icosphere(3))
    rng = np.random.default_rng(1)
    xi, eta = rng.integers(0, sx.n, 6), rng.integers(0, sy.n, 6)
    p = KernelParams(sigma_sq=0.1)
    F = payoff_dense(kernel_matrix(sx, xi, p), kernel_matrix(sy, eta, p)).dense
    G = payoff_dense(kernel_matrix(sy, eta, p), kernel_matrix(sx, xi, p)).dense
    assert np.array_equal(F.T, G)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 10.0), st.floats(1.0001, 5.0))
def test_single_kernel_monotone_in_sigma(s2, mult):
    s = CircleSpace(12, 6.0)
    lo = payoff_dense(kernel_matrix(s, [1], KernelParams(sigma_sq=s2)),
                      kernel_matrix(s, [4], KernelParams(sigma_sq=s2))).dense
    hi = payoff_dense(kernel_matrix(s, [1], KernelParams(sigma_sq=s2 * mult)),
                      kernel_matrix(s, [4], KernelParams(sigma_sq=s2 * mult))).dense
    assert (hi >= lo).all()


def _circle_mask_setup():
    s = CircleSpace(8, 8.0)
    h = farthest_point_sampling(s, [2, 8], seed=0)
    return s, h


def test_circle_mask_example():
    s, h = _circle_mask_setup()
    cx = h[0].indices
    allx = np.arange(8)
    D = s.full_distance_matrix()
    # r = 2 arc steps: 2r spans the whole circle, so no pair is excluded
    mask = weight_mask(s, s, cx, cx, h[0].radius, h[0].radius, allx, allx)
    assert mask.to_dense().all()
    # tighter Y radius: s=1 is near sample 0, t=4 lies 4 > 2 * 1.5 from image(0) = 0
    mask = weight_mask(s, s, cx, cx, 2.0, 1.5, allx, allx)
    ex = excluded_pairs(D, D, cx, cx, 2.0, 1.5, allx, allx)
    assert not mask.to_dense()[1, 4] and ex[1, 4]
    assert np.array_equal(mask.to_dense(), ~ex)


def test_circle_mask_with_rotated_images_excludes_far_pairs():
    s = CircleSpace(8, 8.0)
    D = s.full_distance_matrix()
    cx = np.array([0, 4])
    img = np.array([1, 5])
    mask = weight_mask(s, s, cx, img, 2.0, 2.0, np.arange(8), np.arange(8))
    # s=1 is within r of sample 0 whose image is 1; t=4 sits at distance 3 <= 2r: allowed
    # s=0 is within r of sample 0; t=6 sits 3 away from image 1 but within r of image 5 while d_X(0,4)=4 <= 2r
    ex = excluded_pairs(D, D, cx, img, 2.0, 2.0, np.arange(8), np.arange(8))
    assert np.array_equal(mask.to_dense(), ~ex)


def test_identity_coarse_map_allows_diagonal():
    s = MeshGeodesicSpace(bumpy(icosphere(4)))
    h = farthest_point_sampling(s, [12, 60], seed=0)
    c, f = h[0].indices, h[1].indices
    mask = weight_mask(s, s, c, c, h[0].radius, h[0].radius, f, f)
    assert mask.to_dense()[np.arange(f.size), np.arange(f.size)].all()


@pytest.mark.parametrize("seed", range(4))
def test_mask_matches_bruteforce_rule(seed):
    rng = np.random.default_rng(seed)
    sx = MeshGeodesicSpace(bumpy(icosphere(3)))
    sy = MeshGeodesicSpace(icosphere(3))
    hx = farthest_point_sampling(sx, [8, 40], seed=0)
    hy = farthest_point_sampling(sy, [8, 40], seed=int(rng.integers(sy.n)))
    cx, cy = hx[0].indices, hy[0].indices[rng.permutation(8)]
    factor = 2.0 + rng.uniform(0, 1.5)
    DX, DY = sx.full_distance_matrix(), sy.full_distance_matrix()
    ex = excluded_pairs(DX, DY, cx, cy, hx[0].radius, hy[0].radius, hx[1].indices, hy[1].indices, factor)
    try:
        mask = weight_mask(sx, sy, cx, cy, hx[0].radius, hy[0].radius, hx[1].indices, hy[1].indices, factor)
    except InfeasibleMaskError as e:
        # an empty row or column in the oracle too
        assert ex.all(axis=1).any() or ex.all(axis=0).any()
        assert e.side in ("x", "y")
        return
    assert np.array_equal(mask.to_dense(), ~ex)


def test_mask_infeasible_row_reports_point():
    s = CircleSpace(8, 8.0)
    # adjacent samples sent to points 3 apart: with factor 1 no t serves s = 0
    cx, img = np.array([0, 1]), np.array([0, 3])
    with pytest.raises(InfeasibleMaskError, match="widen") as e:
        weight_mask(s, s, cx, img, 1.5, 1.5, np.arange(8), np.arange(8), factor=1.0)
    assert e.value.side == "x" and e.value.index == 0
    assert 0 in e.value.nearest


def test_mask_degenerate_radius_rejected():
    s = CircleSpace(4)
    with pytest.raises(ValueError, match="positive"):
        weight_mask(s, s, np.arange(4), np.arange(4), 0.0, 0.0, np.arange(4), np.arange(4))


def test_sparse_all_allowed_equals_dense():
    s = CircleSpace(10, 10.0)
    p = KernelParams(sigma_sq=2.5)
    kx, ky = kernel_matrix(s, [0, 3, 7], p), kernel_matrix(s, [1, 4, 8], p)
    dense = payoff_dense(kx, ky).dense
    sp = payoff_sparse(kx, ky, None, WeightMask.from_dense(np.ones((10, 10))), floor=0.0).sparse
    np.testing.assert_allclose(sp.toarray(), dense, rtol=1e-14, atol=0)


def test_sparse_diagonal_mask_forces_identity():
    s = CircleSpace(10, 10.0)
    p = KernelParams(sigma_sq=2.5)
    kx, ky = kernel_matrix(s, [0, 3], p), kernel_matrix(s, [5, 9], p)
    F = payoff_sparse(kx, ky, None, WeightMask.from_dense(np.eye(10)))
    assert F.sparse.nnz == 10
    assert lap_auction_sparse(F).perm.forward.tolist() == list(range(10))


def test_sparse_pattern_equals_mask_pattern():
    s, h = _circle_mask_setup()
    cx, r = h[0].indices, h[0].radius
    mask = weight_mask(s, s, cx, cx, r, r, np.arange(8), np.arange(8))
    p = KernelParams(sigma_sq=100.0)
    F = payoff_sparse(kernel_matrix(s, cx, p), kernel_matrix(s, cx, p), None, mask).sparse
    assert np.array_equal(F.indptr, mask.pattern.indptr)
    assert np.array_equal(F.indices, mask.pattern.indices)


def test_matchset_validation_and_files(tmp_path):
    with pytest.raises(ValueError):
        MatchSet(np.array([0, 1]), np.array([0]))
    with pytest.raises(ValueError):
        MatchSet(np.array([0]), np.array([0]), np.array([-1.0]))
    m = MatchSet(np.array([0, 5]), np.array([3, 2]), np.array([1.0, 0.5]))
    with pytest.raises(ValueError, match="out of range"):
        m.check_range(4, 10)
    p = tmp_path / "m.txt"
    write_matches(m, p)
    r = load_matches(p)
    assert r.xi.tolist() == [0, 5] and r.eta.tolist() == [3, 2] and r.weights.tolist() == [1.0, 0.5]
    p.write_text("# header\n1 2\n\n3 4  # trailing\n")
    r = load_matches(p)
    assert r.xi.tolist() == [1, 3] and r.weights is None
    p.write_text("1 2 3 4\n")
    with pytest.raises(ValueError, match=":1"):
        load_matches(p)
