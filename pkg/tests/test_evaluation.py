import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmf.assignment import Permutation
from pmf.evaluation import (
    DEFAULT_THRESHOLDS,
    ErrorCurve,
    color_transfer_export,
    error_curve,
    geodesic_errors,
    position_colors,
    read_permutation,
    write_permutation,
)
from pmf.geometry import load_mesh, read_ply_colors
from pmf.metric import CircleSpace, MeshGeodesicSpace
from pmf.synthetic import circle_band, icosphere


def test_identical_maps_zero():
    s = CircleSpace(8, 8.0)
    p = Permutation(np.arange(8))
    assert (geodesic_errors(p, p, s, 4.0) == 0).all()


def test_shifted_circle():
    s = CircleSpace(8, 8.0)
    truth = Permutation(np.arange(8))
    perm = Permutation((np.arange(8) + 1) % 8)
    np.testing.assert_array_equal(geodesic_errors(perm, truth, s, 4.0), 0.25)


def test_single_antipodal_error():
    s = CircleSpace(8, 8.0)
    truth = np.arange(8)
    perm = truth.copy()
    perm[[2, 6]] = [6, 2]
    err = geodesic_errors(perm, truth, s, 4.0)
    assert sorted(err.tolist()) == [0.0] * 6 + [1.0, 1.0]
    # one wrong vertex in a non-bijective prediction vector
    perm = truth.copy()
    perm[2] = 6
    err = geodesic_errors(perm, truth, s, 4.0)
    assert err.tolist().count(1.0) == 1 and (np.delete(err, 2) == 0).all()


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31))
def test_zero_exactly_on_agreement(n, seed):
    rng = np.random.default_rng(seed)
    s = CircleSpace(n, float(n))
    truth = rng.permutation(n)
    perm = truth.copy()
    k = rng.integers(0, n + 1)
    idx = rng.choice(n, size=k, replace=False)
    perm[idx] = truth[np.roll(idx, 1)]
    err = geodesic_errors(perm, truth, s, n / 2)
    assert np.array_equal(err == 0, perm == truth)
    brute = np.array([s.distance(int(a), int(b)) for a, b in zip(perm, truth)]) / (n / 2)
    np.testing.assert_allclose(err, brute, rtol=0, atol=1e-15)


def test_size_mismatch():
    with pytest.raises(ValueError, match="3 vs 4"):
        geodesic_errors(np.arange(3), np.arange(4), CircleSpace(4), 1.0)


def test_curve_examples():
    c = error_curve(np.zeros(10))
    assert (c.fractions == 1.0).all()
    assert np.array_equal(c.thresholds, DEFAULT_THRESHOLDS)
    assert DEFAULT_THRESHOLDS[0] == 0 and DEFAULT_THRESHOLDS[-1] == 0.25 and DEFAULT_THRESHOLDS.size == 101
    c = error_curve([0, 0.5, 1.0], [0.25, 0.75, 1.0])
    np.testing.assert_array_equal(c.fractions, [1 / 3, 2 / 3, 1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 200))
def test_curve_vs_sort_and_scan(seed, n):
    rng = np.random.default_rng(seed)
    e = rng.uniform(0, 0.3, n)
    e[rng.uniform(size=n) < 0.2] = 0.0
    c = error_curve(e)
    # independent oracle: walk a sorted list once
    srt = sorted(e.tolist())
    k = 0
    for t, f in zip(c.thresholds, c.fractions):
        while k < n and srt[k] <= t:
            k += 1
        assert f == k / n
    assert (np.diff(c.fractions) >= 0).all()
    assert error_curve(e, [max(e.max(), 0.0) + 1e-9]).fractions[-1] == 1.0


def test_curve_rejects_bad_thresholds():
    with pytest.raises(ValueError):
        error_curve([0.1], [0.2, 0.1])
    with pytest.raises(ValueError):
        error_curve([0.1], [-0.1, 0.1])


def test_curve_csv(tmp_path):
    c = error_curve(np.random.default_rng(0).uniform(0, 0.3, 50))
    p = tmp_path / "c.csv"
    c.write_csv(p)
    assert p.read_text().splitlines()[0] == "threshold,fraction"
    r = ErrorCurve.read_csv(p)
    assert np.array_equal(r.thresholds, c.thresholds) and np.array_equal(r.fractions, c.fractions)


def test_transfer_identity(tmp_path):
    m = icosphere(3)
    out = tmp_path / "t.ply"
    color_transfer_export(m, m, Permutation.identity(m.n_vertices), out)
    assert np.array_equal(read_ply_colors(out), position_colors(m))
    r = load_mesh(out)
    assert np.array_equal(r.vertices, m.vertices) and np.array_equal(r.faces, m.faces)


def test_transfer_reversal_on_circle(tmp_path):
    m = circle_band(16)
    n = m.n_vertices
    rev = Permutation(np.arange(n)[::-1])
    out = tmp_path / "r.ply"
    color_transfer_export(m, m, rev, out)
    cols = read_ply_colors(out)
    assert np.array_equal(cols, position_colors(m)[::-1])
    assert cols.shape == (n, 3) and cols.min() >= 0 and cols.max() <= 255


def test_transfer_size_mismatch(tmp_path):
    with pytest.raises(ValueError):
        color_transfer_export(icosphere(2), icosphere(3), Permutation.identity(42), tmp_path / "x.ply")


def test_permutation_file_roundtrip(tmp_path):
    p = Permutation(np.random.default_rng(0).permutation(30))
    f = tmp_path / "p.txt"
    write_permutation(p, f)
    assert read_permutation(f) == p
    f.write_text("0 1\n1 1\n")
    with pytest.raises(Exception):
        read_permutation(f)
