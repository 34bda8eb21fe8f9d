import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmf.geometry import TriMesh
from pmf.metric import (
    CircleSpace,
    ExplicitSpace,
    MatrixCapExceeded,
    MeshGeodesicSpace,
    MetricError,
    SubsetSpace,
    load_explicit,
    write_explicit,
)
from pmf.synthetic import bumpy, icosphere

from conftest import TETRA_FACES, tetra_vertices


def test_circle_column():
    assert CircleSpace(8, 8.0).distance_column(0).tolist() == [0, 1, 2, 3, 4, 3, 2, 1]


def test_tetra_column():
    s = MeshGeodesicSpace(TriMesh(tetra_vertices(), TETRA_FACES))
    for src in range(4):
        c = s.distance_column(src)
        assert c[src] == 0
        np.testing.assert_allclose(np.delete(c, src), 1.0, rtol=1e-12)


def test_icosphere_pole_to_pole():
    d = MeshGeodesicSpace(icosphere(8)).distance(0, 3)
    assert np.pi <= d <= 1.1 * np.pi


def test_full_matrix_examples():
    np.testing.assert_array_equal(
        CircleSpace(4, 4.0).full_distance_matrix(),
        [[0, 1, 2, 1], [1, 0, 1, 2], [2, 1, 0, 1], [1, 2, 1, 0]],
    )
    m = CircleSpace(6).full_distance_matrix()
    assert np.array_equal(ExplicitSpace(m).full_distance_matrix(), m)
    t = MeshGeodesicSpace(TriMesh(tetra_vertices(), TETRA_FACES)).full_distance_matrix()
    np.testing.assert_allclose(t[~np.eye(4, dtype=bool)], 1.0, rtol=1e-12)


def test_mesh_triangle_inequality_sampled():
    s = MeshGeodesicSpace(bumpy(icosphere(6)))
    rng = np.random.default_rng(0)
    src = rng.choice(s.n, 30, replace=False)
    D = s.distance_columns(src)
    # d(a,j) <= d(a,b) + d(b,j) for sampled sources a, b and every j
    for a in range(len(src)):
        for b in range(len(src)):
            assert (D[a] <= D[a, src[b]] + D[b] + 1e-12).all()


def test_column_determinism_and_readonly():
    s = MeshGeodesicSpace(icosphere(4))
    a = s.distance_column(5)
    b = s.distance_column(5)
    assert a is b
    s2 = MeshGeodesicSpace(icosphere(4))
    assert np.array_equal(a, s2.distance_column(5))
    with pytest.raises(ValueError):
        a[0] = 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(0, 100), st.integers(0, 100), st.integers(0, 100))
def test_circle_rotation_invariance(n, i, j, r):
    s = CircleSpace(n, 3.7)
    i, j = i % n, j % n
    assert s.distance(i, j) == s.distance((i + r) % n, (j + r) % n)
    step = 3.7 / n
    assert s.distance(i, j) == pytest.approx(step * min(abs(i - j), n - abs(i - j)), abs=1e-12)


def test_explicit_validation():
    with pytest.raises(MetricError, match="symmetric"):
        ExplicitSpace([[0, 1], [2, 0]])
    with pytest.raises(MetricError, match=r"dist\(1,1\)"):
        ExplicitSpace([[0, 1], [1, 3]])
    with pytest.raises(MetricError, match="triangle"):
        ExplicitSpace([[0, 1, 5], [1, 0, 1], [5, 1, 0]])
    with pytest.raises(MetricError, match="negative"):
        ExplicitSpace([[0, -1], [-1, 0]])


def test_explicit_file_roundtrip(tmp_path):
    m = CircleSpace(9, 2.5).full_distance_matrix()
    p = tmp_path / "c.dmat"
    write_explicit(m, p)
    assert np.array_equal(load_explicit(p).matrix, m)


def test_matrix_cap():
    s = CircleSpace(100, matrix_cap=50)
    with pytest.raises(MatrixCapExceeded):
        s.full_distance_matrix()
    assert s.dense_matrices_built == 0


def test_limit_truncates_and_cache_bypass():
    s = CircleSpace(10, 10.0)
    d = s.distance_columns([0], limit=2.0, cache=False)[0]
    assert d[:3].tolist() == [0, 1, 2]
    assert np.isinf(d[3:8]).all()
    assert len(s._cache) == 0


def test_cache_is_bounded():
    s = CircleSpace(1000, cache_bytes=8 * 1000 * 5)
    for i in range(50):
        s.distance_column(i)
    assert len(s._cache) <= 5


def test_threads_do_not_change_results():
    m = bumpy(icosphere(5))
    a = MeshGeodesicSpace(m)
    b = MeshGeodesicSpace(m)
    b.threads = 4
    src = np.arange(0, 200, 3)
    assert np.array_equal(a.distance_columns(src, block=16, cache=False),
                          b.distance_columns(src, block=16, cache=False))


def test_subset_space():
    parent = CircleSpace(12, 12.0)
    sub = SubsetSpace(parent, [0, 3, 6, 9])
    np.testing.assert_array_equal(sub.full_distance_matrix(), [[0, 3, 6, 3], [3, 0, 3, 6], [6, 3, 0, 3], [3, 6, 3, 0]])
    assert sub.area() == parent.area()


def test_circle_area_surrogate():
    assert CircleSpace(10, 2 * np.pi).area() == pytest.approx(4 * np.pi)
    # explicit surrogate agrees with the circle it was read from
    c = CircleSpace(16, 3.0)
    assert ExplicitSpace(c.full_distance_matrix()).area() == pytest.approx(c.area())


@pytest.mark.parametrize("limit", [np.inf, 0.4])
def test_mesh_columns_match_scipy_dijkstra(limit):
    from scipy.sparse.csgraph import dijkstra

    mesh = bumpy(icosphere(6))
    src = np.array([0, 17, 250, mesh.n_vertices - 1])
    ours = MeshGeodesicSpace(mesh).distance_columns(src, limit=limit, cache=False)
    ref = dijkstra(mesh.adjacency, directed=False, indices=src, limit=limit)
    assert np.array_equal(np.isinf(ours), np.isinf(ref))
    fin = np.isfinite(ref)
    assert np.allclose(ours[fin], ref[fin], rtol=0, atol=1e-12)
