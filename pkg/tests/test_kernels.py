import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from funcreg.funcspace import Curve, FunctionalSample, fourier_basis, make_uniform_grid
from funcreg.kernels import (
    Kernel,
    SortedNeighbors,
    cross_distances,
    distances_to,
    kernel_eval,
    knn_bandwidth,
    pairwise_distances,
)

from conftest import random_sample


class TestKernel:
    def test_epanechnikov_values(self):
        assert kernel_eval(Kernel.EPANECHNIKOV, 0.0) == 0.5
        assert kernel_eval(Kernel.EPANECHNIKOV, 1.0) == 0.0
        assert kernel_eval(Kernel.EPANECHNIKOV, 0.5) == pytest.approx(0.375, abs=1e-15)

    def test_other_kinds(self):
        assert kernel_eval("uniform", 1.0) == 1.0
        assert kernel_eval("triangle_asym", 0.25) == 0.75

    @pytest.mark.parametrize("kind", list(Kernel))
    def test_support(self, kind):
        t = np.array([-1e-9, -2.0, 1 + 1e-9, 7.0, np.inf])
        np.testing.assert_array_equal(kernel_eval(kind, t), 0.0)

    @pytest.mark.parametrize("kind", list(Kernel))
    def test_nonincreasing_nonnegative(self, kind):
        v = kernel_eval(kind, np.arange(0, 1.0005, 1e-3))
        assert np.all(v >= 0)
        assert np.all(np.diff(v) <= 0)

    def test_vectorized_matches_scalar(self):
        t = np.linspace(-0.5, 1.5, 17)
        np.testing.assert_array_equal(Kernel.EPANECHNIKOV(t),
                                      [kernel_eval(Kernel.EPANECHNIKOV, s) for s in t])


class TestDistances:
    def test_identical(self):
        s = FunctionalSample(make_uniform_grid(11), np.tile(np.linspace(0, 1, 11), (4, 1)))
        np.testing.assert_array_equal(pairwise_distances(s), 0.0)

    def test_basis_pair(self):
        b = fourier_basis(2, make_uniform_grid(201))
        d = pairwise_distances(FunctionalSample(b.grid, b.functions))
        assert d[0, 1] == pytest.approx(np.sqrt(2), abs=1e-6)

    def test_single(self):
        d = pairwise_distances(FunctionalSample(make_uniform_grid(5), np.ones((1, 5))))
        assert d.shape == (1, 1) and d[0, 0] == 0

    def test_metric_properties(self, rng):
        s = random_sample(rng, 30)
        d = pairwise_distances(s)
        assert np.all(np.diag(d) == 0)
        np.testing.assert_array_equal(d, d.T)
        assert np.all(d >= 0)
        i, j, k = rng.integers(0, 30, size=(3, 500))
        assert np.all(d[i, k] <= d[i, j] + d[j, k] + 1e-12)

    def test_cross_agrees_with_distances_to(self, rng):
        a, b = random_sample(rng, 5), random_sample(rng, 7)
        d = cross_distances(a, b)
        for i in range(5):
            np.testing.assert_allclose(d[i], distances_to(b, a[i]), atol=1e-12)


class TestKnn:
    def test_order_statistic(self):
        assert knn_bandwidth([0.1, 0.2, 0.3], 2) == 0.2
        assert knn_bandwidth([0.3, 0.1, 0.2], 2) == 0.2

    def test_ties(self):
        h = knn_bandwidth([0.1, 0.2, 0.2], 2)
        assert h == 0.2
        assert np.sum(np.array([0.1, 0.2, 0.2]) <= h) == 3

    def test_single(self):
        assert knn_bandwidth([0.5], 1) == 0.5

    @pytest.mark.parametrize("k", [0, 4, 1.5])
    def test_range(self, k):
        with pytest.raises(ValueError):
            knn_bandwidth([0.1, 0.2, 0.3], k)

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=40), st.data())
    def test_ball_properties(self, d, data):
        k = data.draw(st.integers(1, len(d)))
        h = knn_bandwidth(d, k)
        arr = np.array(d)
        assert np.sum(arr <= h) >= k
        assert np.sum(arr < h) < k
        if k > 1:
            assert knn_bandwidth(d, k - 1) <= h

    def test_sorted_neighbors_loo(self, rng):
        s = random_sample(rng, 12)
        d = pairwise_distances(s)
        nb = SortedNeighbors(d, exclude=np.arange(12))
        assert nb.n_ref == 11
        assert not np.any(nb.order == np.arange(12)[:, None])
        for i in range(12):
            others = np.delete(d[i], i)
            assert nb.bandwidths(3)[i] == knn_bandwidth(others, 3)

    def test_neighborhoods_weights(self, rng):
        s = random_sample(rng, 15)
        nb = SortedNeighbors(pairwise_distances(s))
        idx, w, h = nb.neighborhoods(5)
        assert idx.shape[1] == 5
        # the k-th neighbor sits on the boundary and gets weight zero
        np.testing.assert_array_equal(w[:, -1], 0.0)
        np.testing.assert_array_equal(w[:, 0], 0.5)  # self at distance 0

    def test_neighborhoods_tie_widens(self):
        g = make_uniform_grid(3)
        s = FunctionalSample(g, [[0, 0, 0], [1, 1, 1], [-1, -1, -1], [3, 3, 3]])
        nb = SortedNeighbors(distances_to(s, Curve(g, np.zeros(3)))[None, :])
        idx, w, h = nb.neighborhoods(2)
        assert h[0] == 1.0 and idx.shape[1] == 3
