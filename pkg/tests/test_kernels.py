"""Both kernel backends must implement the same contracts; the numba path
is compared against the numpy path directly, bypassing the env switch."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frametok import _kernels_np as knp

nb = pytest.importorskip("frametok._kernels_nb")

BACKENDS = [("numpy", knp), ("numba", nb)]


@pytest.mark.parametrize("name,impl", BACKENDS)
class TestContracts:
    def test_matmul_identity(self, name, impl):
        a = np.random.default_rng(0).standard_normal((4, 4))
        assert np.allclose(impl.matmul(np.eye(4), a), a, atol=1e-15)

    def test_pairwise_zero_diagonal_and_symmetry(self, name, impl):
        items = np.random.default_rng(1).standard_normal((7, 2, 3))
        dist = impl.pairwise_mean_sqdist(items)
        assert (np.diag(dist) == 0).all()
        assert (dist == dist.T).all()
        assert (dist >= 0).all()

    def test_pairwise_identical_items_exact_zero(self, name, impl):
        items = np.random.default_rng(2).standard_normal((3, 2, 4))
        items[2] = items[0]
        dist = impl.pairwise_mean_sqdist(items)
        assert dist[0, 2] == 0.0

    def test_topk_ties_break_low_index(self, name, impl):
        values = np.array([[1.0, 5.0, 5.0, 0.0]])
        assert impl.topk_rows(values, 3).tolist() == [[1, 2, 0]]

    def test_indicator_mean_rows_sum_to_one(self, name, impl):
        idx = np.array([[0, 2], [1, 2], [0, 1]], dtype=np.int64)
        mean = impl.indicator_mean(idx, 4)
        assert np.allclose(mean.sum(axis=1), 1.0)
        assert mean[0].tolist() == [2 / 3, 1 / 3, 0.0, 0.0]


class TestBackendEquivalence:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), m=st.integers(1, 6),
           k=st.integers(1, 6), n=st.integers(1, 6))
    def test_matmul(self, seed, m, k, n):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
        assert np.allclose(knp.matmul(a, b), nb.matmul(a, b), atol=1e-12, rtol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(2, 9),
           rows=st.integers(1, 3), d=st.integers(1, 4))
    def test_pairwise(self, seed, n, rows, d):
        items = np.random.default_rng(seed).standard_normal((n, rows, d))
        assert np.allclose(knp.pairwise_mean_sqdist(items),
                           nb.pairwise_mean_sqdist(items), atol=1e-12, rtol=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), m=st.integers(1, 20),
           n=st.integers(2, 8))
    def test_topk_and_mean(self, seed, m, n):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, n + 1))
        values = rng.standard_normal((m, n))
        idx_a = knp.topk_rows(values, k)
        idx_b = nb.topk_rows(values, k)
        assert (idx_a == idx_b).all()
        assert np.allclose(knp.indicator_mean(idx_a, n), nb.indicator_mean(idx_b, n))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_backward_contraction(self, seed):
        rng = np.random.default_rng(seed)
        m, k, n = 50, 3, 6
        idx = rng.integers(0, n, size=(m, k)).astype(np.int64)
        noise = rng.standard_normal((m, n))
        d_soft = rng.standard_normal((k, n))
        a = knp.topk_backward(d_soft, idx, noise, 0.3)
        b = nb.topk_backward(d_soft, idx, noise, 0.3)
        assert np.allclose(a, b, atol=1e-12, rtol=1e-10)


class TestBitStability:
    def test_repeat_runs_bit_identical(self):
        rng = np.random.default_rng(3)
        items = rng.standard_normal((10, 2, 8))
        for impl in (knp, nb):
            d1 = impl.pairwise_mean_sqdist(items)
            d2 = impl.pairwise_mean_sqdist(items)
            assert d1.tobytes() == d2.tobytes()
