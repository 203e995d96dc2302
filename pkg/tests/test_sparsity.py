import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsekam.sparsity import (HAAR, HaarBasis, project_sparsity, top_k_mask,
                                wavelet_forward, wavelet_inverse)

seeds = st.integers(0, 2**32 - 1)


class TestTransform:
    def test_constant(self):
        c = wavelet_forward(np.ones((8, 8, 8)))
        assert c[0] == pytest.approx(8**1.5, abs=1e-12)
        assert c[0] == pytest.approx(22.627417, abs=1e-6)
        assert np.max(np.abs(c[1:])) < 1e-12

    def test_zero(self):
        assert not np.any(wavelet_forward(np.zeros((4, 4, 4))))

    @pytest.mark.parametrize("M", [1, 2, 8, 32])
    def test_round_trip_and_parseval(self, M, rng):
        v = rng.standard_normal((M,) * 3)
        c = wavelet_forward(v)
        assert abs(np.linalg.norm(c) - np.linalg.norm(v)) <= 1e-10 * np.linalg.norm(v)
        np.testing.assert_allclose(wavelet_inverse(c), v, atol=1e-12)

    def test_scaling_slot(self):
        c = np.zeros(512)
        c[0] = 1.0
        np.testing.assert_allclose(wavelet_inverse(c), np.full((8, 8, 8), 8**-1.5))

    def test_linear(self, rng):
        a, b = rng.standard_normal((2, 512))
        np.testing.assert_allclose(wavelet_inverse(2 * a - b),
                                   2 * wavelet_inverse(a) - wavelet_inverse(b), atol=1e-13)

    def test_address_order_coarse_first(self):
        # a volume built from one finest-level detail lands in the last block
        c = np.zeros(512)
        c[-1] = 1.0
        v = wavelet_inverse(c)
        assert np.count_nonzero(np.abs(v) > 1e-14) == 8

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            wavelet_forward(np.zeros((6, 6, 6)))
        with pytest.raises(ValueError):
            wavelet_forward(np.zeros((4, 4, 8)))
        with pytest.raises(ValueError):
            wavelet_inverse(np.zeros(100), 4)

    def test_basis_is_orthonormal(self):
        E = np.stack([HAAR.inverse(e, 4).ravel() for e in np.eye(64)])
        np.testing.assert_allclose(E @ E.T, np.eye(64), atol=1e-13)


class TestTopK:
    def test_ties_go_to_lower_addresses(self):
        c = np.array([1.0, -2, 2, 2, 0.5])
        np.testing.assert_array_equal(top_k_mask(c, 2), [False, True, True, False, False])

    def test_bounds(self):
        assert not top_k_mask(np.ones(4), 0).any()
        assert top_k_mask(np.ones(4), 4).all()
        with pytest.raises(ValueError):
            top_k_mask(np.ones(4), 5)


class TestProjection:
    def test_full_and_empty(self, rng):
        v = rng.standard_normal((8, 8, 8))
        np.testing.assert_allclose(project_sparsity(v, 512), v, atol=1e-12)
        assert not np.any(project_sparsity(v, 0))

    def test_constant_single_term(self):
        v = np.full((8, 8, 8), 3.0)
        np.testing.assert_allclose(project_sparsity(v, 1), v, atol=1e-12)

    @given(seeds, st.integers(1, 511))
    def test_idempotent_and_contractive(self, seed, K):
        v = np.random.default_rng(seed).standard_normal((8, 8, 8))
        p = project_sparsity(v, K)
        np.testing.assert_allclose(project_sparsity(p, K), p, rtol=0, atol=1e-12)
        assert np.linalg.norm(p) <= np.linalg.norm(v) + 1e-12
        assert np.count_nonzero(np.abs(wavelet_forward(p)) > 1e-12) <= K

    def test_residual_non_increasing_in_K(self, rng):
        v = rng.standard_normal((8, 8, 8))
        r = [np.linalg.norm(v - project_sparsity(v, K)) for K in range(0, 513, 32)]
        assert all(a >= b - 1e-12 for a, b in zip(r, r[1:]))

    def test_custom_basis_plug(self, rng):
        class Identity:
            @staticmethod
            def forward(v):
                return np.asarray(v).ravel().copy()

            @staticmethod
            def inverse(c, M):
                return np.asarray(c).reshape(M, M, M)

        v = rng.standard_normal((4, 4, 4))
        p = project_sparsity(v, 5, basis=Identity())
        assert np.count_nonzero(p) == 5
        assert isinstance(HAAR, HaarBasis)
