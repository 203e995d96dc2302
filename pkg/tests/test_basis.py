import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize, special

from sparsekam.basis import (bessel_zeros, expand, precompute_maps, radial_function,
                             random_coefficients, real_sph_harm, real_wigner, synthesize,
                             truncation)
from sparsekam.imaging import gaussian_blob_phantom

seeds = st.integers(0, 2**32 - 1)


def rel(a, b):
    num = np.sqrt(sum(np.sum((x - y) ** 2) for x, y in zip(a, b)))
    return num / np.sqrt(sum(np.sum(y**2) for y in b))


class TestZeros:
    def test_order_zero(self):
        np.testing.assert_allclose(bessel_zeros(0, 6), np.pi * np.arange(1, 7), rtol=1e-14)

    def test_order_one_bisection(self):
        # independent check: tan x = x on (pi, 3 pi / 2)
        ref = optimize.bisect(lambda x: np.tan(x) - x, np.pi + 0.1, 1.5 * np.pi - 1e-6,
                              xtol=1e-15)
        assert bessel_zeros(1, 1)[0] == pytest.approx(ref, abs=1e-12)
        assert bessel_zeros(1, 1)[0] == pytest.approx(4.493409457909064, abs=1e-12)

    @pytest.mark.parametrize("ell", [0, 3, 7, 12])
    def test_roots_and_interlacing(self, ell):
        z = bessel_zeros(ell, 15)
        assert np.all(np.diff(z) > 0)
        assert np.max(np.abs(special.spherical_jn(ell, z))) < 1e-13
        z1 = bessel_zeros(ell + 1, 15)
        assert np.all(z[:-1] < z1[:-1]) and np.all(z1[:-1] < z[1:])

    def test_bad_args(self):
        with pytest.raises(ValueError):
            bessel_zeros(-1, 3)


class TestTruncation:
    def test_s0(self):
        assert truncation(0.5, 32, 0) == [31]

    def test_non_increasing(self):
        S = truncation(0.5, 32, 16)
        assert len(S) == 13  # degree 13 falls below 2l+1
        assert all(a >= b for a, b in zip(S, S[1:]))

    def test_plan_clips_degree(self):
        assert truncation(0.5, 16, 6) == truncation(0.5, 16, 5)

    def test_no_zero_below_bound(self):
        assert truncation(0.5, 0.5, 3) == []

    def test_bad_args(self):
        with pytest.raises(ValueError):
            truncation(0, 32, 3)


class TestRadial:
    @pytest.mark.parametrize("ell", [0, 1, 4])
    def test_normalisation(self, ell):
        c = 0.5
        z = bessel_zeros(ell, 4)

        def inner(s, t):
            f = lambda k: (radial_function(ell, z[[s]], c, k)[0]
                           * radial_function(ell, z[[t]], c, k)[0] * k * k)
            return integrate.quad(f, 0, c, epsabs=1e-14, epsrel=1e-12, limit=200)[0]

        gram = np.array([[inner(s, t) for t in range(4)] for s in range(4)])
        np.testing.assert_allclose(gram, c / (2 * np.pi) * np.eye(4), rtol=1e-8, atol=1e-12)


class TestHarmonics:
    def test_orthonormal(self):
        # Gauss-Legendre in cos(theta), uniform in phi: exact to degree 2L
        L = 4
        x, w = np.polynomial.legendre.leggauss(12)
        phi = np.linspace(0, 2 * np.pi, 24, endpoint=False)
        T, P = np.meshgrid(np.arccos(x), phi, indexing="ij")
        W = np.outer(w, np.full(24, 2 * np.pi / 24)).ravel()
        Y = real_sph_harm(L, T.ravel(), P.ravel())
        np.testing.assert_allclose(Y.T @ (W[:, None] * Y), np.eye((L + 1) ** 2), atol=1e-12)

    @given(seeds)
    def test_wigner_orthogonal(self, seed):
        from sparsekam.geometry import random_rotation
        R = random_rotation(np.random.default_rng(seed))
        for ell in range(4):
            W = real_wigner(ell, R)
            np.testing.assert_allclose(W @ W.T, np.eye(2 * ell + 1), atol=1e-10)


class TestPlan:
    def test_shapes(self, plan16):
        assert plan16.S == [15, 14, 14, 13, 13]
        assert [A.shape for A in plan16.zero_coefficients()] == plan16.shapes

    def test_ball_excludes_high_frequencies(self, plan16):
        M = plan16.M
        idx = np.fft.fftfreq(M, d=1 / M)
        for ax in plan16.half_index:
            assert np.all(idx[ax] != -M // 2)
        k = np.sqrt(sum(idx[a] ** 2 for a in plan16.half_index)) / M
        assert np.all(k <= plan16.c + 1e-12)

    def test_small_grid_rejected(self):
        with pytest.raises(ValueError):
            precompute_maps(4)


class TestMaps:
    def test_round_trip(self, plan16, rng):
        x = random_coefficients(plan16, rng)
        assert rel(expand(synthesize(x, plan16), plan16), x) <= 1e-6

    def test_projection(self, plan16, rng):
        v = rng.standard_normal((16,) * 3)
        p1 = synthesize(expand(v, plan16), plan16)
        p2 = synthesize(expand(p1, plan16), plan16)
        assert np.linalg.norm(p2 - p1) <= 1e-8 * np.linalg.norm(p1)

    def test_projection_is_orthogonal(self, plan16, rng):
        # residual of the fit is orthogonal to everything in the span
        v = rng.standard_normal((16,) * 3)
        p = synthesize(expand(v, plan16), plan16)
        u = synthesize(random_coefficients(plan16, rng), plan16)
        assert abs(np.vdot(v - p, u)) <= 1e-8 * np.linalg.norm(v) * np.linalg.norm(u)

    def test_zero(self, plan16):
        assert not np.any(synthesize(plan16.zero_coefficients(), plan16))

    def test_linearity(self, plan16, rng):
        u, v = rng.standard_normal((2, 16, 16, 16))
        lhs = expand(2 * u - 3 * v, plan16)
        rhs = [2 * a - 3 * b for a, b in zip(expand(u, plan16), expand(v, plan16))]
        assert rel(lhs, rhs) <= 1e-10
        x, y = random_coefficients(plan16, rng), random_coefficients(plan16, rng)
        np.testing.assert_allclose(
            synthesize([a + 0.5 * b for a, b in zip(x, y)], plan16),
            synthesize(x, plan16) + 0.5 * synthesize(y, plan16), atol=1e-12)

    def test_real_output(self, plan16, rng):
        _, residual = synthesize(random_coefficients(plan16, rng), plan16, return_residual=True)
        assert residual < 1e-12

    def test_spherical_symmetry(self, plan32):
        # std 2.5 at M = 32: the periodic wrap of the tail and the radial fit
        # error, both leaking into the cubic degrees 4 and 6, stay below 1e-8
        v = gaussian_blob_phantom(32, [((0, 0, 0), 2.5, 1.0)])
        A = expand(v, plan32)
        scale = np.max(np.abs(A[0]))
        for ell in range(1, plan32.L + 1):
            assert np.max(np.abs(A[ell])) <= 1e-8 * scale

    @pytest.mark.parametrize("axis", [0, 1, 2])
    def test_quarter_turn_equivariance(self, plan16, rng, axis):
        M = plan16.M
        x = random_coefficients(plan16, rng)
        v = synthesize(x, plan16)
        # R: quarter turn about `axis`; rotated volume v'(r) = v(R^T r) on the centred grid
        a, b = [k for k in range(3) if k != axis]
        R = np.eye(3)
        R[[a, a, b, b], [a, b, a, b]] = [0, -1, 1, 0]
        c = M // 2
        idx = np.indices((M,) * 3) - c
        src = np.einsum("ji,j...->i...", R.astype(int), idx)  # R^T r
        vr = v[tuple((src + c) % M)]
        xr = [A @ real_wigner(ell, R) for ell, A in enumerate(x)]
        np.testing.assert_allclose(synthesize(xr, plan16), vr, atol=1e-10 * np.max(np.abs(v)))

    def test_shape_mismatch(self, plan16):
        with pytest.raises(ValueError):
            synthesize([np.zeros((2, 1))], plan16)
        with pytest.raises(ValueError):
            expand(np.zeros((8, 8, 8)), plan16)


@pytest.mark.slow
def test_m32_round_trip(plan32):
    x = random_coefficients(plan32, np.random.default_rng(0))
    assert plan32.S == [31, 30, 30, 29, 29, 28, 28]
    assert rel(expand(synthesize(x, plan32), plan32), x) <= 1e-6
