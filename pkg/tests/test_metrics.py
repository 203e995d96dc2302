import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsekam.metrics import FSCCurve, crossing_shell, fsc, resolution, write_fsc_csv

seeds = st.integers(0, 2**32 - 1)


def step_curve(M=64, edge=10, voxel=1.0):
    k = np.arange(M // 2 + 1)
    v = np.where(k < edge, 1.0, 0.0)
    return FSCCurve(k, v, np.ones_like(k), np.zeros(len(k), bool), M, voxel)


class TestFSC:
    def test_identical(self, rng):
        v = rng.standard_normal((16, 16, 16))
        c = fsc(v, v)
        np.testing.assert_allclose(c.values, 1.0, atol=1e-12)
        assert len(c.values) == 9

    def test_scale_invariant(self, rng):
        v = rng.standard_normal((16, 16, 16))
        np.testing.assert_allclose(fsc(v, 2 * v).values, 1.0, atol=1e-12)

    def test_white_noise_envelope(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((2, 64, 64, 64))
        c = fsc(a, b)
        k = c.shells >= 4
        assert np.all(np.abs(c.values[k]) <= 5 / np.sqrt(c.counts[k]))

    @given(seeds)
    def test_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((2, 8, 8, 8))
        np.testing.assert_array_equal(fsc(a, b).values, fsc(b, a).values)

    def test_quarter_turn_invariance(self, rng):
        a, b = rng.standard_normal((2, 16, 16, 16))
        # exact grid rotation about the centre voxel
        rot = lambda v: np.roll(np.rot90(v, axes=(0, 1)), 1, axis=0)
        np.testing.assert_allclose(fsc(rot(a), rot(b)).values, fsc(a, b).values, atol=1e-12)

    def test_empty_shell_flagged(self):
        v = np.zeros((8, 8, 8))
        v[4, 4, 4] = 1.0
        c = fsc(v, np.zeros((8, 8, 8)))
        assert c.empty.all() and not np.any(c.values)

    def test_values_bounded(self, rng):
        a = rng.standard_normal((16,) * 3)
        c = fsc(a, a + rng.standard_normal((16,) * 3))
        assert np.all(np.abs(c.values) <= 1 + 1e-9)

    def test_frequency_axis(self):
        c = step_curve(M=64, voxel=2.0)
        assert c.frequency[32] == pytest.approx(32 / 128)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fsc(np.zeros((8, 8, 8)), np.zeros((4, 4, 4)))


class TestResolution:
    def test_no_crossing(self, rng):
        v = rng.standard_normal((16,) * 3)
        c = fsc(v, v)
        assert crossing_shell(c) is None
        assert resolution(c) == 2.0

    def test_step_curve(self):
        c = step_curve()
        k = crossing_shell(c)
        assert 9 < k < 10
        assert 6.4 < resolution(c) < 7.1

    def test_cutoff_order(self, rng):
        a = rng.standard_normal((32,) * 3)
        b = a + 2 * rng.standard_normal((32,) * 3)
        from scipy.ndimage import gaussian_filter
        c = fsc(gaussian_filter(a, 1.5), gaussian_filter(b, 1.5))
        assert resolution(c, 0.5) >= resolution(c, 0.143)

    def test_voxel_size_scales(self):
        assert resolution(step_curve(voxel=1.5)) == pytest.approx(1.5 * resolution(step_curve()))

    def test_bad_cutoff(self):
        with pytest.raises(ValueError):
            resolution(step_curve(), 1.5)

    def test_empty_curve(self):
        c = FSCCurve(np.arange(1), np.ones(1), np.ones(1), np.zeros(1, bool), 2)
        with pytest.raises(ValueError):
            crossing_shell(c)


def test_csv(tmp_path):
    write_fsc_csv(tmp_path / "f.csv", step_curve(M=8, edge=2, voxel=2.0))
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "k,frequency_per_angstrom,frequency_per_voxel,fsc"
    assert lines[3].split(",") == ["2", "0.125", "0.25", "0"]
