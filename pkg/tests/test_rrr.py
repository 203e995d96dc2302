import numpy as np
import pytest

from sparsekam.basis import expand, synthesize
from sparsekam.imaging import gaussian_blob_phantom, random_blobs
from sparsekam.kam import compute_cl, scramble
from sparsekam.rrr import (RRRState, default_K, initialize, rrr_step, run, sign_aligned,
                           sweep_beta, write_trace_csv)


@pytest.fixture(scope="module")
def problem(plan16):
    rng = np.random.default_rng(5)
    vol = gaussian_blob_phantom(16, random_blobs(rng, 16, count=4, std_range=(1.5, 2.0)))
    A = expand(vol, plan16)
    truth = synthesize(A, plan16)
    return A, compute_cl(A), scramble(A, rng), truth


def test_default_K():
    assert default_K(32) == 1639
    assert default_K(16) == 205


def test_sign_aligned():
    v = np.arange(8.0).reshape(2, 2, 2)
    np.testing.assert_array_equal(sign_aligned(-v, v), v)
    np.testing.assert_array_equal(sign_aligned(v, v), v)


class TestInitialize:
    def test_unscrambled_is_truth(self, plan16, problem):
        A, _, _, truth = problem
        np.testing.assert_allclose(initialize(A, plan16).iterate, truth, atol=1e-12)

    def test_satisfies_moment_constraint(self, plan16, problem):
        _, C, B, _ = problem
        D = expand(initialize(B, plan16).iterate, plan16)
        for d, c in zip(D, C):
            assert np.max(np.abs(d @ d.T - c)) <= 1e-8 * np.max(np.abs(c))

    def test_deterministic(self, plan16, problem):
        B = problem[2]
        np.testing.assert_array_equal(initialize(B, plan16).iterate,
                                      initialize(B, plan16).iterate)

    def test_state_validation(self):
        with pytest.raises(ValueError, match="beta"):
            RRRState(np.zeros((2, 2, 2)), K=1, beta=2.0)
        with pytest.raises(ValueError, match="K"):
            RRRState(np.zeros((2, 2, 2)), K=9)


class TestStep:
    def test_fixed_point(self, plan16, problem):
        A, C, _, _ = problem
        s = initialize(A, plan16, K=16**3)
        for _ in range(5):
            s = rrr_step(s, C, plan16)
        assert max(r["update_norm"] for r in s.trace) < 1e-8
        assert max(r["gap"] for r in s.trace) < 1e-8

    def test_small_beta_barely_moves(self, plan16, problem):
        _, C, B, _ = problem
        s0 = initialize(B, plan16, beta=1e-9)
        s1 = rrr_step(s0, C, plan16)
        assert np.linalg.norm(s1.iterate - s0.iterate) < 1e-7 * np.linalg.norm(s0.iterate)

    def test_generic_start_moves(self, plan16, problem):
        _, C, B, _ = problem
        s = rrr_step(initialize(B, plan16), C, plan16)
        assert s.trace[0]["update_norm"] > 0
        assert s.n == 1

    def test_update_matches_gap(self, plan16, problem):
        _, C, B, _ = problem
        s = rrr_step(initialize(B, plan16, beta=0.7), C, plan16)
        r = s.trace[0]
        assert r["update_norm"] == pytest.approx(0.7 * r["gap"], rel=1e-12)

    def test_trace_records(self, plan16, problem):
        _, C, B, truth = problem
        s = rrr_step(initialize(B, plan16), C, plan16, reference=truth)
        assert set(s.trace[0]) == {"n", "gap", "update_norm", "fsc_resolution", "wall_ms"}


class TestRun:
    def test_unscrambled_returns_truth(self, plan16, problem):
        A, C, _, truth = problem
        res = run(A, C, plan16, K=16**3, N=20)
        assert np.linalg.norm(res.final - truth) <= 1e-6 * np.linalg.norm(truth)
        assert res.stopped_early and len(res.trace) == 10

    def test_scrambled_improves(self, plan16, problem):
        _, C, B, truth = problem
        res = run(B, C, plan16, K=default_K(16), N=60, reference=truth)
        assert res.best_resolution < res.init_resolution
        assert min(r["gap"] for r in res.trace) <= res.trace[0]["gap"]

    def test_blind_best_is_smallest_gap(self, plan16, problem):
        _, C, B, _ = problem
        res = run(B, C, plan16, N=15)
        gaps = [r["gap"] for r in res.trace]
        assert res.best_n == int(np.argmin(gaps))
        assert res.best_resolution is None

    def test_deterministic(self, plan16, problem):
        _, C, B, truth = problem
        a = run(B, C, plan16, N=5, reference=truth)
        b = run(B, C, plan16, N=5, reference=truth)
        assert [r["gap"] for r in a.trace] == [r["gap"] for r in b.trace]
        np.testing.assert_array_equal(a.final, b.final)

    def test_requires_iterations(self, plan16, problem):
        with pytest.raises(ValueError):
            run(problem[2], problem[1], plan16, N=0)

    def test_callback(self, plan16, problem):
        seen = []
        run(problem[2], problem[1], plan16, N=3, callback=lambda s: seen.append(s.n))
        assert seen == [1, 2, 3]


def test_sweep(plan16, problem):
    _, C, B, truth = problem
    rows = sweep_beta(B, C, plan16, [0.3, 1.0], N=4, reference=truth)
    assert [r["beta"] for r in rows] == [0.3, 1.0]
    assert rows[0]["initial_gap"] == rows[1]["initial_gap"]


def test_trace_csv(tmp_path):
    trace = [{"n": 0, "gap": 1.5, "update_norm": 0.75, "wall_ms": 2.0},
             {"n": 1, "gap": 1.0, "update_norm": 0.5, "wall_ms": 2.0, "fsc_resolution": 4.0}]
    write_trace_csv(tmp_path / "t.csv", trace)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "n,gap,fsc_resolution,wall_ms,update_norm"
    assert lines[1] == "0,1.5,,2.000,0.75"
    assert lines[2].split(",")[2] == "4"
