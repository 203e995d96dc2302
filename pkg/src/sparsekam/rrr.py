"""Relaxed-reflect-reflect search for a sparse volume with given Kam matrices."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisPlan, synthesize
from .kam import factor_cl, project_moment
from .metrics import fsc, resolution
from .sparsity import HAAR, project_sparsity

__all__ = ["RRRState", "RRRResult", "initialize", "rrr_step", "run", "sign_aligned",
           "default_K", "sweep_beta", "write_trace_csv"]


def default_K(M: int) -> int:
    """Arbitrary default sparsity level: 5% of the voxels."""
    return int(np.ceil(0.05 * M ** 3))


def sign_aligned(volume: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """``volume`` or ``-volume``, whichever correlates positively with ``reference``.

    Second moments cannot see a global sign flip, so comparisons against
    ground truth are made modulo sign.
    """
    return -volume if float(np.vdot(volume, reference)) < 0 else volume


@dataclass
class RRRState:
    iterate: np.ndarray
    K: int
    beta: float = 0.5
    n: int = 0
    trace: list = field(default_factory=list)
    moment_point: np.ndarray | None = None
    sparse_point: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.beta < 2:
            raise ValueError(f"beta must lie in (0, 2), got {self.beta}")
        if not 0 <= self.K <= self.iterate.size:
            raise ValueError(f"K must lie in [0, {self.iterate.size}], got {self.K}")


@dataclass
class RRRResult:
    final: np.ndarray
    best: np.ndarray
    best_n: int
    trace: list
    state: RRRState
    init_resolution: float | None = None
    best_resolution: float | None = None
    stopped_early: bool = False


def initialize(scrambled, plan: BasisPlan, K: int | None = None, beta: float = 0.5) -> RRRState:
    """Start from the volume synthesised from the scrambled factors."""
    K = default_K(plan.M) if K is None else int(K)
    return RRRState(iterate=synthesize(scrambled, plan), K=K, beta=beta)


def rrr_step(state: RRRState, C, plan: BasisPlan, factors=None, reference=None,
             voxel_size: float = 1.0, basis=HAAR) -> RRRState:
    """One RRR update; appends a record to ``state.trace`` (shared, append-only)."""
    t0 = time.perf_counter()
    if factors is None:
        factors = [factor_cl(Cl, ell) for ell, Cl in enumerate(C)]
    x = state.iterate
    moment = project_moment(x, C, plan, factors=factors)
    sparse = project_sparsity(2 * moment - x, state.K, basis=basis)
    diff = sparse - moment
    update = state.beta * diff
    record = {
        "n": state.n,
        "gap": float(np.linalg.norm(diff)),
        "update_norm": float(np.linalg.norm(update)),
    }
    if reference is not None:
        record["fsc_resolution"] = resolution(
            fsc(sign_aligned(sparse, reference), reference, voxel_size))
    record["wall_ms"] = 1e3 * (time.perf_counter() - t0)
    state.trace.append(record)
    return RRRState(iterate=x + update, K=state.K, beta=state.beta, n=state.n + 1,
                    trace=state.trace, moment_point=moment, sparse_point=sparse)


def run(scrambled, C, plan: BasisPlan, K: int | None = None, N: int = 500,
        beta: float = 0.5, reference=None, voxel_size: float = 1.0,
        early_stop: bool = True, patience: int = 10, tol: float = 1e-10,
        callback=None) -> RRRResult:
    """Iterate RRR ``N`` times from the scrambled factors.

    ``final`` is the last sparsity-projected iterate. ``best`` is the
    sparsity-projected iterate with the best FSC resolution against
    ``reference`` when one is given, else the one with the smallest
    constraint gap. The loop exits early once the update norm stays below
    ``tol`` for ``patience`` consecutive iterations.
    """
    if N < 1:
        raise ValueError("N >= 1 required")
    factors = [factor_cl(Cl, ell) for ell, Cl in enumerate(C)]
    state = initialize(scrambled, plan, K, beta)
    init_res = None
    if reference is not None:
        init_res = resolution(fsc(sign_aligned(state.iterate, reference), reference, voxel_size))
    best, best_n, best_score = None, -1, np.inf
    quiet = 0
    stopped = False
    for _ in range(N):
        state = rrr_step(state, C, plan, factors=factors, reference=reference,
                         voxel_size=voxel_size)
        rec = state.trace[-1]
        score = rec["fsc_resolution"] if reference is not None else rec["gap"]
        if score < best_score:
            best, best_n, best_score = state.sparse_point, rec["n"], score
        if callback is not None:
            callback(state)
        quiet = quiet + 1 if rec["update_norm"] < tol else 0
        if early_stop and quiet >= patience:
            stopped = True
            break
    if best is None:
        best, best_n = state.sparse_point, state.trace[-1]["n"]
    return RRRResult(final=state.sparse_point, best=best, best_n=best_n, trace=state.trace,
                     state=state, init_resolution=init_res,
                     best_resolution=best_score if reference is not None else None,
                     stopped_early=stopped)


def sweep_beta(scrambled, C, plan: BasisPlan, betas, K: int | None = None, N: int = 100,
               reference=None, voxel_size: float = 1.0) -> list[dict]:
    """Short runs from the same start for each ``beta``; one summary row per value."""
    rows = []
    for beta in betas:
        res = run(scrambled, C, plan, K=K, N=N, beta=float(beta), reference=reference,
                  voxel_size=voxel_size)
        gaps = [r["gap"] for r in res.trace]
        rows.append({"beta": float(beta), "initial_gap": gaps[0], "final_gap": gaps[-1],
                     "min_gap": min(gaps), "best_n": res.best_n,
                     "init_resolution": res.init_resolution,
                     "best_resolution": res.best_resolution})
    return rows


def write_trace_csv(path, trace) -> None:
    with open(path, "w") as fh:
        fh.write("n,gap,fsc_resolution,wall_ms,update_norm\n")
        for r in trace:
            res = r.get("fsc_resolution")
            res = "" if res is None else f"{res:.10g}"
            fh.write(f"{r['n']},{r['gap']:.12g},{res},{r['wall_ms']:.3f},{r['update_norm']:.12g}\n")
