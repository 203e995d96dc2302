"""Exact recovery of a point-mass molecule from its pair manifolds.

Each pair manifold is interpolated by its quartic, whose coefficients give
two squared norms and one inner product. Distinct norms label the atoms,
which fills the Gram matrix; a rank-3 factorisation gives the positions up
to a global orthogonal transform. Pair masses are the off-diagonal of
``w w^T``, completed to rank one to get the weights.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from itertools import permutations

import numpy as np

from .geometry import AtomSet
from .oracle import PairSamples, PairTriple

__all__ = [
    "DegenerateSamplesError",
    "InconsistentTriplesError",
    "GenericityViolation",
    "InconsistentProductsError",
    "interpolation_matrix",
    "interpolate_triple",
    "assemble_gram",
    "factor_gram",
    "recover_weights",
    "recover",
    "recover_with_report",
]


class DegenerateSamplesError(ValueError):
    """Interpolation matrix does not have a one-dimensional kernel."""


class InconsistentTriplesError(ValueError):
    """Triples disagree on the norm of an atom."""


class GenericityViolation(ValueError):
    """Two atoms have norms closer than the matching tolerance (A2)."""


class InconsistentProductsError(ValueError):
    """Pair masses cannot be completed to a positive rank-one matrix."""


def interpolation_matrix(points) -> np.ndarray:
    """Rows ``[1, |x1|^2, |x2|^2, <x1, x2>, (x1 y2 - y1 x2)^2]`` per sample."""
    P = np.asarray(points, dtype=np.float64)
    x1, y1, x2, y2 = P.T
    return np.column_stack([
        np.ones_like(x1),
        x1 * x1 + y1 * y1,
        x2 * x2 + y2 * y2,
        x1 * x2 + y1 * y2,
        x1 * x1 * y2 * y2 + y1 * y1 * x2 * x2 - 2 * x1 * y1 * x2 * y2,
    ])


def interpolate_triple(samples, min_ratio: float = 1e6, return_ratio: bool = False,
                       rank_tol: float = 1e-10):
    """Read ``(||a_i||^2, ||a_j||^2, <a_i, a_j>)`` off the kernel of the interpolation matrix.

    Parameters
    ----------
    samples : PairSamples or (n, 4) array_like
        At least four generic points of one pair manifold.
    min_ratio : float
        Smallest acceptable ``sigma_4 / sigma_5``. Below it the kernel is
        not one-dimensional (collinear atoms, repeated samples, or points
        from different manifolds).
    return_ratio : bool
        Also return ``sigma_4 / sigma_5``.
    rank_tol : float
        ``sigma_4 <= rank_tol * sigma_1`` counts as rank below 4.
    """
    points = samples.points if isinstance(samples, PairSamples) else samples
    V = interpolation_matrix(points)
    if V.shape[0] < 4:
        raise ValueError("need at least 4 samples to interpolate the quartic")
    _, s, Vt = np.linalg.svd(V, full_matrices=True)
    sigma = np.zeros(5)
    sigma[:len(s)] = s
    ratio = np.inf if sigma[4] == 0 else sigma[3] / sigma[4]
    # rank below 4 makes sigma_4 and sigma_5 both roundoff, with an arbitrary ratio
    if sigma[3] <= rank_tol * sigma[0]:
        ratio = 1.0
    if not ratio > min_ratio:
        raise DegenerateSamplesError(
            f"interpolation matrix rank is not 4 (sigma4/sigma5 = {ratio:.3g}); "
            "atoms may be linearly dependent (A1) or samples degenerate")
    kernel = Vt[-1]
    kernel = kernel / kernel[4]
    triple = PairTriple(norm_sq_i=-kernel[2], norm_sq_j=-kernel[1], inner=kernel[3] / 2)
    return (triple, ratio) if return_ratio else triple


def assemble_gram(triples, rtol: float = 1e-6) -> np.ndarray:
    """Fill the Gram matrix from an unlabelled collection of pair triples.

    Atoms are labelled by their squared norms in descending order, matching
    :class:`AtomSet`. ``triples`` may be a mapping (its values are used) or
    any iterable of :class:`PairTriple`; every unordered pair must appear
    exactly once.
    """
    items = list(triples.values()) if isinstance(triples, dict) else list(triples)
    if not items:
        raise ValueError("no triples given")
    norms = np.array([[t.norm_sq_i, t.norm_sq_j] for t in items])
    flat = np.sort(norms.ravel())[::-1]

    # cluster the 2 * C(p, 2) norm readings into p atoms
    scale = max(flat[0], np.finfo(float).tiny)
    centers: list[list[float]] = [[flat[0]]]
    for v in flat[1:]:
        if abs(centers[-1][-1] - v) <= rtol * scale:
            centers[-1].append(v)
        else:
            centers.append([v])
    p = len(centers)
    sizes = [len(c) for c in centers]
    if p * (p - 1) // 2 != len(items) or any(n != p - 1 for n in sizes):
        if p * (p - 1) // 2 < len(items):
            raise GenericityViolation(
                f"{len(items)} pairs but only {p} distinct norms within rtol={rtol}; "
                "atom norms are not distinct (A2)")
        raise InconsistentTriplesError(
            f"norm readings cluster into {p} atoms of sizes {sizes}; "
            f"expected {p - 1} readings per atom from {len(items)} pairs")
    values = np.array([np.mean(c) for c in centers])

    def label(v):
        k = int(np.argmin(np.abs(values - v)))
        if abs(values[k] - v) > rtol * scale:
            raise InconsistentTriplesError(f"norm {v} matches no atom")
        return k

    G = np.full((p, p), np.nan)
    G[np.diag_indices(p)] = values
    for t in items:
        a, b = label(t.norm_sq_i), label(t.norm_sq_j)
        if a == b:
            raise GenericityViolation("a pair reports two equal norms (A2)")
        if not np.isnan(G[a, b]):
            raise InconsistentTriplesError(f"pair ({a}, {b}) reported twice")
        G[a, b] = G[b, a] = t.inner
    return G


def factor_gram(G) -> np.ndarray:
    """Rank-3 factor ``A = D^{1/2} Q^T`` (3 x p) with ``A^T A`` closest to ``G``."""
    G = np.asarray(G, dtype=np.float64)
    G = 0.5 * (G + G.T)
    evals, evecs = np.linalg.eigh(G)
    top = np.argsort(evals)[::-1][:3]
    d = np.clip(evals[top], 0.0, None)
    Q = evecs[:, top]
    A = np.sqrt(d)[:, None] * Q.T
    if A.shape[0] < 3:
        A = np.vstack([A, np.zeros((3 - A.shape[0], A.shape[1]))])
    return A


def recover_weights(products) -> np.ndarray:
    """Complete the off-diagonal of ``w w^T`` to rank one and return ``w``.

    Each diagonal entry is the mean over all ordered ``(j, j')`` distinct
    from ``i`` and each other of ``P[i, j'] P[j, i] / P[j, j']``.
    The diagonal of ``products`` is ignored.
    """
    P = np.asarray(products, dtype=np.float64)
    p = P.shape[0]
    if p < 3:
        raise ValueError("p >= 3 required to complete the weight products")
    off = ~np.eye(p, dtype=bool)
    if not np.all(P[off] > 0):
        raise InconsistentProductsError("pair masses must be strictly positive")
    diag = np.empty(p)
    for i in range(p):
        others = [k for k in range(p) if k != i]
        vals = [P[i, jp] * P[j, i] / P[j, jp] for j, jp in permutations(others, 2)]
        diag[i] = np.mean(vals)
    if not np.all(diag > 0):
        raise InconsistentProductsError("completed diagonal is not positive")
    return np.sqrt(diag)


def recover_with_report(oracle, p: int, workers: int = 1, min_ratio: float = 1e6):
    """Run the full recovery against an oracle; also return per-pair diagnostics.

    ``oracle`` needs ``pairs()``, ``samples(key)`` and ``measure(key)``
    (see :class:`sparsekam.oracle.PointMassOracle`).
    """
    if p < 3:
        raise ValueError("p >= 3 required")
    keys = list(oracle.pairs())
    if len(keys) != p * (p - 1) // 2:
        raise ValueError(f"oracle exposes {len(keys)} pairs, expected {p * (p - 1) // 2}")

    def one(key):
        pts = oracle.samples(key)
        triple, ratio = interpolate_triple(pts, min_ratio=min_ratio, return_ratio=True)
        residual = float(np.max(np.abs(interpolation_matrix(pts) @ np.array(
            [triple.norm_sq_i * triple.norm_sq_j - triple.inner ** 2,
             -triple.norm_sq_j, -triple.norm_sq_i, 2 * triple.inner, 1.0]))))
        return triple, ratio, residual

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, keys))
    else:
        results = [one(k) for k in keys]

    triples = {k: r[0] for k, r in zip(keys, results)}
    G = assemble_gram(triples)
    A = factor_gram(G)

    # label each pair mass by the atoms its triple was matched to
    d = np.diag(G)
    P = np.zeros((p, p))
    for k in keys:
        t = triples[k]
        a = int(np.argmin(np.abs(d - t.norm_sq_i)))
        b = int(np.argmin(np.abs(d - t.norm_sq_j)))
        P[a, b] = P[b, a] = oracle.measure(k)
    w = recover_weights(P)

    report = {
        "p": p,
        "pairs": [
            {"key": int(k), "norm_sq_i": t.norm_sq_i, "norm_sq_j": t.norm_sq_j,
             "inner": t.inner, "sigma4_over_sigma5": float(r), "quartic_residual": res}
            for k, (t, r, res) in zip(keys, results)
        ],
        "min_sigma_ratio": float(min(r[1] for r in results)),
        "max_quartic_residual": float(max(r[2] for r in results)),
        "gram_tail_eigenvalue": float(np.sort(np.abs(np.linalg.eigvalsh(G)))[::-1][3])
        if p > 3 else 0.0,
    }
    return AtomSet(A.T, w), report


def recover(oracle, p: int, workers: int = 1) -> AtomSet:
    """Recover atoms and weights, up to one global orthogonal transform."""
    return recover_with_report(oracle, p, workers=workers)[0]
