"""Kam matrices, orthogonal scrambling and the moment-constraint projection."""

from __future__ import annotations

import numpy as np
from scipy.stats import ortho_group

from .basis import BasisPlan, expand, synthesize

__all__ = [
    "compute_cl",
    "haar_orthogonal",
    "scramble",
    "factor_cl",
    "procrustes_factor",
    "project_coefficients",
    "project_moment",
]


def compute_cl(coeffs) -> list[np.ndarray]:
    """Per-degree Gram matrices ``C_l = A_l A_l^T``."""
    out = []
    for A in coeffs:
        A = np.asarray(A, dtype=np.float64)
        C = A @ A.T
        out.append(0.5 * (C + C.T))
    return out


def haar_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed element of O(n) (both determinants)."""
    if n == 1:
        return np.array([[1.0 if rng.uniform() < 0.5 else -1.0]])
    return ortho_group.rvs(n, random_state=rng)


def scramble(coeffs, rng: np.random.Generator, return_orthogonal: bool = False):
    """Right-multiply every ``A_l`` by an independent Haar ``O_l`` in O(2l+1)."""
    scrambled, mats = [], []
    for ell, A in enumerate(coeffs):
        A = np.asarray(A, dtype=np.float64)
        if A.shape[0] < 2 * ell + 1:
            raise ValueError(f"degree {ell}: S_l = {A.shape[0]} < 2l+1")
        O = haar_orthogonal(2 * ell + 1, rng)
        mats.append(O)
        scrambled.append(A @ O)
    return (scrambled, mats) if return_orthogonal else scrambled


def factor_cl(C: np.ndarray, ell: int, clamp: float = 1e-12) -> np.ndarray:
    """A fixed ``S x (2l+1)`` factor ``F`` with ``F F^T = C``.

    Cholesky when ``C`` is square in the right size and positive definite;
    otherwise the top ``2l+1`` eigenpairs, with eigenvalues below
    ``clamp * max_eigenvalue`` set to zero.
    """
    C = 0.5 * (np.asarray(C, dtype=np.float64) + np.asarray(C).T)
    S, n = C.shape[0], 2 * ell + 1
    if S <= n:
        try:
            F = np.linalg.cholesky(C)
            return np.hstack([F, np.zeros((S, n - S))])
        except np.linalg.LinAlgError:
            pass
    evals, evecs = np.linalg.eigh(C)
    order = np.argsort(evals)[::-1][:n]
    d = evals[order]
    top = d[0] if len(d) and d[0] > 0 else 0.0
    d = np.where(d > clamp * top, d, 0.0)
    F = evecs[:, order] * np.sqrt(d)
    if F.shape[1] < n:
        F = np.hstack([F, np.zeros((S, n - F.shape[1]))])
    return F


def procrustes_factor(A: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Closest point to ``A`` (Frobenius) among ``{F O : O orthogonal}``.

    When ``F^T A`` is singular the minimiser is not unique and any SVD
    gives one of them.
    """
    U, _, Vt = np.linalg.svd(F.T @ A)
    return F @ (U @ Vt)


def project_coefficients(coeffs, factors) -> list[np.ndarray]:
    return [procrustes_factor(np.asarray(A, dtype=np.float64), F)
            for A, F in zip(coeffs, factors)]


def project_moment(volume, C, plan: BasisPlan, factors=None) -> np.ndarray:
    """Nearest volume (per-degree Frobenius distance) whose Kam matrices equal ``C``.

    ``factors`` may hold precomputed :func:`factor_cl` outputs to avoid
    refactoring ``C`` on every call.
    """
    if factors is None:
        factors = [factor_cl(Cl, ell) for ell, Cl in enumerate(C)]
    if len(factors) != plan.L + 1:
        raise ValueError(f"expected {plan.L + 1} Kam matrices, got {len(factors)}")
    return synthesize(project_coefficients(expand(volume, plan), factors), plan)
