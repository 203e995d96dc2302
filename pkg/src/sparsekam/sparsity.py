"""Multilevel 3-D Haar transform and the K-term sparsity projection.

Coefficient vectors are ordered by address ``(level, index)``: the scaling
coefficient first, then the detail coefficients from the coarsest level to
the finest, each level in C order of its position in the in-place (Mallat)
layout. Ties in magnitude are broken towards lower addresses.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = [
    "HaarBasis",
    "HAAR",
    "wavelet_forward",
    "wavelet_inverse",
    "top_k_mask",
    "project_sparsity",
]

_SQRT2 = np.sqrt(2.0)


def _check_size(M: int) -> int:
    if M < 1 or M & (M - 1):
        raise ValueError(f"grid size must be a power of two, got {M}")
    return M.bit_length() - 1


@lru_cache(maxsize=8)
def _address_order(M: int) -> np.ndarray:
    """Flat Mallat-layout positions listed in address order."""
    idx = np.arange(M)
    level = np.array([int(i).bit_length() for i in idx])
    li, lj, lk = np.meshgrid(level, level, level, indexing="ij")
    lev = np.maximum(np.maximum(li, lj), lk).ravel()
    return np.argsort(lev, kind="stable")


class HaarBasis:
    """Orthonormal multilevel Haar wavelets on an ``M^3`` grid, M a power of two.

    Any object with ``forward(volume) -> vector`` and
    ``inverse(vector, M) -> volume`` implementing an orthonormal basis can
    stand in for this one in :func:`project_sparsity`.
    """

    name = "haar"

    @staticmethod
    def forward(volume) -> np.ndarray:
        x = np.array(volume, dtype=np.float64)
        if x.ndim != 3 or len(set(x.shape)) != 1:
            raise ValueError(f"expected a cubic volume, got shape {x.shape}")
        M = x.shape[0]
        _check_size(M)
        n = M
        while n > 1:
            sub = x[:n, :n, :n]
            for axis in range(3):
                s = np.moveaxis(sub, axis, 0)
                even, odd = s[0::2].copy(), s[1::2].copy()
                s[: n // 2] = (even + odd) / _SQRT2
                s[n // 2:] = (even - odd) / _SQRT2
            n //= 2
        return x.ravel()[_address_order(M)]

    @staticmethod
    def inverse(coeffs, M: int | None = None) -> np.ndarray:
        c = np.asarray(coeffs, dtype=np.float64)
        if M is None:
            M = round(len(c) ** (1.0 / 3.0))
        _check_size(M)
        if c.shape != (M ** 3,):
            raise ValueError(f"expected {M ** 3} coefficients, got {c.shape}")
        flat = np.empty(M ** 3)
        flat[_address_order(M)] = c
        x = flat.reshape(M, M, M)
        n = 2
        while n <= M:
            sub = x[:n, :n, :n]
            for axis in (2, 1, 0):
                s = np.moveaxis(sub, axis, 0)
                lo, hi = s[: n // 2].copy(), s[n // 2:].copy()
                s[0::2] = (lo + hi) / _SQRT2
                s[1::2] = (lo - hi) / _SQRT2
            n *= 2
        return x


HAAR = HaarBasis()


def wavelet_forward(volume) -> np.ndarray:
    """Orthonormal Haar coefficients of ``volume`` in address order."""
    return HAAR.forward(volume)


def wavelet_inverse(coeffs, M: int | None = None) -> np.ndarray:
    return HAAR.inverse(coeffs, M)


def top_k_mask(coeffs: np.ndarray, K: int) -> np.ndarray:
    """Boolean mask of the ``K`` largest magnitudes, ties to lower addresses."""
    n = coeffs.shape[0]
    if not 0 <= K <= n:
        raise ValueError(f"K must lie in [0, {n}], got {K}")
    mask = np.zeros(n, dtype=bool)
    if K == 0:
        return mask
    if K == n:
        mask[:] = True
        return mask
    mags = np.abs(coeffs)
    thr = np.partition(mags, n - K)[n - K]
    mask[mags > thr] = True
    need = K - np.count_nonzero(mask)
    if need > 0:
        mask[np.flatnonzero(mags == thr)[:need]] = True
    return mask


def project_sparsity(volume, K: int, basis=HAAR) -> np.ndarray:
    """Keep the ``K`` largest wavelet coefficients of ``volume``, zero the rest."""
    volume = np.asarray(volume, dtype=np.float64)
    c = basis.forward(volume)
    return basis.inverse(np.where(top_k_mask(c, K), c, 0.0), volume.shape[0])
