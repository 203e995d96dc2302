"""Spherical-Bessel / spherical-harmonic expansion of volumes on a cubic grid.

The Fourier transform of a real volume is expanded as

    F(k) = sum_{l, m, s} i^l a_{lms} j_{ls}(|k|) Y_lm(k / |k|)

with real spherical harmonics ``Y_lm`` (Condon-Shortley phase) and real
coefficients ``a_{lms}``. The ``i^l`` factor makes every expansion
Hermitian, hence every synthesised volume real, and it leaves the per-degree
ambiguity of the second moment a real orthogonal group O(2l+1).

Coefficients for degree ``l`` are stored as a real ``(S_l, 2l+1)`` matrix
with column ``m + l``.

Frequencies are in cycles per voxel; the volume centre is voxel ``M // 2``
along every axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, special

__all__ = [
    "BasisPlan",
    "bessel_zeros",
    "truncation",
    "precompute_maps",
    "expand",
    "synthesize",
    "real_sph_harm",
    "real_wigner",
    "radial_function",
    "random_coefficients",
]


def bessel_zeros(ell: int, count: int) -> np.ndarray:
    """First ``count`` positive zeros of the spherical Bessel function ``j_ell``.

    Sign changes are bracketed on a grid finer than the zero spacing (which
    is always larger than pi) and each root is polished with Brent's method.
    """
    if ell < 0 or count < 1:
        raise ValueError("need ell >= 0 and count >= 1")
    step = 0.25
    upper = ell + (count + 2) * np.pi + 10.0
    while True:
        x = np.arange(step, upper + step, step)
        f = special.spherical_jn(ell, x)
        idx = np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]
        if len(idx) >= count:
            break
        upper *= 1.5
    jn = lambda t: special.spherical_jn(ell, t)
    roots = [optimize.brentq(jn, x[i], x[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps,
                             maxiter=200)
             for i in idx[:count]]
    return np.array(roots)


def _zeros_below(ell: int, bound: float) -> np.ndarray:
    count = max(4, int(bound / np.pi) + 4)
    z = bessel_zeros(ell, count)
    while z[-1] <= bound:
        count *= 2
        z = bessel_zeros(ell, count)
    return z[z <= bound]


def truncation(c: float, R_support: float, L_request: int) -> list[int]:
    """Radial cutoffs ``S_0, ..., S_L`` from the Nyquist criterion.

    ``S_l`` is the largest ``s`` with ``z_{l, s+1} <= 2 pi c R_support``,
    where ``z_{l, s}`` is the ``s``-th positive zero of ``j_l``. The list
    stops before the first degree with ``S_l < 2l + 1``.
    """
    if c <= 0 or R_support <= 0:
        raise ValueError("need c > 0 and R_support > 0")
    bound = 2 * np.pi * c * R_support
    S = []
    for ell in range(L_request + 1):
        s_ell = max(len(_zeros_below(ell, bound)) - 1, 0)
        if s_ell < 2 * ell + 1:
            break
        S.append(s_ell)
    return S


def real_sph_harm(L: int, theta, phi) -> np.ndarray:
    """Real orthonormal spherical harmonics up to degree ``L``.

    ``theta`` is the polar angle, ``phi`` the azimuth. Column ``l*l + l + m``
    holds ``Y_lm``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    out = np.empty(theta.shape + ((L + 1) ** 2,))
    for ell in range(L + 1):
        base = ell * ell + ell
        out[..., base] = special.sph_harm_y(ell, 0, theta, phi).real
        for m in range(1, ell + 1):
            y = special.sph_harm_y(ell, m, theta, phi)
            sign = -1.0 if m % 2 else 1.0
            out[..., base + m] = np.sqrt(2) * sign * y.real
            out[..., base - m] = np.sqrt(2) * sign * y.imag
    return out


def real_wigner(ell: int, rotation: np.ndarray, rng=None) -> np.ndarray:
    """Matrix ``W`` with ``Y_l(R^T x) = W Y_l(x)`` for real harmonics of degree ``ell``.

    Rotating a volume by ``R`` maps its degree-``ell`` coefficients ``A`` to
    ``A @ W``. Fitted from random directions, which is exact up to rounding
    because degree-``ell`` harmonics span an invariant subspace.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    n = 6 * (2 * ell + 1) + 10
    x = rng.standard_normal((n, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = x @ np.asarray(rotation)  # rows are R^T x
    sl = slice(ell * ell, (ell + 1) ** 2)
    Yx = real_sph_harm(ell, np.arccos(np.clip(x[:, 2], -1, 1)), np.arctan2(x[:, 1], x[:, 0]))[:, sl]
    Yy = real_sph_harm(ell, np.arccos(np.clip(y[:, 2], -1, 1)), np.arctan2(y[:, 1], y[:, 0]))[:, sl]
    Wt, *_ = np.linalg.lstsq(Yx, Yy, rcond=None)
    return Wt.T


def radial_function(ell: int, zeros: np.ndarray, c: float, k) -> np.ndarray:
    """Normalised radial functions ``j_ell(z_s k / c) / (c sqrt(pi) |j_{ell+1}(z_s)|)``.

    Returns shape ``k.shape + (len(zeros),)``.
    """
    k = np.asarray(k, dtype=np.float64)
    norm = c * np.sqrt(np.pi) * np.abs(special.spherical_jn(ell + 1, zeros))
    return special.spherical_jn(ell, np.multiply.outer(k, zeros) / c) / norm


@dataclass
class BasisPlan:
    """Precomputed evaluation and projection maps for one grid and bandlimit.

    Only one half of the Hermitian-symmetric Fourier ball is stored; the
    other half is implied by conjugation. Least-squares weights of 2 on the
    stored half (1 at the origin) make the fit equivalent to one over the
    full ball.
    """

    M: int
    c: float
    R_support: float
    L: int
    S: list[int]
    zeros: list[np.ndarray] = field(repr=False)
    half_index: tuple = field(repr=False)
    mirror_index: tuple = field(repr=False)
    weights: np.ndarray = field(repr=False)
    radial: list[np.ndarray] = field(repr=False)
    harmonics: np.ndarray = field(repr=False)
    cholesky: dict = field(repr=False)
    ridge: float = 1e-14

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [(s, 2 * ell + 1) for ell, s in enumerate(self.S)]

    @property
    def n_coefficients(self) -> int:
        return sum(s * (2 * ell + 1) for ell, s in enumerate(self.S))

    def degrees(self, parity: int) -> list[int]:
        return [ell for ell in range(self.L + 1) if ell % 2 == parity]

    def zero_coefficients(self) -> list[np.ndarray]:
        return [np.zeros(shape) for shape in self.shapes]

    def check(self, coeffs) -> None:
        if len(coeffs) != self.L + 1:
            raise ValueError(f"expected {self.L + 1} coefficient blocks, got {len(coeffs)}")
        for ell, (A, shape) in enumerate(zip(coeffs, self.shapes)):
            if np.shape(A) != shape:
                raise ValueError(f"degree {ell}: expected shape {shape}, got {np.shape(A)}")


def _phase_sign(ell: int) -> float:
    # i^l = sign * 1 (even l, real part) or sign * i (odd l, imaginary part)
    return -1.0 if (ell // 2) % 2 else 1.0


def _fourier_ball(M: int, c: float):
    idx = np.fft.fftfreq(M, d=1.0 / M).astype(int)
    kx, ky, kz = np.meshgrid(idx, idx, idx, indexing="ij")
    r = np.sqrt(kx ** 2 + ky ** 2 + kz ** 2) / M
    # drop the unpaired -M/2 frequencies so the ball is symmetric under k -> -k
    inside = (r <= c) & (kx != -M // 2) & (ky != -M // 2) & (kz != -M // 2)
    half = inside & ((kz > 0) | ((kz == 0) & (ky > 0)) | ((kz == 0) & (ky == 0) & (kx >= 0)))
    ii, jj, ll = np.nonzero(half)
    mi, mj, ml = (-ii) % M, (-jj) % M, (-ll) % M
    fx, fy, fz = kx[ii, jj, ll] / M, ky[ii, jj, ll] / M, kz[ii, jj, ll] / M
    return (ii, jj, ll), (mi, mj, ml), np.stack([fx, fy, fz], axis=1)


def _design_block(plan: BasisPlan, parity: int, rows: slice) -> np.ndarray:
    cols = []
    for ell in plan.degrees(parity):
        J = plan.radial[ell][rows]
        Y = plan.harmonics[rows, ell * ell:(ell + 1) ** 2]
        block = _phase_sign(ell) * (J[:, :, None] * Y[:, None, :])
        cols.append(block.reshape(J.shape[0], -1))
    return np.concatenate(cols, axis=1)


def precompute_maps(M: int, c: float = 0.5, L: int = 6, R_support: float = 32.0,
                    ridge: float = 1e-14, chunk: int = 4096) -> BasisPlan:
    """Build the expansion (least-squares) and synthesis maps for an ``M^3`` grid.

    ``L`` is reduced to the largest degree for which every ``S_l >= 2l + 1``.
    ``ridge`` is relative to the mean diagonal of the normal matrix and only
    guards the Cholesky factorisation; :func:`expand` refines it away.
    """
    if M < 8:
        raise ValueError("M >= 8 required")
    S = truncation(c, R_support, L)
    if not S:
        raise ValueError("no usable degree for this bandlimit and support")
    L = len(S) - 1
    half_index, mirror_index, freqs = _fourier_ball(M, c)
    r = np.linalg.norm(freqs, axis=1)
    safe = np.where(r > 0, r, 1.0)
    theta = np.where(r > 0, np.arccos(np.clip(freqs[:, 2] / safe, -1, 1)), 0.0)
    phi = np.arctan2(freqs[:, 1], freqs[:, 0])
    harmonics = real_sph_harm(L, theta, phi)
    zeros = [bessel_zeros(ell, S[ell]) for ell in range(L + 1)]
    radial = [radial_function(ell, zeros[ell], c, r) for ell in range(L + 1)]
    weights = np.where(r > 0, 2.0, 1.0)

    plan = BasisPlan(M=M, c=c, R_support=R_support, L=L, S=S, zeros=zeros,
                     half_index=half_index, mirror_index=mirror_index, weights=weights,
                     radial=radial, harmonics=harmonics, cholesky={}, ridge=ridge)
    n = len(r)
    for parity in (0, 1):
        degs = plan.degrees(parity)
        if not degs:
            continue
        size = sum(S[ell] * (2 * ell + 1) for ell in degs)
        N = np.zeros((size, size))
        for start in range(0, n, chunk):
            rows = slice(start, min(start + chunk, n))
            G = _design_block(plan, parity, rows)
            N += G.T @ (weights[rows, None] * G)
        N[np.diag_indices(size)] += ridge * np.trace(N) / size
        plan.cholesky[parity] = linalg.cho_factor(N, lower=True)
    return plan


def _half_spectrum(plan: BasisPlan, coeffs) -> np.ndarray:
    values = np.zeros(len(plan.weights), dtype=np.complex128)
    values.real = _parity_spectrum(plan, 0, coeffs)
    if plan.L >= 1:
        values.imag = _parity_spectrum(plan, 1, coeffs)
    return values


def synthesize(coeffs, plan: BasisPlan, return_residual: bool = False):
    """Real volume whose Fourier transform is the given expansion.

    The imaginary part of the inverse FFT is discarded after checking that
    it is below ``1e-6`` of the volume maximum.
    """
    plan.check(coeffs)
    M = plan.M
    values = _half_spectrum(plan, [np.asarray(A, dtype=np.float64) for A in coeffs])
    F = np.zeros((M, M, M), dtype=np.complex128)
    F[plan.mirror_index] = np.conj(values)
    F[plan.half_index] = values
    vol = np.fft.fftshift(np.fft.ifftn(F))
    peak = np.max(np.abs(vol.real))
    residual = float(np.max(np.abs(vol.imag)) / peak) if peak > 0 else 0.0
    if residual > 1e-6:
        raise FloatingPointError(f"synthesised volume is not real (residual {residual:.3g})")
    return (vol.real, residual) if return_residual else vol.real


def _parity_spectrum(plan: BasisPlan, parity: int, coeffs) -> np.ndarray:
    part = np.zeros(len(plan.weights))
    for ell in plan.degrees(parity):
        Y = plan.harmonics[:, ell * ell:(ell + 1) ** 2]
        part += _phase_sign(ell) * np.sum((plan.radial[ell] @ coeffs[ell]) * Y, axis=1)
    return part


def _normal_rhs(plan: BasisPlan, parity: int, target: np.ndarray) -> np.ndarray:
    target = plan.weights * target
    rhs = []
    for ell in plan.degrees(parity):
        Y = plan.harmonics[:, ell * ell:(ell + 1) ** 2]
        rhs.append(_phase_sign(ell) * (plan.radial[ell].T @ (target[:, None] * Y)).ravel())
    return np.concatenate(rhs)


def expand(volume, plan: BasisPlan, refine: int = 2) -> list[np.ndarray]:
    """Least-squares coefficients of ``volume`` in the plan's basis.

    The fit is exact in real space: by Parseval, least squares over the
    Fourier ball is the orthogonal projection onto the span of the basis
    volumes. ``refine`` rounds of iterative refinement on the residual
    remove the error of solving through the normal equations.
    """
    volume = np.asarray(volume, dtype=np.float64)
    if volume.shape != (plan.M,) * 3:
        raise ValueError(f"volume shape {volume.shape} does not match plan M={plan.M}")
    F = np.fft.fftn(np.fft.ifftshift(volume))[plan.half_index]
    out: list[np.ndarray | None] = [None] * (plan.L + 1)
    for parity in (0, 1):
        degs = plan.degrees(parity)
        if not degs:
            continue
        target = F.imag if parity else F.real
        sol = np.zeros(sum(plan.S[ell] * (2 * ell + 1) for ell in degs))
        blocks = {}
        residual = target
        for _ in range(refine + 1):
            sol = sol + linalg.cho_solve(plan.cholesky[parity], _normal_rhs(plan, parity, residual))
            offset = 0
            for ell in degs:
                size = plan.S[ell] * (2 * ell + 1)
                blocks[ell] = sol[offset:offset + size].reshape(plan.S[ell], 2 * ell + 1)
                offset += size
            residual = target - _parity_spectrum(plan, parity, blocks)
        for ell in degs:
            out[ell] = blocks[ell]
    return out


def random_coefficients(plan: BasisPlan, rng: np.random.Generator) -> list[np.ndarray]:
    return [rng.standard_normal(shape) for shape in plan.shapes]
