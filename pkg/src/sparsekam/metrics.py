"""Fourier shell correlation and resolution estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["FSCCurve", "fsc", "crossing_shell", "resolution", "write_fsc_csv"]


@dataclass(frozen=True)
class FSCCurve:
    """Correlation per integer Fourier shell ``k = 0 .. M/2``.

    ``empty`` flags shells where either volume has no energy; their value
    is recorded as 0. ``counts`` is the number of Fourier samples per shell.
    """

    shells: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    empty: np.ndarray
    M: int
    voxel_size: float = 1.0

    @property
    def frequency(self) -> np.ndarray:
        """Shell frequency in 1/Angstrom."""
        return self.shells / (self.M * self.voxel_size)


def _shell_index(M: int) -> np.ndarray:
    idx = np.fft.fftfreq(M, d=1.0 / M)
    kx, ky, kz = np.meshgrid(idx, idx, idx, indexing="ij")
    shell = np.rint(np.sqrt(kx ** 2 + ky ** 2 + kz ** 2)).astype(int)
    # unpaired -M/2 planes would break the conjugate symmetry of each shell
    shell[(kx == -M // 2) | (ky == -M // 2) | (kz == -M // 2)] = -1
    return shell


def fsc(vol1, vol2, voxel_size: float = 1.0) -> FSCCurve:
    """Fourier shell correlation of two equally sized cubic volumes.

    Shells are nearest-integer radii in grid-frequency units, up to ``M/2``.
    """
    v1 = np.asarray(vol1, dtype=np.float64)
    v2 = np.asarray(vol2, dtype=np.float64)
    if v1.shape != v2.shape or v1.ndim != 3 or len(set(v1.shape)) != 1:
        raise ValueError(f"need two equal cubic volumes, got {v1.shape} and {v2.shape}")
    M = v1.shape[0]
    F1, F2 = np.fft.fftn(v1), np.fft.fftn(v2)
    shell = _shell_index(M)
    keep = (shell >= 0) & (shell <= M // 2)
    s = shell[keep]
    n_shells = M // 2 + 1
    cross = np.bincount(s, weights=(F1 * np.conj(F2))[keep].real, minlength=n_shells)
    cross_im = np.bincount(s, weights=(F1 * np.conj(F2))[keep].imag, minlength=n_shells)
    p1 = np.bincount(s, weights=np.abs(F1[keep]) ** 2, minlength=n_shells)
    p2 = np.bincount(s, weights=np.abs(F2[keep]) ** 2, minlength=n_shells)
    counts = np.bincount(s, minlength=n_shells)
    denom = np.sqrt(p1 * p2)
    scale = np.max(denom) if np.max(denom) > 0 else 1.0
    empty = denom <= 1e-300
    if np.any(np.abs(cross_im[~empty]) > 1e-9 * np.maximum(denom[~empty], 1e-12 * scale)):
        raise FloatingPointError("shell cross-correlation has a non-negligible imaginary part")
    values = np.zeros(n_shells)
    values[~empty] = cross[~empty] / denom[~empty]
    return FSCCurve(np.arange(n_shells), np.clip(values, -1.0, 1.0), counts, empty, M,
                    float(voxel_size))


def crossing_shell(curve: FSCCurve, cutoff: float = 0.5) -> float | None:
    """Fractional shell where the curve first drops below ``cutoff``, or None."""
    if not 0 < cutoff < 1:
        raise ValueError("cutoff must lie in (0, 1)")
    v = curve.values
    if len(v) < 2:
        raise ValueError("FSC curve is empty")
    if v[0] < cutoff:
        return 0.0
    for k in range(1, len(v)):
        if v[k] < cutoff:
            return (k - 1) + (v[k - 1] - cutoff) / (v[k - 1] - v[k])
    return None


def resolution(curve: FSCCurve, cutoff: float = 0.5) -> float:
    """Resolution in Angstrom, ``voxel_size * M / k*`` at the first crossing.

    Without a crossing the Nyquist value ``2 * voxel_size`` is returned;
    use :func:`crossing_shell` to tell the two cases apart.
    """
    k = crossing_shell(curve, cutoff)
    if k is None:
        return 2.0 * curve.voxel_size
    if k <= 0:
        return np.inf
    return curve.voxel_size * curve.M / k


def write_fsc_csv(path, curve: FSCCurve) -> None:
    with open(path, "w") as fh:
        fh.write("k,frequency_per_angstrom,frequency_per_voxel,fsc\n")
        for k, f, v in zip(curve.shells, curve.frequency, curve.values):
            fh.write(f"{k},{f:.10g},{k / curve.M:.10g},{v:.12g}\n")
