"""Pixelated projection images, their second moments, and test volumes.

Images cover ``[-1, 1]^2`` with ``2^m x 2^m`` pixels of side
``tau = 1 / 2^(m-1)``; ``pixels[j1, j2]`` integrates over
``[j1 tau, (j1 + 1) tau] x [j2 tau, (j2 + 1) tau]`` for
``j1, j2 = -2^(m-1) .. 2^(m-1) - 1``. Each atom is blurred by the
unnormalised kernel ``exp(-(x^2 + y^2) / (2 kappa^2))`` (mass
``2 pi kappa^2``).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.special import erf

from .geometry import AtomSet, random_rotations

__all__ = [
    "ProjectionImage",
    "MomentTensor",
    "pixel_size",
    "render_image",
    "render_clean_images",
    "MomentAccumulator",
    "empirical_second_moment",
    "population_second_moment_pixelated",
    "moment_error",
    "shepp_logan_parameters",
    "shepp_logan_phantom",
    "gaussian_blob_phantom",
    "random_blobs",
]


def pixel_size(m: int) -> float:
    return 1.0 / 2 ** (m - 1)


@dataclass(frozen=True)
class ProjectionImage:
    m: int
    pixels: np.ndarray
    kappa: float
    sigma: float

    @property
    def tau(self) -> float:
        return pixel_size(self.m)


@dataclass(frozen=True)
class MomentTensor:
    """Second moment over pixel pairs, ``values[j1, j2, j3, j4]``.

    ``stderr`` is set for Monte-Carlo estimates only.
    """

    m: int
    values: np.ndarray
    stderr: np.ndarray | None = None

    def as_matrix(self) -> np.ndarray:
        P = 4 ** self.m
        return self.values.reshape(P, P)


def _axis_integrals(centers: np.ndarray, m: int, kappa: float) -> np.ndarray:
    """Integral of the 1-D kernel over every pixel column, shape ``centers.shape + (2^m,)``."""
    tau = pixel_size(m)
    half = 2 ** (m - 1)
    edges = np.arange(-half, half + 1) * tau
    e = erf((edges - centers[..., None]) / (np.sqrt(2) * kappa))
    return kappa * np.sqrt(np.pi / 2) * np.diff(e, axis=-1)


def render_clean_images(atoms: AtomSet, rotations: np.ndarray, m: int,
                        kappa: float) -> np.ndarray:
    """Noiseless images for a stack of rotations, shape ``(n, 2^m, 2^m)``."""
    if m < 1 or kappa <= 0:
        raise ValueError("need m >= 1 and kappa > 0")
    R = np.asarray(rotations).reshape(-1, 3, 3)
    proj = np.einsum("nij,pj->npi", R[:, :2, :], atoms.positions)
    Ix = _axis_integrals(proj[..., 0], m, kappa)
    Iy = _axis_integrals(proj[..., 1], m, kappa)
    return np.einsum("p,npi,npj->nij", atoms.weights, Ix, Iy)


def render_image(atoms: AtomSet, rotation: np.ndarray, m: int, kappa: float,
                 sigma: float, rng: np.random.Generator) -> ProjectionImage:
    """One blurred, pixel-integrated projection plus iid Gaussian noise."""
    if sigma < 0:
        raise ValueError("sigma >= 0 required")
    pixels = render_clean_images(atoms, rotation, m, kappa)[0]
    if sigma > 0:
        pixels = pixels + sigma * rng.standard_normal(pixels.shape)
    return ProjectionImage(m, pixels, kappa, sigma)


class MomentAccumulator:
    """Running sum of pixel-pair products, fed in batches in a fixed order."""

    def __init__(self, m: int):
        self.m = m
        P = 4 ** m
        self._sum = np.zeros((P, P))
        self._sq = None
        self.count = 0

    def add(self, images, track_variance: bool = False) -> None:
        X = np.asarray(images, dtype=np.float64).reshape(-1, 4 ** self.m)
        self._sum += X.T @ X
        if track_variance:
            if self._sq is None:
                self._sq = np.zeros_like(self._sum)
            X2 = X * X
            self._sq += X2.T @ X2
        self.count += X.shape[0]

    def result(self, sigma: float = 0.0) -> MomentTensor:
        if self.count == 0:
            raise ValueError("no images accumulated")
        mean = self._sum / self.count
        mean = 0.5 * (mean + mean.T)
        mean[np.diag_indices_from(mean)] -= sigma ** 2
        stderr = None
        if self._sq is not None:
            second = self._sq / self.count
            var = np.clip(second - (self._sum / self.count) ** 2, 0.0, None)
            stderr = np.sqrt(var / self.count)
        P = 2 ** self.m
        shape = (P, P, P, P)
        return MomentTensor(self.m, mean.reshape(shape),
                            None if stderr is None else stderr.reshape(shape))


def empirical_second_moment(images, sigma: float) -> MomentTensor:
    """Average pixel-pair products minus the noise bias ``sigma^2`` on equal pixels."""
    images = list(images)
    if not images:
        raise ValueError("empty image batch")
    m = images[0].m
    if any(im.m != m for im in images):
        raise ValueError("all images must share the same resolution m")
    acc = MomentAccumulator(m)
    acc.add(np.stack([im.pixels for im in images]))
    return acc.result(sigma)


def population_second_moment_pixelated(atoms: AtomSet, m: int, kappa: float, n_mc: int,
                                       rng: np.random.Generator,
                                       batch: int = 2048) -> MomentTensor:
    """Monte-Carlo average of clean pixel-pair products over Haar rotations."""
    if n_mc < 1:
        raise ValueError("n_mc >= 1 required")
    acc = MomentAccumulator(m)
    done = 0
    while done < n_mc:
        k = min(batch, n_mc - done)
        acc.add(render_clean_images(atoms, random_rotations(rng, k), m, kappa),
                track_variance=True)
        done += k
    return acc.result(0.0)


def moment_error(estimate: MomentTensor, reference: MomentTensor) -> float:
    """Frobenius norm of the difference of two moment tensors."""
    return float(np.linalg.norm(estimate.values - reference.values))


def shepp_logan_parameters() -> np.ndarray:
    """Ellipsoid table ``(10, 10)``: A, a, b, c, x0, y0, z0, phi, theta, psi."""
    text = resources.files("sparsekam.data").joinpath("shepp_logan_3d.txt").read_text()
    return np.loadtxt(text.splitlines())


def _euler_zxz(phi: float, theta: float, psi: float) -> np.ndarray:
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    cpsi, spsi = np.cos(psi), np.sin(psi)
    return np.array([
        [cpsi * cphi - cth * sphi * spsi, cpsi * sphi + cth * cphi * spsi, spsi * sth],
        [-spsi * cphi - cth * sphi * cpsi, -spsi * sphi + cth * cphi * cpsi, cpsi * sth],
        [sth * sphi, -sth * cphi, cth],
    ])


def _grid(M: int, scale: float) -> np.ndarray:
    """Voxel coordinates ``(i - M//2) * scale``, shape ``(M, M, M, 3)``."""
    x = (np.arange(M) - M // 2) * scale
    return np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)


def shepp_logan_phantom(M: int) -> np.ndarray:
    """3-D modified Shepp-Logan phantom on ``M^3`` voxels spanning ``[-1, 1]^3``.

    Voxel ``i`` sits at ``(i - M//2) / (M/2)``, so the origin is a voxel
    centre. A point is inside an ellipsoid when its rotated coordinates,
    shifted by the centre and divided by the semi-axes, have norm <= 1.
    """
    if M < 8:
        raise ValueError("M >= 8 required")
    pts = _grid(M, 2.0 / M).reshape(-1, 3)
    vol = np.zeros(M ** 3)
    for A, a, b, c, x0, y0, z0, phi, theta, psi in shepp_logan_parameters():
        rot = _euler_zxz(*np.deg2rad([phi, theta, psi]))
        q = (pts @ rot.T - [x0, y0, z0]) / [a, b, c]
        vol[np.sum(q * q, axis=1) <= 1.0] += A
    return vol.reshape(M, M, M)


def gaussian_blob_phantom(M: int, blobs) -> np.ndarray:
    """Sum of isotropic Gaussians; each blob is ``(center, std, amplitude)`` in voxels.

    Centres are relative to the grid centre voxel ``M // 2``.
    """
    if M < 8:
        raise ValueError("M >= 8 required")
    x = np.arange(M) - M // 2
    vol = np.zeros((M, M, M))
    for center, std, amp in blobs:
        cx, cy, cz = center
        gx = np.exp(-(x - cx) ** 2 / (2 * std ** 2))
        gy = np.exp(-(x - cy) ** 2 / (2 * std ** 2))
        gz = np.exp(-(x - cz) ** 2 / (2 * std ** 2))
        vol += amp * np.einsum("i,j,k->ijk", gx, gy, gz)
    return vol


def random_blobs(rng: np.random.Generator, M: int, count: int = 8,
                 radius_fraction: float = 0.125, std_range=(2.0, 3.0),
                 amp_range=(0.5, 1.5)) -> list:
    """Blob list with centres uniform in a ball of radius ``radius_fraction * M``."""
    d = rng.standard_normal((count, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius_fraction * M * rng.uniform(size=count) ** (1 / 3)
    centers = d * r[:, None]
    stds = rng.uniform(*std_range, size=count)
    amps = rng.uniform(*amp_range, size=count)
    return [(tuple(c), float(s), float(a)) for c, s, a in zip(centers, stds, amps)]
