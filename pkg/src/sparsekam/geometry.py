"""Point-mass molecules, Haar rotations, tomographic projection and alignment."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

__all__ = [
    "AtomSet",
    "DegenerateAlignmentWarning",
    "GenericityReport",
    "random_rotation",
    "random_rotations",
    "project",
    "check_genericity",
    "align",
    "random_atoms",
    "write_atoms",
    "read_atoms",
]


class DegenerateAlignmentWarning(UserWarning):
    """Raised (as a warning) when a point cloud spans fewer than 3 dimensions."""


@dataclass(frozen=True)
class AtomSet:
    """Weighted point masses ``sum_i w_i delta_{a_i}``.

    Positions are re-ordered on construction so that their norms are
    non-increasing. Equal norms are allowed here; they are only reported
    by :func:`check_genericity`.
    """

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1, 3)
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if pos.shape[0] != w.shape[0]:
            raise ValueError(
                f"{pos.shape[0]} positions but {w.shape[0]} weights")
        if np.any(~(w > 0)):
            raise ValueError("all weights must be strictly positive")
        order = np.argsort(-np.linalg.norm(pos, axis=1), kind="stable")
        pos, w = pos[order], w[order]
        pos.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @property
    def p(self) -> int:
        return self.positions.shape[0]

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.positions, axis=1)

    def gram(self) -> np.ndarray:
        return self.positions @ self.positions.T

    def transformed(self, O: np.ndarray) -> "AtomSet":
        return AtomSet(self.positions @ np.asarray(O).T, self.weights)


def random_rotations(rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` Haar-distributed rotations, shape ``(n, 3, 3)``.

    A standard normal 4-vector normalised to the unit sphere is a uniform
    unit quaternion, and the double cover S^3 -> SO(3) pushes the uniform
    measure forward to the Haar measure.
    """
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    R = np.empty((n, 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - z * w)
    R[:, 0, 2] = 2 * (x * z + y * w)
    R[:, 1, 0] = 2 * (x * y + z * w)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - x * w)
    R[:, 2, 0] = 2 * (x * z - y * w)
    R[:, 2, 1] = 2 * (y * z + x * w)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """One Haar-uniform rotation matrix."""
    return random_rotations(rng, 1)[0]


def project(rotation: np.ndarray, point: np.ndarray) -> np.ndarray:
    """First two coordinates of ``rotation @ point``.

    Broadcasts over leading axes of both arguments, so a stack of
    rotations can be applied to a stack of points.
    """
    rotated = np.einsum("...ij,...j->...i", rotation, point)
    return rotated[..., :2]


@dataclass(frozen=True)
class GenericityReport:
    a1_ok: bool
    a2_ok: bool
    min_angle: float
    min_norm_gap: float


def check_genericity(atoms: AtomSet, tol: float = 1e-6) -> GenericityReport:
    """Check pairwise linear independence (A1) and distinct norms (A2).

    ``min_angle`` is the smallest sine of the angle between two positions;
    ``min_norm_gap`` the smallest difference between two norms. A zero
    position is linearly dependent with everything.
    """
    pos = atoms.positions
    norms = atoms.norms
    min_sine = np.inf
    min_gap = np.inf
    for i, j in combinations(range(atoms.p), 2):
        denom = norms[i] * norms[j]
        if denom == 0.0:
            sine = 0.0
        else:
            sine = np.linalg.norm(np.cross(pos[i], pos[j])) / denom
        min_sine = min(min_sine, sine)
        min_gap = min(min_gap, abs(norms[i] - norms[j]))
    return GenericityReport(
        a1_ok=bool(min_sine > tol),
        a2_ok=bool(min_gap > tol),
        min_angle=float(min_sine),
        min_norm_gap=float(min_gap),
    )


def align(source, target):
    """Orthogonal (rotation or reflection) map taking ``source`` onto ``target``.

    Parameters
    ----------
    source, target : (n, 3) array_like
        Corresponding points, n >= 3.

    Returns
    -------
    O : (3, 3) ndarray
        Orthogonal matrix minimising ``sum_i ||O source_i - target_i||^2``.
    rmsd : float
        Root-mean-square residual after applying ``O``.
    """
    X = np.asarray(source, dtype=np.float64)
    Y = np.asarray(target, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != 3:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    if X.shape[0] < 3:
        raise ValueError("need at least 3 points to align")
    if np.linalg.matrix_rank(X) < 3 or np.linalg.matrix_rank(Y) < 3:
        warnings.warn("point cloud has rank < 3; alignment is not unique",
                      DegenerateAlignmentWarning, stacklevel=2)
    U, _, Vt = np.linalg.svd(X.T @ Y)
    O = (U @ Vt).T
    resid = X @ O.T - Y
    rmsd = float(np.sqrt(np.mean(np.sum(resid ** 2, axis=1))))
    return O, rmsd


def random_atoms(rng: np.random.Generator, p: int, radius: float = 1.0,
                 weight_range=(0.5, 2.0)) -> AtomSet:
    """Uniform positions in a ball and uniform weights in ``weight_range``."""
    direction = rng.standard_normal((p, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.uniform(size=p) ** (1.0 / 3.0)
    weights = rng.uniform(*weight_range, size=p)
    return AtomSet(direction * r[:, None], weights)


def write_atoms(path, atoms: AtomSet, comment: str | None = None) -> None:
    lines = []
    if comment:
        lines.extend(f"# {line}" for line in comment.splitlines())
    lines.append("# x y z w")
    for (x, y, z), w in zip(atoms.positions, atoms.weights):
        lines.append(f"{x:.17g} {y:.17g} {z:.17g} {w:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_atoms(path) -> AtomSet:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 4:
                raise ValueError(
                    f"{path}:{lineno}: expected 4 columns (x y z w), got {len(fields)}")
            rows.append([float(f) for f in fields])
    if not rows:
        raise ValueError(f"{path}: no atoms found")
    table = np.array(rows)
    return AtomSet(table[:, :3], table[:, 3])
