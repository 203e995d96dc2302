"""Simulated pair-manifold oracle for point-mass molecules.

For a pair of atoms ``(a_i, a_j)`` the joint projections
``(pi R a_i, pi R a_j)`` over all rotations ``R`` sweep a 3-dimensional
semialgebraic set in R^2 x R^2. It is the zero set of one quartic
polynomial intersected with two discs. This module samples that set from
known atoms and evaluates the quartic; the recovery code only ever sees
the samples and the pair masses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import AtomSet, random_rotations

__all__ = [
    "PairSamples",
    "PairTriple",
    "sample_pair_manifold",
    "quartic_eval",
    "pair_measure",
    "montecarlo_pair_measure",
    "PointMassOracle",
    "write_pair_samples",
    "read_pair_samples",
]


@dataclass(frozen=True)
class PairTriple:
    """``(||a_i||^2, ||a_j||^2, <a_i, a_j>)`` for one ordered pair."""

    norm_sq_i: float
    norm_sq_j: float
    inner: float

    @classmethod
    def from_atoms(cls, atoms: AtomSet, i: int, j: int) -> "PairTriple":
        a, b = atoms.positions[i], atoms.positions[j]
        return cls(float(a @ a), float(b @ b), float(a @ b))

    def swapped(self) -> "PairTriple":
        return PairTriple(self.norm_sq_j, self.norm_sq_i, self.inner)


@dataclass(frozen=True)
class PairSamples:
    """Points ``((x1, y1), (x2, y2))`` on one pair manifold, shape ``(n, 4)``."""

    i: int
    j: int
    points: np.ndarray

    def __len__(self):
        return self.points.shape[0]


def _check_pair(atoms: AtomSet, i: int, j: int) -> None:
    if i == j:
        raise ValueError(f"pair indices must differ, got i = j = {i}")
    for k in (i, j):
        if not 0 <= k < atoms.p:
            raise IndexError(f"atom index {k} out of range for p = {atoms.p}")


def sample_pair_manifold(atoms: AtomSet, i: int, j: int, count: int,
                         rng: np.random.Generator) -> PairSamples:
    """Images of ``count`` independent Haar rotations under ``R -> (pi R a_i, pi R a_j)``."""
    _check_pair(atoms, i, j)
    if count < 4:
        raise ValueError("at least 4 samples per pair are required")
    R = random_rotations(rng, count)
    xi = R[:, :2, :] @ atoms.positions[i]
    xj = R[:, :2, :] @ atoms.positions[j]
    return PairSamples(i, j, np.hstack([xi, xj]))


def quartic_eval(triple: PairTriple, point) -> np.ndarray | float:
    """Evaluate the defining quartic of a pair manifold.

    Accepts a single 4-vector or an ``(n, 4)`` array of points.
    Zero on the manifold, with ``+1`` coefficient on ``x1^2 y2^2``.
    """
    pt = np.asarray(point, dtype=np.float64)
    x1, y1, x2, y2 = np.moveaxis(pt, -1, 0)
    u, v, c = triple.norm_sq_i, triple.norm_sq_j, triple.inner
    val = ((u * v - c * c)
           - v * (x1 * x1 + y1 * y1)
           - u * (x2 * x2 + y2 * y2)
           + 2 * c * (x1 * x2 + y1 * y2)
           + x1 * x1 * y2 * y2 + y1 * y1 * x2 * x2 - 2 * x1 * y1 * x2 * y2)
    return float(val) if np.ndim(val) == 0 else val


def pair_measure(atoms: AtomSet, i: int, j: int) -> float:
    """Mass the second moment puts on the manifold of pair ``(i, j)``: ``w_i w_j``."""
    _check_pair(atoms, i, j)
    return float(atoms.weights[i] * atoms.weights[j])


def montecarlo_pair_measure(atoms: AtomSet, i: int, j: int, n: int, band: float,
                            rng: np.random.Generator, chunk: int = 100_000) -> float:
    """Brute-force estimate of the second-moment mass near one pair manifold.

    Every ordered pair ``(i', j')`` (diagonal included) contributes its
    pushforward sample with weight ``w_i' w_j'`` whenever the sample lies
    in the band ``|q_ij| <= band`` and inside both discs.
    """
    _check_pair(atoms, i, j)
    if n < 1 or band <= 0:
        raise ValueError("need n >= 1 and band > 0")
    triple = PairTriple.from_atoms(atoms, i, j)
    w = atoms.weights
    total = 0.0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        R = random_rotations(rng, m)
        proj = np.einsum("nij,pj->npi", R[:, :2, :], atoms.positions)  # (m, p, 2)
        sq = np.sum(proj ** 2, axis=2)
        for a in range(atoms.p):
            in_i = sq[:, a] <= triple.norm_sq_i
            for b in range(atoms.p):
                pts = np.concatenate([proj[:, a], proj[:, b]], axis=1)
                hit = (in_i & (sq[:, b] <= triple.norm_sq_j)
                       & (np.abs(quartic_eval(triple, pts)) <= band))
                total += w[a] * w[b] * np.count_nonzero(hit)
        done += m
    return total / n


class PointMassOracle:
    """Oracle access to the pair manifolds of a hidden molecule.

    Pairs are handed out under opaque keys in shuffled order, and the two
    atoms of a pair are randomly swapped, so a caller cannot read the
    hidden labelling off the keys. Each pair owns an independent random
    stream, so samples do not depend on the order of queries.
    """

    def __init__(self, atoms: AtomSet, rng: np.random.Generator,
                 samples_per_pair: int = 20):
        self._atoms = atoms
        self.samples_per_pair = samples_per_pair
        pairs = [(i, j) for i in range(atoms.p) for j in range(i + 1, atoms.p)]
        flips = rng.integers(0, 2, size=len(pairs))
        pairs = [(j, i) if f else (i, j) for (i, j), f in zip(pairs, flips)]
        order = rng.permutation(len(pairs))
        self._pairs = [pairs[k] for k in order]
        seeds = rng.integers(0, 2 ** 63, size=len(pairs))
        self._streams = [np.random.default_rng(int(s)) for s in seeds]
        self.sample_calls = 0
        self.measure_calls = 0

    @property
    def p(self) -> int:
        return self._atoms.p

    def pairs(self) -> range:
        """Opaque keys, one per unordered pair of atoms."""
        return range(len(self._pairs))

    def samples(self, key: int) -> np.ndarray:
        """Fresh generic points on the manifold of pair ``key``, shape ``(n, 4)``."""
        self.sample_calls += 1
        i, j = self._pairs[key]
        return sample_pair_manifold(self._atoms, i, j, self.samples_per_pair,
                                    self._streams[key]).points

    def measure(self, key: int) -> float:
        self.measure_calls += 1
        i, j = self._pairs[key]
        return pair_measure(self._atoms, i, j)


def write_pair_samples(path, samples: list[PairSamples]) -> None:
    with open(path, "w") as fh:
        fh.write("# i j x1 y1 x2 y2\n")
        for s in samples:
            for x1, y1, x2, y2 in s.points:
                fh.write(f"{s.i} {s.j} {x1:.17g} {y1:.17g} {x2:.17g} {y2:.17g}\n")


def read_pair_samples(path) -> list[PairSamples]:
    groups: dict[tuple[int, int], list] = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            f = line.split()
            key = (int(f[0]), int(f[1]))
            groups.setdefault(key, []).append([float(v) for v in f[2:6]])
    return [PairSamples(i, j, np.array(pts)) for (i, j), pts in groups.items()]
