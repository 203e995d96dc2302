"""Raw little-endian float64 arrays with a JSON sidecar at ``<path>.json``."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

__all__ = [
    "SidecarError",
    "write_array",
    "read_array",
    "write_volume",
    "read_volume",
    "write_coefficients",
    "read_coefficients",
    "write_moment",
    "read_moment",
]

_DTYPE = np.dtype("<f8")
COEFF_CONVENTION = "real-SH-iℓ"


class SidecarError(ValueError):
    """Missing or inconsistent sidecar, or a payload of the wrong size."""


def _sidecar(path) -> Path:
    return Path(f"{os.fspath(path)}.json")


def write_array(path, array, meta: dict) -> None:
    """Write ``array`` as raw ``<f8`` and ``meta`` plus its shape to the sidecar."""
    a = np.ascontiguousarray(array, dtype=_DTYPE)
    header = dict(meta)
    header["shape"] = list(a.shape)
    header["dtype"] = "<f8"
    Path(path).write_bytes(a.tobytes())
    _sidecar(path).write_text(json.dumps(header, indent=2, ensure_ascii=False))


def read_array(path) -> tuple[np.ndarray, dict]:
    side = _sidecar(path)
    if not side.exists():
        raise SidecarError(f"missing sidecar {side}")
    meta = json.loads(side.read_text())
    shape = tuple(int(s) for s in meta["shape"])
    expected = int(np.prod(shape)) * _DTYPE.itemsize
    raw = Path(path).read_bytes()
    if len(raw) != expected:
        raise SidecarError(f"{path}: expected {expected} bytes for shape {shape}, "
                           f"found {len(raw)}")
    return np.frombuffer(raw, dtype=_DTYPE).reshape(shape).copy(), meta


def write_volume(path, volume, voxel_size: float = 1.0, **extra) -> None:
    v = np.asarray(volume)
    if v.ndim != 3 or len(set(v.shape)) != 1:
        raise ValueError(f"expected a cubic volume, got shape {v.shape}")
    write_array(path, v, {"M": v.shape[0], "voxel_size_angstrom": float(voxel_size), **extra})


def read_volume(path) -> tuple[np.ndarray, float]:
    """Volume and its voxel size in Angstrom."""
    v, meta = read_array(path)
    if v.ndim != 3 or v.shape != (meta.get("M"),) * 3:
        raise SidecarError(f"{path}: sidecar M={meta.get('M')} does not match shape {v.shape}")
    return v, float(meta.get("voxel_size_angstrom", 1.0))


def write_coefficients(path, coeffs, kind: str = "coefficients", **extra) -> None:
    """Per-degree matrices concatenated in degree order, row-major.

    ``kind`` is one of ``coefficients``, ``scrambled`` or ``cl``.
    """
    mats = [np.asarray(A, dtype=_DTYPE) for A in coeffs]
    flat = np.concatenate([A.ravel() for A in mats]) if mats else np.zeros(0)
    meta = {
        "kind": kind,
        "L": len(mats) - 1,
        "S_list": [int(A.shape[0]) for A in mats],
        "shapes": [list(A.shape) for A in mats],
        "convention": COEFF_CONVENTION,
        **extra,
    }
    write_array(path, flat, meta)


def read_coefficients(path) -> tuple[list[np.ndarray], dict]:
    flat, meta = read_array(path)
    out, pos = [], 0
    for shape in meta["shapes"]:
        n = int(np.prod(shape))
        out.append(flat[pos:pos + n].reshape(shape))
        pos += n
    if pos != flat.size:
        raise SidecarError(f"{path}: sidecar shapes cover {pos} values, payload has {flat.size}")
    return out, meta


def write_moment(path, moment, kappa=None, sigma=None, seed=None) -> None:
    write_array(path, moment.values,
                {"m": moment.m, "kappa": kappa, "sigma": sigma, "seed": seed})


def read_moment(path):
    from .imaging import MomentTensor

    values, meta = read_array(path)
    return MomentTensor(int(meta["m"]), values)
