"""Report figures written to files with the non-interactive Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_fsc", "plot_trace", "plot_moment_error"]


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fsc(curves: dict, path, cutoff: float = 0.5) -> None:
    """FSC against frequency in 1/Angstrom; ``curves`` maps labels to FSCCurve."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, curve in curves.items():
        ax.plot(curve.frequency, curve.values, marker=".", label=label)
    ax.axhline(cutoff, color="grey", ls="--", lw=0.8)
    ax.set_xlabel("frequency (1/Å)")
    ax.set_ylabel("FSC")
    ax.set_ylim(-0.2, 1.05)
    ax.legend()
    _save(fig, path)


def plot_trace(trace, path) -> None:
    """Constraint gap per iteration, with FSC resolution on a twin axis if present."""
    n = np.array([r["n"] for r in trace])
    gap = np.array([r["gap"] for r in trace])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(n, gap, color="C0")
    ax.set_xlabel("iteration")
    ax.set_ylabel("constraint gap", color="C0")
    res = [r.get("fsc_resolution") for r in trace]
    if all(v is not None for v in res) and res:
        ax2 = ax.twinx()
        ax2.plot(n, res, color="C1", lw=0.8)
        ax2.set_ylabel("FSC-0.5 resolution (Å)", color="C1")
    _save(fig, path)


def plot_moment_error(ns, errors, path, labels=None) -> None:
    """Log-log error against image count with an ``n^(-1/2)`` guide line.

    ``errors`` is one sequence or a list of sequences, one per noise level.
    """
    ns = np.asarray(ns, dtype=float)
    errs = np.atleast_2d(np.asarray(errors, dtype=float))
    labels = labels or [None] * len(errs)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for e, lab in zip(errs, labels):
        ax.loglog(ns, e, marker="o", label=lab)
    ref = errs[0][0] * np.sqrt(ns[0] / ns)
    ax.loglog(ns, ref, color="grey", ls="--", lw=0.8, label="n^-1/2")
    ax.set_xlabel("number of images n")
    ax.set_ylabel("moment error (Frobenius)")
    ax.legend()
    _save(fig, path)
