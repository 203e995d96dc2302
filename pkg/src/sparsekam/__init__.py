"""Sparse reconstruction from second moments of tomographic projections."""

from . import basis, geometry, imaging, kam, metrics, oracle, point_recovery, rrr, sparsity

__version__ = "0.1.0"

__all__ = ["basis", "geometry", "imaging", "kam", "metrics", "oracle", "point_recovery",
           "rrr", "sparsity", "__version__"]
