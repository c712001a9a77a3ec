"""Input validation helpers shared by the estimator facade."""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .probes import ProbeDataset


def as_measurement_array(X, n_columns=4):
    """Coerce estimator input into an ``(n, n_columns)`` float array.

    Accepts a :class:`ProbeDataset` (when four columns are wanted) or any
    array-like of measurement rows; validates shape and finiteness.
    """
    if isinstance(X, ProbeDataset):
        arr = X.as_array()
        if n_columns == 3:
            arr = arr[:, [0, 1, 3]] if arr.size else np.empty((0, 3))
        return arr
    arr = np.asarray(X, dtype=float)
    if arr.size == 0:
        return np.empty((0, n_columns))
    if arr.ndim != 2 or arr.shape[1] != n_columns:
        raise DataError(f"expected (n, {n_columns}) measurement rows, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("measurement rows must be finite")
    return arr


def as_query_array(X):
    """Coerce prediction input into ``(n, 2)`` rows of ``(t_min, x_km)``."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1 and arr.size == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DataError(f"expected (n, 2) query rows of (t_min, x_km), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("query rows must be finite")
    return arr
