"""Shared array aliases and small numerical helpers."""

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]


def ramp_plus(x: FloatArray) -> FloatArray:
    """Positive part max(x, 0)."""
    return np.maximum(x, 0.0)


def ramp_minus(x: FloatArray) -> FloatArray:
    """Negative part min(x, 0)."""
    return np.minimum(x, 0.0)


def heaviside_plus(x: FloatArray) -> FloatArray:
    """Return 1 where x > 0 and 0 elsewhere (including x = 0)."""
    return (x > 0.0).astype(np.float64)


def heaviside_minus(x: FloatArray) -> FloatArray:
    """Return 1 where x < 0 and 0 elsewhere (including x = 0)."""
    return (x < 0.0).astype(np.float64)
