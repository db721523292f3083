"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array


def check_bits(X) -> np.ndarray:
    """Validate a 2-D array of 0/1 values and return it as uint8."""
    X = check_array(X, dtype=None, ensure_min_samples=1)
    if X.dtype != np.uint8:
        if not np.all((X == 0) | (X == 1)):
            raise ValueError("expected a binary (0/1) array")
        X = X.astype(np.uint8)
    elif X.size and X.max() > 1:
        raise ValueError("expected a binary (0/1) array")
    return X


def check_rng(random_state) -> np.random.Generator:
    """Turn ``None``, an int seed or a Generator into a ``np.random.Generator``."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, numbers.Integral):
        return np.random.default_rng(random_state)
    raise ValueError(f"{random_state!r} cannot be used to seed a Generator")


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
