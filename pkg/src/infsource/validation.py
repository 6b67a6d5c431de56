"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numbers

import numpy as np


def check_rng(seed=None) -> np.random.Generator:
    """Turn None, an int, a SeedSequence or a Generator into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a random generator from {seed!r}")


def trial_seed(master: int, index: int) -> np.random.SeedSequence:
    """Independent stream for trial ``index`` under ``master``."""
    return np.random.SeedSequence(entropy=int(master), spawn_key=(int(index),))


def check_unit_interval(name: str, x: float, *, open_left: bool = False) -> float:
    x = float(x)
    if not np.isfinite(x) or x > 1 or x < 0 or (open_left and x == 0):
        lo = "(0" if open_left else "[0"
        raise ValueError(f"{name} must lie in {lo}, 1], got {x}")
    return x


def check_square(name: str, m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {m.shape}")
    return m
