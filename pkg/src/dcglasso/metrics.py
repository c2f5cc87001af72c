"""Evaluation metrics for recovered coefficients and supports."""

from __future__ import annotations

import numpy as np

from .design import GroupCoefficients, SupportPattern
from .exceptions import DimensionMismatchError, ModeMismatchError

__all__ = ["mse", "support_metrics", "degrees_of_freedom"]


def mse(beta_hat, beta_true) -> float:
    """(1/p) sum of squared coefficient errors."""
    a = np.asarray(beta_hat.beta if isinstance(beta_hat, GroupCoefficients) else beta_hat, dtype=float)
    b = np.asarray(beta_true.beta if isinstance(beta_true, GroupCoefficients) else beta_true, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def support_metrics(est: SupportPattern, true: SupportPattern) -> dict:
    """Set comparison: {"exact": bool, "missed": int, "extra": int}."""
    if est.mode != true.mode:
        raise ModeMismatchError(f"cannot compare {est.mode} support with {true.mode}")
    missed = np.setdiff1d(true.selected, est.selected).size
    extra = np.setdiff1d(est.selected, true.selected).size
    return {"exact": missed == 0 and extra == 0, "missed": int(missed), "extra": int(extra)}


def degrees_of_freedom(beta) -> int:
    """Number of exactly nonzero coefficients (the solver thresholds to exact zeros)."""
    arr = np.asarray(beta.beta if isinstance(beta, GroupCoefficients) else beta, dtype=float)
    return int(np.count_nonzero(arr))
