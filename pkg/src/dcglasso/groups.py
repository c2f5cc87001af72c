"""Group structure over design-matrix columns."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    EmptyGroupError,
    GroupStructureError,
    IndexOutOfRangeError,
    OverlapInNonOverlapModeError,
    UncoveredFeatureError,
)

__all__ = ["GroupStructure", "validate_structure"]


@dataclass(frozen=True)
class GroupStructure:
    """A validated partition (or cover) of feature indices into groups.

    Attributes
    ----------
    groups : tuple of int arrays
        Group i holds the d_i feature indices belonging to it, sorted.
    p : int
        Number of features covered.
    overlapping : bool
        Whether groups may share features.  When False the groups form a
        partition of range(p).
    weights : float array, shape (q,)
        Per-group penalty weights w_i.
    """

    groups: tuple
    p: int
    overlapping: bool
    weights: np.ndarray = field(repr=False)

    @property
    def q(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([g.size for g in self.groups])

    def features_of(self, group_indices) -> np.ndarray:
        """Sorted union of feature indices of the given groups."""
        sel = np.asarray(group_indices, dtype=int)
        if sel.size == 0:
            return np.empty(0, dtype=int)
        return np.unique(np.concatenate([self.groups[i] for i in sel]))


def validate_structure(groups, p, overlapping=False, weights="sqrt_size"):
    """Validate a raw group listing and attach penalty weights.

    Parameters
    ----------
    groups : sequence of index sequences
        Feature indices of each group.
    p : int
        Total number of features.
    overlapping : bool
        Whether groups are allowed to share features.  When False the groups
        must partition range(p); when True their union must cover it.
    weights : {"sqrt_size", "unweighted"} or array
        Per-group penalty weights.  Default sqrt(d_i); "unweighted" sets all
        weights to 1 so the penalty is the plain sum of group norms.

    Returns
    -------
    GroupStructure
    """
    if p < 1:
        raise ValueError(f"p must be positive, got {p}")
    if len(groups) == 0:
        raise EmptyGroupError("no groups given")
    norm_groups = []
    for gi, g in enumerate(groups):
        idx = np.unique(np.asarray(g, dtype=int))
        if idx.size == 0:
            raise EmptyGroupError(f"group {gi} is empty")
        if len(idx) != len(list(g)):
            raise GroupStructureError(f"group {gi} lists a feature index twice")
        if idx[0] < 0 or idx[-1] >= p:
            raise IndexOutOfRangeError(
                f"group {gi} has indices outside [0, {p})"
            )
        norm_groups.append(idx)

    counts = np.zeros(p, dtype=int)
    for idx in norm_groups:
        counts[idx] += 1
    if not overlapping and np.any(counts > 1):
        f = int(np.argmax(counts > 1))
        raise OverlapInNonOverlapModeError(
            f"feature {f} appears in more than one group with overlapping=False"
        )
    if np.any(counts == 0):
        f = int(np.argmax(counts == 0))
        raise UncoveredFeatureError(f"feature {f} belongs to no group")

    sizes = np.array([g.size for g in norm_groups], dtype=float)
    if isinstance(weights, str):
        if weights == "sqrt_size":
            w = np.sqrt(sizes)
        elif weights == "unweighted":
            w = np.ones(len(norm_groups))
        else:
            raise ValueError(f"unknown weights mode {weights!r}")
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(norm_groups),):
            raise DimensionMismatchError(
                f"weights shape {w.shape} != ({len(norm_groups)},)"
            )
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be strictly positive and finite")

    return GroupStructure(
        groups=tuple(norm_groups), p=int(p), overlapping=bool(overlapping), weights=w
    )
