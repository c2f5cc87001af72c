"""Design matrices, standardization, coefficient vectors, support patterns."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DimensionMismatchError, ModeMismatchError, NonFiniteError
from .groups import GroupStructure

__all__ = [
    "Standardization",
    "GroupedDesign",
    "GroupCoefficients",
    "SupportPattern",
    "standardize",
]


@dataclass(frozen=True)
class Standardization:
    """Record of the affine column/response transform applied to a design.

    Columns were transformed as (x - col_mean) / col_scale; constant columns
    keep scale 1 and are flagged.  y_mean is 0 unless the response was
    centered (squared loss).
    """

    col_mean: np.ndarray
    col_scale: np.ndarray
    y_mean: float
    constant_columns: np.ndarray  # bool mask, True where the column was constant


@dataclass(frozen=True)
class GroupedDesign:
    """An (X, y) pair together with its group structure.

    ``standardization`` is None for raw data and a :class:`Standardization`
    record after :func:`standardize` has been applied.
    """

    x: np.ndarray
    y: np.ndarray
    structure: GroupStructure
    standardization: Standardization | None = None

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 2:
            raise DimensionMismatchError(f"x must be 2-d, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise DimensionMismatchError(
                f"y shape {y.shape} does not match x with {x.shape[0]} rows"
            )
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise DimensionMismatchError("x must have at least one row and column")
        if x.shape[1] != self.structure.p:
            raise DimensionMismatchError(
                f"x has {x.shape[1]} columns but structure covers p={self.structure.p}"
            )
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise NonFiniteError("design contains NaN or infinite entries")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def take_rows(self, rows) -> "GroupedDesign":
        """Row-subset view used to build shards (drops standardization)."""
        return GroupedDesign(self.x[rows], self.y[rows], self.structure)


def standardize(design: GroupedDesign, loss: str = "squared") -> GroupedDesign:
    """Center and scale columns to mean 0, standard deviation 1.

    The response is centered only for squared loss; logistic labels are left
    untouched.  Constant columns become all-zero with scale 1 and are flagged
    rather than rejected.  Applying the function twice is a no-op up to
    floating-point roundoff.
    """
    x = design.x
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    constant = sd == 0.0
    scale = np.where(constant, 1.0, sd)
    xs = (x - mean) / scale
    if loss == "squared":
        y_mean = float(design.y.mean())
        ys = design.y - y_mean
    elif loss == "logistic":
        y_mean = 0.0
        ys = design.y
    else:
        raise ValueError(f"unknown loss {loss!r}")
    prev = design.standardization
    if prev is not None:
        # Compose with the transform already applied so coefficients can
        # still be mapped back to the original data scale in one step.
        mean = prev.col_mean + mean * prev.col_scale
        scale = prev.col_scale * scale
        y_mean = prev.y_mean + y_mean
        constant = prev.constant_columns | constant
    record = Standardization(
        col_mean=mean,
        col_scale=scale,
        y_mean=y_mean,
        constant_columns=constant,
    )
    return replace(design, x=xs, y=ys, standardization=record)


@dataclass(frozen=True)
class GroupCoefficients:
    """A coefficient vector with an intercept and group-addressable views."""

    beta: np.ndarray
    intercept: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "beta", np.ascontiguousarray(np.asarray(self.beta, dtype=np.float64))
        )

    def group_view(self, structure: GroupStructure, i: int) -> np.ndarray:
        """The d_i coefficients of group i."""
        return self.beta[structure.groups[i]]

    def nonzero_groups(self, structure: GroupStructure) -> np.ndarray:
        """Indices of groups with any nonzero coefficient."""
        return np.array(
            [
                i
                for i in range(structure.q)
                if np.any(self.beta[structure.groups[i]] != 0.0)
            ],
            dtype=int,
        )

    def to_original_scale(self, record: Standardization) -> "GroupCoefficients":
        """Map standardized-scale coefficients back to the raw data scale."""
        beta = self.beta / record.col_scale
        intercept = self.intercept + record.y_mean - float(beta @ record.col_mean)
        return GroupCoefficients(beta=beta, intercept=intercept)


@dataclass(frozen=True)
class SupportPattern:
    """A sorted set of selected groups (group mode) or features (feature mode)."""

    mode: str
    selected: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def __post_init__(self):
        if self.mode not in ("group", "feature"):
            raise ValueError(f"mode must be 'group' or 'feature', got {self.mode!r}")
        sel = np.unique(np.asarray(self.selected, dtype=int))
        object.__setattr__(self, "selected", sel)

    @property
    def size(self) -> int:
        return int(self.selected.size)

    def same_as(self, other: "SupportPattern") -> bool:
        if self.mode != other.mode:
            raise ModeMismatchError(f"cannot compare {self.mode} with {other.mode}")
        return bool(np.array_equal(self.selected, other.selected))

    def to_features(self, structure: GroupStructure) -> np.ndarray:
        """Sorted feature indices covered by this support."""
        if self.mode == "feature":
            return self.selected.copy()
        return structure.features_of(self.selected)
