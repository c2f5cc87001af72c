"""Error types raised by the toolkit.

All input problems are signaled as ``ValueError`` subclasses so callers can
catch either the specific class or plain ``ValueError``.  Numerical
conditions that have a well-defined fallback (non-convergence, rank
deficiency, separable logistic data, zero response) are reported as flags on
result objects, not exceptions.
"""


class GroupStructureError(ValueError):
    """Base class for malformed group structures."""


class EmptyGroupError(GroupStructureError):
    """A group contains no feature indices."""


class IndexOutOfRangeError(GroupStructureError):
    """A group refers to a feature index outside [0, p)."""


class OverlapInNonOverlapModeError(GroupStructureError):
    """Two groups share a feature while overlapping=False."""


class UncoveredFeatureError(GroupStructureError):
    """Some feature in [0, p) belongs to no group."""


class DimensionMismatchError(ValueError):
    """Array shapes are inconsistent with each other or with the design."""


class ModeMismatchError(ValueError):
    """Two support patterns with different modes were compared."""


class ShardTooSmallError(ValueError):
    """Requested shard count leaves shards below the minimum size."""


class AllPathsFailedError(RuntimeError):
    """Every point on a regularization path failed to produce a solution."""


class AllShardsFailedError(RuntimeError):
    """Every shard of a divide-and-conquer run failed."""


class NonFiniteError(ValueError):
    """Input or intermediate values contain NaN or infinity."""
