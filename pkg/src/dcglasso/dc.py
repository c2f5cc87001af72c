"""Two-stage divide-and-conquer group-lasso.

Stage 1 shards the rows, fits a group-lasso path per shard, picks one model
per shard by BIC, and majority-votes the group support.  Stage 2 refits the
voted support on every shard without penalty and averages the estimates.
All aggregation is ordered by shard id, so results are identical for any
worker-pool size.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .design import GroupCoefficients, GroupedDesign, SupportPattern, standardize
from .exceptions import (
    AllShardsFailedError,
    DimensionMismatchError,
    ShardTooSmallError,
)
from .solver import (
    PathFit,
    RefitResult,
    SolverConfig,
    apply_weights_mode,
    bic_select,
    fit_path,
    refit,
)

__all__ = [
    "ShardPlan",
    "ShardVote",
    "DcResult",
    "shard_split",
    "local_select",
    "majority_vote",
    "stage2_local",
    "average_estimates",
    "run_dc_glasso",
    "worker_count",
]

WORKERS_ENV = "DCGLASSO_WORKERS"


def worker_count(n_jobs=None) -> int:
    """Worker-pool size: explicit argument, else the DCGLASSO_WORKERS env var, else 1."""
    if n_jobs is not None:
        return max(1, int(n_jobs))
    env = os.environ.get(WORKERS_ENV, "").strip()
    if env:
        return max(1, int(env))
    return 1


@dataclass(frozen=True)
class ShardPlan:
    """A seeded random partition of row indices into m balanced blocks."""

    m: int
    assignment: tuple
    seed: int

    def __post_init__(self):
        sizes = [len(b) for b in self.assignment]
        if max(sizes) - min(sizes) > 1:
            raise DimensionMismatchError("shard sizes must differ by at most one row")


@dataclass
class ShardVote:
    """Stage-1 output of one shard.

    ``local_beta`` is the BIC-selected path solution on the shard's own
    standardized scale; ``lambda_selected`` with that vector lets the KKT
    certificate be recomputed from the raw data later.  A shard that failed
    contributes an empty support and is still counted in the vote
    denominator.
    """

    shard_id: int
    support: SupportPattern
    local_beta: GroupCoefficients
    bic: float
    timing: float
    lambda_selected: float = 0.0
    path_index: int = 0
    converged: bool = True
    zero_response: bool = False
    failed: bool = False
    error: str = ""


@dataclass
class DcResult:
    """Aggregated result of a divide-and-conquer run."""

    support: SupportPattern
    beta: GroupCoefficients
    per_shard: list
    stage2: list
    vote_counts: np.ndarray
    timings: dict
    m: int
    seed: int
    feature_support: SupportPattern | None = None
    feature_vote_counts: np.ndarray | None = None
    failed_shards: tuple = ()
    flags: dict = field(default_factory=dict)


def shard_split(design: GroupedDesign, m: int, seed: int, min_shard: int | None = None):
    """Randomly split rows into m balanced shards (sizes differ by <= 1).

    Returns (ShardPlan, list of shard designs).  The split is a seeded
    uniform permutation cut into contiguous blocks, so it is reproducible
    from the seed alone.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if min_shard is None:
        min_shard = 2 * int(np.max(design.structure.sizes))
    if design.n < m * min_shard:
        raise ShardTooSmallError(
            f"n={design.n} cannot support m={m} shards of at least {min_shard} rows"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(design.n)
    blocks = tuple(np.array(b) for b in np.array_split(perm, m))
    plan = ShardPlan(m=m, assignment=blocks, seed=int(seed))
    shards = [design.take_rows(b) for b in blocks]
    return plan, shards


def local_select(shard_design: GroupedDesign, config: SolverConfig, shard_id: int = 0) -> ShardVote:
    """Standardize a shard, fit the path, and return its BIC-selected vote."""
    t0 = time.perf_counter()
    std = standardize(shard_design, loss=config.loss)
    path = fit_path(std, config)
    idx, support = bic_select(path, std.n)
    sol = path.solutions[idx]
    return ShardVote(
        shard_id=shard_id,
        support=support,
        local_beta=sol,
        bic=float(path.bic_scores[idx]),
        timing=time.perf_counter() - t0,
        lambda_selected=float(path.lambdas[idx]),
        path_index=idx,
        converged=bool(path.converged[idx]),
        zero_response=path.zero_response,
    )


def _failed_vote(shard_id: int, err: Exception, elapsed: float, p: int) -> ShardVote:
    return ShardVote(
        shard_id=shard_id,
        support=SupportPattern(mode="group"),
        local_beta=GroupCoefficients(np.zeros(p)),
        bic=float("inf"),
        timing=elapsed,
        failed=True,
        error=f"{type(err).__name__}: {err}",
    )


def _guarded_local_select(shard: GroupedDesign, config: SolverConfig, shard_id: int) -> ShardVote:
    t0 = time.perf_counter()
    try:
        return local_select(shard, config, shard_id)
    except Exception as err:  # failed shard = empty vote, still counted in m
        return _failed_vote(shard_id, err, time.perf_counter() - t0, shard.p)


def majority_vote(votes, m: int) -> SupportPattern:
    """Indices selected by at least m/2 of the votes (Eq.-style >= threshold).

    ``votes`` is a list of SupportPattern (or objects with a ``support``
    attribute); with even m a count of exactly m/2 selects.
    """
    patterns = [v.support if hasattr(v, "support") else v for v in votes]
    if len(patterns) != m:
        raise DimensionMismatchError(f"expected {m} votes, got {len(patterns)}")
    modes = {p.mode for p in patterns}
    if len(modes) > 1:
        raise DimensionMismatchError("votes mix group-mode and feature-mode supports")
    mode = modes.pop() if modes else "group"
    counts: dict[int, int] = {}
    for pat in patterns:
        for i in pat.selected:
            counts[int(i)] = counts.get(int(i), 0) + 1
    selected = np.array(
        sorted(i for i, c in counts.items() if 2 * c >= m), dtype=int
    )
    return SupportPattern(mode=mode, selected=selected)


def stage2_local(shard_design: GroupedDesign, support: SupportPattern, loss: str = "squared") -> RefitResult:
    """Refit the voted support on one shard, on the original data scale."""
    return refit(shard_design, support, loss=loss)


def average_estimates(estimates) -> GroupCoefficients:
    """Coordinate-wise mean of shard estimates, intercepts included."""
    if len(estimates) == 0:
        raise DimensionMismatchError("nothing to average")
    p = estimates[0].beta.shape[0]
    for e in estimates:
        if e.beta.shape[0] != p:
            raise DimensionMismatchError("estimates have mismatched lengths")
    beta = np.mean([e.beta for e in estimates], axis=0)
    intercept = float(np.mean([e.intercept for e in estimates]))
    return GroupCoefficients(beta=beta, intercept=intercept)


def run_dc_glasso(
    design: GroupedDesign,
    m: int,
    config: SolverConfig | None = None,
    seed: int = 0,
    n_jobs: int | None = None,
) -> DcResult:
    """Run the full two-stage estimator on a non-overlapping design.

    Reported stage timings are the maximum over shards (the elapsed time of
    a perfectly parallel run, one shard per machine) plus aggregation;
    ``timings["actual_total"]`` holds the real in-process elapsed time.
    Raises AllShardsFailedError only when every shard fails in stage 1;
    individual failures contribute empty votes and are flagged.
    """
    config = config or SolverConfig()
    if design.structure.overlapping:
        raise ValueError("run_dc_glasso requires a non-overlapping structure")
    st = apply_weights_mode(design.structure, config.weights_mode)
    if not np.array_equal(st.weights, design.structure.weights):
        design = GroupedDesign(design.x, design.y, st)
    else:
        st = design.structure
    t_start = time.perf_counter()
    plan, shards = shard_split(design, m, seed)
    workers = worker_count(n_jobs)
    votes = Parallel(n_jobs=workers)(
        delayed(_guarded_local_select)(shard, config, k)
        for k, shard in enumerate(shards)
    )
    votes = sorted(votes, key=lambda v: v.shard_id)
    failed = tuple(v.shard_id for v in votes if v.failed)
    if len(failed) == m:
        raise AllShardsFailedError("all shards failed in stage 1")
    t_vote = time.perf_counter()
    q = st.q
    vote_counts = np.zeros(q, dtype=int)
    for v in votes:
        vote_counts[v.support.selected] += 1
    support = majority_vote(votes, m)
    stage2_runs = Parallel(n_jobs=workers)(
        delayed(_timed_stage2)(shard, support, config.loss) for shard in shards
    )
    estimates = [est for est, _ in stage2_runs]
    stage2_times = [dt for _, dt in stage2_runs]
    beta = average_estimates(estimates)
    t_end = time.perf_counter()
    stage1_max = max(v.timing for v in votes)
    stage2_max = max(stage2_times)
    agg = (t_end - t_start) - sum(v.timing for v in votes) - sum(stage2_times)
    agg = max(agg, 0.0)
    timings = {
        "stage1": stage1_max,
        "stage2": stage2_max,
        "aggregate": agg,
        "total": stage1_max + stage2_max + agg,
        "actual_total": t_end - t_start,
        "vote_at": t_vote - t_start,
    }
    flags = {
        "any_shard_failed": bool(failed),
        "any_not_converged": any(not v.converged for v in votes if not v.failed),
        "any_zero_response": any(v.zero_response for v in votes),
        "empty_support": support.size == 0,
        "any_rank_deficient": any(e.rank_deficient for e in estimates),
        "any_separable": any(e.separable for e in estimates),
    }
    return DcResult(
        support=support,
        beta=beta,
        per_shard=votes,
        stage2=estimates,
        vote_counts=vote_counts,
        timings=timings,
        m=m,
        seed=int(seed),
        failed_shards=failed,
        flags=flags,
    )


def _timed_stage2(shard, support, loss):
    t0 = time.perf_counter()
    est = stage2_local(shard, support, loss)
    return est, time.perf_counter() - t0
