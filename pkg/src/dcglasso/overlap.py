"""Overlapping-group lasso by column duplication, with feature-level voting.

An overlapping structure is rewritten as a partition by copying every column
once per group that contains it; the standard solver then runs unchanged on
the expanded design.  Collapsing sums duplicate coefficients back per
original feature.  The divide-and-conquer driver votes per feature and then
applies the select-and-discard security check: only features covered by some
fully-selected group survive, so the final support is a union of complete
groups.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .design import GroupCoefficients, GroupedDesign, SupportPattern, standardize
from .dc import (
    DcResult,
    ShardVote,
    _failed_vote,
    average_estimates,
    shard_split,
    stage2_local,
    worker_count,
)
from .exceptions import AllShardsFailedError, DimensionMismatchError
from .groups import GroupStructure, validate_structure
from .solver import SolverConfig, apply_weights_mode, bic_select, fit_path

__all__ = [
    "DuplicationMap",
    "expand_duplicates",
    "collapse_duplicates",
    "feature_vote",
    "security_check",
    "run_dc_oglasso",
]

STRATEGIES = ("select-and-discard", "select-in-groups")


@dataclass(frozen=True)
class DuplicationMap:
    """Bookkeeping of the duplication construction.

    column_origin[j] is the original feature of expanded column j;
    group_blocks[i] = (start, end) is the contiguous expanded block of
    group i.  Blocks partition range(expanded_p).
    """

    expanded_p: int
    column_origin: np.ndarray
    group_blocks: tuple
    p: int


def expand_duplicates(design: GroupedDesign):
    """Duplicate shared columns so groups become a non-overlapping partition.

    Returns (expanded design, DuplicationMap).  Expanded block i carries the
    columns of group i in index order; group sizes, and hence penalty
    weights, are unchanged.
    """
    st = design.structure
    origin = np.concatenate(st.groups).astype(np.int64)
    expanded_p = int(origin.size)
    blocks = []
    groups = []
    pos = 0
    for g in st.groups:
        blocks.append((pos, pos + g.size))
        groups.append(list(range(pos, pos + g.size)))
        pos += g.size
    ex_structure = validate_structure(
        groups, expanded_p, overlapping=False, weights=st.weights
    )
    ex_design = GroupedDesign(design.x[:, origin], design.y, ex_structure)
    dmap = DuplicationMap(
        expanded_p=expanded_p,
        column_origin=origin,
        group_blocks=tuple(blocks),
        p=st.p,
    )
    return ex_design, dmap


def collapse_duplicates(expanded_beta: np.ndarray, dmap: DuplicationMap) -> np.ndarray:
    """Original-space coefficients: beta[f] = sum of entries duplicated from f."""
    expanded_beta = np.asarray(expanded_beta, dtype=np.float64)
    if expanded_beta.shape != (dmap.expanded_p,):
        raise DimensionMismatchError(
            f"expected expanded beta of length {dmap.expanded_p}, got {expanded_beta.shape}"
        )
    beta = np.zeros(dmap.p)
    np.add.at(beta, dmap.column_origin, expanded_beta)
    return beta


def feature_vote(expanded_betas, dmap: DuplicationMap, m: int) -> SupportPattern:
    """Per-feature majority vote over shard estimates (before the security check).

    A shard votes for feature f when its collapsed coefficient at f is
    nonzero; f is selected when the count reaches m/2.  Exact cancellation
    of duplicate copies would suppress a vote; that event has measure zero
    for continuous data.
    """
    if len(expanded_betas) != m:
        raise DimensionMismatchError(f"expected {m} shard estimates, got {len(expanded_betas)}")
    counts = np.zeros(dmap.p, dtype=int)
    for eb in expanded_betas:
        counts += collapse_duplicates(np.asarray(eb), dmap) != 0.0
    selected = np.flatnonzero(2 * counts >= m)
    return SupportPattern(mode="feature", selected=selected)


def feature_vote_counts(expanded_betas, dmap: DuplicationMap) -> np.ndarray:
    """Per-feature vote counts backing :func:`feature_vote`."""
    counts = np.zeros(dmap.p, dtype=int)
    for eb in expanded_betas:
        counts += collapse_duplicates(np.asarray(eb), dmap) != 0.0
    return counts


def security_check(features, structure: GroupStructure) -> SupportPattern:
    """Keep only features covered by some fully-selected group.

    The output is the union of groups whose features all appear in the
    input set; isolated features with no fully-covered parent group are
    discarded.  Idempotent and monotone in the input set.
    """
    if isinstance(features, SupportPattern):
        feats = features.selected
    else:
        feats = np.unique(np.asarray(features, dtype=int))
    inset = np.zeros(structure.p, dtype=bool)
    inset[feats] = True
    keep = [g for g in structure.groups if np.all(inset[g])]
    if keep:
        selected = np.unique(np.concatenate(keep))
    else:
        selected = np.empty(0, dtype=int)
    return SupportPattern(mode="feature", selected=selected)


def _complete_groups(features: SupportPattern, structure: GroupStructure) -> np.ndarray:
    inset = np.zeros(structure.p, dtype=bool)
    inset[features.selected] = True
    return np.array(
        [i for i in range(structure.q) if np.all(inset[structure.groups[i]])],
        dtype=int,
    )


def _local_select_expanded(shard_ex: GroupedDesign, config: SolverConfig, shard_id: int):
    """Stage 1 on one expanded shard: vote plus original-scale expanded beta."""
    t0 = time.perf_counter()
    try:
        std = standardize(shard_ex, loss=config.loss)
        path = fit_path(std, config)
        idx, support = bic_select(path, std.n)
        sol = path.solutions[idx]
        orig_scale = sol.to_original_scale(std.standardization)
        vote = ShardVote(
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
        return vote, orig_scale.beta
    except Exception as err:
        vote = _failed_vote(shard_id, err, time.perf_counter() - t0, shard_ex.p)
        return vote, np.zeros(shard_ex.p)


def run_dc_oglasso(
    design: GroupedDesign,
    m: int,
    config: SolverConfig | None = None,
    seed: int = 0,
    n_jobs: int | None = None,
    strategy: str = "select-and-discard",
) -> DcResult:
    """Divide-and-conquer overlapping-group lasso (duplication construction).

    strategy "select-and-discard" (default): per-feature majority vote over
    collapsed shard estimates, then the security check.  Alternative
    "select-in-groups": majority vote directly on shard-selected groups,
    final support = union of winning groups.  Both share the same stage-1
    fits.  Stage 2 refits the surviving original features per shard and
    averages.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    config = config or SolverConfig()
    st = apply_weights_mode(design.structure, config.weights_mode)
    design = GroupedDesign(design.x, design.y, st)
    t_start = time.perf_counter()
    expanded, dmap = expand_duplicates(design)
    plan, shards_ex = shard_split(expanded, m, seed)
    workers = worker_count(n_jobs)
    stage1 = Parallel(n_jobs=workers)(
        delayed(_local_select_expanded)(shard, config, k)
        for k, shard in enumerate(shards_ex)
    )
    stage1 = sorted(stage1, key=lambda pair: pair[0].shard_id)
    votes = [v for v, _ in stage1]
    betas_ex = [b for _, b in stage1]
    failed = tuple(v.shard_id for v in votes if v.failed)
    if len(failed) == m:
        raise AllShardsFailedError("all shards failed in stage 1")

    q = st.q
    group_counts = np.zeros(q, dtype=int)
    for v in votes:
        group_counts[v.support.selected] += 1
    f_counts = feature_vote_counts(betas_ex, dmap)
    if strategy == "select-and-discard":
        pre = SupportPattern(mode="feature", selected=np.flatnonzero(2 * f_counts >= m))
        feat_support = security_check(pre, st)
    else:
        win = np.flatnonzero(2 * group_counts >= m)
        feat_support = SupportPattern(mode="feature", selected=st.features_of(win))
    group_support = SupportPattern(mode="group", selected=_complete_groups(feat_support, st))

    shards_raw = [design.take_rows(b) for b in plan.assignment]
    stage2_runs = Parallel(n_jobs=workers)(
        delayed(_timed_stage2_features)(shard, feat_support, config.loss)
        for shard in shards_raw
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
    }
    flags = {
        "any_shard_failed": bool(failed),
        "any_not_converged": any(not v.converged for v in votes if not v.failed),
        "any_zero_response": any(v.zero_response for v in votes),
        "empty_support": feat_support.size == 0,
        "any_rank_deficient": any(e.rank_deficient for e in estimates),
        "any_separable": any(e.separable for e in estimates),
        "strategy": strategy,
    }
    return DcResult(
        support=group_support,
        beta=beta,
        per_shard=votes,
        stage2=estimates,
        vote_counts=group_counts,
        timings=timings,
        m=m,
        seed=int(seed),
        feature_support=feat_support,
        feature_vote_counts=f_counts,
        failed_shards=failed,
        flags=flags,
    )


def _timed_stage2_features(shard, feat_support, loss):
    t0 = time.perf_counter()
    est = stage2_local(shard, feat_support, loss)
    return est, time.perf_counter() - t0
