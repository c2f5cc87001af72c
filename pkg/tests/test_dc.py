"""Sharding, majority vote, and the two-stage divide-and-conquer pipeline."""

import math

import numpy as np
import pytest

import dcglasso.dc as dc_mod
from dcglasso import (
    AllShardsFailedError,
    DimensionMismatchError,
    GroupedDesign,
    ShardTooSmallError,
    SolverConfig,
    SupportPattern,
    average_estimates,
    bic_select,
    fit_path,
    local_select,
    majority_vote,
    refit,
    run_dc_glasso,
    shard_split,
    standardize,
    validate_structure,
    vote_consistency_mc,
    worker_count,
)
from dcglasso.design import GroupCoefficients

from helpers import make_problem


def _pattern(ids):
    return SupportPattern(mode="group", selected=np.asarray(ids, dtype=int))


def test_shard_split_is_balanced_partition():
    design, _ = make_problem(0, n=101, q=4)
    plan, shards = shard_split(design, 4, seed=7, min_shard=2)
    sizes = [b.size for b in plan.assignment]
    assert max(sizes) - min(sizes) <= 1
    assert sum(sizes) == 101
    merged = np.concatenate(plan.assignment)
    assert np.array_equal(np.sort(merged), np.arange(101))
    for blk, shard in zip(plan.assignment, shards):
        assert shard.n == blk.size
        assert np.array_equal(shard.x, design.x[blk])
        assert np.array_equal(shard.y, design.y[blk])


def test_shard_split_seeded_and_reproducible():
    design, _ = make_problem(1, n=80, q=4)
    plan_a, _ = shard_split(design, 3, seed=5, min_shard=2)
    plan_b, _ = shard_split(design, 3, seed=5, min_shard=2)
    plan_c, _ = shard_split(design, 3, seed=6, min_shard=2)
    for a, b in zip(plan_a.assignment, plan_b.assignment):
        assert np.array_equal(a, b)
    assert any(
        not np.array_equal(a, c)
        for a, c in zip(plan_a.assignment, plan_c.assignment)
    )


def test_shard_split_single_shard_is_whole_sample():
    design, _ = make_problem(2, n=50, q=4)
    plan, shards = shard_split(design, 1, seed=0)
    assert plan.m == 1
    assert np.array_equal(np.sort(plan.assignment[0]), np.arange(50))
    assert shards[0].n == 50


def test_shard_split_rejects_too_many_shards():
    design, _ = make_problem(3, n=20, q=4)
    # default minimum shard size is twice the largest group (6 rows here)
    with pytest.raises(ShardTooSmallError):
        shard_split(design, 4, seed=0)
    with pytest.raises(ValueError):
        shard_split(design, 0, seed=0)


def test_majority_vote_threshold_examples():
    # m=4: two of four votes reach the >= m/2 threshold.
    votes = [_pattern([1]), _pattern([1]), _pattern([]), _pattern([2])]
    assert majority_vote(votes, 4).selected.tolist() == [1]
    # m=3: a single vote does not.
    votes = [_pattern([1]), _pattern([]), _pattern([])]
    assert majority_vote(votes, 3).selected.tolist() == []
    # m=2: any single vote selects, so the result is the union.
    votes = [_pattern([0, 3]), _pattern([2])]
    assert majority_vote(votes, 2).selected.tolist() == [0, 2, 3]
    # m=1: the single vote passes through.
    assert majority_vote([_pattern([5, 1])], 1).selected.tolist() == [1, 5]


def test_majority_vote_validates_inputs():
    with pytest.raises(DimensionMismatchError):
        majority_vote([_pattern([1])], 2)
    mixed = [_pattern([1]), SupportPattern(mode="feature", selected=np.array([1]))]
    with pytest.raises(DimensionMismatchError):
        majority_vote(mixed, 2)


def test_majority_vote_monotone_in_votes():
    rng = np.random.default_rng(11)
    q, m = 20, 7
    base = [_pattern(np.flatnonzero(rng.random(q) < 0.3)) for _ in range(m)]
    grown = list(base)
    extra = np.union1d(base[0].selected, np.array([0, 1, 2]))
    grown[0] = _pattern(extra)
    small = set(majority_vote(base, m).selected.tolist())
    large = set(majority_vote(grown, m).selected.tolist())
    assert small <= large


def test_vote_consistency_rises_with_shard_count():
    # Monte Carlo check of the vote-consistency guarantee at P=0.75.
    rates = vote_consistency_mc(0.75, [1, 5, 9, 15, 25], reps=1000, seed=0)
    assert rates[25] >= rates[1]
    assert rates[25] >= 0.9


def test_local_select_votes_its_nonzero_groups():
    design, _ = make_problem(5, n=120, q=5, active=2, snr=6.0)
    config = SolverConfig(path_length=40, lambda_min_ratio=0.01)
    vote = local_select(design, config, shard_id=3)
    assert vote.shard_id == 3
    assert not vote.failed
    st = design.structure
    nz = [g for g in range(st.q) if np.any(vote.local_beta.beta[st.groups[g]] != 0.0)]
    assert vote.support.selected.tolist() == nz
    assert vote.lambda_selected > 0.0
    assert math.isfinite(vote.bic)


def test_local_select_flat_response_is_degenerate():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((60, 6))
    st = validate_structure([[0, 1, 2], [3, 4, 5]], 6)
    design = GroupedDesign(x, np.full(60, 2.5), st)
    vote = local_select(design, SolverConfig())
    assert vote.zero_response
    assert vote.support.size == 0
    assert vote.lambda_selected == 0.0


def test_average_estimates_is_coordinatewise_mean():
    a = GroupCoefficients(beta=np.array([1.0, 0.0]), intercept=2.0)
    b = GroupCoefficients(beta=np.array([0.0, 1.0]), intercept=0.0)
    avg = average_estimates([a, b])
    assert avg.beta.tolist() == [0.5, 0.5]
    assert avg.intercept == 1.0


def test_average_estimates_matches_fsum():
    rng = np.random.default_rng(7)
    ests = [
        GroupCoefficients(beta=rng.standard_normal(9), intercept=float(rng.standard_normal()))
        for _ in range(50)
    ]
    avg = average_estimates(ests)
    for j in range(9):
        exact = math.fsum(float(e.beta[j]) for e in ests) / 50.0
        assert abs(avg.beta[j] - exact) <= 1e-12
    exact0 = math.fsum(float(e.intercept) for e in ests) / 50.0
    assert abs(avg.intercept - exact0) <= 1e-12


def test_average_estimates_validates_shapes():
    with pytest.raises(DimensionMismatchError):
        average_estimates([])
    with pytest.raises(DimensionMismatchError):
        average_estimates([
            GroupCoefficients(beta=np.zeros(3)),
            GroupCoefficients(beta=np.zeros(4)),
        ])


def test_run_dc_recovers_planted_support():
    design, beta_true = make_problem(8, n=600, q=6, active=2, snr=8.0)
    config = SolverConfig(path_length=40, lambda_min_ratio=0.01)
    result = run_dc_glasso(design, m=3, config=config, seed=1, n_jobs=1)
    truth = np.flatnonzero(
        [np.any(beta_true[g] != 0.0) for g in design.structure.groups]
    )
    assert result.support.selected.tolist() == truth.tolist()
    assert np.all(result.vote_counts[truth] == 3)
    assert result.failed_shards == ()
    assert not result.flags["any_shard_failed"]
    assert not result.flags["empty_support"]
    assert len(result.per_shard) == 3
    assert len(result.stage2) == 3
    for key in ("stage1", "stage2", "aggregate", "total", "actual_total"):
        assert key in result.timings
    assert result.timings["total"] <= result.timings["actual_total"] + 1e-9


def test_run_dc_stage2_matches_direct_refit():
    design, _ = make_problem(9, n=400, q=4, active=2, snr=6.0)
    config = SolverConfig(path_length=30, lambda_min_ratio=0.01)
    result = run_dc_glasso(design, m=2, config=config, seed=4, n_jobs=1)
    plan, shards = shard_split(design, 2, seed=4)
    for k, shard in enumerate(shards):
        direct = refit(shard, result.support, "squared")
        assert np.array_equal(result.stage2[k].beta, direct.beta)
        assert result.stage2[k].intercept == direct.intercept
    avg = average_estimates(result.stage2)
    assert np.array_equal(result.beta.beta, avg.beta)


def test_run_dc_single_shard_reduces_to_fullset_fit():
    design, _ = make_problem(10, n=300, q=4, active=2, snr=6.0)
    config = SolverConfig(path_length=30, lambda_min_ratio=0.01)
    result = run_dc_glasso(design, m=1, config=config, seed=2, n_jobs=1)

    std = standardize(design, "squared")
    path = fit_path(std, config)
    _, support = bic_select(path, std.n)
    assert result.support.same_as(support)

    # Stage 2 refits the single shard, which is a row permutation of the
    # full sample, so the estimate matches the full-sample refit.
    plan, shards = shard_split(design, 1, seed=2)
    direct_perm = refit(shards[0], support, "squared")
    assert np.array_equal(result.beta.beta, direct_perm.beta)
    direct = refit(design, support, "squared")
    assert np.allclose(result.beta.beta, direct.beta, atol=1e-8)
    assert result.beta.intercept == pytest.approx(direct.intercept, abs=1e-8)


def test_run_dc_identical_across_worker_pools():
    design, _ = make_problem(12, n=300, q=4, active=2)
    config = SolverConfig(path_length=25, lambda_min_ratio=0.01)
    one = run_dc_glasso(design, m=3, config=config, seed=9, n_jobs=1)
    two = run_dc_glasso(design, m=3, config=config, seed=9, n_jobs=2)
    assert np.array_equal(one.beta.beta, two.beta.beta)
    assert one.beta.intercept == two.beta.intercept
    assert one.support.same_as(two.support)
    assert np.array_equal(one.vote_counts, two.vote_counts)
    for va, vb in zip(one.per_shard, two.per_shard):
        assert va.shard_id == vb.shard_id
        assert va.lambda_selected == vb.lambda_selected
        assert np.array_equal(va.local_beta.beta, vb.local_beta.beta)


def test_run_dc_isolates_failed_shard(monkeypatch):
    design, _ = make_problem(13, n=300, q=4, active=2, snr=6.0)
    config = SolverConfig(path_length=25, lambda_min_ratio=0.01)
    real = dc_mod.local_select

    def flaky(shard, cfg, shard_id=0):
        if shard_id == 1:
            raise RuntimeError("shard blew up")
        return real(shard, cfg, shard_id)

    monkeypatch.setattr(dc_mod, "local_select", flaky)
    result = run_dc_glasso(design, m=3, config=config, seed=0, n_jobs=1)
    assert result.failed_shards == (1,)
    assert result.flags["any_shard_failed"]
    assert result.per_shard[1].failed
    assert result.per_shard[1].error.startswith("RuntimeError")
    assert result.per_shard[1].support.size == 0
    # the failed shard still counts in the denominator
    assert result.m == 3
    assert np.all(result.vote_counts <= 2)


def test_run_dc_all_failures_raise(monkeypatch):
    design, _ = make_problem(14, n=200, q=4)

    def broken(shard, cfg, shard_id=0):
        raise RuntimeError("no shard survives")

    monkeypatch.setattr(dc_mod, "local_select", broken)
    with pytest.raises(AllShardsFailedError):
        run_dc_glasso(design, m=2, config=SolverConfig(), seed=0, n_jobs=1)


def test_run_dc_rejects_overlapping_structure():
    rng = np.random.default_rng(15)
    st = validate_structure([[0, 1], [1, 2]], 3, overlapping=True)
    design = GroupedDesign(rng.standard_normal((40, 3)), rng.standard_normal(40), st)
    with pytest.raises(ValueError):
        run_dc_glasso(design, m=1)


def test_worker_count_resolution(monkeypatch):
    monkeypatch.delenv("DCGLASSO_WORKERS", raising=False)
    assert worker_count(None) == 1
    assert worker_count(4) == 4
    monkeypatch.setenv("DCGLASSO_WORKERS", "3")
    assert worker_count(None) == 3
    assert worker_count(2) == 2
