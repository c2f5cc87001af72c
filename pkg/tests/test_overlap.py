"""Duplication construction, feature voting, and the overlapping-group driver."""

import numpy as np
import pytest

import dcglasso.overlap as overlap_mod
from dcglasso import (
    AllShardsFailedError,
    DimensionMismatchError,
    GroupedDesign,
    SolverConfig,
    SupportPattern,
    collapse_duplicates,
    expand_duplicates,
    feature_vote,
    fit_glasso,
    kkt_residual,
    lambda_max,
    run_dc_glasso,
    run_dc_oglasso,
    security_check,
    standardize,
    validate_structure,
)
from dcglasso.overlap import feature_vote_counts

from helpers import make_problem


def _chain_structure():
    return validate_structure([[0, 1], [1, 2]], 3, overlapping=True)


def _overlap_problem(seed, n=400, q=5, width=10, stride=5, active=(1, 3), noise=0.05):
    """Chained overlapping groups {stride*j, ..., stride*j + width - 1}."""
    rng = np.random.default_rng(seed)
    p = stride * (q - 1) + width
    groups = [np.arange(stride * j, stride * j + width) for j in range(q)]
    st = validate_structure(groups, p, overlapping=True)
    x = rng.standard_normal((n, p))
    beta = np.zeros(p)
    for g in active:
        beta[groups[g]] = rng.uniform(0.5, 1.5, size=width) * rng.choice([-1.0, 1.0], size=width)
    y = x @ beta + noise * rng.standard_normal(n)
    return GroupedDesign(x, y, st), beta


def test_expand_duplicates_chain_example():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((10, 3))
    design = GroupedDesign(x, rng.standard_normal(10), _chain_structure())
    expanded, dmap = expand_duplicates(design)
    assert dmap.expanded_p == 4
    assert dmap.column_origin.tolist() == [0, 1, 1, 2]
    assert dmap.group_blocks == ((0, 2), (2, 4))
    assert [g.tolist() for g in expanded.structure.groups] == [[0, 1], [2, 3]]
    assert not expanded.structure.overlapping
    assert np.array_equal(expanded.x, x[:, [0, 1, 1, 2]])
    assert np.array_equal(expanded.structure.weights, design.structure.weights)


def test_collapse_duplicates_sums_copies():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((8, 3))
    design = GroupedDesign(x, rng.standard_normal(8), _chain_structure())
    _, dmap = expand_duplicates(design)
    assert collapse_duplicates(np.array([1.0, 2.0, 3.0, 4.0]), dmap).tolist() == [1.0, 5.0, 4.0]
    with pytest.raises(DimensionMismatchError):
        collapse_duplicates(np.zeros(5), dmap)


def test_collapse_is_left_inverse_on_single_copies():
    design, _ = _overlap_problem(2, n=50)
    expanded, dmap = expand_duplicates(design)
    rng = np.random.default_rng(3)
    beta = rng.standard_normal(design.p)
    lifted = np.zeros(dmap.expanded_p)
    seen = set()
    for j, f in enumerate(dmap.column_origin):
        if int(f) not in seen:
            lifted[j] = beta[f]
            seen.add(int(f))
    assert np.allclose(collapse_duplicates(lifted, dmap), beta)


def test_feature_vote_counts_collapsed_nonzeros():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((8, 3))
    design = GroupedDesign(x, rng.standard_normal(8), _chain_structure())
    _, dmap = expand_duplicates(design)
    betas = [
        np.array([1.0, 1.0, 0.0, 0.0]),  # votes features 0, 1
        np.array([0.0, 0.0, 2.0, 2.0]),  # votes features 1, 2
        np.array([0.0, 0.0, 0.0, 0.0]),  # empty vote
    ]
    counts = feature_vote_counts(betas, dmap)
    assert counts.tolist() == [1, 2, 1]
    pattern = feature_vote(betas, dmap, 3)
    assert pattern.mode == "feature"
    assert pattern.selected.tolist() == [1]
    with pytest.raises(DimensionMismatchError):
        feature_vote(betas, dmap, 2)


def test_security_check_requires_a_complete_group():
    st = _chain_structure()
    assert security_check(np.array([0, 1]), st).selected.tolist() == [0, 1]
    assert security_check(np.array([0, 2]), st).selected.tolist() == []
    assert security_check(np.array([0, 1, 2]), st).selected.tolist() == [0, 1, 2]


def test_security_check_idempotent_and_monotone():
    design, _ = _overlap_problem(5, n=30)
    st = design.structure
    rng = np.random.default_rng(6)
    for _ in range(20):
        s = np.flatnonzero(rng.random(st.p) < 0.5)
        t = np.union1d(s, np.flatnonzero(rng.random(st.p) < 0.2))
        cs = security_check(s, st)
        ct = security_check(t, st)
        again = security_check(cs, st)
        assert np.array_equal(again.selected, cs.selected)
        assert set(cs.selected.tolist()) <= set(ct.selected.tolist())
        # every output is a union of complete groups
        covered = [g for g in st.groups if np.all(np.isin(g, cs.selected))]
        if covered:
            assert np.array_equal(cs.selected, np.unique(np.concatenate(covered)))
        else:
            assert cs.size == 0


def test_expanded_solver_satisfies_kkt():
    design, _ = _overlap_problem(7, n=200)
    expanded, _ = expand_duplicates(design)
    std = standardize(expanded, "squared")
    lam = 0.3 * lambda_max(std)
    fit = fit_glasso(std, lam, SolverConfig(tol=1e-8, max_iter=20000))
    assert fit.converged
    assert kkt_residual(std, fit, lam) <= 1e-6


def test_partition_marked_overlapping_matches_plain_driver():
    # With no shared features the duplication construction is the identity,
    # so both drivers must produce the same numbers.
    design, _ = make_problem(8, n=300, q=4, active=2, snr=6.0)
    st_plain = design.structure
    st_over = validate_structure(
        [g.tolist() for g in st_plain.groups], design.p, overlapping=True
    )
    over_design = GroupedDesign(design.x, design.y, st_over)
    config = SolverConfig(path_length=30, lambda_min_ratio=0.01)
    a = run_dc_glasso(design, m=2, config=config, seed=5, n_jobs=1)
    b = run_dc_oglasso(over_design, m=2, config=config, seed=5, n_jobs=1)
    assert b.support.same_as(a.support)
    assert np.array_equal(b.beta.beta, a.beta.beta)
    assert b.beta.intercept == a.beta.intercept
    assert np.array_equal(b.vote_counts, a.vote_counts)
    assert np.array_equal(
        b.feature_support.selected, a.support.to_features(st_plain)
    )


def test_overlap_driver_recovers_complete_groups():
    design, beta_true = _overlap_problem(9, n=600, active=(1, 3))
    st = design.structure
    config = SolverConfig(path_length=40, lambda_min_ratio=0.01)
    result = run_dc_oglasso(design, m=2, config=config, seed=3, n_jobs=1)

    truth_feats = np.flatnonzero(beta_true != 0.0)
    assert np.array_equal(result.feature_support.selected, truth_feats)
    assert result.support.mode == "group"
    assert result.feature_support.mode == "feature"
    # final feature support is a fixpoint of the security check
    again = security_check(result.feature_support, st)
    assert np.array_equal(again.selected, result.feature_support.selected)
    # stage 2 never puts mass outside the voted features
    outside = np.setdiff1d(np.arange(st.p), result.feature_support.selected)
    assert np.all(result.beta.beta[outside] == 0.0)
    assert np.allclose(result.beta.beta[truth_feats], beta_true[truth_feats], atol=0.05)


def test_overlap_driver_empty_at_lambda_max():
    design, _ = _overlap_problem(10, n=200)
    config = SolverConfig(path_length=1)
    result = run_dc_oglasso(design, m=1, config=config, seed=0, n_jobs=1)
    assert result.support.size == 0
    assert result.feature_support.size == 0
    assert result.flags["empty_support"]
    assert np.all(result.beta.beta == 0.0)
    assert result.beta.intercept == pytest.approx(float(np.mean(design.y)))


def test_overlap_strategies_share_fits_but_differ_in_rule():
    design, _ = _overlap_problem(11, n=600, active=(2,))
    st = design.structure
    config = SolverConfig(path_length=40, lambda_min_ratio=0.01)
    sad = run_dc_oglasso(design, m=2, config=config, seed=7, n_jobs=1, strategy="select-and-discard")
    sig = run_dc_oglasso(design, m=2, config=config, seed=7, n_jobs=1, strategy="select-in-groups")
    assert sad.flags["strategy"] == "select-and-discard"
    assert sig.flags["strategy"] == "select-in-groups"
    # identical stage-1 votes, different combination rules
    for va, vb in zip(sad.per_shard, sig.per_shard):
        assert va.support.same_as(vb.support)
        assert va.lambda_selected == vb.lambda_selected
    win = np.flatnonzero(2 * sig.vote_counts >= sig.m)
    assert np.array_equal(sig.feature_support.selected, st.features_of(win))
    pre = SupportPattern(
        mode="feature",
        selected=np.flatnonzero(2 * sad.feature_vote_counts >= sad.m),
    )
    assert np.array_equal(
        sad.feature_support.selected, security_check(pre, st).selected
    )
    with pytest.raises(ValueError):
        run_dc_oglasso(design, m=2, config=config, seed=7, strategy="vote-twice")


def test_overlap_driver_identical_across_worker_pools():
    design, _ = _overlap_problem(12, n=400)
    config = SolverConfig(path_length=25, lambda_min_ratio=0.01)
    one = run_dc_oglasso(design, m=2, config=config, seed=1, n_jobs=1)
    two = run_dc_oglasso(design, m=2, config=config, seed=1, n_jobs=2)
    assert np.array_equal(one.beta.beta, two.beta.beta)
    assert one.support.same_as(two.support)
    assert np.array_equal(one.feature_vote_counts, two.feature_vote_counts)


def test_overlap_driver_isolates_failed_shard(monkeypatch):
    design, _ = _overlap_problem(13, n=400)
    config = SolverConfig(path_length=20, lambda_min_ratio=0.01)
    real = overlap_mod.fit_path
    calls = {"k": 0}

    def flaky(design_std, cfg):
        calls["k"] += 1
        if calls["k"] == 1:
            raise RuntimeError("first shard dies")
        return real(design_std, cfg)

    monkeypatch.setattr(overlap_mod, "fit_path", flaky)
    result = run_dc_oglasso(design, m=2, config=config, seed=2, n_jobs=1)
    assert result.failed_shards == (0,)
    assert result.flags["any_shard_failed"]
    assert result.per_shard[0].failed
    assert np.all(result.feature_vote_counts <= 1)

    def broken(design_std, cfg):
        raise RuntimeError("nothing survives")

    monkeypatch.setattr(overlap_mod, "fit_path", broken)
    with pytest.raises(AllShardsFailedError):
        run_dc_oglasso(design, m=2, config=config, seed=2, n_jobs=1)
