"""Benchmark harness: scenario sweeps, sample-complexity rates, vote Monte Carlo.

Emits flat CSV rows, one per (cell, rep, method).  DC wall time simulates
one shard per machine (max over shards per stage plus aggregation); the
actually elapsed in-process time is reported alongside.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .dc import majority_vote, run_dc_glasso, shard_split, worker_count
from .design import GroupCoefficients, SupportPattern, standardize
from .metrics import degrees_of_freedom, mse, support_metrics
from .overlap import run_dc_oglasso
from .simulate import gen_overlap_scenario, gen_scenario, scenario_spec
from .solver import SolverConfig, bic_select, fit_path

__all__ = [
    "BenchRow",
    "CSV_HEADER",
    "run_benchmark",
    "fullset_fit",
    "vote_consistency_mc",
    "chebyshev_vote_bound",
    "sample_complexity_rates",
]

CSV_HEADER = "scenario,n,m,method,wall_time_s,wall_time_actual_s,mse,df,exact_recovery,seed"


@dataclass
class BenchRow:
    """One benchmark measurement, serialized as one CSV line."""

    scenario: str
    n: int
    m: int
    method: str
    wall_time_s: float
    wall_time_actual_s: float
    mse: float
    df: int
    exact_recovery: bool
    seed: int

    def to_csv(self) -> str:
        return ",".join(
            [
                self.scenario,
                str(self.n),
                str(self.m),
                self.method,
                "%.17g" % self.wall_time_s,
                "%.17g" % self.wall_time_actual_s,
                "%.17g" % self.mse,
                str(self.df),
                str(self.exact_recovery).lower(),
                str(self.seed),
            ]
        )


def _rep_seed(seed: int, cell: int, rep: int) -> int:
    ss = np.random.SeedSequence([int(seed), int(cell), int(rep)])
    return int(ss.generate_state(1)[0])


def fullset_fit(design, config: SolverConfig):
    """Single-machine baseline: standardized path fit, BIC pick, no refit.

    Returns (GroupCoefficients on the original scale, group SupportPattern,
    elapsed seconds).
    """
    t0 = time.perf_counter()
    std = standardize(design, loss=config.loss)
    path = fit_path(std, config)
    idx, support = bic_select(path, std.n)
    coef = path.solutions[idx].to_original_scale(std.standardization)
    return coef, support, time.perf_counter() - t0


def _one_cell(scenario, n, m, rep_seed, config, methods):
    """Rows for one generated dataset under the requested methods."""
    rows = []
    if scenario == "overlap":
        design, truth = gen_overlap_scenario(p=1000, n=n, seed=rep_seed)
        true_support = SupportPattern(mode="feature", selected=truth.support_features)
    else:
        spec = scenario_spec(int(scenario), n=n, seed=rep_seed)
        design, truth = gen_scenario(spec)
        true_support = SupportPattern(mode="group", selected=truth.active_groups)
    scen_label = str(scenario)
    if "fullset" in methods:
        coef, support, elapsed = fullset_fit(design, config)
        if scenario == "overlap":
            est_sup = SupportPattern(mode="feature", selected=np.flatnonzero(coef.beta != 0.0))
        else:
            est_sup = support
        rows.append(
            BenchRow(
                scenario=scen_label,
                n=n,
                m=1,
                method="fullset",
                wall_time_s=elapsed,
                wall_time_actual_s=elapsed,
                mse=mse(coef.beta, truth.beta_true),
                df=degrees_of_freedom(coef),
                exact_recovery=support_metrics(est_sup, true_support)["exact"],
                seed=rep_seed,
            )
        )
    if "dc" in methods:
        if scenario == "overlap":
            res = run_dc_oglasso(design, m=m, config=config, seed=rep_seed)
            est_sup = res.feature_support
        else:
            res = run_dc_glasso(design, m=m, config=config, seed=rep_seed)
            est_sup = res.support
        rows.append(
            BenchRow(
                scenario=scen_label,
                n=n,
                m=m,
                method="dc",
                wall_time_s=res.timings["total"],
                wall_time_actual_s=res.timings["actual_total"],
                mse=mse(res.beta.beta, truth.beta_true),
                df=degrees_of_freedom(res.beta),
                exact_recovery=support_metrics(est_sup, true_support)["exact"],
                seed=rep_seed,
            )
        )
    return rows


def run_benchmark(
    cells,
    reps: int = 20,
    seed: int = 0,
    config: SolverConfig | None = None,
    methods=("fullset", "dc"),
    shard_size: int = 1000,
    progress=None,
):
    """Run a benchmark grid and return BenchRow objects.

    ``cells`` is a list of dicts with keys ``scenario`` (1-6 or "overlap"),
    ``n``, and optionally ``m`` (defaults to n // shard_size, at least 1,
    the fixed-subset-size rule).  Wall time covers fitting only, not data
    generation.  A failing cell is recorded with NaN mse and the run
    continues.
    """
    config = config or SolverConfig()
    rows = []
    for ci, cell in enumerate(cells):
        scenario = cell["scenario"]
        n = int(cell["n"])
        m = int(cell.get("m") or max(1, n // shard_size))
        for rep in range(reps):
            rs = _rep_seed(seed, ci, rep)
            try:
                rows.extend(_one_cell(scenario, n, m, rs, config, methods))
            except Exception as err:
                print(
                    f"benchmark cell scenario={scenario} n={n} m={m} rep={rep} failed: {err}",
                    file=sys.stderr,
                )
                rows.append(
                    BenchRow(
                        scenario=str(scenario), n=n, m=m, method="failed",
                        wall_time_s=float("nan"), wall_time_actual_s=float("nan"),
                        mse=float("nan"), df=-1, exact_recovery=False, seed=rs,
                    )
                )
            if progress is not None:
                progress(ci, rep)
    return rows


def rows_to_csv(rows) -> str:
    return "\n".join([CSV_HEADER] + [r.to_csv() for r in rows]) + "\n"


def chebyshev_vote_bound(P: float, m: int) -> float:
    """Lower bound 1 - P(1-P) / (m (P - 1/2)^2) on exact majority recovery."""
    return 1.0 - P * (1.0 - P) / (m * (P - 0.5) ** 2)


def vote_consistency_mc(P: float, m_list, reps: int = 1000, seed: int = 0) -> dict:
    """Empirical exact-recovery rate of the majority vote under noisy shards.

    Each of m shards reproduces the true 10-group model with probability P;
    otherwise its vote drops one random true group and adds one random
    inactive group.  Returns {m: rate} using the real vote implementation.
    """
    if not 0.0 < P <= 1.0:
        raise ValueError("P must be in (0, 1]")
    q = 100
    true_groups = np.arange(10)
    truth = SupportPattern(mode="group", selected=true_groups)
    rng = np.random.default_rng(seed)
    rates = {}
    for m in m_list:
        hits = 0
        for _ in range(reps):
            votes = []
            for _ in range(m):
                if rng.random() < P:
                    votes.append(truth)
                else:
                    drop = rng.integers(0, true_groups.size)
                    add = rng.integers(10, q)
                    sel = np.delete(true_groups, drop)
                    votes.append(SupportPattern(mode="group", selected=np.append(sel, add)))
            result = majority_vote(votes, m)
            hits += result.same_as(truth)
        rates[int(m)] = hits / reps
    return rates


def _shard_paths(design, m, seed, config, workers):
    """Stage-1 path fits per shard, exposed for BIC rescoring."""
    _, shards = shard_split(design, m, seed)

    def one(shard):
        std = standardize(shard, loss=config.loss)
        return fit_path(std, config), std.n

    return Parallel(n_jobs=workers)(delayed(one)(s) for s in shards)


def _support_for_df_mode(path, n, df_mode):
    """BIC-selected group support under a df convention, reusing stored fits."""
    log_n = math.log(n)
    best = (np.inf, -1)
    for k in range(len(path)):
        if path.failed[k]:
            continue
        sol = path.solutions[k].beta
        df_coef = int(np.count_nonzero(sol))
        fit_term = path.bic_scores[k] - df_coef * log_n  # stored scores use df_mode="coef"
        if df_mode == "coef":
            df = df_coef
        else:
            df = len(path.solutions[k].nonzero_groups(path.structure))
        score = fit_term + df * log_n
        if score < best[0]:
            best = (score, k)
    k = best[1]
    if k < 0:
        return SupportPattern(mode="group")
    return SupportPattern(
        mode="group", selected=path.solutions[k].nonzero_groups(path.structure)
    )


def sample_complexity_rates(
    scenario: int,
    subset_sizes,
    m: int = 10,
    reps: int = 20,
    seed: int = 0,
    config: SolverConfig | None = None,
    df_modes=("coef", "group"),
    n_jobs=None,
):
    """Exact-recovery rate of the voted support per subset size and BIC df mode.

    Stage-1 path fits are shared between df conventions: each shard's path
    is fit once and rescored per mode, so comparing conventions costs no
    extra solver time.  Only stage-1 voting is needed for recovery, so
    stage 2 is skipped.  Returns {(size, df_mode): rate}.
    """
    base = config or SolverConfig()
    if base.df_mode != "coef":
        base = SolverConfig(
            loss=base.loss, path_length=base.path_length,
            lambda_min_ratio=base.lambda_min_ratio, max_iter=base.max_iter,
            tol=base.tol, weights_mode=base.weights_mode, df_mode="coef",
        )
    workers = worker_count(n_jobs)
    hits = {(int(sz), mode): 0 for sz in subset_sizes for mode in df_modes}
    for si, sz in enumerate(subset_sizes):
        for rep in range(reps):
            rs = _rep_seed(seed, si, rep)
            spec = scenario_spec(scenario, n=int(sz) * m, seed=rs)
            design, truth = gen_scenario(spec)
            truth_pattern = SupportPattern(mode="group", selected=truth.active_groups)
            paths = _shard_paths(design, m, rs, base, workers)
            for mode in df_modes:
                votes = [_support_for_df_mode(path, n, mode) for path, n in paths]
                voted = majority_vote(votes, m)
                hits[(int(sz), mode)] += voted.same_as(truth_pattern)
    return {key: h / reps for key, h in hits.items()}
