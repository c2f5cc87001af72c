"""Command-line interface.

Subcommands: ``simulate`` (write synthetic datasets), ``fit`` (run the
divide-and-conquer pipeline, m=1 being the single-machine baseline),
``bench`` (benchmark grids to CSV), ``check`` (recompute optimality
certificates for a saved result).

Exit codes: 0 success, 1 check violation, 2 invalid input, 3 all shards
failed.  Solver options follow the precedence CLI flag > config file >
built-in default, and the effective configuration is echoed in every
result file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from ._version import __version__
from .bench import (
    chebyshev_vote_bound,
    rows_to_csv,
    run_benchmark,
    sample_complexity_rates,
    vote_consistency_mc,
)
from .dc import run_dc_glasso, shard_split
from .design import GroupCoefficients, GroupedDesign, standardize
from .exceptions import AllShardsFailedError
from .io import (
    load_dataset,
    load_result,
    result_to_dict,
    save_dataset,
    save_result,
)
from .overlap import expand_duplicates, run_dc_oglasso
from .simulate import gen_overlap_scenario, gen_scenario, scenario_spec
from .solver import SolverConfig, apply_weights_mode, kkt_residual

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_ALL_SHARDS_FAILED = 3

SOLVER_KEYS = (
    "loss",
    "path_length",
    "lambda_min_ratio",
    "max_iter",
    "tol",
    "df_mode",
)
CONFIG_KEYS = SOLVER_KEYS + ("m", "seed", "strategy", "unweighted", "workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcglasso",
        description="Sparse group regression at scale: group lasso with BIC "
        "selection, majority-vote support aggregation, and per-shard refitting.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    kind = sim.add_mutually_exclusive_group(required=True)
    kind.add_argument("--scenario", type=int, choices=range(1, 7), help="scenario id 1-6")
    kind.add_argument("--overlap", action="store_true", help="overlapping-groups design")
    sim.add_argument("--n", type=int, required=True, help="number of rows")
    sim.add_argument("--p", type=int, default=1000, help="features (overlap mode only)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument(
        "--snr-mode", choices=("sd", "variance"), default="sd",
        help="noise calibration: signal sd ratio or signal variance ratio",
    )
    sim.add_argument(
        "--activation-prob", type=float, default=0.1,
        help="per-group activation probability (overlap mode)",
    )
    sim.add_argument("--out", required=True, help="output CSV path")

    fit = sub.add_parser("fit", help="fit a saved dataset")
    fit.add_argument("data", help="dataset CSV (companion JSON alongside)")
    fit.add_argument("--m", type=int, default=None, help="number of shards (default 1)")
    fit.add_argument("--loss", choices=("squared", "logistic"), default=None)
    fit.add_argument(
        "--strategy", choices=("select-and-discard", "select-in-groups"), default=None,
        help="overlap support-combination rule",
    )
    fit.add_argument("--df-mode", choices=("coef", "group"), default=None)
    fit.add_argument("--unweighted", action="store_true", default=None,
                     help="unit penalty weights instead of sqrt group size")
    fit.add_argument("--path-length", type=int, default=None)
    fit.add_argument("--lambda-min-ratio", type=float, default=None)
    fit.add_argument("--tol", type=float, default=None)
    fit.add_argument("--max-iter", type=int, default=None)
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--workers", type=int, default=None, help="worker processes")
    fit.add_argument("--config", default=None, help="JSON file with option defaults")
    fit.add_argument("--out", default=None, help="result JSON path (default <data>.result.json)")

    bench = sub.add_parser("bench", help="run a benchmark grid")
    bench.add_argument("--grid", required=True, help="grid config JSON")
    bench.add_argument("--out", required=True, help="output CSV path")
    bench.add_argument("--workers", type=int, default=None)

    check = sub.add_parser("check", help="verify certificates of a saved result")
    check.add_argument("data", help="dataset CSV the result was fit from")
    check.add_argument("result", help="result JSON")
    check.add_argument("--tol", type=float, default=None,
                       help="stage-1 certificate tolerance (default max(10*fit tol, 1e-6))")
    check.add_argument("--grad-tol", type=float, default=1e-6,
                       help="refit gradient tolerance")
    return parser


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_simulate(args) -> int:
    if args.overlap:
        design, truth = gen_overlap_scenario(
            p=args.p, n=args.n, seed=args.seed, activation_prob=args.activation_prob
        )
    else:
        spec = scenario_spec(args.scenario, n=args.n, seed=args.seed, snr_mode=args.snr_mode)
        design, truth = gen_scenario(spec)
    json_path = save_dataset(args.out, design, beta_true=truth.beta_true, seed=args.seed)
    print(f"wrote {args.out} ({design.n} rows, {design.p} features, "
          f"{design.structure.q} groups) and {json_path}")
    return EXIT_OK


def _effective_config(args) -> dict:
    """Merge fit options: CLI flag > config file > default."""
    cfg = {
        "m": 1,
        "seed": 0,
        "strategy": "select-and-discard",
        "unweighted": False,
        "workers": None,
        "loss": "squared",
        "path_length": 100,
        "lambda_min_ratio": 0.001,
        "max_iter": 3000,
        "tol": 1e-8,
        "df_mode": "coef",
    }
    if args.config is not None:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(file_cfg) - set(CONFIG_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in CONFIG_KEYS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    return cfg


def _solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(
        loss=cfg["loss"],
        path_length=int(cfg["path_length"]),
        lambda_min_ratio=float(cfg["lambda_min_ratio"]),
        max_iter=int(cfg["max_iter"]),
        tol=float(cfg["tol"]),
        weights_mode="unweighted" if cfg["unweighted"] else "sqrt_size",
        df_mode=cfg["df_mode"],
    )


def cmd_fit(args) -> int:
    cfg = _effective_config(args)
    design, _ = load_dataset(args.data)
    solver = _solver_config(cfg)
    if solver.loss == "logistic" and not np.isin(design.y, (0.0, 1.0)).all():
        raise ValueError("logistic loss requires a 0/1 response column")
    overlapping = design.structure.overlapping
    if overlapping:
        result = run_dc_oglasso(
            design, m=int(cfg["m"]), config=solver, seed=int(cfg["seed"]),
            n_jobs=cfg["workers"], strategy=cfg["strategy"],
        )
    else:
        result = run_dc_glasso(
            design, m=int(cfg["m"]), config=solver, seed=int(cfg["seed"]),
            n_jobs=cfg["workers"],
        )
    doc = result_to_dict(
        result, solver, design.structure,
        overlapping=overlapping,
        strategy=cfg["strategy"] if overlapping else None,
    )
    out = args.out or (args.data.rsplit(".", 1)[0] + ".result.json")
    save_result(out, doc)
    sup = result.support.selected
    print(f"wrote {out}")
    print(f"selected {len(sup)} groups: {sup.tolist()}")
    if overlapping:
        print(f"selected {result.feature_support.size} features "
              f"({cfg['strategy']} strategy)")
    if result.flags.get("any_shard_failed"):
        print(f"warning: shards failed: {list(result.failed_shards)}", file=sys.stderr)
    if result.flags.get("any_not_converged"):
        print("warning: some shard fits did not reach the certificate tolerance",
              file=sys.stderr)
    return EXIT_OK


def _bench_solver(grid: dict) -> SolverConfig:
    overrides = grid.get("solver", {})
    base = dataclasses.asdict(SolverConfig())
    unknown = set(overrides) - set(base)
    if unknown:
        raise ValueError(f"unknown solver keys in grid: {sorted(unknown)}")
    base.update(overrides)
    return SolverConfig(**base)


def cmd_bench(args) -> int:
    with open(args.grid) as fh:
        grid = json.load(fh)
    if not isinstance(grid, dict):
        raise ValueError("grid config must be a JSON object")
    if args.workers is not None:
        os.environ["DCGLASSO_WORKERS"] = str(args.workers)
    if "vote_mc" in grid:
        mc = grid["vote_mc"]
        P = float(mc["P"])
        m_list = [int(m) for m in mc["m_list"]]
        rates = vote_consistency_mc(
            P, m_list, reps=int(mc.get("reps", 1000)), seed=int(mc.get("seed", 0))
        )
        lines = ["m,rate,lower_bound"]
        for m in m_list:
            lines.append("%d,%.17g,%.17g" % (m, rates[m], chebyshev_vote_bound(P, m)))
        text = "\n".join(lines) + "\n"
    elif "sample_complexity" in grid:
        sc = grid["sample_complexity"]
        rates = sample_complexity_rates(
            scenario=int(sc["scenario"]),
            subset_sizes=[int(s) for s in sc["subset_sizes"]],
            m=int(sc.get("m", 10)),
            reps=int(sc.get("reps", 20)),
            seed=int(sc.get("seed", 0)),
            config=_bench_solver(sc),
            df_modes=tuple(sc.get("df_modes", ("coef", "group"))),
        )
        lines = ["scenario,subset_size,df_mode,rate"]
        for (size, mode), rate in sorted(rates.items()):
            lines.append("%d,%d,%s,%.17g" % (int(sc["scenario"]), size, mode, rate))
        text = "\n".join(lines) + "\n"
    elif "cells" in grid:
        rows = run_benchmark(
            grid["cells"],
            reps=int(grid.get("reps", 20)),
            seed=int(grid.get("seed", 0)),
            config=_bench_solver(grid),
            methods=tuple(grid.get("methods", ("fullset", "dc"))),
            shard_size=int(grid.get("shard_size", 1000)),
        )
        text = rows_to_csv(rows)
    else:
        raise ValueError("grid config needs one of: cells, vote_mc, sample_complexity")
    with open(args.out, "w") as fh:
        fh.write(text)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_check(args) -> int:
    design, _ = load_dataset(args.data)
    doc = load_result(args.result)
    cfg = doc["config"]
    solver = SolverConfig(
        loss=cfg["loss"],
        path_length=int(cfg["path_length"]),
        lambda_min_ratio=float(cfg["lambda_min_ratio"]),
        max_iter=int(cfg["max_iter"]),
        tol=float(cfg["tol"]),
        weights_mode=cfg["weights_mode"],
        df_mode=cfg["df_mode"],
    )
    st = apply_weights_mode(design.structure, solver.weights_mode)
    design = GroupedDesign(design.x, design.y, st)
    overlapping = bool(cfg["overlapping"])
    target = design
    if overlapping:
        target, _ = expand_duplicates(design)
    plan, shards = shard_split(target, int(cfg["m"]), int(cfg["seed"]))
    kkt_tol = args.tol if args.tol is not None else max(10.0 * solver.tol, 1e-6)
    violations = 0

    for entry in doc["per_shard"]:
        k = int(entry["shard_id"])
        if entry["failed"]:
            print(f"shard {k}: failed during fit ({entry['error']}), skipped")
            continue
        std = standardize(shards[k], loss=solver.loss)
        coef = GroupCoefficients(
            beta=np.asarray(entry["local_beta"], dtype=np.float64),
            intercept=float(entry["local_intercept"]),
        )
        lam = float(entry["lambda_selected"])
        kkt = kkt_residual(std, coef, lam, loss=solver.loss)
        status = "OK"
        if entry["converged"] and kkt > kkt_tol:
            status = "VIOLATION"
            violations += 1
        elif not entry["converged"]:
            status = "not converged (informational)"
        print(f"shard {k}: stage-1 kkt={kkt:.3e} at lambda={lam:.6g} [{status}]")

    features = np.asarray(doc["support"]["features"], dtype=int)
    for entry in doc["stage2"]:
        k = int(entry["shard_id"])
        shard = design.take_rows(np.asarray(plan.assignment[k]))
        beta = np.asarray(entry["beta"], dtype=np.float64)
        eta = shard.x @ beta + float(entry["intercept"])
        if solver.loss == "squared":
            resid = shard.y - eta
        else:
            resid = shard.y - 1.0 / (1.0 + np.exp(-eta))
        parts = [abs(float(np.sum(resid)))]
        if features.size:
            parts.append(float(np.max(np.abs(shard.x[:, features].T @ resid))))
        grad = max(parts)
        if solver.loss == "logistic":
            grad *= 2.0  # refit reports the deviance-scale gradient
        status = "OK"
        if entry.get("separable"):
            status = "separable (informational)"
        elif grad > args.grad_tol:
            status = "VIOLATION"
            violations += 1
        print(f"shard {k}: refit grad={grad:.3e} [{status}]")

    stage2_betas = np.array([e["beta"] for e in doc["stage2"]], dtype=np.float64)
    stage2_int = np.array([e["intercept"] for e in doc["stage2"]], dtype=np.float64)
    avg_beta = stage2_betas.mean(axis=0)
    avg_int = float(stage2_int.mean())
    final = np.asarray(doc["beta"], dtype=np.float64)
    if not (
        np.allclose(avg_beta, final, rtol=0.0, atol=1e-10)
        and abs(avg_int - float(doc["intercept"])) <= 1e-10
    ):
        print("aggregate: stored estimate does not match the shard average [VIOLATION]")
        violations += 1
    else:
        print("aggregate: stored estimate matches the shard average [OK]")
    nz = np.flatnonzero(final != 0.0)
    if np.setdiff1d(nz, features).size:
        print("aggregate: nonzero coefficients outside the reported support [VIOLATION]")
        violations += 1
    else:
        print("aggregate: support consistent with coefficient nonzeros [OK]")

    if violations:
        print(f"check: FAIL ({violations} violation(s))")
        return EXIT_CHECK_FAILED
    print(f"check: PASS (kkt tol {kkt_tol:.3g}, grad tol {args.grad_tol:.3g})")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "fit": cmd_fit,
        "bench": cmd_bench,
        "check": cmd_check,
    }
    try:
        return handlers[args.command](args)
    except AllShardsFailedError as err:
        return _fail(str(err), EXIT_ALL_SHARDS_FAILED)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as err:
        return _fail(str(err), EXIT_BAD_INPUT)


if __name__ == "__main__":
    sys.exit(main(argv=sys.argv[1:]))
