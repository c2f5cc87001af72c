"""Dataset and result file formats.

Datasets are a CSV (header ``y,x0,...,x{p-1}``, 17 significant digits) plus
a companion JSON holding the group structure, the overlap flag, and
optionally the true coefficients and the generator seed.  Results are a
single canonical JSON document: keys sorted, compact separators, floats in
shortest round-trip form, so load then save reproduces the file byte for
byte.  Every field a rerun could not reproduce bit-exactly (wall times)
lives in dedicated timing fields that comparisons strip.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from ._version import __version__
from .dc import DcResult
from .design import GroupedDesign
from .exceptions import DimensionMismatchError, NonFiniteError
from .groups import validate_structure
from .solver import SolverConfig

__all__ = [
    "save_dataset",
    "load_dataset",
    "companion_path",
    "result_to_dict",
    "result_bytes",
    "save_result",
    "load_result",
    "strip_timings",
]

TOOL_NAME = "dcglasso"


def companion_path(csv_path: str) -> str:
    """The JSON metadata path paired with a dataset CSV."""
    root, _ = os.path.splitext(csv_path)
    return root + ".json"


def _canonical_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n").encode()


def _jsonify(obj):
    """Convert numpy scalars/arrays to plain JSON values; non-finite -> null."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def save_dataset(csv_path: str, design: GroupedDesign, beta_true=None, seed=None) -> str:
    """Write a dataset CSV and its companion JSON; returns the JSON path."""
    x, y = design.x, design.y
    header = ",".join(["y"] + [f"x{j}" for j in range(design.p)])
    data = np.column_stack([y, x])
    np.savetxt(csv_path, data, fmt="%.17g", delimiter=",", header=header, comments="")
    meta = {
        "groups": [g.tolist() for g in design.structure.groups],
        "overlapping": bool(design.structure.overlapping),
        "beta_true": None if beta_true is None else _jsonify(np.asarray(beta_true)),
        "seed": None if seed is None else int(seed),
    }
    json_path = companion_path(csv_path)
    with open(json_path, "wb") as fh:
        fh.write(_canonical_bytes(meta))
    return json_path


def load_dataset(csv_path: str):
    """Read a dataset CSV plus companion JSON.

    Returns (GroupedDesign, meta dict with keys beta_true and seed).
    Raises on malformed headers, non-finite values, and group structures
    inconsistent with the column count.
    """
    with open(csv_path) as fh:
        header = fh.readline().strip()
    cols = header.split(",")
    if not cols or cols[0] != "y":
        raise ValueError(f"first CSV column must be 'y', got {cols[:1]}")
    p = len(cols) - 1
    expected = [f"x{j}" for j in range(p)]
    if cols[1:] != expected:
        raise ValueError("feature columns must be named x0..x{p-1} in order")
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, dtype=np.float64, ndmin=2)
    if data.shape[1] != p + 1:
        raise DimensionMismatchError("CSV rows do not match the header width")
    if not np.isfinite(data).all():
        raise NonFiniteError("dataset contains NaN or Inf")
    with open(companion_path(csv_path)) as fh:
        meta = json.load(fh)
    for key in ("groups", "overlapping"):
        if key not in meta:
            raise ValueError(f"companion JSON missing required key {key!r}")
    structure = validate_structure(
        [np.asarray(g, dtype=int) for g in meta["groups"]],
        p=p,
        overlapping=bool(meta["overlapping"]),
    )
    design = GroupedDesign(
        x=np.ascontiguousarray(data[:, 1:]), y=np.ascontiguousarray(data[:, 0]),
        structure=structure,
    )
    beta_true = meta.get("beta_true")
    info = {
        "beta_true": None if beta_true is None else np.asarray(beta_true, dtype=np.float64),
        "seed": meta.get("seed"),
    }
    return design, info


def result_to_dict(
    result: DcResult,
    config: SolverConfig,
    structure,
    overlapping: bool = False,
    strategy: str | None = None,
) -> dict:
    """Flatten a DcResult into the JSON-ready result document."""
    structure_mode = "feature" if overlapping else "group"
    if overlapping:
        features = result.feature_support.selected
    else:
        features = result.support.to_features(structure)
    per_shard = []
    for v in result.per_shard:
        per_shard.append(
            {
                "shard_id": v.shard_id,
                "failed": v.failed,
                "error": v.error or None,
                "converged": v.converged,
                "zero_response": v.zero_response,
                "support": _jsonify(v.support.selected),
                "local_beta": _jsonify(v.local_beta.beta),
                "local_intercept": v.local_beta.intercept,
                "lambda_selected": v.lambda_selected,
                "path_index": v.path_index,
                "bic": v.bic,
                "timing_s": v.timing,
            }
        )
    stage2 = []
    for k, e in enumerate(result.stage2):
        stage2.append(
            {
                "shard_id": k,
                "beta": _jsonify(e.beta),
                "intercept": e.intercept,
                "rank_deficient": e.rank_deficient,
                "separable": e.separable,
                "newton_iters": e.newton_iters,
                "grad_norm": e.grad_norm,
            }
        )
    doc = {
        "tool": TOOL_NAME,
        "version": __version__,
        "config": {
            "loss": config.loss,
            "path_length": config.path_length,
            "lambda_min_ratio": config.lambda_min_ratio,
            "max_iter": config.max_iter,
            "tol": config.tol,
            "weights_mode": config.weights_mode,
            "df_mode": config.df_mode,
            "m": result.m,
            "seed": result.seed,
            "overlapping": overlapping,
            "strategy": strategy if overlapping else None,
        },
        "support": {
            "groups": _jsonify(result.support.selected),
            "features": _jsonify(features),
        },
        "beta": _jsonify(result.beta.beta),
        "intercept": result.beta.intercept,
        "vote_counts": _jsonify(result.vote_counts),
        "feature_vote_counts": _jsonify(result.feature_vote_counts)
        if result.feature_vote_counts is not None
        else None,
        "per_shard": per_shard,
        "stage2": stage2,
        "failed_shards": _jsonify(list(result.failed_shards)),
        "flags": _jsonify(result.flags),
        "timings": _jsonify(result.timings),
        "mode": structure_mode,
    }
    return _jsonify(doc)


def result_bytes(doc: dict) -> bytes:
    return _canonical_bytes(_jsonify(doc))


def save_result(path: str, doc: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(result_bytes(doc))


def load_result(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def strip_timings(doc: dict) -> dict:
    """Copy of a result document without wall-time fields.

    Two runs with the same seed must agree on everything this returns.
    """
    out = json.loads(json.dumps(doc))
    out.pop("timings", None)
    for shard in out.get("per_shard", []):
        shard.pop("timing_s", None)
    return out
