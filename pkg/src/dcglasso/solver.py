"""Group-lasso path solver with KKT certificates, BIC selection, and refits.

Objective (squared loss, standardized design):

    J(beta) = ||y - X beta||_2^2 + lambda * sum_i w_i ||beta_i||_2

with no 1/2 and no 1/n factor, so every optimality constant carries the
factor 2 (lambda values are not interchangeable with solvers that scale the
loss differently).  Logistic loss uses the deviance -2 loglik, which keeps
the gradient equal to -2 X^T (y - p) and makes the same KKT formulas apply
with r = y - p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._gmd import sweep_logistic, sweep_squared
from .design import GroupCoefficients, GroupedDesign, SupportPattern
from .exceptions import AllPathsFailedError, NonFiniteError
from .groups import GroupStructure, validate_structure

__all__ = [
    "SolverConfig",
    "FitResult",
    "RefitResult",
    "PathFit",
    "lambda_max",
    "lambda_path",
    "fit_glasso",
    "kkt_residual",
    "fit_path",
    "bic_select",
    "refit",
    "objective_value",
    "apply_weights_mode",
]

# A fit is certified converged when the KKT residual is within this factor
# of the coefficient-change tolerance.
KKT_CERT_FACTOR = 10.0

_EMPTY_F8 = np.empty(0, dtype=np.float64)
_EMPTY_I8 = np.empty(0, dtype=np.int64)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the path solver.

    tol is the largest coefficient change allowed in the final sweep; the
    convergence certificate additionally requires the KKT residual to be at
    most 10*tol.  df_mode picks the degrees-of-freedom convention used by
    the BIC score: "coef" counts nonzero coefficients, "group" counts
    nonzero groups (useful when the per-coefficient penalty log(n) per
    nonzero entry is too strong for group-level selection).
    """

    loss: str = "squared"
    path_length: int = 100
    lambda_min_ratio: float = 0.001
    max_iter: int = 3000
    tol: float = 1e-8
    weights_mode: str = "sqrt_size"
    df_mode: str = "coef"

    def __post_init__(self):
        if self.loss not in ("squared", "logistic"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.path_length < 1:
            raise ValueError("path_length must be >= 1")
        if not 0.0 < self.lambda_min_ratio < 1.0:
            raise ValueError("lambda_min_ratio must be in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.weights_mode not in ("sqrt_size", "unweighted"):
            raise ValueError(f"unknown weights_mode {self.weights_mode!r}")
        if self.df_mode not in ("coef", "group"):
            raise ValueError(f"unknown df_mode {self.df_mode!r}")


def apply_weights_mode(structure: GroupStructure, mode: str) -> GroupStructure:
    """Rebuild a structure's penalty weights according to a weights mode."""
    return validate_structure(
        [g for g in structure.groups],
        structure.p,
        overlapping=structure.overlapping,
        weights=mode,
    )


@dataclass(frozen=True)
class FitResult(GroupCoefficients):
    """Solution of one fit_glasso call plus its convergence certificate."""

    converged: bool = True
    iterations: int = 0
    kkt: float = 0.0
    lam: float = 0.0


@dataclass(frozen=True)
class RefitResult(GroupCoefficients):
    """Unpenalized refit restricted to a support, with diagnostic flags."""

    rank_deficient: bool = False
    separable: bool = False
    newton_iters: int = 0
    grad_norm: float = 0.0


@dataclass
class PathFit:
    """Solutions along a descending lambda sequence with per-lambda scores."""

    lambdas: np.ndarray
    solutions: list
    objective_values: np.ndarray
    bic_scores: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    kkt_residuals: np.ndarray
    failed: np.ndarray
    structure: GroupStructure
    loss: str
    df_mode: str
    zero_response: bool = False

    def __len__(self) -> int:
        return len(self.lambdas)


class _SolverView:
    """Problem data rearranged so each group is a contiguous row block."""

    def __init__(self, design: GroupedDesign, loss: str):
        st = design.structure
        self.structure = st
        self.loss = loss
        self.perm = np.concatenate(st.groups).astype(np.int64)
        sizes = st.sizes
        self.starts = np.zeros(st.q, dtype=np.int64)
        np.cumsum(sizes[:-1], out=self.starts[1:])
        self.ends = self.starts + sizes
        self.sizes = sizes
        self.XT = np.ascontiguousarray(design.x.T[self.perm])
        self.y = design.y
        self.n = design.n
        self.p = self.perm.size
        self.q = st.q
        self.w = st.weights
        factor = 2.0 if loss == "squared" else 0.5
        gam = np.empty(st.q)
        for g in range(st.q):
            block = self.XT[self.starts[g] : self.ends[g]]
            gam[g] = factor * _top_eigenvalue(block @ block.T)
        self.gamma = gam

    def to_view(self, beta_orig: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(beta_orig[self.perm])

    def to_original(self, beta_view: np.ndarray) -> np.ndarray:
        out = np.zeros(self.p)
        out[self.perm] = beta_view
        return out


def _top_eigenvalue(a: np.ndarray, steps: int = 20, rtol: float = 1e-6) -> float:
    """Largest eigenvalue of a small symmetric PSD matrix by power iteration.

    Exact for 1x1 blocks; for larger blocks the estimate is inflated by a
    hair so it stays a valid majorization constant if the iteration stops
    just short of the true value.
    """
    d = a.shape[0]
    if d == 1:
        return float(a[0, 0])
    v = np.full(d, 1.0 / math.sqrt(d))
    lam = 0.0
    for _ in range(steps):
        av = a @ v
        nrm = float(np.linalg.norm(av))
        if nrm == 0.0:
            return 0.0
        v = av / nrm
        new_lam = float(v @ (a @ v))
        if lam > 0.0 and abs(new_lam - lam) <= rtol * new_lam:
            lam = new_lam
            break
        lam = new_lam
    return lam * (1.0 + 1e-6)


def _grad_norms_by_group(v: np.ndarray, starts: np.ndarray) -> np.ndarray:
    return np.sqrt(np.add.reduceat(v * v, starts))


def _null_gradient(view: _SolverView):
    """Full gradient of the loss at the null model, and the null residual."""
    if view.loss == "squared":
        r = view.y.copy()
    else:
        pbar = float(np.mean(view.y))
        r = view.y - pbar
    return 2.0 * (view.XT @ r), r


def lambda_max(design: GroupedDesign, loss: str = "squared") -> float:
    """Smallest lambda whose solution is identically zero.

    Equals max_i 2 ||X_i^T y||_2 / w_i for squared loss on a centered
    response; the logistic analog evaluates the null-model gradient at the
    intercept-only fit.  Returns 0.0 when the response carries no signal
    (y all zeros after centering, or single-class labels).
    """
    view = _SolverView(design, loss)
    grad, _ = _null_gradient(view)
    norms = _grad_norms_by_group(grad, view.starts)
    return float(np.max(norms / view.w))


def lambda_path(lmax: float, config: SolverConfig) -> np.ndarray:
    """Log-spaced sequence of path_length lambdas from lmax down."""
    if lmax <= 0.0:
        raise ValueError("lambda_path needs lmax > 0; zero-signal designs get a degenerate path")
    if config.path_length == 1:
        return np.array([lmax])
    return np.geomspace(lmax, lmax * config.lambda_min_ratio, config.path_length)


def _kkt_view(v2, beta, starts, sizes, lamw):
    """KKT residual in view coordinates (contiguous groups)."""
    gn2 = np.add.reduceat(v2 * v2, starts)
    bn = np.sqrt(np.add.reduceat(beta * beta, starts))
    active = bn > 0.0
    out = 0.0
    if np.any(~active):
        excess = np.sqrt(gn2[~active]) - lamw[~active]
        out = max(out, float(np.max(excess)))
    if np.any(active):
        scale = np.zeros(len(starts))
        scale[active] = lamw[active] / bn[active]
        diff = np.abs(v2 - beta * np.repeat(scale, sizes))
        mask = np.repeat(active, sizes)
        out = max(out, float(np.max(diff[mask])))
    return max(out, 0.0)


def _fit_at_lambda(view, lam, config, beta, r_or_eta, b0, obj_out=_EMPTY_F8):
    """Active-set GMD at one lambda; state arrays are updated in place.

    For squared loss ``r_or_eta`` is the residual y - X beta; for logistic
    it is the linear predictor X beta + b0.  Returns
    (iterations, converged, kkt, b0).
    """
    lamw = lam * view.w
    starts, ends, sizes = view.starts, view.ends, view.sizes
    nrm2 = np.add.reduceat(beta * beta, starts)
    active = np.flatnonzero(nrm2 > 0.0)
    iters = 0
    converged = False
    kkt = np.inf
    stalls = 0
    logistic = view.loss == "logistic"
    while True:
        budget = config.max_iter - iters
        if budget > 0 and (active.size > 0 or logistic):
            if logistic:
                sw, _, b0 = sweep_logistic(
                    view.XT, view.y, r_or_eta, beta, b0,
                    starts, ends, view.gamma, lamw, active,
                    budget, config.tol, obj_out,
                )
            else:
                sw, _ = sweep_squared(
                    view.XT, r_or_eta, beta,
                    starts, ends, view.gamma, lamw, active,
                    budget, config.tol, obj_out,
                )
            iters += sw
        if logistic:
            r = view.y - 1.0 / (1.0 + np.exp(-r_or_eta))
            v2 = 2.0 * (view.XT @ r)
            intercept_grad = abs(2.0 * float(np.sum(r)))
        else:
            v2 = 2.0 * (view.XT @ r_or_eta)
            intercept_grad = 0.0
        new_kkt = max(_kkt_view(v2, beta, starts, sizes, lamw), intercept_grad)
        if new_kkt <= KKT_CERT_FACTOR * config.tol:
            kkt = new_kkt
            converged = True
            break
        if iters >= config.max_iter:
            kkt = new_kkt
            break
        gn2 = np.add.reduceat(v2 * v2, starts)
        nrm2 = np.add.reduceat(beta * beta, starts)
        viol = np.flatnonzero((nrm2 == 0.0) & (gn2 > lamw * lamw))
        if viol.size > 0:
            active = np.union1d(active, viol)
            stalls = 0
        else:
            if active.size == 0 and not logistic:
                # all-zero solution already certified up to new_kkt > cert;
                # nothing to sweep, so report as-is
                kkt = new_kkt
                break
            # certificate not met but no new groups and deltas under tol:
            # keep sweeping a bounded number of times before giving up
            stalls += 1
            if new_kkt < kkt:
                kkt = new_kkt
                stalls = 0
            if stalls >= 50:
                break
        kkt = min(kkt, new_kkt)
    return iters, converged, float(kkt), b0


def fit_glasso(design, lam, config=None, warm_start=None):
    """Solve the group-lasso problem at a single lambda.

    The design is expected standardized (see :func:`dcglasso.standardize`);
    the math does not require it but the default lambda scales assume it.
    Returns a :class:`FitResult` whose ``converged`` flag certifies
    kkt_residual <= 10 * tol.
    """
    config = config or SolverConfig()
    if lam < 0.0:
        raise ValueError("lambda must be >= 0")
    view = _SolverView(design, config.loss)
    if warm_start is not None:
        beta = view.to_view(np.asarray(warm_start.beta, dtype=np.float64))
        b0 = float(warm_start.intercept)
    else:
        beta = np.zeros(view.p)
        b0 = _null_intercept(view) if config.loss == "logistic" else 0.0
    if config.loss == "logistic":
        state = view.XT.T @ beta + b0
    else:
        state = view.y - view.XT.T @ beta
    iters, converged, kkt, b0 = _fit_at_lambda(view, lam, config, beta, state, b0)
    if not np.all(np.isfinite(beta)):
        raise NonFiniteError("solver produced non-finite coefficients")
    return FitResult(
        beta=view.to_original(beta),
        intercept=b0,
        converged=converged,
        iterations=iters,
        kkt=kkt,
        lam=float(lam),
    )


def _null_intercept(view) -> float:
    pbar = min(max(float(np.mean(view.y)), 1e-12), 1.0 - 1e-12)
    return math.log(pbar / (1.0 - pbar))


def kkt_residual(design, coef, lam, loss: str = "squared") -> float:
    """Optimality certificate: the largest violated stationarity condition.

    For groups with nonzero coefficients this is the sup-norm of
    2 X_i^T r - lambda w_i beta_i / ||beta_i||; for zero groups the excess
    of ||2 X_i^T r||_2 over lambda w_i.  The logistic version uses
    r = y - p and adds the intercept gradient |2 sum(r)|.
    """
    st = design.structure
    beta = np.asarray(coef.beta, dtype=np.float64)
    b0 = float(coef.intercept)
    if loss == "squared":
        r = design.y - design.x @ beta - b0
        extra = 0.0
    else:
        eta = design.x @ beta + b0
        with np.errstate(over="ignore"):
            r = design.y - 1.0 / (1.0 + np.exp(-eta))
        extra = abs(2.0 * float(np.sum(r)))
    v2 = 2.0 * (design.x.T @ r)
    out = extra
    for i in range(st.q):
        idx = st.groups[i]
        gv = v2[idx]
        bg = beta[idx]
        nb = float(np.linalg.norm(bg))
        lw = lam * st.weights[i]
        if nb > 0.0:
            out = max(out, float(np.max(np.abs(gv - lw * bg / nb))))
        else:
            out = max(out, float(np.linalg.norm(gv)) - lw)
    return max(out, 0.0)


def objective_value(design, coef, lam, loss: str = "squared") -> float:
    """J(beta) = loss + lambda * sum_i w_i ||beta_i||_2 on the given design."""
    st = design.structure
    beta = np.asarray(coef.beta, dtype=np.float64)
    b0 = float(coef.intercept)
    eta = design.x @ beta + b0
    if loss == "squared":
        loss_val = float(np.sum((design.y - eta) ** 2))
    else:
        loss_val = float(
            -2.0 * np.sum(design.y * eta - np.logaddexp(0.0, eta))
        )
    pen = sum(
        st.weights[i] * float(np.linalg.norm(beta[st.groups[i]]))
        for i in range(st.q)
    )
    return loss_val + lam * pen


def _deviance(y: np.ndarray, eta: np.ndarray) -> float:
    return float(-2.0 * np.sum(y * eta - np.logaddexp(0.0, eta)))


def _bic_terms(view, beta_view, eta_or_r, n, df_mode):
    """(fit term, df) of the BIC score for one path solution."""
    if view.loss == "squared":
        rss = float(eta_or_r @ eta_or_r)
        fit_term = n * math.log(max(rss, 1e-300) / n)
    else:
        fit_term = _deviance(view.y, eta_or_r)
    if df_mode == "coef":
        df = int(np.count_nonzero(beta_view))
    else:
        df = int(np.count_nonzero(np.add.reduceat(beta_view * beta_view, view.starts)))
    return fit_term, df


def fit_path(design: GroupedDesign, config: SolverConfig | None = None) -> PathFit:
    """Fit the full descending lambda path with warm starts.

    Per-lambda failures are isolated: a failed point is recorded with NaN
    solution and +inf BIC and the path continues.  A response with no
    signal (lambda_max = 0) produces a degenerate single-point path at
    lambda = 0 with the zero solution, flagged ``zero_response``.
    """
    config = config or SolverConfig()
    view = _SolverView(design, config.loss)
    n = view.n
    grad0, _ = _null_gradient(view)
    lmax = float(np.max(_grad_norms_by_group(grad0, view.starts) / view.w))
    st = design.structure

    if lmax <= 0.0:
        zero = GroupCoefficients(np.zeros(view.p), 0.0 if config.loss == "squared" else _null_intercept(view))
        if config.loss == "squared":
            fit_term = n * math.log(max(float(view.y @ view.y), 1e-300) / n)
        else:
            fit_term = _deviance(view.y, np.full(n, zero.intercept))
        return PathFit(
            lambdas=np.array([0.0]),
            solutions=[zero],
            objective_values=np.array([fit_term if config.loss == "logistic" else float(view.y @ view.y)]),
            bic_scores=np.array([fit_term]),
            iterations=np.zeros(1, dtype=int),
            converged=np.ones(1, dtype=bool),
            kkt_residuals=np.zeros(1),
            failed=np.zeros(1, dtype=bool),
            structure=st,
            loss=config.loss,
            df_mode=config.df_mode,
            zero_response=True,
        )

    lambdas = lambda_path(lmax, config)
    L = len(lambdas)
    beta = np.zeros(view.p)
    b0 = _null_intercept(view) if config.loss == "logistic" else 0.0
    if config.loss == "logistic":
        state = np.full(n, b0)
    else:
        state = view.y.copy()
    solutions = []
    objective_values = np.full(L, np.nan)
    bic_scores = np.full(L, np.inf)
    iterations = np.zeros(L, dtype=int)
    converged = np.zeros(L, dtype=bool)
    kkt_residuals = np.full(L, np.nan)
    failed = np.zeros(L, dtype=bool)
    log_n = math.log(n)
    for k, lam in enumerate(lambdas):
        beta_bak = beta.copy()
        state_bak = state.copy()
        b0_bak = b0
        try:
            iters, ok, kkt, b0 = _fit_at_lambda(view, lam, config, beta, state, b0)
            if not np.all(np.isfinite(beta)):
                raise NonFiniteError("non-finite coefficients on path")
        except Exception:
            failed[k] = True
            solutions.append(GroupCoefficients(np.full(view.p, np.nan), np.nan))
            beta, state, b0 = beta_bak, state_bak, b0_bak
            continue
        lamw = lam * view.w
        pen = float(lamw @ np.sqrt(np.add.reduceat(beta * beta, view.starts)))
        fit_term, df = _bic_terms(view, beta, state, n, config.df_mode)
        if config.loss == "squared":
            objective_values[k] = float(state @ state) + pen
        else:
            objective_values[k] = _deviance(view.y, state) + pen
        bic_scores[k] = fit_term + df * log_n
        iterations[k] = iters
        converged[k] = ok
        kkt_residuals[k] = kkt
        solutions.append(GroupCoefficients(view.to_original(beta), b0))
    return PathFit(
        lambdas=lambdas,
        solutions=solutions,
        objective_values=objective_values,
        bic_scores=bic_scores,
        iterations=iterations,
        converged=converged,
        kkt_residuals=kkt_residuals,
        failed=failed,
        structure=st,
        loss=config.loss,
        df_mode=config.df_mode,
    )


def bic_select(path: PathFit, n: int) -> tuple[int, SupportPattern]:
    """Index of the BIC-minimal path point and its group support.

    Ties break toward larger lambda (the sparser model, earlier on the
    descending path).  Raises AllPathsFailedError when no path point
    produced a usable solution.
    """
    scores = np.where(path.failed, np.inf, path.bic_scores)
    if not np.any(np.isfinite(scores)):
        raise AllPathsFailedError("no usable solution on the path")
    idx = int(np.argmin(scores))
    coef = path.solutions[idx]
    support = SupportPattern(mode="group", selected=coef.nonzero_groups(path.structure))
    return idx, support


def refit(design: GroupedDesign, support, loss: str = "squared") -> RefitResult:
    """Unpenalized least-squares or logistic fit restricted to a support.

    Operates on the raw (unstandardized) design; the intercept is always
    included.  Takes a group-mode or feature-mode support.  A rank-deficient
    column submatrix yields the minimum-norm solution with a flag; logistic
    fits run damped Newton with a tiny ridge and flag separable data when
    the gradient cannot be driven to zero within 50 steps.
    """
    st = design.structure
    if isinstance(support, SupportPattern):
        cols = support.to_features(st)
    else:
        cols = np.unique(np.asarray(support, dtype=int))
    p = design.p
    beta = np.zeros(p)
    y = design.y
    if cols.size == 0:
        if loss == "squared":
            return RefitResult(beta=beta, intercept=float(np.mean(y)))
        pbar = min(max(float(np.mean(y)), 1e-12), 1.0 - 1e-12)
        return RefitResult(beta=beta, intercept=math.log(pbar / (1.0 - pbar)))
    xs = design.x[:, cols]
    if loss == "squared":
        mu = xs.mean(axis=0)
        ym = float(y.mean())
        sol, _, rank, _ = np.linalg.lstsq(xs - mu, y - ym, rcond=None)
        beta[cols] = sol
        intercept = ym - float(mu @ sol)
        resid = y - xs @ sol - intercept
        grad_norm = float(np.max(np.abs(xs.T @ resid))) if cols.size else 0.0
        return RefitResult(
            beta=beta,
            intercept=intercept,
            rank_deficient=bool(rank < cols.size),
            grad_norm=grad_norm,
        )
    return _logistic_refit(xs, y, cols, p)


def _logistic_refit(xs, y, cols, p, max_steps=50, grad_tol=1e-8, ridge=1e-8):
    n, k = xs.shape
    xa = np.hstack([np.ones((n, 1)), xs])
    coef = np.zeros(k + 1)
    pbar = min(max(float(np.mean(y)), 1e-12), 1.0 - 1e-12)
    coef[0] = math.log(pbar / (1.0 - pbar))
    eta = xa @ coef
    dev = _deviance(y, eta)
    grad_norm = np.inf
    it = 0
    for it in range(1, max_steps + 1):
        with np.errstate(over="ignore"):
            prob = 1.0 / (1.0 + np.exp(-eta))
        grad = -2.0 * (xa.T @ (y - prob))
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= grad_tol:
            break
        w = prob * (1.0 - prob)
        hess = 2.0 * (xa.T * w) @ xa
        hess[np.diag_indices_from(hess)] += ridge
        step = np.linalg.solve(hess, -grad)
        # damped: halve until the deviance does not increase
        t = 1.0
        for _ in range(30):
            new_eta = eta + t * (xa @ step)
            new_dev = _deviance(y, new_eta)
            if new_dev <= dev + 1e-12:
                break
            t *= 0.5
        coef = coef + t * step
        eta = xa @ coef
        dev = _deviance(y, eta)
    separable = grad_norm > grad_tol
    beta = np.zeros(p)
    beta[cols] = coef[1:]
    return RefitResult(
        beta=beta,
        intercept=float(coef[0]),
        separable=separable,
        newton_iters=it,
        grad_norm=grad_norm,
    )
