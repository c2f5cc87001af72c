"""Shared test utilities: reference solvers and problem builders.

The proximal-gradient reference solves the same penalized objective as the
package solver by an entirely different method (gradient step + group
soft-threshold projection), so objective agreement between the two is a
meaningful correctness check.
"""

import numba
import numpy as np

from dcglasso import GroupedDesign, validate_structure


@numba.njit(cache=True)
def _prox_kernel(x, y, starts, ends, w, lam, step, max_iter, tol):
    n, p = x.shape
    q = starts.size
    b = np.zeros(p)
    for _ in range(max_iter):
        r = y - x @ b
        z = b + (2.0 * step) * (x.T @ r)
        delta = 0.0
        for i in range(q):
            s, e = starts[i], ends[i]
            nv = 0.0
            for j in range(s, e):
                nv += z[j] * z[j]
            nv = np.sqrt(nv)
            thr = step * lam * w[i]
            sc = 1.0 - thr / nv if nv > thr else 0.0
            for j in range(s, e):
                nb = sc * z[j]
                d = abs(nb - b[j])
                if d > delta:
                    delta = d
                b[j] = nb
        if delta < tol:
            break
    return b


def prox_reference(design, lam, max_iter=10**6, tol=1e-14):
    """Reference group-lasso minimizer of ||y - Xb||^2 + lam sum w_i ||b_i||.

    No intercept: pass a standardized design (centered y).  Step size is
    1/L with L the top eigenvalue of the smooth-part Hessian 2 X^T X.
    """
    st = design.structure
    perm = np.concatenate(st.groups)
    sizes = st.sizes
    ends = np.cumsum(sizes)
    starts = ends - sizes
    xb = np.ascontiguousarray(design.x[:, perm])
    L = 2.0 * float(np.linalg.eigvalsh(xb.T @ xb)[-1])
    bview = _prox_kernel(
        xb, design.y, starts.astype(np.int64), ends.astype(np.int64),
        st.weights.astype(np.float64), float(lam), 1.0 / max(L, 1e-300),
        max_iter, tol,
    )
    b = np.zeros(design.p)
    b[perm] = bview
    return b


def glasso_objective(design, beta, lam, intercept=0.0):
    """||y - X b - b0||^2 + lam * sum_i w_i ||b_i||, recomputed from scratch."""
    st = design.structure
    r = design.y - design.x @ beta - intercept
    pen = sum(
        w * np.linalg.norm(beta[g]) for g, w in zip(st.groups, st.weights)
    )
    return float(r @ r + lam * pen)


def make_problem(seed, n=50, q=4, d=3, active=2, snr=4.0, rho=0.0):
    """Random grouped regression instance; returns (design, beta_true)."""
    rng = np.random.default_rng(seed)
    p = q * d
    x = rng.standard_normal((n, p))
    if rho > 0:
        shared = rng.standard_normal(n)
        x = np.sqrt(rho) * shared[:, None] + np.sqrt(1 - rho) * x
    beta = np.zeros(p)
    picked = rng.choice(q, size=active, replace=False)
    for i in picked:
        beta[d * i : d * i + d] = rng.standard_normal(d)
    signal = x @ beta
    sd = np.std(signal) if np.std(signal) > 0 else 1.0
    y = signal + (sd / snr) * rng.standard_normal(n)
    groups = [np.arange(d * i, d * i + d) for i in range(q)]
    st = validate_structure(groups, p)
    return GroupedDesign(x=x, y=y, structure=st), beta
