"""Seeded generators for the synthetic grouped-regression benchmarks.

Non-overlap scenarios: q latent equicorrelated normals Z_i expand into
groups of three columns (Z_i, h2_i Z_i^2, h3_i Z_i^3) where h2, h3 give the
realized power columns unit vector norm; every s-th group is active with
coefficients (2/3, -1, 1/3) t_i and the noise is scaled to a fixed
signal-to-noise ratio.  The overlap benchmark draws a chain of 10-feature
groups with stride 5, activates each with probability 0.1, and adds tiny
noise.  Generators are pure functions of their seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import GroupedDesign
from .groups import validate_structure

__all__ = [
    "ScenarioSpec",
    "GroundTruth",
    "SCENARIOS",
    "scenario_spec",
    "gen_equicorrelated",
    "gen_scenario",
    "gen_overlap_scenario",
]

# (p, q, s, rho) of the six standard scenarios
SCENARIOS = {
    1: (300, 100, 10, 0.5),
    2: (300, 100, 20, 0.5),
    3: (3000, 1000, 10, 0.5),
    4: (3000, 1000, 20, 0.5),
    5: (3000, 1000, 10, 0.0),
    6: (3000, 1000, 20, 0.0),
}


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one non-overlap scenario instance."""

    p: int
    q: int
    s: int
    rho: float
    n: int
    seed: int
    snr_mode: str = "sd"  # "sd": sd(signal)/sd(noise)=3; "variance": var ratio = 3

    def __post_init__(self):
        if self.p != 3 * self.q:
            raise ValueError(f"p must equal 3q, got p={self.p}, q={self.q}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must be in [0, 1)")
        if self.s < 1 or self.q % self.s != 0:
            raise ValueError("s must divide q evenly")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.snr_mode not in ("sd", "variance"):
            raise ValueError(f"unknown snr_mode {self.snr_mode!r}")

    @property
    def active_groups(self) -> np.ndarray:
        """0-based indices of active groups: multiples of s in 1-based numbering."""
        return np.arange(self.s - 1, self.q, self.s)


@dataclass(frozen=True)
class GroundTruth:
    """True coefficients and the generator's internal draws.

    ``epsilon`` is the realized standard-normal noise vector, so
    ``y = signal + noise_scale * epsilon`` is reconstructible exactly;
    ``h2``/``h3`` are the power-column normalizers (1/vector norm).
    """

    beta_true: np.ndarray
    active_groups: np.ndarray
    noise_scale: float
    t: np.ndarray | None = None
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    support_features: np.ndarray | None = None
    epsilon: np.ndarray | None = None
    h2: np.ndarray | None = None
    h3: np.ndarray | None = None
    resamples: int = 0


def scenario_spec(scenario: int, n: int, seed: int, snr_mode: str = "sd") -> ScenarioSpec:
    """Spec of one of the six standard scenarios at a given sample size."""
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be in {sorted(SCENARIOS)}, got {scenario}")
    p, q, s, rho = SCENARIOS[scenario]
    return ScenarioSpec(p=p, q=q, s=s, rho=rho, n=n, seed=seed, snr_mode=snr_mode)


def gen_equicorrelated(n: int, q: int, rho: float, seed) -> np.ndarray:
    """n rows i.i.d. from N(0, Sigma), Sigma = (1-rho) I + rho 11^T.

    Built as sqrt(rho) g 1^T + sqrt(1-rho) G with g, G standard normal,
    which gives the equicorrelation structure exactly.  ``seed`` may be an
    integer or an existing Generator (draw order: g then G).
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must be in [0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g = rng.standard_normal(n)
    G = rng.standard_normal((n, q))
    return np.sqrt(rho) * g[:, None] + np.sqrt(1.0 - rho) * G


def gen_scenario(spec: ScenarioSpec):
    """Generate one scenario dataset.

    Returns (raw GroupedDesign, GroundTruth).  Draw order given the seed:
    g, G (latent normals), per-active-group u then v, then the noise vector.
    Degenerate power columns (identically zero Z_i^2 or Z_i^3) trigger a
    full redraw of Z; this cannot occur for continuous data but is guarded.
    """
    rng = np.random.default_rng(spec.seed)
    resamples = 0
    for _ in range(10):
        Z = gen_equicorrelated(spec.n, spec.q, spec.rho, rng)
        Z2 = Z * Z
        Z3 = Z2 * Z
        n2 = np.linalg.norm(Z2, axis=0)
        n3 = np.linalg.norm(Z3, axis=0)
        if np.all(n2 > 0.0) and np.all(n3 > 0.0):
            break
        resamples += 1
    else:
        raise ValueError("could not draw non-degenerate power columns")
    x = np.empty((spec.n, spec.p))
    x[:, 0::3] = Z
    x[:, 1::3] = Z2 / n2
    x[:, 2::3] = Z3 / n3

    active = spec.active_groups
    u = rng.integers(0, 2, size=active.size)
    v = rng.standard_normal(active.size)
    t = np.where(u == 0, 1.0, -1.0) * (3.0 + v)
    beta = np.zeros(spec.p)
    beta[3 * active] = (2.0 / 3.0) * t
    beta[3 * active + 1] = -t
    beta[3 * active + 2] = t / 3.0

    signal = x @ beta
    eps = rng.standard_normal(spec.n)
    sd_signal = float(np.std(signal))
    if spec.snr_mode == "sd":
        k = sd_signal / 3.0
    else:
        k = sd_signal / np.sqrt(3.0)
    y = signal + k * eps

    groups = [[3 * i, 3 * i + 1, 3 * i + 2] for i in range(spec.q)]
    structure = validate_structure(groups, spec.p, overlapping=False)
    design = GroupedDesign(x=x, y=y, structure=structure)
    truth = GroundTruth(
        beta_true=beta,
        active_groups=active,
        noise_scale=k,
        t=t,
        u=u,
        v=v,
        support_features=np.flatnonzero(beta != 0.0),
        epsilon=eps,
        h2=1.0 / n2,
        h3=1.0 / n3,
        resamples=resamples,
    )
    return design, truth


def gen_overlap_scenario(p: int, n: int, seed: int, activation_prob: float = 0.1):
    """Chain-overlap benchmark: 10-feature groups at stride 5 over p features.

    Each group is active independently with probability 0.1; active
    features get i.i.d. N(0,1) coefficients (one draw per feature in the
    union); X is i.i.d. N(0,1) and Y = X beta + 0.01 eps.  If no group
    activates, activations are redrawn and the count recorded.  Draw order:
    activations (with redraws), X, coefficients, noise.
    """
    if p < 10 or p % 5 != 0:
        raise ValueError("p must be >= 10 and divisible by 5")
    q = (p - 10) // 5 + 1
    groups = [list(range(5 * j, 5 * j + 10)) for j in range(q)]
    rng = np.random.default_rng(seed)
    resamples = 0
    active_mask = rng.random(q) < activation_prob
    while not np.any(active_mask):
        active_mask = rng.random(q) < activation_prob
        resamples += 1
    active = np.flatnonzero(active_mask)
    x = rng.standard_normal((n, p))
    structure = validate_structure(groups, p, overlapping=True)
    union = structure.features_of(active)
    beta = np.zeros(p)
    beta[union] = rng.standard_normal(union.size)
    eps = rng.standard_normal(n)
    y = x @ beta + 0.01 * eps
    design = GroupedDesign(x=x, y=y, structure=structure)
    truth = GroundTruth(
        beta_true=beta,
        active_groups=active,
        noise_scale=0.01,
        support_features=union,
        epsilon=eps,
        resamples=resamples,
    )
    return design, truth
