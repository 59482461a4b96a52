"""Radius schedules, union bounds and Monte Carlo coverage experiments.

The concentration constants ``c1`` and ``c2`` are configuration inputs: they
come from a one-dimensional measure concentration inequality whose explicit
values are not available, so only the shape of the schedules is meaningful.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from ._seeding import derive_seed
from .reform import RobustProblem, Task
from .risk import EmpiricalDistribution1D, Risk
from .solver import DecisionSet, SolverConfig, solve
from .transport import BallSpec, LabelledDataset, Norm, as_order

__all__ = [
    "ConcentrationConfig",
    "radius_schedule",
    "schedule_branch",
    "threshold_sample_size",
    "covering_log_bound",
    "UnionConfig",
    "MomentEstimates",
    "UnionBound",
    "union_radius_and_residual",
    "GaussianScenario",
    "ProblemTemplate",
    "CoverageRow",
    "CoverageTable",
    "coverage_experiment",
]


@dataclass(frozen=True)
class ConcentrationConfig:
    """Constants of the light-tailed concentration bound.

    Attributes
    ----------
    c1, c2 : float
        Concentration constants (defaults 2 and 1).
    a : float
        Tail exponent; must exceed the Wasserstein order.
    A : float or None
        Exponential tail moment, recorded only.
    U_D, L_D : float
        Largest and smallest dual norm over the decision set.
    """

    c1: float = 2.0
    c2: float = 1.0
    a: float = 4.0
    A: float | None = None
    U_D: float = 1.0
    L_D: float = 1.0

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("c1 and c2 must be positive")
        if not (0 < self.L_D <= self.U_D):
            raise ValueError("need 0 < L_D <= U_D")


def _check(p, N, eta, cfg):
    p = as_order(p)
    if math.isinf(p):
        raise ValueError("the schedule needs a finite order (a > p is impossible for p = inf)")
    if not cfg.a > p:
        raise ValueError(f"tail exponent a={cfg.a} must exceed p={p}")
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if not N >= 1:
        raise ValueError("N must be at least 1")
    return p


def _log_ratio(log_c1_over_eta: float, N: float, cfg: ConcentrationConfig) -> float:
    return max(log_c1_over_eta, 0.0) / (cfg.c2 * N)


def _schedule_from_log(p, N, log_c1_over_eta, cfg) -> tuple[float, str]:
    ratio = _log_ratio(log_c1_over_eta, N, cfg)
    if N >= max(log_c1_over_eta, 0.0) / cfg.c2:
        return math.sqrt(ratio) / cfg.L_D, "large-N"
    return ratio ** (p / cfg.a) / cfg.L_D, "small-N"


def threshold_sample_size(eta: float, cfg: ConcentrationConfig) -> float:
    """``log(c1/eta)/c2``, where the schedule switches branch."""
    return max(math.log(cfg.c1 / eta), 0.0) / cfg.c2


def radius_schedule(p, N, eta, cfg: ConcentrationConfig | None = None) -> float:
    """Radius ``eps_{p,N}(eta) / L_D`` that makes the ball cover the truth w.p. ``1 - eta``.

    ``eps_{p,N}(eta) = (log(c1/eta)/(c2 N))^(1/2)`` for ``N >= log(c1/eta)/c2``
    and the same ratio to the power ``p/a`` otherwise.  When ``eta >= c1`` the
    logarithm is nonpositive and the radius is zero.
    """
    cfg = cfg or ConcentrationConfig()
    p = _check(p, N, eta, cfg)
    return _schedule_from_log(p, N, math.log(cfg.c1) - math.log(eta), cfg)[0]


def schedule_branch(p, N, eta, cfg: ConcentrationConfig | None = None) -> str:
    cfg = cfg or ConcentrationConfig()
    p = _check(p, N, eta, cfg)
    return _schedule_from_log(p, N, math.log(cfg.c1) - math.log(eta), cfg)[1]


def covering_log_bound(n: int, B: float, tau: float) -> float:
    """``n log(1 + 2B/tau)``, a bound on the log covering number of a set of diameter ``B``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if n < 0 or B < 0:
        raise ValueError("n and B must be nonnegative")
    return n * math.log1p(2.0 * B / tau)


@dataclass(frozen=True)
class UnionConfig:
    """Constants for the uniform (union) bound.

    ``form="general"`` uses the Lipschitz-in-law constant ``M``;
    ``form="expected_loss"`` uses the growth bound ``a1 ||x||^k + a2``.
    """

    n: int
    B: float
    k: float = 1.0
    form: str = "general"
    M: float = 0.0
    a1: float = 0.0
    a2: float = 0.0

    def __post_init__(self):
        if self.form not in ("general", "expected_loss"):
            raise ValueError("form must be 'general' or 'expected_loss'")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if min(self.M, self.a1, self.a2) < 0:
            raise ValueError("M, a1, a2 must be nonnegative")


@dataclass(frozen=True)
class MomentEstimates:
    """``E||X||^k`` and ``Var ||X||^k``; ``estimated`` marks sample plug-ins."""

    mean_norm_k: float
    var_norm_k: float
    k: float
    estimated: bool = True

    @classmethod
    def from_sample(cls, X, k: float, norm: Norm | None = None) -> "MomentEstimates":
        norm = norm or Norm.l2()
        r = np.asarray(norm(np.atleast_2d(np.asarray(X, float)))) ** k
        return cls(float(np.mean(r)), float(np.var(r)), k, True)


@dataclass(frozen=True)
class UnionBound:
    epsilon: float
    tau: float
    deflated_eta: float
    log_cover: float
    estimated: bool


def union_radius_and_residual(p, N, eta, cfg: ConcentrationConfig, ucfg: UnionConfig,
                              moments: MomentEstimates) -> UnionBound:
    """Radius at the covering-deflated level and the residual ``tau_N``."""
    p = _check(p, N, eta, cfg)
    if ucfg.k > p:
        raise ValueError("k must not exceed p")
    log_cover = covering_log_bound(ucfg.n, ucfg.B, 1.0 / N)
    # log of ceil(exp(log_cover)), stable for large covers
    log_count = math.log(math.ceil(math.exp(log_cover))) if log_cover < 700 else log_cover
    log_eta = math.log(eta) - log_count
    eps, _ = _schedule_from_log(p, N, math.log(cfg.c1) - log_eta, cfg)
    k = ucfg.k
    m, v = moments.mean_norm_k, moments.var_norm_k
    if ucfg.form == "general":
        tau = ucfg.M * (2 * m ** (1 / k) + v ** (1 / (2 * k)) + eps) / N
    else:
        c = 2 ** (k - 1)
        tau = (ucfg.a1 * (c + 1) * m + ucfg.a1 * c * (math.sqrt(v) + eps**k) + 2 * ucfg.a2) / N
    return UnionBound(eps, tau, math.exp(log_eta), log_cover, moments.estimated)


# ---------------------------------------------------------------------------
# coverage experiments


class ScenarioGenerator(Protocol):
    def sample(self, N: int, rng: np.random.Generator) -> LabelledDataset: ...


@dataclass(frozen=True)
class GaussianScenario:
    """Features ``X ~ N(0, I_n)``.

    With ``labelled=True`` labels are ``sign(w @ x + noise)`` for the fixed
    direction ``w = (1, ..., 1)/sqrt(n)``; otherwise every label is ``+1``.
    """

    n: int
    labelled: bool = False
    noise: float = 0.5

    def sample(self, N, rng):
        X = rng.standard_normal((N, self.n))
        if not self.labelled:
            return LabelledDataset.unlabelled(X)
        s = X @ (np.ones(self.n) / math.sqrt(self.n)) + self.noise * rng.standard_normal(N)
        return LabelledDataset(np.where(s >= 0, 1.0, -1.0), X)


@dataclass(frozen=True)
class ProblemTemplate:
    risk: Risk
    p: float
    norm: Norm
    decision_set: DecisionSet
    task: Task = Task.RISK_MIN

    def problem(self, data: LabelledDataset, eps: float) -> RobustProblem:
        return RobustProblem(data, self.risk, BallSpec(self.p, eps, self.norm), self.task)


@dataclass
class CoverageRow:
    eps: float
    trials: int
    covered: int
    coverage: float
    ci_lo: float
    ci_hi: float
    failures: int = 0


@dataclass
class CoverageTable:
    rows: list
    N: int
    holdout: int
    seed: int
    outcomes: np.ndarray = field(repr=False, default=None)

    def as_dict(self) -> dict:
        return {r.eps: r.coverage for r in self.rows}


def _wilson(k, n):
    if n == 0:
        return math.nan, math.nan
    lo, hi = proportion_confint(k, n, alpha=0.05, method="wilson")
    return float(lo), float(hi)


def coverage_experiment(gen: ScenarioGenerator, template: ProblemTemplate, eps_grid: Sequence[float],
                        trials: int, seed: int, N: int = 50, holdout: int = 100_000,
                        solver_cfg: SolverConfig | None = None) -> CoverageTable:
    """Fraction of trials in which the out-of-sample risk stays below the in-sample optimum.

    Each trial draws ``N`` training points, solves the robust problem for every
    radius in ``eps_grid`` (warm-starting from the previous radius), and
    compares the optimal value with the risk of the fitted decision on a
    shared hold-out sample of size ``holdout`` drawn from the same
    distribution.  All streams derive from ``seed``.
    """
    if holdout < 1:
        raise ValueError("holdout must be positive")
    solver_cfg = solver_cfg or SolverConfig(iters=60, restarts=2)
    eps_grid = [float(e) for e in eps_grid]
    order = np.argsort(eps_grid, kind="stable")
    hold = gen.sample(holdout, np.random.default_rng(derive_seed(seed, 0)))
    S_hold, w_hold = hold.signed_points(), hold.weights
    outcomes = np.full((trials, len(eps_grid)), -1, dtype=np.int8)
    cache: dict = {}

    def j_oos(beta):
        key = beta.tobytes()
        if key not in cache:
            cache[key] = float(template.risk.evaluate_columns(S_hold @ beta, w_hold)[0])
        return cache[key]

    for t in range(trials):
        data = gen.sample(N, np.random.default_rng(derive_seed(seed, 1, t)))
        warm = None
        cfg_t = replace(solver_cfg, seed=derive_seed(seed, 2, t))
        for j in order:
            try:
                rep = solve(template.problem(data, eps_grid[j]), template.decision_set, cfg_t, initial=warm)
            except (ArithmeticError, ValueError):
                continue
            warm = rep.beta_opt
            outcomes[t, j] = int(j_oos(rep.beta_opt) <= rep.value)
    rows = []
    for j, eps in enumerate(eps_grid):
        col = outcomes[:, j]
        ok = col >= 0
        n_ok, k = int(ok.sum()), int((col == 1).sum())
        lo, hi = _wilson(k, n_ok)
        rows.append(CoverageRow(eps, n_ok, k, k / n_ok if n_ok else math.nan, lo, hi, int((~ok).sum())))
    return CoverageTable(rows, N, holdout, seed, outcomes)
