"""Random instance suites comparing closed forms with the numeric oracle.

Each instance is a small labelled dataset, a decision ``beta`` and a ball.  The
closed form is :func:`wdro.reform.robust_value`; the reference is
:func:`wdro.oracle.sup_risk_numeric` on the projected distribution with the
effective radius ``epsilon * ||beta||_*``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ._seeding import derive_seed
from .oracle import OracleConfig, falsify_equivalence, sup_risk_numeric
from .reform import RobustProblem, Task, dual_norm, robust_value
from .risk import (
    Absolute,
    AbsoluteValue,
    CVaR,
    CVaRDeviation,
    Distortion,
    DistortionDeviation,
    DistortionFunction,
    EmpiricalDistribution1D,
    ExpectedLoss,
    ExpNeg,
    HingeNeg,
    HingePos,
    InfRepDev,
    InfRepRisk,
    Linear,
    Loss,
    Negated,
    PowerOf,
    Risk,
    ShiftedAbs,
    TwoSidedHinge,
    Variance,
    softplus,
)
from .transport import INF, BallSpec, LabelledDataset, Norm, project_pushforward

__all__ = [
    "FAMILIES",
    "Instance",
    "random_convex_distortion",
    "make_instance",
    "build_suite",
    "check_instance",
    "run_suite",
    "falsification_rows",
    "random_projection_instances",
]

EPS_GRID = (0.0, 0.1, 1.0)
NORMS = ("L1", "L2", "Linf")


@dataclass(frozen=True)
class Instance:
    family: str
    problem: RobustProblem
    beta: np.ndarray
    tolerance: float
    degenerate: bool
    degenerate_tolerance: float = 1e-3

    @property
    def projection(self) -> EmpiricalDistribution1D:
        return project_pushforward(self.problem.data, self.beta)

    @property
    def radius(self) -> float:
        return self.problem.ball.epsilon * dual_norm(self.beta, self.problem.ball.norm)


def random_convex_distortion(rng: np.random.Generator, increasing: bool = True,
                             segments: int | None = None) -> DistortionFunction:
    """Random convex piecewise-linear ``h`` with ``h(0) = 0`` and ``h(1) = 1``."""
    K = int(segments or rng.integers(2, 7))
    inner = np.sort(rng.uniform(0.02, 0.98, K - 1))
    inner = inner[np.concatenate(([True], np.diff(inner) > 1e-3))]
    knots = np.concatenate(([0.0], inner, [1.0]))
    steps = rng.exponential(size=knots.size - 1)
    slopes = np.cumsum(steps)
    if not increasing:
        slopes = slopes - rng.uniform(0, slopes[-1])
    values = np.concatenate(([0.0], np.cumsum(slopes * np.diff(knots))))
    if values[-1] > 0:
        values = values / values[-1]
    return DistortionFunction(knots, values)


def _random_hinge(rng, kinds=("HingePos", "HingeNeg", "TwoSidedHinge", "ShiftedAbs")) -> Loss:
    kind = kinds[int(rng.integers(len(kinds)))]
    m = float(rng.normal(scale=0.7))
    if kind == "HingePos":
        return HingePos(m)
    if kind == "HingeNeg":
        return HingeNeg(m)
    if kind == "TwoSidedHinge":
        return TwoSidedHinge(m, float(rng.uniform(0, 1)))
    return ShiftedAbs(m, float(rng.uniform(0.1, 1)))


def _risk_for(family: str, p: float, rng) -> tuple[Risk, Task]:
    if family == "lipschitz":
        if rng.random() < 0.5:
            return ExpectedLoss(Linear(float(rng.normal(scale=2)), float(rng.normal()))), Task.CLASSIFICATION
        return ExpectedLoss(Absolute(float(rng.normal()), float(rng.uniform(0.1, 3)), float(rng.uniform(0, 1)))), Task.CLASSIFICATION
    if family == "lipschitz-p1":
        return ExpectedLoss(_random_hinge(rng)), Task.CLASSIFICATION
    if family == "higher-order":
        return ExpectedLoss(PowerOf(_random_hinge(rng), p)), Task.CLASSIFICATION
    if family == "nu-svm":
        return Negated(CVaR(float(rng.uniform(0.1, 0.9)))), Task.CLASSIFICATION
    if family == "nu-svr":
        return AbsoluteValue(CVaR(float(rng.uniform(0.1, 0.9)))), Task.REGRESSION
    if family == "higher-moment":
        return InfRepRisk(HingePos(0.0), p, float(rng.uniform(1, 4))), Task.RISK_MIN
    if family == "variance":
        return Variance(), Task.RISK_MIN
    if family == "deviation":
        loss = _random_hinge(rng, ("TwoSidedHinge", "ShiftedAbs"))
        return InfRepDev(loss, p), Task.RISK_MIN
    if family == "distortion":
        pick = int(rng.integers(4))
        if pick == 0:
            return Distortion(random_convex_distortion(rng)), Task.RISK_MIN
        if pick == 1:
            return DistortionDeviation(random_convex_distortion(rng)), Task.RISK_MIN
        if pick == 2:
            return AbsoluteValue(Distortion(random_convex_distortion(rng))), Task.REGRESSION
        return CVaRDeviation(float(rng.uniform(0.1, 0.9))), Task.RISK_MIN
    if family == "typeinf":
        pick = int(rng.integers(3))
        if pick == 0:
            return ExpectedLoss(ExpNeg(float(rng.uniform(0.2, 1.5)))), Task.CLASSIFICATION
        if pick == 1:
            return CVaR(float(rng.uniform(0.1, 0.9))), Task.RISK_MIN
        return ExpectedLoss(PowerOf(HingePos(float(rng.normal())), 2.0)), Task.RISK_MIN
    raise ValueError(f"unknown family {family!r}")


FAMILIES = {
    # family: (orders, tolerance)
    "lipschitz": ((1.0, 1.5, 2.0, INF), 1e-6),
    "lipschitz-p1": ((1.0,), 1e-6),
    "higher-order": ((2.0, 3.0), 1e-6),
    "nu-svm": ((1.0,), 1e-6),
    "nu-svr": ((1.0,), 1e-6),
    "higher-moment": ((2.0, 3.0), 1e-6),
    "variance": ((2.0,), 1e-8),
    "deviation": ((1.0, 2.0, 3.0), 1e-6),
    "distortion": ((1.0, 1.5, 2.0, INF), 1e-5),
    "typeinf": ((INF,), 1e-6),
}


def _degenerate(family: str, risk: Risk, dist: EmpiricalDistribution1D) -> bool:
    """True when the worst case is only approached by escaping perturbations."""
    if family == "lipschitz-p1":
        loss = risk.loss
        z = dist.atoms
        if isinstance(loss, HingePos):
            return bool(z.max() < loss.m)
        if isinstance(loss, HingeNeg):
            return bool(z.min() > loss.m)
        if isinstance(loss, TwoSidedHinge):
            return bool(np.max(np.abs(z - loss.m1)) < loss.m2)
        return False
    if family == "higher-order":
        return float(risk(dist)) == 0.0
    if family == "deviation":
        return float(risk(dist)) <= 1e-14
    return False


def make_instance(family: str, rng: np.random.Generator, p: float | None = None,
                  eps: float | None = None, max_atoms: int = 20, max_dim: int = 3) -> Instance:
    """One random instance of ``family`` (N <= 20 rows, n <= 3 features by default)."""
    orders, tol = FAMILIES[family]
    p = float(orders[int(rng.integers(len(orders)))]) if p is None else float(p)
    eps = float(EPS_GRID[int(rng.integers(len(EPS_GRID)))]) if eps is None else float(eps)
    risk, task = _risk_for(family, p, rng)
    N = int(rng.integers(1, max_atoms + 1))
    n_min = 2 if task is Task.REGRESSION else 1
    n = int(rng.integers(n_min, max(max_dim, n_min) + 1))
    X = rng.normal(size=(N, n))
    if rng.random() < 0.2:
        # repeated rows exercise tie handling
        X[N // 2:] = X[0]
    if task is Task.CLASSIFICATION:
        y = rng.choice([-1.0, 1.0], size=N)
    else:
        y = np.ones(N)
    w = rng.dirichlet(np.ones(N)) if rng.random() < 0.5 else None
    data = LabelledDataset(y, X, w)
    norm = Norm.from_name(NORMS[int(rng.integers(len(NORMS)))])
    beta = rng.normal(size=n)
    if task is Task.REGRESSION:
        beta[0] = 1.0
    problem = RobustProblem(data, risk, BallSpec(p, eps, norm), task)
    dist = project_pushforward(data, beta)
    return Instance(family, problem, beta, tol, _degenerate(family, risk, dist))


def build_suite(families: Sequence[str], per_family: int, seed: int, **kw) -> list[Instance]:
    out = []
    for fi, fam in enumerate(families):
        for j in range(per_family):
            rng = np.random.default_rng(derive_seed(seed, fi, j))
            out.append(make_instance(fam, rng, **kw))
    return out


def check_instance(inst: Instance, cfg: OracleConfig) -> dict:
    closed = robust_value(inst.problem, inst.beta)
    res = sup_risk_numeric(inst.projection, (inst.problem.ball.p, inst.radius), inst.problem.risk, cfg)
    gap = abs(closed - res.value)
    tol = inst.degenerate_tolerance if inst.degenerate else inst.tolerance
    scale = max(1.0, abs(closed))
    return {
        "family": inst.family,
        "risk": repr(inst.problem.risk),
        "p": inst.problem.ball.p,
        "epsilon": inst.problem.ball.epsilon,
        "epsilon_eff": inst.radius,
        "case": "degenerate" if inst.degenerate else "attained",
        "closed_form": closed,
        "numeric_sup": res.value,
        "oracle_family": res.family,
        "abs_gap": gap,
        "rel_gap": gap / scale,
        "tolerance": tol,
        "pass": bool(gap <= tol * scale),
        "expected_negative": False,
    }


def run_suite(instances: Sequence[Instance], cfg: OracleConfig | None = None) -> list[dict]:
    cfg = cfg or OracleConfig()
    rows = []
    for i, inst in enumerate(instances):
        row = check_instance(inst, replace(cfg, seed=derive_seed(cfg.seed, i)))
        rows.append({"index": i, **row})
    return rows


def random_projection_instances(rng: np.random.Generator, count: int = 20,
                                radii=(0.5, 1.0, 2.0)) -> list[tuple[EmpiricalDistribution1D, float]]:
    """Projected distributions and radii spread over the interesting range of a loss."""
    out = []
    for i in range(count):
        N = int(rng.integers(1, 6))
        center = float(rng.uniform(-4, 4))
        atoms = center + rng.normal(scale=rng.uniform(0.1, 2.0), size=N)
        out.append((EmpiricalDistribution1D(atoms, rng.dirichlet(np.ones(N))), float(radii[i % len(radii)])))
    return out


def falsification_rows(seed: int, count: int = 20, cfg: OracleConfig | None = None) -> list[dict]:
    """Out-of-catalog losses (expected negatives) plus an in-catalog control."""
    cfg = cfg or OracleConfig(restarts=4, iters=40)
    cases = [
        ("softplus p=2", softplus(), 2.0, True),
        ("hinge^2 with p=3", PowerOf(HingePos(0.0), 2.0), 3.0, True),
        ("absolute p=2 (control)", Absolute(0.0, 1.0, 0.0), 2.0, False),
    ]
    rows = []
    for j, (name, loss, p, negative) in enumerate(cases):
        inst = random_projection_instances(np.random.default_rng(derive_seed(seed, 100, j)), count)
        rep = falsify_equivalence(loss, p, inst, cfg=replace(cfg, seed=derive_seed(seed, 200, j)))
        tol = 1e-6
        rows.append({
            "family": "falsification",
            "risk": name,
            "p": p,
            "case": "out-of-catalog" if negative else "control",
            "best_C": rep.best_C,
            "best_form": rep.best_form,
            "abs_gap": rep.floor,
            "tolerance": tol,
            "pass": bool(rep.floor <= tol),
            "expected_negative": negative,
        })
    return rows
