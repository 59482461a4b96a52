"""Closed-form worst-case risk over a Wasserstein ball.

For an affine decision ``beta`` the worst case over the ball around a labelled
dataset depends only on the projected distribution of ``Y * beta @ X`` and on
the effective radius ``epsilon * ||beta||_*``.  Each supported risk/loss
combination maps to one :class:`ClosedForm` acting on that pair; everything
else raises :class:`UnsupportedCombination`.

Clauses
-------
1. Lipschitz expected loss: ``E l + C r``.
2. Higher-order expected loss ``E l^p`` with ``l`` hinge-like: ``((E l^p)^(1/p) + C r)^p``.
3. Inf-representable risk: ``rho + c r``.
4. Inf-representable deviation: ``(V^(1/p) + C r)^p``.
5. Monotone risk under ``p = inf``: the risk of the projection shifted by ``r``.
6. Convex distortion functionals: ``rho_h + ||h'||_q r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .risk import (
    Absolute,
    AbsoluteValue,
    CVaR,
    CVaRDeviation,
    Custom,
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
)
from .transport import BallSpec, LabelledDataset, Norm, conjugate, project_pushforward

__all__ = [
    "UnsupportedCombination",
    "Task",
    "RobustProblem",
    "ClosedForm",
    "AdditiveForm",
    "PowerForm",
    "ShiftForm",
    "NegatedForm",
    "Reformulation",
    "resolve_closed_form",
    "reformulate",
    "dual_norm",
    "robust_value",
    "lipschitz_reg_value",
    "highorder_reg_value",
    "infrep_reg_value",
    "devrep_reg_value",
    "typeinf_value",
    "distortion_reg_value",
]


class UnsupportedCombination(ValueError):
    """No exact closed form is known for the requested risk and ball."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class Task(str, Enum):
    CLASSIFICATION = "classify"
    REGRESSION = "regress"
    RISK_MIN = "riskmin"

    @classmethod
    def parse(cls, value) -> "Task":
        if isinstance(value, Task):
            return value
        aliases = {"classify": cls.CLASSIFICATION, "classification": cls.CLASSIFICATION,
                   "regress": cls.REGRESSION, "regression": cls.REGRESSION,
                   "riskmin": cls.RISK_MIN, "risk_min": cls.RISK_MIN}
        try:
            return aliases[str(value).strip().lower()]
        except KeyError:
            raise ValueError(f"unknown task {value!r}") from None


@dataclass(frozen=True)
class RobustProblem:
    """``sup`` over the ball around ``data`` of ``risk`` applied to ``Y * beta @ X``.

    For regression the decision is ``beta = (1, -beta_r)`` where the first
    feature column holds the response.
    """

    data: LabelledDataset
    risk: Risk
    ball: BallSpec
    task: Task = Task.CLASSIFICATION

    def __post_init__(self):
        object.__setattr__(self, "task", Task.parse(self.task))
        if self.task is not Task.CLASSIFICATION and not np.all(self.data.labels == 1):
            raise ValueError(f"{self.task.value} problems need all labels equal to +1")
        if self.task is Task.REGRESSION and self.data.dim < 2:
            raise ValueError("regression needs a response column and at least one feature")
        if self.ball.norm.kind == "WeightedL2":
            self.ball.norm._check_dim(self.data.dim)

    @property
    def dim(self) -> int:
        return self.data.dim


def dual_norm(beta, norm: Norm) -> float:
    """``||beta||_*`` for the dual of the ground norm."""
    return float(norm.dual()(np.asarray(beta, dtype=float)))


# ---------------------------------------------------------------------------
# closed forms on the projected distribution


class ClosedForm:
    """Worst-case value as a function of the projection and the radius ``r``."""

    clause: int

    def values(self, Z, W, r) -> np.ndarray:
        raise NotImplementedError

    def value(self, dist: EmpiricalDistribution1D, r: float) -> float:
        return float(self.values(dist.atoms[:, None], dist.weights, np.array([r]))[0])


@dataclass(frozen=True)
class AdditiveForm(ClosedForm):
    """``nominal + coef * r``."""

    clause: int
    nominal: Risk
    coef: float

    def values(self, Z, W, r):
        return self.nominal.evaluate_columns(Z, W) + self.coef * np.asarray(r)


@dataclass(frozen=True)
class PowerForm(ClosedForm):
    """``(nominal^(1/p) + coef * r)^p``."""

    clause: int
    nominal: Risk
    p: float
    coef: float

    def values(self, Z, W, r):
        base = np.maximum(self.nominal.evaluate_columns(Z, W), 0.0)
        if self.p == 1:
            return base + self.coef * np.asarray(r)
        return (base ** (1.0 / self.p) + self.coef * np.asarray(r)) ** self.p


@dataclass(frozen=True)
class ShiftForm(ClosedForm):
    """``risk(Z + direction * r)`` for a monotone risk."""

    risk: Risk
    direction: int
    clause: int = 5

    def values(self, Z, W, r):
        Z = np.asarray(Z, dtype=float)
        return self.risk.evaluate_columns(Z + self.direction * np.asarray(r)[None, :], W)


@dataclass(frozen=True)
class NegatedForm(ClosedForm):
    """Closed form of ``rho(-Z)`` from the closed form of ``rho``."""

    inner: ClosedForm

    @property
    def clause(self) -> int:
        return self.inner.clause

    def values(self, Z, W, r):
        return self.inner.values(-np.asarray(Z, dtype=float), W, r)


def _strip_power_one(loss: Loss) -> Loss:
    while isinstance(loss, PowerOf) and loss.exponent == 1:
        loss = loss.base
    return loss


def _two_forms_slope(loss: Loss) -> float | None:
    """Slope magnitude of ``C x + b`` or ``C |x - m| + b``."""
    loss = _strip_power_one(loss)
    if isinstance(loss, Linear):
        return abs(loss.slope)
    if isinstance(loss, Absolute):
        return loss.scale
    return None


def _hinge_family_scale(loss: Loss, allowed: tuple) -> float | None:
    """Scale ``C`` when ``loss`` is ``C`` times one of the ``allowed`` hinge forms."""
    loss = _strip_power_one(loss)
    if isinstance(loss, Absolute):
        # C|x - m| + b is C times ShiftedAbs(m, b/C), or C times TwoSidedHinge(m, 0)
        if loss.intercept < 0 or loss.scale <= 0:
            return None
        kind = ShiftedAbs if loss.intercept > 0 else TwoSidedHinge
        return loss.scale if kind in allowed else None
    if isinstance(loss, allowed):
        return 1.0
    return None


_FOUR_FORMS = (HingePos, HingeNeg, TwoSidedHinge, ShiftedAbs)
_INFREP_RISK_LOSSES = (HingePos, TwoSidedHinge, ShiftedAbs)
_INFREP_DEV_LOSSES = (TwoSidedHinge, ShiftedAbs)


def _unbounded_reason(loss: Loss) -> str | None:
    loss = _strip_power_one(loss)
    if isinstance(loss, (ExpNeg,)) or (isinstance(loss, PowerOf) and loss.exponent > 1):
        return "worst-case expectation unbounded"
    return None


def _split_negation(risk: Risk) -> tuple[Risk, bool]:
    negated = False
    while isinstance(risk, Negated):
        risk = risk.inner
        negated = not negated
    return risk, negated


def _wrap(form: ClosedForm, negated: bool) -> ClosedForm:
    return NegatedForm(form) if negated else form


def _lipschitz_form(risk: Risk, p: float) -> ClosedForm:
    core, neg = _split_negation(risk)
    if not isinstance(core, ExpectedLoss):
        raise UnsupportedCombination("Lipschitz clause needs an expected loss")
    loss = core.loss
    slope = _two_forms_slope(loss)
    if slope is not None:
        return _wrap(AdditiveForm(1, core, slope), neg)
    if p == 1:
        lip = None
        base = _strip_power_one(loss)
        if isinstance(base, _FOUR_FORMS):
            lip = 1.0
        if lip is not None:
            return _wrap(AdditiveForm(1, core, lip), neg)
        reason = _unbounded_reason(loss)
        if reason:
            raise UnsupportedCombination(reason)
        if isinstance(base, Custom):
            raise UnsupportedCombination(
                "custom losses are never reformulated from a declared Lipschitz constant")
    raise UnsupportedCombination(
        "expected loss with p > 1 has an additive closed form only for linear or absolute losses")


def _highorder_form(risk: Risk, p: float) -> ClosedForm:
    core, neg = _split_negation(risk)
    if not (isinstance(core, ExpectedLoss) and isinstance(core.loss, PowerOf)):
        raise UnsupportedCombination("higher-order clause needs an expected power loss")
    loss = core.loss
    if p == 1 and loss.exponent > 1:
        raise UnsupportedCombination("worst-case expectation unbounded")
    if math.isinf(p):
        raise UnsupportedCombination("higher-order clause needs a finite order")
    scale = _hinge_family_scale(loss.base, _FOUR_FORMS)
    if scale is None:
        raise UnsupportedCombination(f"power of {type(loss.base).__name__} is outside the hinge family")
    if loss.exponent != p:
        raise UnsupportedCombination(f"loss exponent {loss.exponent} differs from ball order {p}")
    return _wrap(PowerForm(2, core, p, scale), neg)


def _infrep_form(risk: Risk, p: float) -> ClosedForm:
    core, neg = _split_negation(risk)
    if math.isinf(p):
        raise UnsupportedCombination("inf-representation clause needs a finite order")
    if isinstance(core, CVaR):
        if p != 1:
            raise UnsupportedCombination("CVaR is inf-representable with order 1 only")
        return _wrap(AdditiveForm(3, core, 1.0 / (1.0 - core.alpha)), neg)
    if isinstance(core, AbsoluteValue):
        inner = core.inner
        if isinstance(inner, CVaR) and p == 1:
            return _wrap(AdditiveForm(3, core, 1.0 / (1.0 - inner.alpha)), neg)
        if isinstance(inner, InfRepRisk) and inner.p == p and isinstance(_strip_power_one(inner.loss), HingePos):
            return _wrap(AdditiveForm(3, core, inner.c), neg)
        raise UnsupportedCombination("only (|z| - t)_+ composites are covered for absolute values")
    if not isinstance(core, InfRepRisk):
        raise UnsupportedCombination("not an inf-representable risk")
    if core.p != p:
        raise UnsupportedCombination(f"risk order {core.p} differs from ball order {p}")
    scale = _hinge_family_scale(core.loss, _INFREP_RISK_LOSSES)
    if scale is None:
        raise UnsupportedCombination(f"{type(core.loss).__name__} is not an admissible inf-representation loss")
    return _wrap(AdditiveForm(3, core, core.c * scale), neg)


def _devrep_form(risk: Risk, p: float) -> ClosedForm:
    core, neg = _split_negation(risk)
    if math.isinf(p):
        raise UnsupportedCombination("deviation clause needs a finite order")
    if isinstance(core, Variance):
        if p != 2:
            raise UnsupportedCombination("variance needs ball order 2")
        return _wrap(PowerForm(4, core, 2.0, 1.0), neg)
    if not isinstance(core, InfRepDev):
        raise UnsupportedCombination("not an inf-representable deviation")
    if core.p != p:
        raise UnsupportedCombination(f"deviation order {core.p} differs from ball order {p}")
    scale = _hinge_family_scale(core.loss, _INFREP_DEV_LOSSES)
    if scale is None:
        raise UnsupportedCombination(f"{type(core.loss).__name__} is not an admissible deviation loss")
    return _wrap(PowerForm(4, core, p, scale), neg)


def _distortion_form(risk: Risk, p: float) -> ClosedForm:
    core, neg = _split_negation(risk)
    q = conjugate(p)
    if isinstance(core, CVaR):
        return _wrap(AdditiveForm(6, core, DistortionFunction.cvar(core.alpha).slope_norm(q)), neg)
    if isinstance(core, CVaRDeviation):
        h = DistortionFunction.cvar(core.alpha)
        return _wrap(AdditiveForm(6, core, h.centered().slope_norm(q)), neg)
    if isinstance(core, DistortionDeviation):
        if not core.h.convex:
            raise UnsupportedCombination("distortion deviation needs a convex h")
        return _wrap(AdditiveForm(6, core, core.h.centered().slope_norm(q)), neg)
    if isinstance(core, Distortion):
        if not core.h.convex:
            raise UnsupportedCombination("distortion functional needs a convex h")
        return _wrap(AdditiveForm(6, core, core.h.slope_norm(q)), neg)
    if isinstance(core, AbsoluteValue):
        inner = core.inner
        if isinstance(inner, CVaR):
            h = DistortionFunction.cvar(inner.alpha)
        elif isinstance(inner, Distortion):
            h = inner.h
        else:
            raise UnsupportedCombination("absolute value needs a distortion functional inside")
        if not (h.convex and h.increasing):
            raise UnsupportedCombination("rho_h(|z|) needs an increasing convex h")
        return _wrap(AdditiveForm(6, core, h.slope_norm(q)), neg)
    raise UnsupportedCombination("not a distortion functional")


def _typeinf_form(risk: Risk, p: float) -> ClosedForm:
    if not math.isinf(p):
        raise UnsupportedCombination("shift clause needs p = inf")
    direction = risk.monotone
    if direction == 0:
        raise UnsupportedCombination("risk is not monotone, no shift closed form for p = inf")
    return ShiftForm(risk, int(direction))


_RESOLVERS = (
    (1, _lipschitz_form),
    (2, _highorder_form),
    (3, _infrep_form),
    (4, _devrep_form),
    (6, _distortion_form),
    (5, _typeinf_form),
)


def resolve_closed_form(risk: Risk, p: float) -> ClosedForm:
    """First applicable clause, in the order 1, 2, 3, 4, 6, 5."""
    reasons = []
    for clause, fn in _RESOLVERS:
        try:
            return fn(risk, p)
        except UnsupportedCombination as exc:
            reasons.append(f"clause {clause}: {exc.reason}")
    # surface the most specific refusal first
    for key in ("unbounded", "differs from ball order", "exponent"):
        for r in reasons:
            if key in r:
                raise UnsupportedCombination(r.split(": ", 1)[1] + "; " + "; ".join(reasons))
    raise UnsupportedCombination("; ".join(reasons))


@dataclass(frozen=True)
class Reformulation:
    """A problem bound to its closed form."""

    problem: RobustProblem
    form: ClosedForm

    @property
    def clause(self) -> int:
        return self.form.clause

    def _check_beta(self, beta):
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if beta.size != self.problem.dim:
            raise ValueError(f"beta has {beta.size} entries, problem has {self.problem.dim}")
        if self.problem.task is Task.REGRESSION and beta[0] != 1.0:
            raise ValueError("regression decisions must have first coefficient 1")
        return beta

    def value(self, beta) -> float:
        beta = self._check_beta(beta)
        proj = project_pushforward(self.problem.data, beta)
        r = self.problem.ball.epsilon * dual_norm(beta, self.problem.ball.norm)
        return self.form.value(proj, r)

    def values(self, betas) -> np.ndarray:
        """Vectorized :meth:`value` over the rows of ``betas``."""
        B = np.atleast_2d(np.asarray(betas, dtype=float))
        Z = self.problem.data.signed_points() @ B.T
        r = self.problem.ball.epsilon * np.atleast_1d(self.problem.ball.norm.dual()(B))
        return self.form.values(Z, self.problem.data.weights, r)


def reformulate(problem: RobustProblem) -> Reformulation:
    return Reformulation(problem, resolve_closed_form(problem.risk, problem.ball.p))


def robust_value(problem: RobustProblem, beta) -> float:
    """Worst-case risk over the ball, or :class:`UnsupportedCombination`."""
    return reformulate(problem).value(beta)


def _clause_value(resolver, problem, beta) -> float:
    return Reformulation(problem, resolver(problem.risk, problem.ball.p)).value(beta)


def lipschitz_reg_value(problem: RobustProblem, beta) -> float:
    return _clause_value(_lipschitz_form, problem, beta)


def highorder_reg_value(problem: RobustProblem, beta) -> float:
    return _clause_value(_highorder_form, problem, beta)


def infrep_reg_value(problem: RobustProblem, beta) -> float:
    return _clause_value(_infrep_form, problem, beta)


def devrep_reg_value(problem: RobustProblem, beta) -> float:
    return _clause_value(_devrep_form, problem, beta)


def typeinf_value(problem: RobustProblem, beta) -> float:
    return _clause_value(_typeinf_form, problem, beta)


def distortion_reg_value(problem: RobustProblem, beta) -> float:
    return _clause_value(_distortion_form, problem, beta)
