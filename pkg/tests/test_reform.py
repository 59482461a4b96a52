import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wdro.reform import (
    RobustProblem,
    Task,
    UnsupportedCombination,
    devrep_reg_value,
    distortion_reg_value,
    dual_norm,
    highorder_reg_value,
    infrep_reg_value,
    lipschitz_reg_value,
    reformulate,
    resolve_closed_form,
    robust_value,
    typeinf_value,
)
from wdro.risk import (
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
    Negated,
    PowerOf,
    ShiftedAbs,
    TwoSidedHinge,
    Variance,
    eval_cvar,
    softplus,
)
from wdro.transport import INF, BallSpec, LabelledDataset, Norm


def problem(risk, p, eps, X, y=None, norm=None, task=Task.CLASSIFICATION):
    X = np.asarray(X, float)
    y = np.ones(X.shape[0]) if y is None else y
    return RobustProblem(LabelledDataset(y, X), risk, BallSpec(p, eps, norm or Norm.l2()), task)


@pytest.fixture
def data(rng):
    X = rng.normal(size=(8, 3))
    y = rng.choice([-1.0, 1.0], 8)
    return X, y


def test_dual_norm_examples():
    assert dual_norm([3.0, -4.0], Norm.l2()) == pytest.approx(5.0)
    assert dual_norm([3.0, -4.0], Norm.l1()) == pytest.approx(4.0)


@pytest.mark.parametrize("risk,p", [
    (ExpectedLoss(Linear(2.0, 1.0)), 2.0),
    (ExpectedLoss(HingeNeg(1.0)), 1.0),
    (ExpectedLoss(PowerOf(HingePos(0.0), 2.0)), 2.0),
    (CVaR(0.3), 1.0),
    (Variance(), 2.0),
    (Distortion(DistortionFunction.cvar(0.4)), 1.5),
    (ExpectedLoss(ExpNeg(1.0)), INF),
])
def test_zero_radius_is_nominal(risk, p, data):
    X, y = data
    task = Task.CLASSIFICATION if isinstance(risk, ExpectedLoss) else Task.RISK_MIN
    pr = problem(risk, p, 0.0, X, y if task is Task.CLASSIFICATION else None, task=task)
    beta = np.array([0.4, -1.0, 0.7])
    z = (pr.data.signed_points() @ beta)
    assert robust_value(pr, beta) == pytest.approx(risk(EmpiricalDistribution1D(z)), rel=1e-12, abs=1e-12)


class TestLipschitz:
    def test_lad_regression(self, rng):
        X = rng.normal(size=(10, 3))
        pr = problem(ExpectedLoss(Absolute(0.0, 1.0, 0.0)), 1, 0.3, X, norm=Norm.l1(), task=Task.REGRESSION)
        beta_r = np.array([0.5, -0.2])
        beta = np.r_[1.0, -beta_r]
        resid = X[:, 0] - X[:, 1:] @ beta_r
        expect = np.mean(np.abs(resid)) + 0.3 * np.max(np.abs(beta))
        assert lipschitz_reg_value(pr, beta) == pytest.approx(expect, rel=1e-12)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 2), st.sampled_from([1.0, 2.0, INF]))
    def test_linear_point_mass(self, C, b, eps, p):
        x = np.array([[0.7, -1.2]])
        beta = np.array([1.5, 0.5])
        pr = problem(ExpectedLoss(Linear(C, b)), p, eps, x)
        expect = C * (x[0] @ beta) + b + abs(C) * eps * np.linalg.norm(beta)
        assert robust_value(pr, beta) == pytest.approx(expect, rel=1e-12, abs=1e-12)

    def test_hinge_needs_p1(self, data):
        X, y = data
        with pytest.raises(UnsupportedCombination):
            robust_value(problem(ExpectedLoss(HingeNeg(1.0)), 2.0, 0.1, X, y), np.ones(3))


class TestHigherOrder:
    def test_hinge_example(self, data):
        X, y = data
        beta = np.array([0.3, 0.2, -0.5])
        for p in (2.0, 3.0):
            pr = problem(ExpectedLoss(PowerOf(HingeNeg(1.0), p)), p, 0.2, X, y)
            m = y * (X @ beta)
            expect = (np.mean(np.maximum(1 - m, 0) ** p) ** (1 / p) + 0.2 * np.linalg.norm(beta)) ** p
            assert highorder_reg_value(pr, beta) == pytest.approx(expect, rel=1e-12)

    def test_single_atom_above_kink(self):
        pr = problem(ExpectedLoss(PowerOf(HingePos(0.5), 2.0)), 2, 0.4, [[2.0]])
        assert robust_value(pr, [1.0]) == pytest.approx((1.5 + 0.4) ** 2, rel=1e-14)

    def test_all_atoms_in_flat_region(self):
        pr = problem(ExpectedLoss(PowerOf(HingePos(5.0), 3.0)), 3, 0.4, [[1.0], [2.0]])
        assert robust_value(pr, [1.0]) == pytest.approx(0.4**3, rel=1e-14)

    @pytest.mark.parametrize("p,s", [(2.0, 3.0), (3.0, 2.0)])
    def test_exponent_must_match_order(self, p, s, data):
        X, y = data
        with pytest.raises(UnsupportedCombination, match="differs"):
            robust_value(problem(ExpectedLoss(PowerOf(HingePos(0.0), s)), p, 0.1, X, y), np.ones(3))

    def test_power_at_p1_unbounded(self, data):
        X, y = data
        with pytest.raises(UnsupportedCombination, match="unbounded"):
            robust_value(problem(ExpectedLoss(PowerOf(HingePos(0.0), 2.0)), 1, 0.1, X, y), np.ones(3))


class TestInfRep:
    def test_nu_svm(self, data):
        X, y = data
        beta = np.array([0.5, -1.0, 0.25])
        alpha = 0.3
        pr = problem(Negated(CVaR(alpha)), 1, 0.2, X, y)
        # risk of -margin: CVaR of the negated margins
        expect = eval_cvar(EmpiricalDistribution1D(-(y * (X @ beta))), alpha) + 0.2 * np.linalg.norm(beta) / (1 - alpha)
        assert infrep_reg_value(pr, beta) == pytest.approx(expect, rel=1e-12)

    def test_nu_svr(self, rng):
        X = rng.normal(size=(9, 3))
        alpha = 0.6
        pr = problem(AbsoluteValue(CVaR(alpha)), 1, 0.1, X, norm=Norm.linf(), task=Task.REGRESSION)
        beta = np.array([1.0, -0.4, 0.3])
        expect = eval_cvar(EmpiricalDistribution1D(np.abs(X @ beta)), alpha) + 0.1 * 1.7 / (1 - alpha)
        assert infrep_reg_value(pr, beta) == pytest.approx(expect, rel=1e-12)

    def test_higher_moment_point_mass(self):
        pr = problem(InfRepRisk(HingePos(0.0), 2.0, 2.0), 2, 0.3, [[5.0, 0.0]], task=Task.RISK_MIN)
        beta = np.array([1.0, 2.0])
        assert robust_value(pr, beta) == pytest.approx(5.0 + 2 * 0.3 * math.sqrt(5.0), rel=1e-12)


class TestDeviation:
    def test_variance(self, rng):
        X = rng.normal(size=(12, 2))
        beta = np.array([0.8, -0.6])
        pr = problem(Variance(), 2, 0.25, X, task=Task.RISK_MIN)
        z = X @ beta
        expect = (np.std(z) + 0.25 * 1.0) ** 2
        assert devrep_reg_value(pr, beta) == pytest.approx(expect, rel=1e-12)

    def test_point_mass(self):
        pr = problem(Variance(), 2, 0.5, [[3.0]], task=Task.RISK_MIN)
        assert robust_value(pr, [2.0]) == pytest.approx(1.0, rel=1e-14)

    def test_two_point(self):
        pr = problem(Variance(), 2, 0.5, [[0.0], [2.0]], task=Task.RISK_MIN)
        assert robust_value(pr, [1.0]) == pytest.approx(1.5**2, rel=1e-14)

    def test_variance_needs_p2(self):
        with pytest.raises(UnsupportedCombination):
            robust_value(problem(Variance(), 3, 0.5, [[0.0], [2.0]], task=Task.RISK_MIN), [1.0])


class TestTypeInf:
    def test_sum_exp(self, data):
        X, y = data
        t, eps = 0.7, 0.15
        beta = np.array([0.2, 0.4, -0.3])
        pr = problem(ExpectedLoss(ExpNeg(t)), INF, eps, X, y)
        m = y * (X @ beta)
        expect = np.mean(np.exp(-t * (m - eps * np.linalg.norm(beta)))) / t
        assert typeinf_value(pr, beta) == pytest.approx(expect, rel=1e-12)

    def test_cvar_translation(self, rng):
        X = rng.normal(size=(10, 2))
        beta = np.array([1.0, 1.0])
        pr = problem(CVaR(0.8), INF, 0.2, X, task=Task.RISK_MIN)
        expect = eval_cvar(EmpiricalDistribution1D(X @ beta), 0.8) + 0.2 * math.sqrt(2)
        assert robust_value(pr, beta) == pytest.approx(expect, rel=1e-12)
        assert typeinf_value(pr, beta) == pytest.approx(expect, rel=1e-12)

    def test_non_monotone_rejected(self, data):
        X, _ = data
        with pytest.raises(UnsupportedCombination):
            robust_value(problem(ExpectedLoss(PowerOf(ShiftedAbs(0.0, 1.0), 2.0)), INF, 0.1, X,
                                 task=Task.RISK_MIN), np.ones(3))


class TestDistortion:
    def test_identity_deviation_is_zero(self):
        for p in (1.0, 2.0, INF):
            form = resolve_closed_form(DistortionDeviation(DistortionFunction.identity()), p)
            assert form.coef == 0.0

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
    def test_cvar_coefficient_matches_infrep(self, alpha):
        from wdro.reform import _distortion_form, _infrep_form

        a = _distortion_form(CVaR(alpha), 1.0).coef
        b = _infrep_form(CVaR(alpha), 1.0).coef
        assert abs(a - 1 / (1 - alpha)) <= 1e-10 and abs(a - b) <= 1e-10

    def test_square_coefficient(self):
        h = DistortionFunction.from_function(lambda s: s**2, knots=20001)
        assert resolve_closed_form(Distortion(h), 2.0).coef == pytest.approx(2 / math.sqrt(3), abs=1e-6)

    def test_cvar_higher_order(self, rng):
        X = rng.normal(size=(10, 2))
        alpha, p = 0.75, 2.0
        beta = np.array([0.5, 0.5])
        pr = problem(CVaR(alpha), p, 0.3, X, task=Task.RISK_MIN)
        expect = eval_cvar(EmpiricalDistribution1D(X @ beta), alpha) + 0.3 * (1 - alpha) ** (-1 / p) * math.sqrt(0.5)
        assert distortion_reg_value(pr, beta) == pytest.approx(expect, rel=1e-12)

    def test_cvar_deviation_coefficient(self):
        alpha = 0.5
        # centered slopes: -1 on [0, alpha), 1 on [alpha, 1]
        assert resolve_closed_form(CVaRDeviation(alpha), 2.0).coef == pytest.approx(1.0, rel=1e-12)

    def test_nonconvex_rejected(self):
        h = DistortionFunction([0, 0.5, 1], [0, 0.8, 1])
        with pytest.raises(UnsupportedCombination):
            resolve_closed_form(Distortion(h), 2.0)


class TestRejections:
    def test_softplus(self):
        with pytest.raises(UnsupportedCombination):
            resolve_closed_form(ExpectedLoss(softplus()), 2.0)
        with pytest.raises(UnsupportedCombination):
            resolve_closed_form(ExpectedLoss(softplus()), 1.0)

    def test_expneg_finite_order(self):
        with pytest.raises(UnsupportedCombination, match="unbounded"):
            resolve_closed_form(ExpectedLoss(ExpNeg(1.0)), 1.0)
        with pytest.raises(UnsupportedCombination):
            resolve_closed_form(ExpectedLoss(ExpNeg(1.0)), 2.0)


class TestProblem:
    def test_regression_needs_unit_first_coefficient(self, rng):
        pr = problem(ExpectedLoss(Absolute(0.0, 1.0, 0.0)), 1, 0.1, rng.normal(size=(5, 2)), task=Task.REGRESSION)
        with pytest.raises(ValueError):
            robust_value(pr, [0.5, 1.0])

    def test_riskmin_needs_positive_labels(self, rng):
        with pytest.raises(ValueError):
            problem(CVaR(0.5), 1, 0.1, rng.normal(size=(4, 2)), y=np.array([1, -1, 1, 1.0]), task=Task.RISK_MIN)

    def test_batched_matches_scalar(self, data):
        X, y = data
        pr = problem(ExpectedLoss(HingeNeg(1.0)), 1, 0.2, X, y)
        ref = reformulate(pr)
        B = np.random.default_rng(0).normal(size=(6, 3))
        assert np.allclose(ref.values(B), [ref.value(b) for b in B], rtol=1e-13)

    def test_dimension_checked(self, data):
        X, y = data
        with pytest.raises(ValueError):
            robust_value(problem(ExpectedLoss(HingeNeg(1.0)), 1, 0.2, X, y), [1.0, 2.0])

    def test_negation_unwraps(self, data):
        X, y = data
        beta = np.array([0.1, 0.2, 0.3])
        a = robust_value(problem(ExpectedLoss(Linear(-1.0, 0.0)), 2, 0.3, X, y), beta)
        b = robust_value(problem(Negated(ExpectedLoss(Linear(1.0, 0.0))), 2, 0.3, X, y), beta)
        assert a == pytest.approx(b, rel=1e-14)
