import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wdro.genbound import (
    ConcentrationConfig,
    GaussianScenario,
    MomentEstimates,
    ProblemTemplate,
    UnionConfig,
    coverage_experiment,
    covering_log_bound,
    radius_schedule,
    schedule_branch,
    threshold_sample_size,
    union_radius_and_residual,
)
from wdro.reform import Task
from wdro.risk import CVaR
from wdro.solver import Annulus, SolverConfig
from wdro.transport import Norm

# sqrt(log(2 / 0.05) / 100), evaluated by hand
RADIUS_EXAMPLE = 0.19206455826398416


class TestRadius:
    def test_example(self):
        eps = radius_schedule(2, 100, 0.05, ConcentrationConfig(c1=2, c2=1, L_D=1))
        assert eps == pytest.approx(RADIUS_EXAMPLE, rel=1e-14)
        assert eps == pytest.approx(math.sqrt(math.log(40) / 100), rel=1e-14)
        assert schedule_branch(2, 100, 0.05) == "large-N"

    def test_zero_log_term(self):
        cfg = ConcentrationConfig(c1=0.5, c2=1.0)
        assert radius_schedule(2, 10, 0.5, cfg) == 0.0

    @given(st.floats(1.0, 3.5), st.floats(0.001, 0.9), st.floats(0.1, 5.0))
    def test_branches_meet_at_threshold(self, p, eta, c2):
        cfg = ConcentrationConfig(c1=2.0, c2=c2, a=4.0)
        n_star = threshold_sample_size(eta, cfg)
        if n_star < 1:
            return
        above = radius_schedule(p, n_star, eta, cfg)
        below = radius_schedule(p, n_star * (1 - 1e-15), eta, cfg)
        assert abs(above - below) <= 1e-12

    @given(st.integers(1, 10**6), st.floats(0.001, 0.9))
    def test_sqrt_decay(self, N, eta):
        cfg = ConcentrationConfig()
        if N < threshold_sample_size(eta, cfg):
            return
        ratio = radius_schedule(2, 4 * N, eta, cfg) / radius_schedule(2, N, eta, cfg)
        assert abs(ratio - 0.5) <= 1e-12

    def test_small_n_branch(self):
        cfg = ConcentrationConfig(c1=2.0, c2=1.0, a=4.0)
        N = 2
        eta = 1e-3
        expect = (math.log(2 / eta) / N) ** (2 / 4)
        assert schedule_branch(2, N, eta, cfg) == "small-N"
        assert radius_schedule(2, N, eta, cfg) == pytest.approx(expect, rel=1e-14)

    def test_divides_by_smallest_dual_norm(self):
        a = radius_schedule(2, 100, 0.05, ConcentrationConfig(L_D=1.0, U_D=2.0))
        b = radius_schedule(2, 100, 0.05, ConcentrationConfig(L_D=0.5, U_D=2.0))
        assert b == pytest.approx(2 * a, rel=1e-14)

    @pytest.mark.parametrize("kw", [dict(p=math.inf, N=10, eta=0.1), dict(p=5, N=10, eta=0.1),
                                    dict(p=2, N=10, eta=1.0), dict(p=2, N=0, eta=0.1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            radius_schedule(kw["p"], kw["N"], kw["eta"])


class TestCovering:
    def test_example(self):
        assert covering_log_bound(2, 1.0, 0.5) == pytest.approx(2 * math.log(5), rel=1e-15)

    def test_degenerate(self):
        assert covering_log_bound(3, 0.0, 0.1) == 0.0
        assert covering_log_bound(0, 4.0, 0.1) == 0.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            covering_log_bound(2, 1.0, 0.0)


class TestUnion:
    moments = MomentEstimates(1.5, 0.5, 1.0)

    def test_constant_risk(self):
        ub = union_radius_and_residual(2, 1000, 0.05, ConcentrationConfig(), UnionConfig(2, 1.0, M=0.0), self.moments)
        assert ub.tau == 0.0 and ub.epsilon > 0

    def test_expected_loss_plugin(self):
        for N in (10, 100, 1000):
            ucfg = UnionConfig(2, 1.0, k=1.0, form="expected_loss", a1=0.0, a2=1.0)
            ub = union_radius_and_residual(2, N, 0.05, ConcentrationConfig(), ucfg, self.moments)
            assert ub.tau == pytest.approx(2 / N, rel=1e-14)

    def test_deflation_grows_radius(self):
        ub = union_radius_and_residual(2, 1000, 0.05, ConcentrationConfig(), UnionConfig(3, 2.0, M=1.0), self.moments)
        assert ub.epsilon > radius_schedule(2, 1000, 0.05)
        assert ub.deflated_eta < 0.05

    def test_rates_stabilize(self):
        ucfg = UnionConfig(2, 1.0, M=1.0)
        Ns = [10**k for k in range(2, 7)]
        bounds = [union_radius_and_residual(2, N, 0.05, ConcentrationConfig(), ucfg, self.moments) for N in Ns]
        eps_ratio = [b.epsilon / math.sqrt(math.log(N) / N) for b, N in zip(bounds, Ns)]
        tau_ratio = [b.tau * N for b, N in zip(bounds, Ns)]
        assert np.all(np.diff(eps_ratio) < 0)
        assert abs(eps_ratio[-1] / eps_ratio[-2] - 1) < 0.05
        assert abs(tau_ratio[-1] / tau_ratio[-2] - 1) < 1e-2

    def test_moments_from_sample(self, rng):
        X = rng.normal(size=(2000, 2))
        m = MomentEstimates.from_sample(X, 2.0, Norm.l2())
        assert m.estimated and m.mean_norm_k == pytest.approx(2.0, rel=0.1)


class TestCoverage:
    def _template(self):
        return ProblemTemplate(CVaR(0.9), 1.0, Norm.l2(), Annulus(1.0, 1.0), Task.RISK_MIN)

    def test_large_radius_covers(self):
        tab = coverage_experiment(GaussianScenario(3), self._template(), [100.0], trials=10, seed=1,
                                  N=20, holdout=2000, solver_cfg=SolverConfig(iters=20, restarts=1))
        row = tab.rows[0]
        assert row.coverage == 1.0 and row.trials == 10
        assert row.ci_lo <= row.coverage <= row.ci_hi

    def test_reproducible(self):
        kw = dict(trials=6, seed=5, N=20, holdout=2000, solver_cfg=SolverConfig(iters=20, restarts=1))
        a = coverage_experiment(GaussianScenario(3), self._template(), [0.0, 0.5], **kw)
        b = coverage_experiment(GaussianScenario(3), self._template(), [0.0, 0.5], **kw)
        assert np.array_equal(a.outcomes, b.outcomes)
        assert a.as_dict() == b.as_dict()

    def test_labelled_scenario(self, rng):
        data = GaussianScenario(4, labelled=True).sample(50, rng)
        assert set(np.unique(data.labels)) <= {-1.0, 1.0} and data.dim == 4
