import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advcal.calibration import (
    LOWER_NONPOS,
    STRADDLE,
    UPPER_NONNEG,
    CalibrationQuery,
    calibration_verdict,
    delta_max_bruteforce,
    delta_max_reduced,
    constraint_branch,
    uniform_delta,
)
from advcal.errors import ConfigurationError, DomainError, UnsupportedReductionError
from advcal.grids import DEFAULT_GRID
from advcal.hypotheses import HypothesisFamily, MonotoneFn
from advcal.losses import MarginLoss, cbar
from advcal.risk import inner_risk, minimal_inner_risk

LIN = HypothesisFamily.linear(2)
RELU = HypothesisFamily.relu_glm(1.5)
ALL = HypothesisFamily.all_measurable(2.0)
FINE = DEFAULT_GRID.with_(angles=7200)
RHO1 = MarginLoss.rho_margin(1.0)


def query(form, loss, family, eps, x, eta, gamma=0.2, grid=DEFAULT_GRID):
    return CalibrationQuery(form, loss, family, gamma, eps, tuple(x), eta, grid)


class TestBranches:
    @pytest.mark.parametrize("eps,eta,branch", [
        (1.2, 0.5, "infinite"),
        (0.4, 0.5, STRADDLE),
        (0.6, 0.5, "infinite"),
        (0.3, 0.8, LOWER_NONPOS),
        (0.3, 0.2, UPPER_NONNEG),
        (0.6, 0.8, LOWER_NONPOS),
        (0.7, 0.8, STRADDLE),
        (0.9, 0.8, "infinite"),
    ])
    def test_selection(self, eps, eta, branch):
        assert constraint_branch(eps, eta) == branch

    def test_boundary_selects_sign_constrained(self):
        # eps exactly |2 eta - 1| selects the sign-constrained branch
        assert constraint_branch(0.5, 0.75) == LOWER_NONPOS
        assert constraint_branch(0.75, 0.75) == STRADDLE


class TestQuery:
    def test_eps_positive(self):
        with pytest.raises(DomainError):
            query("plain", RHO1, LIN, 0.0, (0.5, 0), 0.5)

    def test_adv01_not_a_surrogate(self):
        with pytest.raises(DomainError):
            query("adv01", RHO1, LIN, 0.5, (0.5, 0), 0.5)


class TestExamples:
    def test_infinite_eps(self):
        for method in (delta_max_bruteforce, delta_max_reduced):
            assert method(query("plain", RHO1, LIN, 1.2, (0.5, 0), 0.5)).is_infinite

    def test_hinge_witness_orthogonal(self):
        v = delta_max_bruteforce(query("plain", MarginLoss.hinge(), LIN, 0.5, (0.5, 0), 0.5))
        assert v.value <= 1e-9
        assert abs(float(v.witness.w @ np.array([0.5, 0.0]))) <= 1e-12

    def test_rho_one_closed_form(self):
        expected = cbar(RHO1, 0.2, 0.5) - cbar(RHO1, 0.9, 0.5)
        assert expected == pytest.approx(0.35, abs=1e-15)
        q = query("plain", RHO1, LIN, 0.5, (0.9, 0), 0.5)
        red = delta_max_reduced(q)
        assert red.value == pytest.approx(0.35, abs=1e-12)
        assert red.method == "symmetric_reduction"
        brute = delta_max_bruteforce(query("plain", RHO1, LIN, 0.5, (0.9, 0), 0.5, grid=FINE))
        assert brute.value == pytest.approx(0.35, abs=1e-3)
        assert brute.method == "brute"

    def test_all_measurable_sup(self):
        v = delta_max_reduced(query("sup", RHO1, ALL, 1.0, (0.4, 0), 1.0))
        assert v.value == pytest.approx(1.0, abs=1e-12)

    def test_x1_infinite(self):
        for eps in (0.1, 0.5):
            for eta in (0.0, 0.5, 1.0):
                q = query("plain", RHO1, LIN, eps, (0.1, 0), eta)
                assert delta_max_reduced(q).is_infinite
                assert delta_max_bruteforce(q).is_infinite

    def test_glm_reduction_method(self):
        v = delta_max_reduced(query("plain", RHO1, RELU, 0.5, (0.5, 0), 0.5))
        assert v.method == "glm_reduction"

    def test_glm_reduction_checks_assumptions(self):
        fam = HypothesisFamily.glm(MonotoneFn.identity(), 1.0)
        with pytest.raises(UnsupportedReductionError):
            delta_max_reduced(query("plain", RHO1, fam, 0.5, (0.5, 0), 0.5))


def _sweep_agreement(form, loss, family, grid, eps_values, radii, etas):
    worst = 0.0
    for eps in eps_values:
        for r in radii:
            for eta in etas:
                q = query(form, loss, family, eps, (r, 0.0), eta, grid=grid)
                a, b = delta_max_reduced(q), delta_max_bruteforce(q)
                assert a.is_infinite == b.is_infinite, (eps, r, eta)
                if not a.is_infinite:
                    worst = max(worst, abs(a.value - b.value))
    return worst


class TestAgreement:
    @pytest.mark.parametrize("form,loss,family,grid", [
        ("plain", MarginLoss.rho_margin(2.0), LIN, FINE),
        ("sup", RHO1, LIN, DEFAULT_GRID),
        ("sup", RHO1, ALL, DEFAULT_GRID),
        ("plain", RHO1, RELU, FINE),
    ], ids=["plain-linear", "sup-linear", "sup-all", "plain-relu"])
    def test_small_grid(self, form, loss, family, grid):
        worst = _sweep_agreement(form, loss, family, grid, (0.2, 0.6), (0.15, 0.5, 1.0),
                                 (0.0, 0.4, 0.5, 0.9))
        assert worst <= 1e-3

    def test_sup_nn_reduction_matches_brute(self):
        fam = HypothesisFamily.one_layer_nn(2)
        worst = _sweep_agreement("sup", MarginLoss.rho_margin(2.0), fam, DEFAULT_GRID, (0.3,),
                                 (0.5, 0.9), (0.2, 0.5))
        assert worst <= 1e-9


class TestInvariants:
    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.21, 1.0), st.floats(0, 1))
    def test_nondecreasing_in_eps(self, r, eta):
        values = []
        for eps in (0.05, 0.2, 0.4, 0.6, 0.8, 1.0):
            v = delta_max_reduced(query("plain", MarginLoss.rho_margin(2.0), LIN, eps, (r, 0), eta))
            values.append(np.inf if v.is_infinite else v.value)
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 1.0), st.floats(0.21, 1.0), st.floats(0, 1),
           st.sampled_from(["plain", "sup"]))
    def test_witness_reproduces_excesses(self, eps, r, eta, form):
        loss = MarginLoss.rho_margin(1.5)
        x = (r, 0.0)
        v = delta_max_reduced(query(form, loss, LIN, eps, x, eta))
        if v.is_infinite:
            assert eps > max(eta, 1 - eta) - 1e-12
            return
        adv = (inner_risk("adv01", None, v.witness, x, eta, 0.2).value
               - minimal_inner_risk("adv01", None, LIN, x, eta, 0.2))
        assert adv >= eps - 1e-12
        sur = (inner_risk(form, loss, v.witness, x, eta, 0.2).value
               - minimal_inner_risk(form, loss, LIN, x, eta, 0.2))
        assert sur == pytest.approx(v.value, abs=2e-3)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.01, 1.0), st.floats(0, 1), st.floats(0, 1))
    def test_infinite_branch_agreement(self, eps, r, eta):
        q = query("sup", RHO1, LIN, eps, (r, 0), eta)
        expected = eps > max(eta, 1 - eta) + 1e-12 or r <= 0.2
        assert delta_max_reduced(q).is_infinite is expected
        assert delta_max_bruteforce(q).is_infinite is expected


class TestUniformDelta:
    def test_hinge_zero(self):
        v = uniform_delta("plain", MarginLoss.hinge(), LIN, 0.2, 0.5)
        assert v.value <= 1e-9

    @pytest.mark.parametrize("family", [LIN, ALL], ids=["linear", "all"])
    def test_large_eps_infinite(self, family):
        assert uniform_delta("sup", RHO1, family, 0.2, 1.2).is_infinite

    def test_sup_rho_positive(self):
        assert uniform_delta("sup", MarginLoss.rho_margin(2.0), LIN, 0.2, 0.5).value > 0

    def test_eps_domain(self):
        with pytest.raises(DomainError):
            uniform_delta("sup", RHO1, LIN, 0.2, 0.0)


class TestVerdict:
    def test_hinge_violated_at_half(self):
        report = calibration_verdict("plain", MarginLoss.hinge(), LIN, 0.2)
        assert report.violated
        assert report.violation.value.value <= 1e-6

    def test_sup_rho_consistent(self):
        report = calibration_verdict("sup", RHO1, LIN, 0.2)
        assert not report.violated
        assert report.min_finite > 1e-6

    def test_sup_hinge_witness_risk(self):
        report = calibration_verdict("sup", MarginLoss.hinge(), LIN, 0.2, etas=[0.5],
                                     epsilons=[0.5])
        assert report.violated
        e = report.violation
        x = (e.x_norm, 0.0)
        risk = inner_risk("sup", MarginLoss.hinge(), e.value.witness, x, 0.5, 0.2).value
        assert risk == pytest.approx(1.2, abs=1e-12)

    def test_threads_deterministic(self):
        a = calibration_verdict("sup", RHO1, LIN, 0.2, threads=1).to_dict()
        b = calibration_verdict("sup", RHO1, LIN, 0.2, threads=3).to_dict()
        assert a == b

    def test_brute_method(self):
        report = calibration_verdict("plain", MarginLoss.hinge(), LIN, 0.2, method="brute",
                                     epsilons=[0.5], etas=[0.5])
        assert report.violated and report.method == "brute"

    def test_rejects_bad_tol(self):
        with pytest.raises(ConfigurationError):
            calibration_verdict("sup", RHO1, LIN, 0.2, tol=0.0)

    def test_csv_rows(self):
        report = calibration_verdict("sup", RHO1, LIN, 0.2, epsilons=[1.0], etas=[0.5])
        rows = report.csv_rows()
        assert len(rows) == 11 and all(r[3] == "inf" or r[3] >= 0 for r in rows)
