import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from advcal.errors import DomainError, UnsupportedFamilyError
from advcal.grids import DEFAULT_GRID
from advcal.hypotheses import (
    HypothesisFamily,
    HypothesisPoint,
    MarginPair,
    MonotoneFn,
    ball_points,
    param_grid,
)
from advcal.losses import MarginLoss
from advcal.risk import (
    adv01_inner_risk,
    grid_minimal_inner_risk,
    inner_risk,
    minimal_adv01_risk,
    minimal_inner_risk,
    region_classify,
)

LIN = HypothesisFamily.linear(2)
RELU = HypothesisFamily.relu_glm(1.5)
ALL = HypothesisFamily.all_measurable(2.0)
NN = HypothesisFamily.one_layer_nn(2)


def adv01_direct(h, x, eta, gamma):
    """Robust 0/1 conditional risk from sampled perturbations of x."""
    pts = ball_points(np.asarray(x, dtype=float), gamma, 120)
    vals = pts @ h.w if h.family.kind == "linear" else np.maximum(pts @ h.w, 0) + h.b
    return eta * float(vals.min() <= 0) + (1 - eta) * float(vals.max() >= 0)


class TestAdv01:
    @pytest.mark.parametrize("pair,eta,expected", [
        ((0.3, 0.7), 0.7, 0.3),
        ((-0.5, -0.1), 0.7, 0.7),
        ((0.0, 0.0), 0.25, 1.0),
        ((-0.1, 0.2), 0.7, 1.0),
    ])
    def test_piecewise(self, pair, eta, expected):
        assert adv01_inner_risk(MarginPair(*pair), eta) == pytest.approx(expected, abs=1e-15)

    def test_rejects_bad_pair(self):
        with pytest.raises(DomainError):
            adv01_inner_risk((0.2, -0.2), 0.5)

    def test_matches_direct_evaluation(self):
        rng = np.random.default_rng(3)
        agree = 0
        for _ in range(100):
            ang = rng.uniform(0, 2 * math.pi)
            family = LIN if rng.random() < 0.5 else RELU
            w = (math.cos(ang), math.sin(ang))
            h = (HypothesisPoint.linear(family, w) if family is LIN
                 else HypothesisPoint.glm(family, w, rng.uniform(-0.5, 0.5)))
            v = rng.normal(size=2)
            x = v / np.linalg.norm(v) * rng.uniform(0, 1)
            eta, gamma = rng.uniform(), rng.uniform(0.05, 0.9)
            got = inner_risk("adv01", None, h, x, eta, gamma).value
            margins = (h.w @ x - gamma, h.w @ x + gamma) if family is LIN else None
            # sampled oracle can only miss a sign change within one grid step of the boundary
            if margins is not None and min(abs(margins[0]), abs(margins[1])) < 1e-2:
                continue
            assert got == pytest.approx(adv01_direct(h, x, eta, gamma), abs=1e-15)
            agree += 1
        assert agree >= 80


class TestInnerRisk:
    def test_plain_hinge(self):
        h = HypothesisPoint.linear(LIN, (1, 0))
        assert inner_risk("plain", MarginLoss.hinge(), h, (0.5, 0), 0.5, 0.2).value == 1.0

    def test_sup_rho(self):
        h = HypothesisPoint.linear(LIN, (1, 0))
        r = inner_risk("sup", MarginLoss.rho_margin(1), h, (0.5, 0), 1.0, 0.2)
        assert r.value == pytest.approx(0.7, abs=1e-15)

    def test_adv01_straddle(self):
        h = HypothesisPoint.pair(ALL, -0.1, 0.2)
        assert inner_risk("adv01", None, h, (0.3, 0), 0.7, 0.2).value == 1.0

    def test_bad_form(self):
        with pytest.raises(DomainError):
            inner_risk("robust", MarginLoss.hinge(), HypothesisPoint.linear(LIN, (1, 0)),
                       (0, 0), 0.5, 0.2)

    def test_plain_needs_loss(self):
        with pytest.raises(DomainError):
            inner_risk("plain", None, HypothesisPoint.linear(LIN, (1, 0)), (0, 0), 0.5, 0.2)

    @given(st.floats(0, 2 * math.pi), st.floats(0, 1), st.floats(0, 1), st.floats(0.05, 0.95))
    def test_sup_dominates_plain(self, ang, r, eta, gamma):
        # the worst case over the ball includes the unperturbed point
        loss = MarginLoss.rho_margin(1.0)
        h = HypothesisPoint.linear(LIN, (math.cos(ang), math.sin(ang)))
        x = (r, 0.0)
        plain = inner_risk("plain", loss, h, x, eta, gamma).value
        sup = inner_risk("sup", loss, h, x, eta, gamma).value
        assert sup >= plain - 1e-12


class TestRegions:
    @pytest.mark.parametrize("family,x,tag", [
        (LIN, (0.5, 0), "X2"),
        (LIN, (0.1, 0), "X1"),
        (ALL, (0.0, 0.0), "X2"),
        (NN, (0.6, 0.0), "X2"),
    ])
    def test_examples(self, family, x, tag):
        assert region_classify(family, x, 0.2).tag == tag

    def test_nn_tag_is_grid_dependent(self):
        assert region_classify(NN, (0.6, 0), 0.2).grid_dependent

    def test_glm_rejected(self):
        with pytest.raises(UnsupportedFamilyError):
            region_classify(RELU, (0.5, 0), 0.2)


class TestMinimalRisk:
    @pytest.mark.parametrize("x,eta,expected", [
        ((0.5, 0), 0.3, 0.3),
        ((0.1, 0), 0.3, 1.0),
        ((0.1, 0), 0.9, 1.0),
        ((0.5, 0), 0.5, 0.5),
    ])
    def test_adv01_linear(self, x, eta, expected):
        assert minimal_inner_risk("adv01", None, LIN, x, eta, 0.2) == expected

    def test_plain_rho_endpoint_rule(self):
        loss = MarginLoss.rho_margin(1)
        exact = minimal_inner_risk("plain", loss, LIN, (0.9, 0), 0.5, 0.2)
        assert exact == pytest.approx(0.55, abs=1e-12)
        grid = grid_minimal_inner_risk("plain", loss, param_grid(LIN), np.array([0.9, 0]), 0.5, 0.2)
        assert grid == pytest.approx(exact, abs=1e-3)
        assert grid >= exact - 1e-12

    @pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("eta", [0.0, 0.3, 0.5, 0.8])
    def test_endpoint_rule_vs_grid_search(self, rho, eta):
        loss = MarginLoss.rho_margin(rho)
        for r in (0.1, 0.45, 0.8, 1.0):
            x = np.array([r, 0.0])
            exact = minimal_inner_risk("plain", loss, LIN, x, eta, 0.2)
            grid = grid_minimal_inner_risk("plain", loss, param_grid(LIN), x, eta, 0.2)
            assert grid == pytest.approx(exact, abs=1e-3 / rho + 1e-9)

    def test_glm_endpoint_rule(self):
        loss = MarginLoss.rho_margin(1)
        fam = HypothesisFamily.glm(MonotoneFn.relu(), 1.5)
        x = np.array([0.6, 0.0])
        exact = minimal_inner_risk("plain", loss, fam, x, 0.7, 0.2)
        grid = grid_minimal_inner_risk("plain", loss, param_grid(fam), x, 0.7, 0.2)
        assert grid == pytest.approx(exact, abs=1e-2)

    def test_adv01_is_infimum_over_grid(self):
        pg = param_grid(LIN)
        for r in (0.1, 0.3, 0.9):
            x = np.array([r, 0.0])
            for eta in (0.0, 0.3, 0.5, 1.0):
                best = minimal_adv01_risk(LIN, x, eta, 0.2)
                assert best <= grid_minimal_inner_risk("adv01", None, pg, x, eta, 0.2) + 1e-15

    def test_straddle_excess_is_half_on_x2(self):
        h = HypothesisPoint.linear(LIN, (0, 1))
        x = (0.6, 0.0)
        excess = (inner_risk("adv01", None, h, x, 0.5, 0.2).value
                  - minimal_inner_risk("adv01", None, LIN, x, 0.5, 0.2))
        assert excess == 0.5

    def test_sup_minimal_on_all_measurable(self):
        loss = MarginLoss.rho_margin(1)
        # the pair (R, R) gives phi(R) = 0 at eta = 1
        assert minimal_inner_risk("sup", loss, ALL, (0.3, 0), 1.0, 0.2, DEFAULT_GRID) == 0.0
