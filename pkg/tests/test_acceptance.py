"""End-to-end acceptance criteria, one test per criterion at the stated tolerances.

The terminal summary prints one PASS/FAIL line per criterion.
"""

import itertools
import json
import math

import numpy as np
import pytest

from advcal.calibration import CalibrationQuery, calibration_verdict, delta_max_bruteforce, delta_max_reduced
from advcal.consistency import ExperimentConfig, consistency_experiment
from advcal.grids import DEFAULT_GRID
from advcal.hypotheses import HypothesisFamily, HypothesisPoint, MonotoneFn, adversarial_margins, margins_oracle
from advcal.losses import QCE_PARTS, MarginLoss, cbar_interval_inf, verify_loss_properties
from advcal.theorems import check_qce_linear, check_relu_corollary, convex_negative_witness

GAMMA = 0.2
FINE = DEFAULT_GRID.with_(angles=7200)
LIN = HypothesisFamily.linear(2)
RELU = HypothesisFamily.relu_glm(1.5)
IDENT = HypothesisFamily.glm(MonotoneFn.identity(), 1.5)
NN = HypothesisFamily.one_layer_nn(width=2, lam=1.0, w_bound=1.0, dim=2)
ALL = HypothesisFamily.all_measurable(2.0)

# convex losses written out directly, independent of the loss module
CONVEX = {
    "hinge": (MarginLoss.hinge(), lambda t: max(0.0, 1.0 - t)),
    "logistic": (MarginLoss.logistic(), lambda t: math.log1p(math.exp(-t))),
    "exponential": (MarginLoss.exponential(), lambda t: math.exp(-t)),
}


def _random_member(family, rng):
    ang = rng.uniform(0, 2 * math.pi)
    w = (math.cos(ang), math.sin(ang))
    if family.kind == "linear":
        return HypothesisPoint.linear(family, w)
    return HypothesisPoint.glm(family, w, rng.uniform(-family.G, family.G))


def _random_x(rng):
    v = rng.normal(size=2)
    return v / np.linalg.norm(v) * math.sqrt(rng.uniform())


@pytest.mark.criterion(1, "closed-form margins match the ball-grid oracle")
def test_margin_oracle_equivalence(record_property):
    worst, worst_width = 0.0, 0.0
    for seed, family in enumerate((LIN, IDENT, RELU)):
        rng = np.random.default_rng(seed)
        for _ in range(100):
            h, x, gamma = _random_member(family, rng), _random_x(rng), rng.uniform(0.01, 0.99)
            closed = adversarial_margins(h, x, gamma)
            oracle = margins_oracle(h, x, gamma)
            worst = max(worst, abs(closed.lower - oracle.lower), abs(closed.upper - oracle.upper))
            if family is LIN:
                worst_width = max(worst_width, abs(closed.upper - closed.lower - 2 * gamma))
    record_property("detail", f"max |closed - oracle| = {worst:.2e}, linear width error {worst_width:.1e}")
    assert worst <= 1e-2
    assert worst_width <= 1e-12


EPSILONS = (0.1, 0.3, 0.5, 0.7, 0.9)
NORMS = (0.1, 0.3, 0.5, 0.75, 1.0)
ETAS = (0.0, 0.25, 0.5, 0.75, 1.0)
AGREEMENT_CASES = [
    ("plain", MarginLoss.rho_margin(2.0), LIN, FINE),
    ("sup", MarginLoss.rho_margin(1.0), LIN, FINE),
    ("sup", MarginLoss.rho_margin(1.0), ALL, DEFAULT_GRID),
    ("plain", MarginLoss.rho_margin(1.0), RELU, FINE),
]


@pytest.mark.criterion(2, "reduced and brute-force calibration values agree")
def test_delta_max_method_agreement(record_property):
    worst, mismatches, details = 0.0, [], []
    direction = np.array([math.cos(0.37), math.sin(0.37)])
    for form, loss, family, grid in AGREEMENT_CASES:
        case_worst = 0.0
        for eps, r, eta in itertools.product(EPSILONS, NORMS, ETAS):
            q = CalibrationQuery(form, loss, family, GAMMA, eps, tuple(r * direction), eta, grid)
            a, b = delta_max_reduced(q), delta_max_bruteforce(q)
            if a.is_infinite or b.is_infinite:
                if a.is_infinite != b.is_infinite:
                    mismatches.append((form, family.kind, eps, r, eta))
                continue
            case_worst = max(case_worst, abs(a.value - b.value))
        worst = max(worst, case_worst)
        details.append(f"{form}/{family.kind} {case_worst:.1e}")
    record_property("detail", ", ".join(details))
    assert not mismatches, mismatches
    assert worst <= 1e-3


def _expected_risk(phi, form, family, gamma):
    if form == "plain" or family.kind in ("one_layer_nn", "all_measurable"):
        return phi(0.0)
    if family.kind == "linear":
        return phi(-gamma)
    g = family.link
    return phi((float(g(-gamma)) - float(g(gamma))) / 2.0)


WITNESS_CASES = [("plain", LIN), ("sup", LIN), ("sup", IDENT), ("sup", RELU), ("sup", NN),
                 ("sup", ALL)]


@pytest.mark.criterion(3, "convex losses yield zero-calibration witnesses")
def test_negative_witnesses(record_property):
    worst_delta, worst_risk, failures = 0.0, 0.0, []
    for (name, (loss, phi)), (form, family) in itertools.product(CONVEX.items(), WITNESS_CASES):
        w = convex_negative_witness(loss, family, GAMMA, form)
        delta = math.inf if w.delta.is_infinite else w.delta.value
        err = abs(w.surrogate_risk - _expected_risk(phi, form, family, GAMMA))
        worst_delta, worst_risk = max(worst_delta, delta), max(worst_risk, err)
        if delta > 1e-9 or err > 1e-12:
            failures.append((name, form, family.kind, delta, err))
    record_property("detail", f"max delta {worst_delta:.1e}, max risk error {worst_risk:.1e}")
    assert not failures, failures


def _numeric_agreement(report, predicted):
    if predicted == "calibrated":
        return not report.violated and report.min_finite is not None and report.min_finite >= 1e-3
    return report.violated and report.violation.value.value <= 1e-6


@pytest.mark.criterion(4, "linear rho-margin condition and numeric sweep agree")
def test_positive_linear_condition(record_property):
    cases = [(2.0, 0.1, "calibrated"), (2.0, 0.5, "calibrated"), (0.05, 0.1, "not_calibrated")]
    details, ok = [], True
    for rho, gamma, expected in cases:
        loss = MarginLoss.rho_margin(rho)
        verdict = check_qce_linear(loss, gamma).predicted
        report = calibration_verdict("plain", loss, LIN, gamma)
        agrees = _numeric_agreement(report, expected)
        value = report.violation.value.value if report.violated else report.min_finite
        details.append(f"rho={rho} gamma={gamma}: {verdict}, delta {value:.2e}")
        ok = ok and verdict == expected and agrees
    record_property("detail", "; ".join(details))
    assert ok


@pytest.mark.criterion(5, "relu corollary verdicts and numeric signs agree")
def test_relu_corollary(record_property):
    cases = [(1.0, "calibrated"), (0.1, "not_calibrated"), (2.0, "not_calibrated")]
    details, ok = [], True
    for rho, expected in cases:
        loss = MarginLoss.rho_margin(rho)
        verdict = check_relu_corollary(loss, 1.5, GAMMA).predicted
        report = calibration_verdict("plain", loss, RELU, GAMMA)
        agrees = _numeric_agreement(report, expected)
        value = report.violation.value.value if report.violated else report.min_finite
        details.append(f"rho={rho}: {verdict}, delta {value:.2e}")
        ok = ok and verdict == expected and agrees
    record_property("detail", "; ".join(details))
    assert ok


@pytest.mark.criterion(6, "sup rho-margin is calibrated on symmetric families")
def test_sup_rho_universality(record_property):
    violations, smallest = [], math.inf
    for rho, family, gamma in itertools.product((0.5, 2.0), (LIN, NN, ALL), (0.2, 0.5)):
        report = calibration_verdict("sup", MarginLoss.rho_margin(rho), family, gamma)
        if report.violated:
            violations.append((rho, family.kind, gamma, report.violation.value.value))
        if report.min_finite is not None:
            smallest = min(smallest, report.min_finite)
    record_property("detail", f"12 sweeps, smallest finite delta {smallest:.3e}")
    assert not violations, violations


@pytest.mark.criterion(7, "conditional-risk property suite for rho-margin")
def test_conditional_risk_properties(record_property):
    failed = []
    for rho in (0.5, 1.0, 2.0):
        report = verify_loss_properties(MarginLoss.rho_margin(rho))
        failed += [(rho, part) for part in QCE_PARTS if not report.passed(part)]
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(50):
        loss = MarginLoss.rho_margin((0.5, 1.0, 2.0)[i % 3])
        lo = rng.uniform(-2, 2)
        hi = lo + rng.uniform(0, 2)
        eta = rng.uniform()
        ts = np.linspace(lo, hi, 10_000)
        oracle = float(np.min(eta * loss(ts) + (1 - eta) * loss(-ts)))
        worst = max(worst, abs(cbar_interval_inf(loss, lo, hi, eta) - oracle))
    record_property("detail", f"endpoint rule max error {worst:.1e} on 50 intervals")
    assert not failed, failed
    assert worst <= 1e-6


def _experiment(form, rho, seed):
    cfg = {"form": form, "loss": {"kind": "rho_margin", "params": {"rho": rho}},
           "family": {"kind": "linear", "params": {"dim": 2}}, "gamma": GAMMA,
           "distribution": {"r_min": 0.4}, "n_train": 1000, "n_test": 1000}
    return consistency_experiment(ExperimentConfig.from_dict(cfg, seed=seed))


@pytest.mark.criterion(8, "calibrated surrogates reach zero robust risk on realizable data")
def test_consistency_experiments(record_property):
    details, ok = [], True
    for form, rho in (("sup", 1.0), ("plain", 2.0)):
        first = _experiment(form, rho, seed=0)
        again = _experiment(form, rho, seed=0)
        gaps = first.trace.gaps()
        monotone = all(b <= a for a, b in zip(gaps, gaps[1:]))
        identical = json.dumps(first.to_dict()) == json.dumps(again.to_dict())
        zero = first.train_adv_risk == 0.0 and first.test_adv_risk == 0.0
        details.append(f"{form} rho={rho}: train {first.train_adv_risk}, test {first.test_adv_risk}")
        ok = ok and monotone and identical and zero and first.assertion.get("passed") is True
    record_property("detail", "; ".join(details))
    assert ok


@pytest.mark.criterion(9, "threshold disagreement is flagged, not resolved silently")
def test_discrepancy_flag(record_property):
    verdict = check_qce_linear(MarginLoss.rho_margin(1.0), GAMMA)
    codes = [f["code"] for f in verdict.flags]
    record_property("detail", f"verdict {verdict.predicted}, flags {codes}")
    assert codes == ["rho-threshold-disagreement"]
    flag = verdict.flags[0]
    assert {flag["condition_verdict"], flag["threshold_verdict"]} == {"calibrated", "not_calibrated"}
