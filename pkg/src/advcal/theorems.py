"""Executable theorem conditions, negative witnesses, and their numeric cross-checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .calibration import (
    CalibrationQuery,
    CalibrationValue,
    VerdictReport,
    calibration_verdict,
    delta_max_bruteforce,
    delta_max_reduced,
)
from .errors import InapplicableError
from .grids import DEFAULT_GRID, GridSpec
from .hypotheses import (
    HypothesisFamily,
    HypothesisPoint,
    MonotoneFn,
    _check_gamma,
    a_bounds,
    is_regular_at,
)
from .losses import MarginLoss, verify_loss_properties
from .risk import inner_risk

STRICT_MARGIN = 1e-9
EQUALITY_TOL = 1e-9
CONDITION_POINTS = 1001


@dataclass(frozen=True)
class Condition:
    name: str
    passed: bool
    worst: float
    at_t: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "worst": self.worst, "at_t": self.at_t}


@dataclass
class TheoremVerdict:
    theorem: str
    predicted: str
    conditions: list[Condition] = field(default_factory=list)
    flags: list[dict[str, Any]] = field(default_factory=list)
    cross_check: dict[str, Any] | None = None
    note: str = ""

    @property
    def calibrated(self) -> bool:
        return self.predicted == "calibrated"

    def to_dict(self) -> dict[str, Any]:
        return {
            "theorem": self.theorem,
            "predicted": self.predicted,
            "conditions": [c.to_dict() for c in self.conditions],
            "flags": self.flags,
            "cross_check": self.cross_check,
            "note": self.note,
        }


def _t_grid(lo: float, hi: float, include_lo: bool, inserts: Sequence[float]) -> np.ndarray:
    base = np.linspace(lo, hi, CONDITION_POINTS + (0 if include_lo else 1))
    if not include_lo:
        base = base[1:]
    ins = np.asarray([v for v in inserts if (lo <= v if include_lo else lo < v) and v <= hi])
    return np.unique(np.concatenate([base, ins]))


def _strict(name: str, lhs: np.ndarray, rhs: np.ndarray, t: np.ndarray) -> Condition:
    gap = lhs - rhs
    i = int(np.argmin(gap))
    return Condition(name, bool(gap[i] >= STRICT_MARGIN), float(gap[i]), float(t[i]))


def _equal(name: str, lhs: np.ndarray, rhs: np.ndarray, t: np.ndarray) -> Condition:
    dev = np.abs(lhs - rhs)
    i = int(np.argmax(dev))
    return Condition(name, bool(dev[i] <= EQUALITY_TOL), float(-dev[i]), float(t[i]))


def _loss_kink_points(loss: MarginLoss) -> list[float]:
    return [s * k for k in loss.kinks() for s in (1.0, -1.0)]


def _loss_shape_conditions(loss: MarginLoss, grid: GridSpec) -> list[Condition]:
    report = verify_loss_properties(loss, grid)
    out = []
    for prop in ("bounded", "continuous", "non_increasing"):
        c = report.checks[prop]
        out.append(Condition(f"loss_{prop}", c.passed, c.worst))
    out.append(Condition("loss_quasi_concave_even", report.quasi_concave_even,
                         min(report.checks[k].worst for k in report.checks if k.startswith(("cbar", "endpoint")))))
    return out


def _numeric_cross_check(report: VerdictReport, predicted: str, positive_floor: float) -> dict[str, Any]:
    min_delta = report.min_finite
    if predicted == "calibrated":
        agrees = not report.violated and (min_delta is None or min_delta >= positive_floor)
    else:
        agrees = report.violated
    return {"agrees": agrees, "positive_floor": positive_floor, **report.to_dict()}


def rho_threshold_linear(loss: MarginLoss) -> bool | None:
    """Closed-form threshold for rho-margin on linear members: ``rho > 1``."""
    if loss.kind != "rho_margin":
        return None
    assert loss.rho is not None
    return loss.rho > 1.0


def rho_threshold_relu(loss: MarginLoss, G: float, gamma: float) -> bool | None:
    """Closed-form threshold for rho-margin on relu members: ``G >= rho > gamma`` with ``G > 1 + gamma``."""
    if loss.kind != "rho_margin":
        return None
    assert loss.rho is not None
    return G > 1.0 + gamma and G >= loss.rho > gamma


def check_qce_linear(loss: MarginLoss, gamma: float, grid: GridSpec = DEFAULT_GRID, *,
                     cross_check: bool = False, threads: int = 1) -> TheoremVerdict:
    """Strict symmetrized-loss gap between ``gamma`` and every ``t`` in ``(gamma, 1]``.

    Calibrated iff ``phi(gamma) + phi(-gamma) > phi(t) + phi(-t)`` on the grid,
    given a bounded, continuous, non-increasing, quasi-concave-even loss with
    ``phi(-t) > phi(t)`` there.
    """
    gamma = _check_gamma(gamma)
    t = _t_grid(gamma, 1.0, False, _loss_kink_points(loss))
    pre = _loss_shape_conditions(loss, grid)
    pre.append(_strict("standing_asymmetry", loss(-t), loss(t), t))
    verdict = TheoremVerdict("qce-linear", "inapplicable", pre)
    if not all(c.passed for c in pre):
        verdict.note = "standing assumptions fail"
        return verdict
    anchor = float(loss(gamma) + loss(-gamma))
    cond = _strict("symmetrized_gap", np.full(t.shape, anchor), loss(t) + loss(-t), t)
    verdict.conditions.append(cond)
    verdict.predicted = "calibrated" if cond.passed else "not_calibrated"
    threshold = rho_threshold_linear(loss)
    if threshold is not None and threshold != cond.passed:
        verdict.flags.append({
            "code": "rho-threshold-disagreement",
            "message": ("condition evaluated at this gamma and the closed-form rho > 1 threshold "
                        "disagree; both are reported"),
            "condition_verdict": verdict.predicted,
            "threshold_verdict": "calibrated" if threshold else "not_calibrated",
            "rho": loss.rho,
            "gamma": gamma,
        })
    if cross_check:
        report = calibration_verdict("plain", loss, HypothesisFamily.linear(2), gamma, grid,
                                     threads=threads)
        verdict.cross_check = _numeric_cross_check(report, verdict.predicted, 1e-3)
    return verdict


def check_qce_glm(loss: MarginLoss, g: MonotoneFn, G: float, gamma: float,
                  grid: GridSpec = DEFAULT_GRID, *, cross_check: bool = False,
                  threads: int = 1) -> TheoremVerdict:
    """Equality and strictness conditions for glm members on ``t`` in ``[0, 1]``."""
    gamma = _check_gamma(gamma)
    inserts = [gamma] + [k - G for k in _loss_kink_points(loss)] + [G - k for k in _loss_kink_points(loss)]
    t = _t_grid(0.0, 1.0, True, inserts)
    g_neg, g_pos = np.asarray(g(-t), dtype=float), np.asarray(g(t), dtype=float)
    pre = _loss_shape_conditions(loss, grid)
    pre.append(_strict("link_upper", np.array([G]), np.array([g(1.0 + gamma)]), np.zeros(1)))
    pre.append(_strict("link_lower", np.array([g(-1.0 - gamma)]), np.array([-G]), np.zeros(1)))
    pre.append(_strict("standing_asymmetry", loss(g_neg - G), loss(G - g_neg), t))
    sym = g_neg + g_pos
    i = int(np.argmin(sym))
    pre.append(Condition("link_balance", bool(sym[i] >= 0), float(sym[i]), float(t[i])))
    verdict = TheoremVerdict("qce-glm", "inapplicable", pre)
    if not all(c.passed for c in pre):
        verdict.note = "standing assumptions fail"
        return verdict
    left = loss(G - g_neg) + loss(g_neg - G)
    right = loss(g_pos + G) + loss(-g_pos - G)
    eq = _equal("edge_equality", left, right, t)
    bounds = np.array([a_bounds(g, float(s), gamma, grid) for s in t])
    a_hi, a_lo = bounds[:, 0], bounds[:, 1]
    sym_hi, sym_lo = loss(a_hi) + loss(-a_hi), loss(a_lo) + loss(-a_lo)
    strict = _strict("increment_gap", np.minimum(sym_hi, sym_lo), left, t)
    verdict.conditions += [eq, strict]
    verdict.predicted = "calibrated" if eq.passed and strict.passed else "not_calibrated"
    if cross_check:
        family = HypothesisFamily.glm(g, G, 2)
        report = calibration_verdict("plain", loss, family, gamma, grid, threads=threads)
        verdict.cross_check = _numeric_cross_check(report, verdict.predicted, 1e-3)
    return verdict


def check_relu_corollary(loss: MarginLoss, G: float, gamma: float, grid: GridSpec = DEFAULT_GRID,
                         *, cross_check: bool = False, threads: int = 1) -> TheoremVerdict:
    """Relu specialization: flat symmetrized loss beyond ``G`` and a strict gap at ``gamma``."""
    gamma = _check_gamma(gamma)
    verdict = TheoremVerdict("relu-corollary", "inapplicable")
    if not G > 1.0 + gamma:
        verdict.conditions.append(Condition("bias_bound", False, G - 1.0 - gamma))
        verdict.note = "needs G > 1 + gamma"
        return verdict
    pre = _loss_shape_conditions(loss, grid)
    pre.append(_strict("standing_asymmetry", np.array([loss(-G)]), np.array([loss(G)]), np.zeros(1)))
    verdict.conditions = pre
    if not all(c.passed for c in pre):
        verdict.note = "standing assumptions fail"
        return verdict
    t = _t_grid(0.0, 1.0, True, [k - G for k in _loss_kink_points(loss)])
    base = float(loss(G) + loss(-G))
    eq = _equal("flat_beyond_bias", np.full(t.shape, base), loss(t + G) + loss(-t - G), t)
    strict = _strict("gap_at_gamma", np.array([loss(gamma) + loss(-gamma)]), np.array([base]),
                     np.array([gamma]))
    verdict.conditions += [eq, strict]
    verdict.predicted = "calibrated" if eq.passed and strict.passed else "not_calibrated"
    threshold = rho_threshold_relu(loss, G, gamma)
    if threshold is not None and threshold != (verdict.predicted == "calibrated"):
        verdict.flags.append({
            "code": "rho-threshold-disagreement",
            "message": "condition verdict and the closed-form G >= rho > gamma threshold disagree",
            "condition_verdict": verdict.predicted,
            "threshold_verdict": "calibrated" if threshold else "not_calibrated",
        })
    if cross_check:
        report = calibration_verdict("plain", loss, HypothesisFamily.relu_glm(G, 2), gamma, grid,
                                     threads=threads)
        verdict.cross_check = _numeric_cross_check(report, verdict.predicted, 1e-3)
    return verdict


# negative witnesses


@dataclass
class Witness:
    form: str
    loss: str
    family: HypothesisFamily
    gamma: float
    x0: tuple[float, ...]
    hypothesis: HypothesisPoint
    surrogate_risk: float
    expected_risk: float
    adversarial_excess: float
    delta: CalibrationValue

    def to_dict(self) -> dict[str, Any]:
        return {
            "form": self.form,
            "loss": self.loss,
            "family": self.family.to_descriptor(),
            "gamma": self.gamma,
            "x0": list(self.x0),
            "hypothesis": list(self.hypothesis.theta),
            "surrogate_risk": self.surrogate_risk,
            "expected_risk": self.expected_risk,
            "adversarial_excess": self.adversarial_excess,
            "delta_max": self.delta.to_dict(),
        }


def convex_negative_witness(loss: MarginLoss, family: HypothesisFamily, gamma: float,
                            form: str = "plain", grid: GridSpec = DEFAULT_GRID) -> Witness:
    """Construct a member with zero surrogate excess but adversarial excess 1/2 at ``eta = 1/2``.

    * plain loss, linear: ``w`` orthogonal to ``x0`` with ``gamma < |x0| <= 1``;
    * plain loss, glm: ``x0 = 0`` and ``b = -g(0)``;
    * sup loss, linear: same ``w``; risk ``phi(-gamma)``;
    * sup loss, glm: ``x0 = 0`` and ``b0 = -(g(gamma) + g(-gamma)) / 2``;
    * sup loss, one_layer_nn or all_measurable: the zero function.
    """
    gamma = _check_gamma(gamma)
    report = verify_loss_properties(loss, grid)
    if not (loss.has("convex") and report.passed("convex")):
        raise InapplicableError(f"{loss.label} is not convex")
    if form == "sup" and not (loss.has("non_increasing") and report.passed("non_increasing")):
        raise InapplicableError(f"{loss.label} is not non-increasing")
    if family.dim != 2:
        raise InapplicableError("witness constructions use d = 2")
    r0 = (1.0 + gamma) / 2.0
    kind = family.kind
    if kind == "linear":
        x0 = np.array([r0, 0.0])
        h = HypothesisPoint.linear(family, (0.0, 1.0))
        expected = float(loss(0.0)) if form == "plain" else float(loss(-gamma))
    elif family.is_glm:
        g = family.link
        assert g is not None
        x0 = np.zeros(2)
        b = -float(g(0.0)) if form == "plain" else -(float(g(gamma)) + float(g(-gamma))) / 2.0
        if abs(b) > family.G:
            raise InapplicableError("witness bias exceeds the bias bound")
        h = HypothesisPoint.glm(family, (1.0, 0.0), b)
        expected = float(loss(0.0)) if form == "plain" else float(loss((g(-gamma) - g(gamma)) / 2.0))
    elif form == "sup" and kind in ("one_layer_nn", "all_measurable"):
        x0 = np.array([r0, 0.0])
        h = HypothesisPoint.zero(family)
        expected = float(loss(0.0))
    else:
        raise InapplicableError(f"no witness construction for {form} loss on {kind}")
    if not is_regular_at(family, x0, gamma, grid):
        raise InapplicableError("the witness point is not distinguishing for this family")
    risk = inner_risk(form, loss, h, x0, 0.5, gamma, grid).value
    adv = inner_risk("adv01", None, h, x0, 0.5, gamma, grid).value
    query = CalibrationQuery(form, loss, family, gamma, 0.5, tuple(x0), 0.5, grid)
    delta = delta_max_bruteforce(query, extra_points=[h])
    return Witness(form, loss.label, family, gamma, tuple(x0.tolist()), h, risk, expected,
                   adv - 0.5, delta)


def sup_rho_positive_check(rho: float, family: HypothesisFamily, gamma: float,
                           grid: GridSpec = DEFAULT_GRID, *, cross_check: bool = True,
                           tol: float = 1e-6, threads: int = 1) -> TheoremVerdict:
    """The supremum-based rho-margin loss is calibrated on every symmetric family."""
    gamma = _check_gamma(gamma)
    verdict = TheoremVerdict("sup-rho", "inapplicable")
    if not family.symmetric:
        verdict.note = f"{family.kind} is not closed under negation"
        return verdict
    verdict.predicted = "calibrated"
    if cross_check:
        report = calibration_verdict("sup", MarginLoss.rho_margin(rho), family, gamma, grid,
                                     tol=tol, threads=threads)
        verdict.cross_check = _numeric_cross_check(report, "calibrated", tol)
    return verdict


def regularity_theorem_check(family: HypothesisFamily, gamma: float, x_grid: Sequence[Sequence[float]],
                             grid: GridSpec = DEFAULT_GRID,
                             surrogate: MarginLoss | None = None) -> TheoremVerdict:
    """Without any distinguishing point every surrogate is trivially calibrated."""
    gamma = _check_gamma(gamma)
    verdict = TheoremVerdict("regularity", "inapplicable")
    if not family.symmetric:
        verdict.note = f"{family.kind} is not closed under negation"
        return verdict
    regular = [tuple(map(float, x)) for x in x_grid if is_regular_at(family, x, gamma, grid)]
    verdict.conditions.append(Condition("no_distinguishing_point", not regular,
                                        float(len(regular)), None))
    if regular:
        verdict.note = f"distinguishing point found at {list(regular[0])}"
        return verdict
    loss = surrogate or MarginLoss.hinge()
    samples = list(x_grid)[:: max(1, len(x_grid) // 5)]
    infinite = []
    for x in samples:
        for eta in (0.0, 0.5, 1.0):
            q = CalibrationQuery("sup", loss, family, gamma, 0.5, tuple(x), eta, grid)
            infinite.append(delta_max_reduced(q).is_infinite)
    verdict.predicted = "calibrated"
    verdict.note = "trivially calibrated: no distinguishing point on the grid"
    verdict.cross_check = {"agrees": all(infinite), "sampled": len(infinite)}
    return verdict


def radial_x_grid(max_norm: float, count: int = 11, dim: int = 2) -> list[tuple[float, ...]]:
    """Points ``(r, 0, ...)`` with ``r`` evenly spaced in ``[0, max_norm]``."""
    out = []
    for r in np.linspace(0.0, max_norm, count):
        x = [0.0] * dim
        x[0] = float(r)
        out.append(tuple(x))
    return out
