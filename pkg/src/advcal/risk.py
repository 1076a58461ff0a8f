"""Conditional risks for plain, supremum-based and adversarial 0/1 losses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import DomainError, UnsupportedFamilyError, UnsupportedReductionError
from .grids import DEFAULT_GRID, GridSpec
from .hypotheses import (
    HypothesisFamily,
    HypothesisPoint,
    MarginPair,
    ParamGrid,
    _as_x,
    _check_gamma,
    _nn_lower_bounds,
    adversarial_margins,
    eval_hypothesis,
    is_regular_at,
    param_grid,
)
from .losses import MarginLoss, _check_eta, cbar, cbar_interval_inf, sup_loss_value

LOSS_FORMS = ("plain", "sup", "adv01")


@dataclass(frozen=True)
class InnerRiskValue:
    value: float
    form: str
    loss: str
    x: tuple[float, ...]
    eta: float
    hypothesis: tuple[float, ...]


def _check_form(form: str) -> str:
    if form not in LOSS_FORMS:
        raise DomainError(f"loss form must be one of {LOSS_FORMS}, got {form!r}")
    return form


def adv01_inner_risk(margins: MarginPair | tuple[float, float], eta: float) -> float:
    """``eta * 1{lower <= 0} + (1 - eta) * 1{upper >= 0}``, exact comparisons."""
    eta = _check_eta(eta)
    lower, upper = (margins.lower, margins.upper) if isinstance(margins, MarginPair) else margins
    if lower > upper:
        raise DomainError("margin pair has lower > upper")
    return eta * float(lower <= 0) + (1.0 - eta) * float(upper >= 0)


def inner_risk(form: str, loss: MarginLoss | None, h: HypothesisPoint, x: Any, eta: float,
               gamma: float, grid: GridSpec = DEFAULT_GRID) -> InnerRiskValue:
    """Conditional risk of ``h`` at ``x`` with ``P(y = +1 | x) = eta``."""
    form = _check_form(form)
    eta = _check_eta(eta)
    xs = tuple(float(v) for v in np.asarray(x, dtype=float).reshape(-1))
    if form == "plain":
        if loss is None:
            raise DomainError("plain form needs a loss")
        value = float(cbar(loss, eval_hypothesis(h, x), eta))
    else:
        m = adversarial_margins(h, x, gamma, grid)
        if form == "adv01":
            value = adv01_inner_risk(m, eta)
        else:
            if loss is None:
                raise DomainError("sup form needs a loss")
            value = eta * sup_loss_value(loss, m, +1) + (1.0 - eta) * sup_loss_value(loss, m, -1)
    return InnerRiskValue(value, form, loss.label if loss else "adv01", xs, eta, h.theta)


def risk_vector(form: str, loss: MarginLoss | None, values: np.ndarray | None,
                lower: np.ndarray | None, upper: np.ndarray | None, eta: float) -> np.ndarray:
    """Vectorized conditional risks from precomputed values or margins."""
    if form == "plain":
        assert values is not None and loss is not None
        return np.asarray(cbar(loss, values, eta), dtype=float)
    assert lower is not None and upper is not None
    if form == "adv01":
        return eta * (lower <= 0) + (1.0 - eta) * (upper >= 0)
    assert loss is not None
    if not loss.has("non_increasing"):
        raise UnsupportedReductionError(f"{loss.label} is not declared non-increasing")
    return eta * loss(lower) + (1.0 - eta) * loss(-upper)


@dataclass(frozen=True)
class RegionTag:
    tag: str
    grid_dependent: bool = False


def separating_members(family: HypothesisFamily, x: np.ndarray, gamma: float,
                       grid: GridSpec = DEFAULT_GRID) -> tuple[bool, bool]:
    """Whether some member has ``lower > 0`` and whether some has ``upper < 0``."""
    r = float(np.linalg.norm(x))
    if family.kind == "linear":
        return r > gamma, r > gamma
    if family.kind == "all_measurable":
        return True, True
    if family.is_glm:
        g = family.link
        assert g is not None
        return bool(g(r - gamma) + family.G > 0), bool(g(-r + gamma) - family.G < 0)
    found = bool(np.any(_nn_lower_bounds(param_grid(family, grid), x, gamma) > 0))
    return found, found


def region_classify(family: HypothesisFamily, x: Any, gamma: float,
                    grid: GridSpec = DEFAULT_GRID) -> RegionTag:
    """X2 if some member separates the ball around ``x``, X1 otherwise."""
    if family.is_glm:
        raise UnsupportedFamilyError("glm families are not closed under negation; no region tag")
    gamma = _check_gamma(gamma)
    arr = _as_x(x, family.dim)
    regular = is_regular_at(family, arr, gamma, grid)
    return RegionTag("X2" if regular else "X1", family.kind == "one_layer_nn")


def minimal_adv01_risk(family: HypothesisFamily, x: Any, eta: float, gamma: float,
                       grid: GridSpec = DEFAULT_GRID) -> float:
    eta = _check_eta(eta)
    gamma = _check_gamma(gamma)
    pos, neg = separating_members(family, _as_x(x, family.dim), gamma, grid)
    options = [1.0] + ([1.0 - eta] if pos else []) + ([eta] if neg else [])
    return min(options)


def reachable_value_interval(family: HypothesisFamily, x: np.ndarray) -> tuple[float, float] | None:
    """Range of ``f(x)`` over linear or glm families; None otherwise."""
    r = float(np.linalg.norm(x))
    if family.kind == "linear":
        return -r, r
    if family.is_glm:
        g = family.link
        assert g is not None
        return float(g(-r)) - family.G, float(g(r)) + family.G
    return None


def grid_minimal_inner_risk(form: str, loss: MarginLoss | None, pg: ParamGrid, x: np.ndarray,
                            eta: float, gamma: float, grid: GridSpec = DEFAULT_GRID) -> float:
    if len(pg) == 0:
        raise DomainError("empty parameter grid")
    if form == "plain":
        risks = risk_vector(form, loss, pg.values_at(x), None, None, eta)
    else:
        lo, hi = pg.margins_at(x, gamma, grid)
        risks = risk_vector(form, loss, None, lo, hi, eta)
    return float(risks.min())


def minimal_inner_risk(form: str, loss: MarginLoss | None, family: HypothesisFamily, x: Any,
                       eta: float, gamma: float, grid: GridSpec = DEFAULT_GRID) -> float:
    """Infimum of the conditional risk over the family.

    adv01 is analytic. Plain losses with the endpoint rule on linear or glm
    families use the exact interval infimum; everything else is the
    parameter-grid minimum.
    """
    form = _check_form(form)
    eta = _check_eta(eta)
    gamma = _check_gamma(gamma)
    arr = _as_x(x, family.dim)
    if form == "adv01":
        return minimal_adv01_risk(family, arr, eta, gamma, grid)
    assert loss is not None
    if form == "plain" and loss.endpoint_rule:
        interval = reachable_value_interval(family, arr)
        if interval is not None:
            return cbar_interval_inf(loss, interval[0], interval[1], eta)
    return grid_minimal_inner_risk(form, loss, param_grid(family, grid), arr, eta, gamma, grid)
