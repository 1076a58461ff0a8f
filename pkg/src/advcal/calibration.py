"""Calibration functions: brute force, exact one-dimensional reductions, and grid verdicts.

The calibration function at ``(eps, x, eta)`` is the smallest excess
surrogate conditional risk among members whose excess adversarial 0/1
conditional risk is at least ``eps``. Two independent routes compute it:

* brute force enumerates a parameter grid, evaluates both excesses per
  member and filters;
* the reduction never evaluates the adversarial excess. It picks a
  constraint set on the margin signs from ``(eps, eta)`` alone and minimizes
  the surrogate risk over that set, in closed form where the reachable
  values form an interval.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, UnsupportedReductionError
from .grids import DEFAULT_GRID, GridSpec
from .hypotheses import (
    HypothesisFamily,
    HypothesisPoint,
    ParamGrid,
    _as_x,
    _check_gamma,
    a_bounds,
    param_grid,
)
from .losses import MarginLoss, _check_eta, cbar_interval_argmin, least_confident_argmin
from .risk import reachable_value_interval, region_classify, risk_vector

BRANCH_TOL = 1e-12
SURROGATE_FORMS = ("plain", "sup")

STRADDLE = "straddle"
LOWER_NONPOS = "lower_nonpos"
UPPER_NONNEG = "upper_nonneg"
ALL = "all"

DEFAULT_EPSILONS = (0.1, 0.25, 0.5, 0.75, 1.0)


def default_x_norms(gamma: float, count: int = 11) -> np.ndarray:
    """``count`` evenly spaced norms in ``(gamma, 1]``."""
    return gamma + (1.0 - gamma) * np.arange(1, count + 1) / count


def default_etas(count: int = 21) -> np.ndarray:
    return np.linspace(0.0, 1.0, count)


@dataclass(frozen=True)
class CalibrationQuery:
    form: str
    loss: MarginLoss
    family: HypothesisFamily
    gamma: float
    epsilon: float
    x: tuple[float, ...]
    eta: float
    grid: GridSpec = DEFAULT_GRID

    def __post_init__(self) -> None:
        if self.form not in SURROGATE_FORMS:
            raise DomainError(f"surrogate form must be one of {SURROGATE_FORMS}")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        _check_eta(self.eta)
        _check_gamma(self.gamma)
        _as_x(self.x, self.family.dim)
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))


@dataclass(frozen=True)
class CalibrationValue:
    """Either a finite nonnegative value with its minimizing member, or infinite."""

    kind: str
    method: str
    value: float | None = None
    witness: HypothesisPoint | None = None

    @classmethod
    def infinite(cls, method: str) -> "CalibrationValue":
        return cls("infinite", method)

    @classmethod
    def finite(cls, value: float, witness: HypothesisPoint | None, method: str) -> "CalibrationValue":
        return cls("finite", method, max(0.0, float(value)), witness)

    @property
    def is_infinite(self) -> bool:
        return self.kind == "infinite"

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "method": self.method,
            "value": self.value,
            "witness": None if self.witness is None else list(self.witness.theta),
        }


def constraint_branch(epsilon: float, eta: float) -> str:
    """Which constraint set carries adversarial excess at least ``epsilon``.

    Boundaries follow the non-strict inequalities literally, with a 1e-12
    slack so that grid values like ``1 - 0.7`` compare as intended.
    """
    if epsilon > max(eta, 1.0 - eta) + BRANCH_TOL:
        return "infinite"
    if epsilon <= abs(2.0 * eta - 1.0) + BRANCH_TOL:
        return LOWER_NONPOS if eta > 0.5 else UPPER_NONNEG
    return STRADDLE


# brute force


class _BruteState:
    """Per-``x`` cache of member values and margins on a parameter grid."""

    def __init__(self, form: str, loss: MarginLoss, pg: ParamGrid, x: np.ndarray,
                 gamma: float, grid: GridSpec):
        if len(pg) == 0:
            raise ConfigurationError("empty parameter grid")
        self.form, self.loss, self.pg = form, loss, pg
        self.lower, self.upper = pg.margins_at(x, gamma, grid)
        self.values = pg.values_at(x) if form == "plain" else None
        self.confidence = np.abs(self.lower + self.upper)
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def excesses(self, eta: float) -> tuple[np.ndarray, np.ndarray]:
        if eta not in self._cache:
            sur = risk_vector(self.form, self.loss, self.values, self.lower, self.upper, eta)
            adv = risk_vector("adv01", None, None, self.lower, self.upper, eta)
            self._cache[eta] = (sur - sur.min(), adv - adv.min())
        return self._cache[eta]

    def delta(self, epsilon: float, eta: float) -> CalibrationValue:
        sur_ex, adv_ex = self.excesses(eta)
        mask = adv_ex >= epsilon - BRANCH_TOL
        if not mask.any():
            return CalibrationValue.infinite("brute")
        idx = np.flatnonzero(mask)
        i = int(idx[least_confident_argmin(sur_ex[idx], self.confidence[idx])])
        return CalibrationValue.finite(float(sur_ex[i]), self.pg[i], "brute")


def delta_max_bruteforce(q: CalibrationQuery,
                         extra_points: Sequence[HypothesisPoint] = ()) -> CalibrationValue:
    """Enumerate the parameter grid, filter by adversarial excess, minimize surrogate excess."""
    pg = param_grid(q.family, q.grid).extended(extra_points)
    state = _BruteState(q.form, q.loss, pg, np.asarray(q.x), q.gamma, q.grid)
    return state.delta(q.epsilon, q.eta)


# reductions


@dataclass
class _SetMin:
    value: float
    make_witness: Callable[[], HypothesisPoint | None]


class _Reducer:
    """Constrained infima of the surrogate conditional risk over sign-constraint sets."""

    method = "symmetric_reduction"

    def __init__(self) -> None:
        self._cache: dict[tuple[float, str], _SetMin] = {}

    def set_min(self, eta: float, which: str) -> _SetMin:
        key = (eta, which)
        if key not in self._cache:
            self._cache[key] = self._compute(eta, which)
        return self._cache[key]

    def _compute(self, eta: float, which: str) -> _SetMin:
        raise NotImplementedError

    def delta(self, branch: str, eta: float) -> CalibrationValue:
        constrained = self.set_min(eta, branch)
        overall = min(self.set_min(eta, ALL).value, constrained.value)
        return CalibrationValue.finite(constrained.value - overall, constrained.make_witness(),
                                       self.method)


def _in_set(which: str, lower: float, upper: float) -> bool:
    if which == STRADDLE:
        return lower <= 0.0 <= upper
    if which == LOWER_NONPOS:
        return lower <= 0.0
    if which == UPPER_NONNEG:
        return upper >= 0.0
    return True


def _linear_member(family: HypothesisFamily, x: np.ndarray, t: float, which: str = ALL,
                   gamma: float = 0.0) -> HypothesisPoint:
    """Unit ``w`` in the plane with ``w . x = t`` (requires d = 2).

    When ``t`` sits on a constraint boundary, rounding can push the margins
    out of the set; ``t`` is then nudged towards its interior.
    """
    r = float(np.linalg.norm(x))
    if r == 0.0:
        return HypothesisPoint.linear(family, (1.0, 0.0))
    xh = x / r
    perp = np.array([-xh[1], xh[0]])
    inward = {LOWER_NONPOS: -1.0, UPPER_NONNEG: 1.0}.get(which, -math.copysign(1.0, t))
    h = HypothesisPoint.linear(family, (1.0, 0.0))
    for k in range(8):
        c = min(1.0, max(-1.0, (t + inward * k * 4e-16) / r))
        h = HypothesisPoint.linear(family, c * xh + math.sqrt(max(0.0, 1.0 - c * c)) * perp)
        m = float(h.w @ x)
        if _in_set(which, m - gamma, m + gamma):
            break
    return h


def _interval_for(which: str, full: tuple[float, float], lower_cut: float,
                  upper_cut: float) -> tuple[float, float]:
    lo, hi = full
    if which == ALL:
        return lo, hi
    if which == STRADDLE:
        return max(lo, lower_cut), min(hi, upper_cut)
    if which == LOWER_NONPOS:
        return lo, min(hi, upper_cut)
    return max(lo, lower_cut), hi


class _IntervalReducer(_Reducer):
    """Plain losses on linear or glm families: the member value ranges over an interval."""

    def __init__(self, loss: MarginLoss, family: HypothesisFamily, x: np.ndarray, gamma: float,
                 grid: GridSpec):
        super().__init__()
        self.loss, self.family, self.x, self.gamma, self.grid = loss, family, x, gamma, grid
        interval = reachable_value_interval(family, x)
        assert interval is not None
        self.full = interval
        r = float(np.linalg.norm(x))
        if family.kind == "linear":
            self.lower_cut, self.upper_cut = -gamma, gamma
        else:
            assert family.link is not None
            a_hi, a_lo = a_bounds(family.link, r, gamma, grid)
            self.lower_cut, self.upper_cut = a_lo, a_hi
            self.method = "glm_reduction"

    def _compute(self, eta: float, which: str) -> _SetMin:
        lo, hi = _interval_for(which, self.full, self.lower_cut, self.upper_cut)
        if lo > hi:
            return _SetMin(math.inf, lambda: None)
        res = cbar_interval_argmin(self.loss, lo, hi, eta, self.grid.interval_points)
        if self.family.kind == "linear":
            return _SetMin(res.value,
                           lambda: _linear_member(self.family, self.x, res.t, which, self.gamma))
        return _SetMin(res.value, lambda: _glm_member(self.family, self.x, res.t, which,
                                                      self.gamma, self.grid))


def _glm_member(family: HypothesisFamily, x: np.ndarray, v: float, which: str, gamma: float,
                grid: GridSpec) -> HypothesisPoint | None:
    """A glm member with ``f(x) = v`` whose margins satisfy ``which``."""
    g = family.link
    assert g is not None
    r = float(np.linalg.norm(x))
    knots = np.asarray(g.kinks())
    extra = np.concatenate([knots, knots + gamma, knots - gamma, [-r, 0.0, r]])
    s = np.unique(np.concatenate([np.linspace(-r, r, grid.link_points),
                                  extra[(extra >= -r) & (extra <= r)]]))
    b = v - np.asarray(g(s))
    lower = np.asarray(g(s - gamma)) + b
    upper = np.asarray(g(s + gamma)) + b
    viol = np.maximum(np.abs(b) - family.G, 0.0)
    if which in (STRADDLE, LOWER_NONPOS):
        viol = np.maximum(viol, lower)
    if which in (STRADDLE, UPPER_NONNEG):
        viol = np.maximum(viol, -upper)
    i = int(np.argmin(viol))
    if viol[i] > 1e-9:
        return None
    w = np.asarray(_linear_member(HypothesisFamily.linear(family.dim), x, float(s[i])).theta)
    c = float(w @ x)
    bi = float(np.clip(v - g(c), -family.G, family.G))
    step = -1.0 if which == LOWER_NONPOS else 1.0
    if which == STRADDLE:
        step = -1.0 if g(c - gamma) + bi > 0 else 1.0
    for k in range(8):
        b_k = float(np.clip(bi + step * k * 4e-16, -family.G, family.G))
        if _in_set(which, g(c - gamma) + b_k, g(c + gamma) + b_k):
            bi = b_k
            break
    return HypothesisPoint.glm(family, w.tolist(), bi)


class _LinearSupReducer(_Reducer):
    """Supremum-based losses on linear members: margins are ``(t - gamma, t + gamma)``."""

    def __init__(self, loss: MarginLoss, family: HypothesisFamily, x: np.ndarray, gamma: float,
                 grid: GridSpec):
        super().__init__()
        self.loss, self.family, self.x, self.gamma, self.grid = loss, family, x, gamma, grid
        r = float(np.linalg.norm(x))
        self.full = (-r, r)

    def _risk(self, t: np.ndarray, eta: float) -> np.ndarray:
        return risk_vector("sup", self.loss, None, t - self.gamma, t + self.gamma, eta)

    def _compute(self, eta: float, which: str) -> _SetMin:
        lo, hi = _interval_for(which, self.full, -self.gamma, self.gamma)
        if lo > hi:
            return _SetMin(math.inf, lambda: None)
        k = np.asarray(self.loss.kinks(), dtype=float)
        cand = np.concatenate([k + self.gamma, -k - self.gamma, [lo, hi]])
        ts = np.unique(np.concatenate([np.linspace(lo, hi, self.grid.interval_points),
                                       cand[(cand >= lo) & (cand <= hi)]]))
        vals = self._risk(ts, eta)
        i = least_confident_argmin(vals, np.abs(ts))
        t = float(ts[i])
        return _SetMin(float(vals[i]),
                       lambda: _linear_member(self.family, self.x, t, which, self.gamma))


class _FreePairSupReducer(_Reducer):
    """Supremum-based losses on all_measurable: any pair ``a <= b`` in ``[-R, R]``.

    The risk is non-increasing in ``a`` and non-decreasing in ``b``, so each
    constraint set is minimized on the diagonal ``a = b = s`` (or at ``(0, 0)``
    for the straddle set), which turns it into a two-point risk over ``s``.
    """

    def __init__(self, loss: MarginLoss, family: HypothesisFamily, grid: GridSpec):
        super().__init__()
        self.loss, self.family, self.grid = loss, family, grid

    def _compute(self, eta: float, which: str) -> _SetMin:
        R = self.family.R
        if which == STRADDLE:
            value = float(risk_vector("sup", self.loss, None, np.zeros(1), np.zeros(1), eta)[0])
            return _SetMin(value, lambda: HypothesisPoint.pair(self.family, 0.0, 0.0))
        lo, hi = {ALL: (-R, R), LOWER_NONPOS: (-R, 0.0), UPPER_NONNEG: (0.0, R)}[which]
        res = cbar_interval_argmin(self.loss, lo, hi, eta, self.grid.interval_points)
        return _SetMin(res.value, lambda: HypothesisPoint.pair(self.family, res.t, res.t))


class _EnumeratedReducer(_Reducer):
    """Sign-constraint sets evaluated over enumerated members (nn, glm sup, d = 1)."""

    def __init__(self, form: str, loss: MarginLoss, pg: ParamGrid, x: np.ndarray, gamma: float,
                 grid: GridSpec, method: str):
        super().__init__()
        self.form, self.loss, self.pg = form, loss, pg
        self.lower, self.upper = pg.margins_at(x, gamma, grid)
        self.values = pg.values_at(x) if form == "plain" else None
        self.method = method
        self._risks: dict[float, np.ndarray] = {}

    def _compute(self, eta: float, which: str) -> _SetMin:
        if eta not in self._risks:
            self._risks[eta] = risk_vector(self.form, self.loss, self.values, self.lower,
                                           self.upper, eta)
        risks = self._risks[eta]
        mask = {
            ALL: np.ones(risks.shape, dtype=bool),
            STRADDLE: (self.lower <= 0) & (self.upper >= 0),
            LOWER_NONPOS: self.lower <= 0,
            UPPER_NONNEG: self.upper >= 0,
        }[which]
        if not mask.any():
            return _SetMin(math.inf, lambda: None)
        idx = np.flatnonzero(mask)
        i = int(idx[least_confident_argmin(risks[idx], np.abs(self.lower + self.upper)[idx])])
        return _SetMin(float(risks[i]), lambda: self.pg[i])


class _ReducedState:
    """Per-``x`` reduction: region check, then per-``eta`` constrained infima."""

    def __init__(self, form: str, loss: MarginLoss, family: HypothesisFamily, x: np.ndarray,
                 gamma: float, grid: GridSpec):
        self.has_x1 = False
        if family.is_glm:
            g = family.link
            assert g is not None
            if not (g(-1.0 - gamma) + family.G > 0 and g(1.0 + gamma) - family.G < 0):
                raise UnsupportedReductionError(
                    "glm reduction needs g(-1-gamma) + G > 0 and g(1+gamma) - G < 0")
        else:
            self.has_x1 = region_classify(family, x, gamma, grid).tag == "X1"
        if form == "sup" and not loss.has("non_increasing"):
            raise UnsupportedReductionError(f"{loss.label} is not declared non-increasing")
        self.reducer = _make_reducer(form, loss, family, x, gamma, grid)

    def delta(self, epsilon: float, eta: float) -> CalibrationValue:
        method = self.reducer.method
        if self.has_x1:
            return CalibrationValue.infinite(method)
        branch = constraint_branch(epsilon, eta)
        if branch == "infinite":
            return CalibrationValue.infinite(method)
        return self.reducer.delta(branch, eta)


def _make_reducer(form: str, loss: MarginLoss, family: HypothesisFamily, x: np.ndarray,
                  gamma: float, grid: GridSpec) -> _Reducer:
    planar = family.dim >= 2
    if form == "plain" and planar and (family.kind == "linear" or family.is_glm):
        return _IntervalReducer(loss, family, x, gamma, grid)
    if form == "sup" and planar and family.kind == "linear":
        return _LinearSupReducer(loss, family, x, gamma, grid)
    if form == "sup" and family.kind == "all_measurable":
        return _FreePairSupReducer(loss, family, grid)
    method = "glm_reduction" if family.is_glm else "symmetric_reduction"
    return _EnumeratedReducer(form, loss, param_grid(family, grid), x, gamma, grid, method)


def delta_max_reduced(q: CalibrationQuery) -> CalibrationValue:
    """Calibration function via the piecewise sign-constraint characterization."""
    state = _ReducedState(q.form, q.loss, q.family, np.asarray(q.x), q.gamma, q.grid)
    return state.delta(q.epsilon, q.eta)


# grid-level diagnostics


def _state(method: str, form: str, loss: MarginLoss, family: HypothesisFamily, x: np.ndarray,
           gamma: float, grid: GridSpec) -> _BruteState | _ReducedState:
    if method == "brute":
        return _BruteState(form, loss, param_grid(family, grid), x, gamma, grid)
    if method == "reduced":
        return _ReducedState(form, loss, family, x, gamma, grid)
    raise ConfigurationError(f"method must be 'reduced' or 'brute', got {method!r}")


@dataclass(frozen=True)
class VerdictEntry:
    epsilon: float
    x_norm: float
    eta: float
    value: CalibrationValue


@dataclass
class VerdictReport:
    verdict: str
    tol: float
    form: str
    loss: dict[str, Any]
    family: dict[str, Any]
    gamma: float
    method: str
    entries: list[VerdictEntry] = field(default_factory=list)
    min_entry: VerdictEntry | None = None
    violation: VerdictEntry | None = None

    @property
    def violated(self) -> bool:
        return self.verdict == "calibration-violated"

    @property
    def min_finite(self) -> float | None:
        return None if self.min_entry is None else self.min_entry.value.value

    def to_dict(self) -> dict[str, Any]:
        def loc(e: VerdictEntry | None) -> dict[str, Any] | None:
            if e is None:
                return None
            return {"epsilon": e.epsilon, "x_norm": e.x_norm, "eta": e.eta, **e.value.to_dict()}

        return {
            "verdict": self.verdict,
            "tol": self.tol,
            "form": self.form,
            "loss": self.loss,
            "family": self.family,
            "gamma": self.gamma,
            "method": self.method,
            "evaluations": len(self.entries),
            "infinite_count": sum(e.value.is_infinite for e in self.entries),
            "min_finite": loc(self.min_entry),
            "violation": loc(self.violation),
        }

    def csv_rows(self) -> list[list[Any]]:
        rows = []
        for e in self.entries:
            v = e.value
            theta = [] if v.witness is None else list(v.witness.theta)
            rows.append([e.epsilon, e.x_norm, e.eta,
                         "inf" if v.is_infinite else v.value, v.method, *theta])
        return rows


def _grid_sweep(form: str, loss: MarginLoss, family: HypothesisFamily, gamma: float,
                grid: GridSpec, epsilons: Sequence[float], x_norms: Sequence[float],
                etas: Sequence[float], method: str, threads: int) -> list[VerdictEntry]:
    gamma = _check_gamma(gamma)

    def one_x(r: float) -> list[VerdictEntry]:
        x = np.zeros(family.dim)
        x[0] = r
        state = _state(method, form, loss, family, x, gamma, grid)
        return [VerdictEntry(float(e), float(r), float(h), state.delta(float(e), float(h)))
                for h in etas for e in epsilons]

    if threads == 1 or len(x_norms) <= 1:
        chunks = [one_x(float(r)) for r in x_norms]
    else:
        with ThreadPoolExecutor(max_workers=threads or None) as pool:
            chunks = list(pool.map(one_x, [float(r) for r in x_norms]))
    return [e for chunk in chunks for e in chunk]


def calibration_verdict(
    form: str,
    loss: MarginLoss,
    family: HypothesisFamily,
    gamma: float,
    grid: GridSpec = DEFAULT_GRID,
    tol: float = 1e-6,
    *,
    method: str = "reduced",
    epsilons: Sequence[float] = DEFAULT_EPSILONS,
    x_norms: Sequence[float] | None = None,
    etas: Sequence[float] | None = None,
    threads: int = 1,
) -> VerdictReport:
    """Grid evidence for or against calibration.

    Violated when some finite calibration value is at most ``tol``. A
    consistent verdict is evidence on the grid, not a proof.
    """
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    x_norms = default_x_norms(gamma) if x_norms is None else x_norms
    etas = default_etas() if etas is None else etas
    entries = _grid_sweep(form, loss, family, gamma, grid, epsilons, x_norms, etas, method, threads)
    finite = [e for e in entries if not e.value.is_infinite]
    min_entry = min(finite, key=lambda e: e.value.value) if finite else None
    violation = next((e for e in finite if e.value.value <= tol), None)
    return VerdictReport(
        verdict="calibration-violated" if violation else "consistent-with-calibration",
        tol=tol, form=form, loss=loss.to_descriptor(), family=family.to_descriptor(),
        gamma=gamma, method=method, entries=entries, min_entry=min_entry, violation=violation,
    )


def uniform_delta(
    form: str,
    loss: MarginLoss,
    family: HypothesisFamily,
    gamma: float,
    epsilon: float,
    grid: GridSpec = DEFAULT_GRID,
    *,
    method: str = "reduced",
    x_norms: Sequence[float] | None = None,
    etas: Sequence[float] | None = None,
    threads: int = 1,
) -> CalibrationValue:
    """Infimum of finite calibration values over an ``(x, eta)`` grid at fixed ``epsilon``.

    Diagnostic only: a positive value does not certify uniform calibration.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    x_norms = default_x_norms(gamma) if x_norms is None else x_norms
    etas = default_etas() if etas is None else etas
    entries = _grid_sweep(form, loss, family, gamma, grid, [epsilon], x_norms, etas, method,
                          threads)
    finite = [e.value for e in entries if not e.value.is_infinite]
    if not finite:
        return CalibrationValue.infinite(method)
    return min(finite, key=lambda v: v.value)
