"""Margin losses, their supremum-based lifts, and the two-point conditional risk."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import DomainError, InvalidLossError, UnsupportedReductionError
from .grids import DEFAULT_GRID, GridSpec
from .hypotheses import MarginPair

LOSS_KINDS = ("zero_one", "rho_margin", "hinge", "logistic", "exponential", "custom_table")
PROPERTY_NAMES = ("convex", "non_increasing", "bounded", "continuous", "quasi_concave_even")

IDENTITY_TOL = 1e-12
MONOTONE_TOL = 1e-9

_BUILTIN_PROPS: dict[str, frozenset[str]] = {
    "zero_one": frozenset({"non_increasing", "bounded"}),
    "rho_margin": frozenset({"non_increasing", "bounded", "continuous", "quasi_concave_even"}),
    "hinge": frozenset({"convex", "non_increasing", "continuous"}),
    "logistic": frozenset({"convex", "non_increasing", "continuous"}),
    "exponential": frozenset({"convex", "non_increasing", "continuous"}),
}

_ENDPOINT_RULE_PROPS = frozenset({"quasi_concave_even", "continuous", "bounded", "non_increasing"})


@dataclass(frozen=True)
class MarginLoss:
    """A margin loss ``phi(t)`` with declared analytic properties.

    Use the classmethod constructors; they validate parameters.
    """

    kind: str
    rho: float | None = None
    base: float | None = None
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    declared: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise InvalidLossError(f"unknown loss kind {self.kind!r}")
        unknown = set(self.declared) - set(PROPERTY_NAMES)
        if unknown:
            raise InvalidLossError(f"unknown declared properties {sorted(unknown)}")
        if self.kind == "rho_margin":
            if self.rho is None or not math.isfinite(self.rho) or self.rho <= 0:
                raise InvalidLossError(f"rho_margin needs rho > 0, got {self.rho!r}")
        if self.kind == "logistic" and self.base is not None:
            if not math.isfinite(self.base) or self.base <= 1:
                raise InvalidLossError(f"logistic base must exceed 1, got {self.base!r}")
        if self.kind == "custom_table":
            _validate_table(self.table)

    # constructors

    @classmethod
    def zero_one(cls) -> "MarginLoss":
        return cls("zero_one", declared=_BUILTIN_PROPS["zero_one"])

    @classmethod
    def rho_margin(cls, rho: float) -> "MarginLoss":
        return cls("rho_margin", rho=float(rho), declared=_BUILTIN_PROPS["rho_margin"])

    @classmethod
    def hinge(cls) -> "MarginLoss":
        return cls("hinge", declared=_BUILTIN_PROPS["hinge"])

    @classmethod
    def logistic(cls, base: float | None = None) -> "MarginLoss":
        return cls("logistic", base=None if base is None else float(base),
                   declared=_BUILTIN_PROPS["logistic"])

    @classmethod
    def exponential(cls) -> "MarginLoss":
        return cls("exponential", declared=_BUILTIN_PROPS["exponential"])

    @classmethod
    def custom_table(
        cls,
        ts: Iterable[float],
        values: Iterable[float],
        declared: Iterable[str] = (),
        grid: GridSpec = DEFAULT_GRID,
    ) -> "MarginLoss":
        """Piecewise-linear loss through ``(t, phi(t))`` knots, constant outside.

        Every declared property is checked by :func:`verify_loss_properties`.
        """
        table = (tuple(float(t) for t in ts), tuple(float(v) for v in values))
        loss = cls("custom_table", table=table, declared=frozenset(declared))
        report = verify_loss_properties(loss, grid)
        failed = [p for p in loss.declared if not report.property_holds(p)]
        if failed:
            raise InvalidLossError(f"declared properties fail verification: {sorted(failed)}")
        return loss

    @classmethod
    def from_descriptor(cls, desc: Mapping[str, Any]) -> "MarginLoss":
        """Build from ``{"kind": ..., "params": {...}}``."""
        if not isinstance(desc, Mapping) or "kind" not in desc:
            raise InvalidLossError("loss descriptor needs a 'kind' field")
        extra = set(desc) - {"kind", "params"}
        if extra:
            raise InvalidLossError(f"unknown loss descriptor fields {sorted(extra)}")
        kind = desc["kind"]
        params = dict(desc.get("params") or {})
        allowed = {
            "zero_one": set(),
            "rho_margin": {"rho"},
            "hinge": set(),
            "logistic": {"base"},
            "exponential": set(),
            "custom_table": {"t", "values", "declared"},
        }
        if kind not in allowed:
            raise InvalidLossError(f"unknown loss kind {kind!r}")
        extra = set(params) - allowed[kind]
        if extra:
            raise InvalidLossError(f"unknown params for {kind}: {sorted(extra)}")
        if kind == "rho_margin":
            if "rho" not in params:
                raise InvalidLossError("rho_margin needs params.rho")
            return cls.rho_margin(params["rho"])
        if kind == "logistic":
            return cls.logistic(params.get("base"))
        if kind == "custom_table":
            return cls.custom_table(params.get("t", ()), params.get("values", ()),
                                    params.get("declared", ()))
        return getattr(cls, kind)()

    def to_descriptor(self) -> dict[str, Any]:
        params: dict[str, Any] = {}
        if self.kind == "rho_margin":
            params["rho"] = self.rho
        elif self.kind == "logistic" and self.base is not None:
            params["base"] = self.base
        elif self.kind == "custom_table":
            assert self.table is not None
            params = {"t": list(self.table[0]), "values": list(self.table[1]),
                      "declared": sorted(self.declared)}
        return {"kind": self.kind, "params": params}

    # evaluation

    def __call__(self, t: Any) -> Any:
        arr = np.asarray(t, dtype=float)
        out = self._eval(arr)
        return float(out) if out.ndim == 0 else out

    def _eval(self, t: np.ndarray) -> np.ndarray:
        if self.kind == "zero_one":
            return (t <= 0).astype(float)
        if self.kind == "rho_margin":
            return np.clip(1.0 - t / self.rho, 0.0, 1.0)
        if self.kind == "hinge":
            return np.maximum(0.0, 1.0 - t)
        if self.kind == "logistic":
            val = np.logaddexp(0.0, -t)
            return val / math.log(self.base) if self.base is not None else val
        if self.kind == "exponential":
            return np.exp(-t)
        assert self.table is not None
        return np.interp(t, self.table[0], self.table[1])

    def has(self, prop: str) -> bool:
        return prop in self.declared

    @property
    def endpoint_rule(self) -> bool:
        """True when the interval infimum of the two-point risk sits at an endpoint."""
        return _ENDPOINT_RULE_PROPS <= self.declared

    def kinks(self) -> tuple[float, ...]:
        """Points where the loss is not differentiable."""
        if self.kind == "rho_margin":
            return (0.0, float(self.rho))
        if self.kind == "hinge":
            return (1.0,)
        if self.kind == "zero_one":
            return (0.0,)
        if self.kind == "custom_table":
            assert self.table is not None
            return self.table[0]
        return ()

    @property
    def label(self) -> str:
        if self.kind == "rho_margin":
            return f"rho_margin(rho={self.rho:g})"
        return self.kind


def _validate_table(table: Any) -> None:
    if table is None:
        raise InvalidLossError("custom_table needs knots")
    ts, vals = (np.asarray(a, dtype=float) for a in table)
    if ts.ndim != 1 or ts.shape != vals.shape or ts.size < 2:
        raise InvalidLossError("custom_table needs two equal-length columns with at least two knots")
    if not (np.all(np.isfinite(ts)) and np.all(np.isfinite(vals))):
        raise InvalidLossError("custom_table knots must be finite")
    if np.any(np.diff(ts) <= 0):
        raise InvalidLossError("custom_table t-column must be strictly increasing")
    if np.any(vals < 0):
        raise InvalidLossError("custom_table values must be nonnegative")


def eval_loss(loss: MarginLoss, t: Any) -> Any:
    """phi(t); vectorized over array input."""
    return loss(t)


def sup_loss_value(loss: MarginLoss, margins: MarginPair | tuple[float, float], y: int) -> float:
    """Worst-case loss over the perturbation ball, read off the margin pair.

    For a non-increasing loss the supremum over perturbations equals the loss
    at the worst-case signed margin: ``phi(lower)`` for ``y = +1`` and
    ``phi(-upper)`` for ``y = -1``.
    """
    if not loss.has("non_increasing"):
        raise UnsupportedReductionError(
            f"{loss.label} is not declared non-increasing; the margin reduction does not apply")
    lower, upper = _pair(margins)
    if y == 1:
        return float(loss(lower))
    if y == -1:
        return float(loss(-upper))
    raise DomainError(f"label must be +1 or -1, got {y!r}")


def _pair(margins: MarginPair | tuple[float, float]) -> tuple[float, float]:
    lower, upper = (margins.lower, margins.upper) if isinstance(margins, MarginPair) else margins
    if lower > upper:
        raise DomainError(f"margin pair has lower {lower} > upper {upper}")
    return float(lower), float(upper)


def _check_eta(eta: float) -> float:
    eta = float(eta)
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"eta must lie in [0, 1], got {eta}")
    return eta


def cbar(loss: MarginLoss, t: Any, eta: float) -> Any:
    """Two-point conditional risk ``eta * phi(t) + (1 - eta) * phi(-t)``."""
    eta = _check_eta(eta)
    arr = np.asarray(t, dtype=float)
    out = eta * loss._eval(arr) + (1.0 - eta) * loss._eval(-arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class IntervalMin:
    """Minimizer of the two-point risk over a closed interval."""

    t: float
    value: float
    exact: bool


def cbar_interval_argmin(
    loss: MarginLoss, lo: float, hi: float, eta: float, points: int = DEFAULT_GRID.interval_points
) -> IntervalMin:
    """Minimize the two-point risk over ``[lo, hi]``.

    Losses declared quasi-concave-even, continuous, bounded and non-increasing
    use the endpoint rule (exact). Others fall back to a dense grid with the
    loss kinks inserted (flagged approximate).
    """
    eta = _check_eta(eta)
    if lo > hi:
        raise DomainError(f"interval has lo {lo} > hi {hi}")
    if loss.endpoint_rule or lo == hi:
        v_lo, v_hi = cbar(loss, lo, eta), cbar(loss, hi, eta)
        return IntervalMin(lo, v_lo, True) if v_lo <= v_hi else IntervalMin(hi, v_hi, True)
    ts = _dense_with_kinks(loss, lo, hi, points)
    vals = cbar(loss, ts, eta)
    i = least_confident_argmin(vals, np.abs(ts))
    return IntervalMin(float(ts[i]), float(vals[i]), False)


TIE_TOL = 1e-12


def least_confident_argmin(values: np.ndarray, confidence: np.ndarray) -> int:
    """Index of the minimum; near-ties go to the smallest ``confidence``."""
    ties = np.flatnonzero(values <= values.min() + TIE_TOL)
    return int(ties[np.argmin(confidence[ties])])


def _dense_with_kinks(loss: MarginLoss, lo: float, hi: float, points: int) -> np.ndarray:
    kinks = np.array([k for s in (1.0, -1.0) for k in (s * np.asarray(loss.kinks()))] + [0.0])
    kinks = kinks[(kinks > lo) & (kinks < hi)]
    return np.unique(np.concatenate([np.linspace(lo, hi, points), kinks]))


def cbar_interval_inf(loss: MarginLoss, lo: float, hi: float, eta: float) -> float:
    """Infimum of the two-point risk over ``[lo, hi]``."""
    return cbar_interval_argmin(loss, lo, hi, eta).value


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    worst: float
    detail: str = ""


@dataclass(frozen=True)
class PropertyReport:
    loss: str
    checks: dict[str, CheckResult]

    def passed(self, name: str) -> bool:
        return self.checks[name].passed

    @property
    def quasi_concave_even(self) -> bool:
        return all(self.checks[k].passed for k in QCE_PARTS)

    def property_holds(self, prop: str) -> bool:
        if prop == "quasi_concave_even":
            return self.quasi_concave_even
        return self.checks[prop].passed

    def to_dict(self) -> dict[str, Any]:
        return {
            "loss": self.loss,
            "quasi_concave_even": self.quasi_concave_even,
            "checks": {k: {"passed": c.passed, "worst": c.worst, "detail": c.detail}
                       for k, c in self.checks.items()},
        }


QCE_PARTS = ("cbar_quasi_concave", "cbar_half_even", "cbar_half_nonincreasing",
             "endpoint_rule", "cbar_high_eta_nonincreasing", "cbar_low_eta_nondecreasing")


def _eta_grid() -> np.ndarray:
    return np.linspace(0.0, 1.0, 21)


def verify_loss_properties(loss: MarginLoss, grid: GridSpec = DEFAULT_GRID) -> PropertyReport:
    """Numerically check analytic properties of ``loss`` on ``grid``.

    Never raises on failure; each check carries its worst violation
    (negative means violated).
    """
    t = grid.t_grid()
    v = loss(t)
    checks: dict[str, CheckResult] = {}

    worst = float(v.min())
    checks["nonnegative"] = CheckResult(worst >= 0.0, worst)

    second = v[:-2] - 2.0 * v[1:-1] + v[2:]
    worst = float(second.min())
    checks["convex"] = CheckResult(worst >= -MONOTONE_TOL, worst, "midpoint second differences")

    worst = float(-np.diff(v).max())
    checks["non_increasing"] = CheckResult(worst >= -MONOTONE_TOL, worst)

    tails = loss(np.array([10.0 * grid.t_lo, 10.0 * grid.t_hi]))
    excess = max(float(tails.max() - v.max()), float(v.min() - tails.min()))
    checks["bounded"] = CheckResult(excess <= MONOTONE_TOL, -excess, "tail values stay in grid range")

    fine = loss(np.linspace(grid.t_lo, grid.t_hi, 2 * grid.t_points - 1))
    jump, jump_fine = float(np.abs(np.diff(v)).max()), float(np.abs(np.diff(fine)).max())
    ok = jump_fine <= 0.75 * jump + IDENTITY_TOL
    checks["continuous"] = CheckResult(ok, 0.75 * jump - jump_fine, "max jump shrinks under refinement")

    checks.update(_qce_checks(loss, t))
    return PropertyReport(loss.label, checks)


def _qce_checks(loss: MarginLoss, t: np.ndarray) -> dict[str, CheckResult]:
    out: dict[str, CheckResult] = {}
    etas = _eta_grid()
    curves = np.stack([cbar(loss, t, e) for e in etas])

    worst = np.inf
    for row in curves:
        prefix = np.maximum.accumulate(row)
        suffix = np.maximum.accumulate(row[::-1])[::-1]
        worst = min(worst, float((row - np.minimum(prefix, suffix)).min()))
    out["cbar_quasi_concave"] = CheckResult(worst >= -MONOTONE_TOL, worst)

    half = cbar(loss, t, 0.5)
    worst = -float(np.abs(half - cbar(loss, -t, 0.5)).max())
    out["cbar_half_even"] = CheckResult(worst >= -IDENTITY_TOL, worst)

    pos = t >= 0
    worst = float(-np.diff(half[pos]).max())
    out["cbar_half_nonincreasing"] = CheckResult(worst >= -MONOTONE_TOL, worst)

    rng = np.random.default_rng(0)
    worst = np.inf
    for _ in range(50):
        i, j = np.sort(rng.integers(0, t.size, size=2))
        for row in curves:
            seg = row[i:j + 1]
            worst = min(worst, float(seg.min() - min(seg[0], seg[-1])))
    out["endpoint_rule"] = CheckResult(worst >= -MONOTONE_TOL, worst, "50 seeded sub-intervals")

    worst = np.inf
    for e, row in zip(etas, curves):
        if e > 0.5:
            worst = min(worst, float(-np.diff(row[pos]).max()))
    out["cbar_high_eta_nonincreasing"] = CheckResult(worst >= -MONOTONE_TOL, worst)

    neg = t <= 0
    worst = np.inf
    for e, row in zip(etas, curves):
        if e < 0.5:
            worst = min(worst, float(np.diff(row[neg]).min()))
    out["cbar_low_eta_nondecreasing"] = CheckResult(worst >= -MONOTONE_TOL, worst)
    return out
