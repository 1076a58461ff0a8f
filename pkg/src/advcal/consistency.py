"""Synthetic realizable distributions, empirical risks and surrogate minimization traces."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import ConfigurationError, DomainError, UnsupportedFamilyError
from .grids import DEFAULT_GRID, GridSpec
from .hypotheses import (
    HypothesisFamily,
    HypothesisPoint,
    ParamGrid,
    _check_gamma,
    _eval_points,
    adversarial_margins,
    param_grid,
)
from .losses import MarginLoss
from .risk import LOSS_FORMS
from .theorems import check_qce_glm, check_qce_linear, sup_rho_positive_check

OPTIMIZERS = ("grid", "coordinate-refine")
REFINE_ROUNDS = 12
REFINE_START_DEG = 1.0


@dataclass(frozen=True)
class SyntheticDistribution:
    """Labels from the sign of ``w* . x`` with ``|w* . x|`` drawn from ``[r_min, 1]``.

    Every support point sits at distance at least ``r_min - gamma > 0`` from
    the perturbation boundary, so the robust 0/1 risk of ``w*`` is zero.
    """

    dim: int = 2
    rule_angle: float = 0.0
    r_min: float = 0.4
    gamma: float = 0.2
    pos_weight: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ConfigurationError("dimension must be at least 1")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if not self.gamma < self.r_min <= 1.0:
            raise ConfigurationError(
                f"r_min must lie in (gamma, 1] for a realizable sample, got r_min={self.r_min}")
        if not 0.0 <= self.pos_weight <= 1.0:
            raise ConfigurationError("pos_weight must lie in [0, 1]")
        if self.dim == 1 and self.rule_angle not in (0.0, math.pi):
            raise ConfigurationError("d = 1 rules use angle 0 or pi")

    @property
    def rule(self) -> np.ndarray:
        w = np.zeros(self.dim)
        if self.dim == 1:
            w[0] = math.cos(self.rule_angle)
        else:
            w[0], w[1] = math.cos(self.rule_angle), math.sin(self.rule_angle)
        return w

    def to_dict(self) -> dict[str, Any]:
        return {"dim": self.dim, "rule_angle": self.rule_angle, "r_min": self.r_min,
                "gamma": self.gamma, "pos_weight": self.pos_weight, "seed": self.seed}


@dataclass(frozen=True)
class Sample:
    X: np.ndarray
    y: np.ndarray
    seed: int
    distribution: SyntheticDistribution

    def __len__(self) -> int:
        return int(self.y.size)


def _orthonormal_complement(w: np.ndarray) -> np.ndarray:
    d = w.size
    q, _ = np.linalg.qr(np.column_stack([w, np.eye(d)]))
    return q[:, 1:d]


def sample_distribution(dist: SyntheticDistribution, n: int, seed: int | None = None) -> Sample:
    """Draw ``n`` labelled points; each is checked against the realizability margin."""
    if n < 1:
        raise ConfigurationError(f"sample size must be at least 1, got {n}")
    seed = dist.seed if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < dist.pos_weight, 1.0, -1.0)
    along = y * rng.uniform(dist.r_min, 1.0, n)
    X = np.outer(along, dist.rule)
    if dist.dim > 1:
        basis = _orthonormal_complement(dist.rule)
        direction = rng.normal(size=(n, dist.dim - 1))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        room = np.sqrt(np.maximum(1.0 - along ** 2, 0.0))
        radius = room * rng.random(n) ** (1.0 / (dist.dim - 1))
        X += (direction * radius[:, None]) @ basis.T
    X /= np.maximum(1.0, np.linalg.norm(X, axis=1))[:, None]
    robust = y * (X @ dist.rule) - dist.gamma
    if not np.all(robust > 0):
        raise ConfigurationError("sample violates the realizability margin")
    return Sample(X, y, seed, dist)


def _sample_margins(h: HypothesisPoint, X: np.ndarray, gamma: float,
                    grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    fam = h.family
    if fam.kind == "linear":
        c = X @ h.w
        return c - gamma, c + gamma
    if fam.is_glm:
        assert fam.link is not None
        c = X @ h.w
        return np.asarray(fam.link(c - gamma)) + h.b, np.asarray(fam.link(c + gamma)) + h.b
    pairs = [adversarial_margins(h, x, gamma, grid) for x in X]
    return np.array([p.lower for p in pairs]), np.array([p.upper for p in pairs])


def _pointwise(form: str, loss: MarginLoss | None, values: np.ndarray | None,
               lower: np.ndarray | None, upper: np.ndarray | None, y: np.ndarray) -> np.ndarray:
    pos = y > 0
    if form == "plain":
        assert loss is not None and values is not None
        return np.asarray(loss(y * values), dtype=float)
    assert lower is not None and upper is not None
    if form == "adv01":
        return np.where(pos, lower <= 0, upper >= 0).astype(float)
    assert loss is not None
    return np.asarray(loss(np.where(pos, lower, -upper)), dtype=float)


def _check_form_loss(form: str, loss: MarginLoss | None) -> None:
    if form not in LOSS_FORMS:
        raise DomainError(f"loss form must be one of {LOSS_FORMS}, got {form!r}")
    if form != "adv01" and loss is None:
        raise DomainError(f"{form} form needs a loss")
    if form == "sup" and loss is not None and not loss.has("non_increasing"):
        raise DomainError(f"{loss.label} is not declared non-increasing")


def empirical_risk(form: str, loss: MarginLoss | None, h: HypothesisPoint, sample: Sample,
                   gamma: float, grid: GridSpec = DEFAULT_GRID) -> float:
    """Mean per-point loss of ``h`` on ``sample``."""
    _check_form_loss(form, loss)
    if len(sample) == 0:
        raise DomainError("empty sample")
    gamma = _check_gamma(gamma)
    if form == "plain":
        fam = h.family
        if fam.kind == "all_measurable":
            values = np.full(len(sample), h.theta[0])
        else:
            values = _eval_points(h, sample.X)
        return float(_pointwise(form, loss, values, None, None, sample.y).mean())
    lower, upper = _sample_margins(h, sample.X, gamma, grid)
    return float(_pointwise(form, loss, None, lower, upper, sample.y).mean())


def _grid_risks(form: str, loss: MarginLoss | None, pg: ParamGrid, sample: Sample,
                gamma: float) -> np.ndarray:
    """Empirical risk of every parameter-grid member, shape (m,)."""
    fam, th = pg.family, pg.thetas
    d = fam.dim
    C = sample.X @ th[:, :d].T
    if fam.kind == "linear":
        values, lower, upper = C, C - gamma, C + gamma
    else:
        assert fam.link is not None
        b = th[:, d][None, :]
        values = np.asarray(fam.link(C)) + b
        lower, upper = np.asarray(fam.link(C - gamma)) + b, np.asarray(fam.link(C + gamma)) + b
    y = sample.y[:, None]
    if form == "plain":
        per = _pointwise(form, loss, values, None, None, y)
    else:
        per = _pointwise(form, loss, None, lower, upper, y)
    return per.mean(axis=0)


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    surrogate_risk: float
    gap: float
    adv_risk: float
    theta: tuple[float, ...]


@dataclass
class TrainTrace:
    entries: list[TraceEntry]
    reference_risk: float
    grid_min_risk: float
    final: HypothesisPoint

    def gaps(self) -> list[float]:
        return [e.gap for e in self.entries]

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "surrogate_risk", "gap", "adv_risk"])
        for e in self.entries:
            writer.writerow([e.iteration, f"{e.surrogate_risk:.17g}", f"{e.gap:.17g}",
                             f"{e.adv_risk:.17g}"])
        return buf.getvalue()


def _member(family: HypothesisFamily, angle: float, b: float) -> HypothesisPoint:
    w = (math.cos(angle), math.sin(angle))
    if family.kind == "linear":
        return HypothesisPoint.linear(family, w)
    return HypothesisPoint.glm(family, w, b)


def minimize_surrogate(form: str, loss: MarginLoss | None, family: HypothesisFamily,
                       sample: Sample, gamma: float, optimizer: str = "coordinate-refine",
                       grid: GridSpec = DEFAULT_GRID) -> tuple[HypothesisPoint, TrainTrace]:
    """Derivative-free minimization of the empirical surrogate risk.

    ``grid`` is an exhaustive sweep of the parameter grid that records every
    incumbent improvement. ``coordinate-refine`` continues from the sweep with
    twelve rounds of +/- steps on the angle (and bias), halving from one degree.
    The gap is measured against the smallest risk seen during the run.
    """
    _check_form_loss(form, loss)
    if form == "adv01":
        raise DomainError("minimize a surrogate form, not adv01")
    if len(sample) == 0:
        raise DomainError("empty sample")
    if optimizer not in OPTIMIZERS:
        raise ConfigurationError(f"optimizer must be one of {OPTIMIZERS}, got {optimizer!r}")
    if family.kind not in ("linear", "glm", "relu_glm"):
        raise UnsupportedFamilyError("surrogate minimization supports linear and glm families")
    if family.dim != sample.X.shape[1]:
        raise ConfigurationError("family and sample dimensions differ")
    gamma = _check_gamma(gamma)
    pg = param_grid(family, grid)
    risks = _grid_risks(form, loss, pg, sample, gamma)
    adv = _grid_risks("adv01", None, pg, sample, gamma)
    grid_min = float(risks.min())

    raw: list[tuple[int, float, float, HypothesisPoint]] = []
    best = math.inf
    for i, r in enumerate(risks):
        if r < best:
            best = float(r)
            raw.append((i, best, float(adv[i]), pg[i]))
    incumbent = raw[-1][3]

    if optimizer == "coordinate-refine":
        if family.dim != 2:
            raise UnsupportedFamilyError("coordinate refinement needs d = 2")
        angle = math.atan2(incumbent.w[1], incumbent.w[0])
        b = incumbent.b if family.is_glm else 0.0
        a_step = math.radians(REFINE_START_DEG)
        b_step = 2.0 * family.G / max(grid.biases - 1, 1) if family.is_glm else 0.0
        it = len(pg)
        for _ in range(REFINE_ROUNDS):
            moves = [(angle + a_step, b), (angle - a_step, b)]
            if family.is_glm:
                moves += [(angle, min(b + b_step, family.G)), (angle, max(b - b_step, -family.G))]
            for cand_angle, cand_b in moves:
                h = _member(family, cand_angle, cand_b)
                r = empirical_risk(form, loss, h, sample, gamma, grid)
                if r < best:
                    best, angle, b, incumbent = r, cand_angle, cand_b, h
            raw.append((it, best, empirical_risk("adv01", None, incumbent, sample, gamma, grid),
                        incumbent))
            it += 1
            a_step /= 2.0
            b_step /= 2.0

    entries = [TraceEntry(i, r, max(r - best, 0.0), a, tuple(h.theta)) for i, r, a, h in raw]
    return incumbent, TrainTrace(entries, best, grid_min, incumbent)


def pairing_table(trace: TrainTrace) -> list[dict[str, float]]:
    """For each observed gap, the worst adversarial risk among entries with no larger gap."""
    out = []
    for gap in sorted(set(trace.gaps())):
        worst = max(e.adv_risk for e in trace.entries if e.gap <= gap)
        out.append({"gap": gap, "max_adv_risk": worst})
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    form: str
    loss: MarginLoss
    family: HypothesisFamily
    distribution: SyntheticDistribution
    n_train: int = 1000
    n_test: int = 1000
    optimizer: str = "coordinate-refine"
    grid: GridSpec = DEFAULT_GRID

    @classmethod
    def from_dict(cls, cfg: Mapping[str, Any], seed: int | None = None) -> "ExperimentConfig":
        allowed = {"form", "loss", "family", "gamma", "distribution", "n_train", "n_test",
                   "optimizer", "seed", "grid"}
        extra = set(cfg) - allowed
        if extra:
            raise ConfigurationError(f"unknown experiment fields {sorted(extra)}")
        try:
            dist_cfg = dict(cfg.get("distribution", {}))
            family = HypothesisFamily.from_descriptor(cfg.get("family", {"kind": "linear"}))
            dist = SyntheticDistribution(
                dim=family.dim,
                gamma=float(cfg["gamma"]),
                seed=int(seed if seed is not None else cfg.get("seed", 0)),
                **dist_cfg,
            )
            return cls(
                form=cfg["form"],
                loss=MarginLoss.from_descriptor(cfg["loss"]),
                family=family,
                distribution=dist,
                n_train=int(cfg.get("n_train", 1000)),
                n_test=int(cfg.get("n_test", 1000)),
                optimizer=cfg.get("optimizer", "coordinate-refine"),
                grid=DEFAULT_GRID.with_(**cfg.get("grid", {})),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"bad experiment config: {exc}") from exc


@dataclass
class ExperimentReport:
    config: dict[str, Any]
    surrogate_verdict: str
    final_hypothesis: tuple[float, ...]
    train_adv_risk: float
    test_adv_risk: float
    reference_risk: float
    grid_min_risk: float
    trace: TrainTrace
    pairing: list[dict[str, float]]
    assertion: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "surrogate_verdict": self.surrogate_verdict,
            "final_hypothesis": list(self.final_hypothesis),
            "train_adv_risk": self.train_adv_risk,
            "test_adv_risk": self.test_adv_risk,
            "reference_risk": self.reference_risk,
            "grid_min_risk": self.grid_min_risk,
            "trace": [{"iteration": e.iteration, "surrogate_risk": e.surrogate_risk,
                       "gap": e.gap, "adv_risk": e.adv_risk, "theta": list(e.theta)}
                      for e in self.trace.entries],
            "pairing": self.pairing,
            "assertion": self.assertion,
        }


def surrogate_verdict(form: str, loss: MarginLoss, family: HypothesisFamily, gamma: float,
                      grid: GridSpec = DEFAULT_GRID) -> str:
    """Checker verdict for the configured surrogate; no numeric sweep."""
    if form == "sup" and loss.kind == "rho_margin":
        assert loss.rho is not None
        return sup_rho_positive_check(loss.rho, family, gamma, grid, cross_check=False).predicted
    if loss.has("convex"):
        return "not_calibrated"
    if form == "plain" and family.kind == "linear":
        return check_qce_linear(loss, gamma, grid).predicted
    if form == "plain" and family.is_glm:
        assert family.link is not None
        return check_qce_glm(loss, family.link, family.G, gamma, grid).predicted
    return "inapplicable"


def consistency_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Minimize the surrogate on a realizable sample and pair gaps with robust risk.

    The held-out sample uses ``seed + 1``. The zero-risk assertion is made only
    for surrogates the checkers call calibrated.
    """
    dist = config.distribution
    if config.family.kind != "linear":
        raise ConfigurationError("realizable synthetic data is defined for linear families")
    loss = config.loss
    verdict = surrogate_verdict(config.form, loss, config.family, dist.gamma, config.grid)
    train = sample_distribution(dist, config.n_train)
    test = sample_distribution(dist, config.n_test, seed=dist.seed + 1)
    star = HypothesisPoint.linear(config.family, dist.rule.tolist())
    if empirical_risk("adv01", None, star, train, dist.gamma, config.grid) != 0.0:
        raise ConfigurationError("the labelling rule is not robustly correct on the sample")
    h, trace = minimize_surrogate(config.form, loss, config.family, train, dist.gamma,
                                  config.optimizer, config.grid)
    train_adv = empirical_risk("adv01", None, h, train, dist.gamma, config.grid)
    test_adv = empirical_risk("adv01", None, h, test, dist.gamma, config.grid)
    assertion: dict[str, Any] = {"checked": verdict == "calibrated"}
    if assertion["checked"]:
        final_gap = trace.entries[-1].gap
        near = [e.adv_risk for e in trace.entries if e.gap <= final_gap]
        assertion["passed"] = bool(test_adv == 0.0 and train_adv == 0.0 and max(near) == 0.0)
    report_cfg = {
        "form": config.form,
        "loss": loss.to_descriptor(),
        "family": config.family.to_descriptor(),
        "distribution": dist.to_dict(),
        "n_train": config.n_train,
        "n_test": config.n_test,
        "optimizer": config.optimizer,
    }
    return ExperimentReport(report_cfg, verdict, tuple(h.theta), train_adv, test_adv,
                            trace.reference_risk, trace.grid_min_risk, trace,
                            pairing_table(trace), assertion)
