"""Hypothesis families, adversarial margins, regularity and the GLM increment bounds."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    DomainError,
    UnsupportedDimensionError,
    UnsupportedFamilyError,
)
from .grids import DEFAULT_GRID, GridSpec, symmetric_grid

FAMILY_KINDS = ("linear", "glm", "relu_glm", "one_layer_nn", "all_measurable")
SYMMETRIC_KINDS = frozenset({"linear", "one_layer_nn", "all_measurable"})
LINK_KINDS = ("identity", "relu", "table")

_NORM_SLACK = 1e-12


@dataclass(frozen=True)
class MarginPair:
    """Infimum and supremum of ``f`` over the perturbation ball around ``x``."""

    lower: float
    upper: float
    method: str = "closed_form"

    def __post_init__(self) -> None:
        if self.lower > self.upper:
            raise DomainError(f"margin pair has lower {self.lower} > upper {self.upper}")

    def negated(self) -> "MarginPair":
        return MarginPair(-self.upper, -self.lower, self.method)


# links


@dataclass(frozen=True)
class MonotoneFn:
    """Non-decreasing continuous link ``g``: identity, relu, or a piecewise-linear table."""

    kind: str = "identity"
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self) -> None:
        if self.kind not in LINK_KINDS:
            raise ConfigurationError(f"unknown link kind {self.kind!r}")
        if self.kind == "table":
            if self.table is None:
                raise ConfigurationError("table link needs knots")
            s, g = (np.asarray(c, dtype=float) for c in self.table)
            if s.ndim != 1 or s.shape != g.shape or s.size < 2:
                raise ConfigurationError("table link needs two equal-length columns, at least two rows")
            if not (np.all(np.isfinite(s)) and np.all(np.isfinite(g))):
                raise ConfigurationError("table link values must be finite")
            if np.any(np.diff(s) <= 0):
                raise ConfigurationError("table link s-column must be strictly increasing")
            if np.any(np.diff(g) < 0):
                raise ConfigurationError("table link g-column must be non-decreasing")

    @classmethod
    def identity(cls) -> "MonotoneFn":
        return cls("identity")

    @classmethod
    def relu(cls) -> "MonotoneFn":
        return cls("relu")

    @classmethod
    def from_table(cls, s: Iterable[float], g: Iterable[float]) -> "MonotoneFn":
        return cls("table", (tuple(float(v) for v in s), tuple(float(v) for v in g)))

    @classmethod
    def from_csv(cls, path: str | Path) -> "MonotoneFn":
        """Read a two-column ``s,g(s)`` CSV; a non-numeric first row is treated as a header."""
        rows: list[tuple[float, float]] = []
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 2:
                    raise ConfigurationError(f"{path}: row {i + 1} must have exactly two columns")
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if i == 0:
                        continue
                    raise ConfigurationError(f"{path}: row {i + 1} is not numeric") from None
        if not rows:
            raise ConfigurationError(f"{path}: no rows")
        s, g = zip(*rows)
        return cls.from_table(s, g)

    @classmethod
    def from_descriptor(cls, desc: Mapping[str, Any] | str) -> "MonotoneFn":
        if isinstance(desc, str):
            desc = {"kind": desc}
        extra = set(desc) - {"kind", "s", "g", "csv"}
        if extra:
            raise ConfigurationError(f"unknown link fields {sorted(extra)}")
        kind = desc.get("kind")
        if kind == "table":
            if "csv" in desc:
                return cls.from_csv(desc["csv"])
            return cls.from_table(desc.get("s", ()), desc.get("g", ()))
        if kind not in ("identity", "relu"):
            raise ConfigurationError(f"unknown link kind {kind!r}")
        return cls(kind)

    def to_descriptor(self) -> dict[str, Any]:
        if self.kind == "table":
            assert self.table is not None
            return {"kind": "table", "s": list(self.table[0]), "g": list(self.table[1])}
        return {"kind": self.kind}

    def __call__(self, s: Any) -> Any:
        arr = np.asarray(s, dtype=float)
        if self.kind == "identity":
            out = arr
        elif self.kind == "relu":
            out = np.maximum(arr, 0.0)
        else:
            assert self.table is not None
            out = np.interp(arr, self.table[0], self.table[1])
        return float(out) if out.ndim == 0 else out

    def kinks(self) -> tuple[float, ...]:
        if self.kind == "relu":
            return (0.0,)
        if self.kind == "table":
            assert self.table is not None
            return self.table[0]
        return ()


# families and points


@dataclass(frozen=True)
class HypothesisFamily:
    kind: str
    dim: int = 2
    link: MonotoneFn | None = None
    G: float = 0.0
    lam: float = 1.0
    w_bound: float = 1.0
    width: int = 1
    R: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in FAMILY_KINDS:
            raise ConfigurationError(f"unknown family kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigurationError("dimension must be at least 1")
        if self.kind in ("glm", "relu_glm"):
            if self.link is None:
                raise ConfigurationError("glm family needs a link")
            if self.kind == "relu_glm" and self.link.kind != "relu":
                raise ConfigurationError("relu_glm uses the relu link")
            if not self.G >= 0:
                raise ConfigurationError("bias bound G must be nonnegative")
        if self.kind == "one_layer_nn":
            if not (self.lam > 0 and self.w_bound > 0 and self.width >= 1):
                raise ConfigurationError("one_layer_nn needs lam > 0, w_bound > 0, width >= 1")
        if self.kind == "all_measurable" and not self.R > 0:
            raise ConfigurationError("all_measurable value bound R must be positive")

    @classmethod
    def linear(cls, dim: int = 2) -> "HypothesisFamily":
        return cls("linear", dim)

    @classmethod
    def glm(cls, link: MonotoneFn, G: float, dim: int = 2) -> "HypothesisFamily":
        kind = "relu_glm" if link.kind == "relu" else "glm"
        return cls(kind, dim, link=link, G=float(G))

    @classmethod
    def relu_glm(cls, G: float, dim: int = 2) -> "HypothesisFamily":
        return cls("relu_glm", dim, link=MonotoneFn.relu(), G=float(G))

    @classmethod
    def one_layer_nn(cls, width: int = 2, lam: float = 1.0, w_bound: float = 1.0,
                     dim: int = 2) -> "HypothesisFamily":
        return cls("one_layer_nn", dim, width=int(width), lam=float(lam), w_bound=float(w_bound))

    @classmethod
    def all_measurable(cls, R: float = 2.0, dim: int = 2) -> "HypothesisFamily":
        return cls("all_measurable", dim, R=float(R))

    @classmethod
    def from_descriptor(cls, desc: Mapping[str, Any]) -> "HypothesisFamily":
        if not isinstance(desc, Mapping) or "kind" not in desc:
            raise ConfigurationError("family descriptor needs a 'kind' field")
        extra = set(desc) - {"kind", "params"}
        if extra:
            raise ConfigurationError(f"unknown family descriptor fields {sorted(extra)}")
        kind, params = desc["kind"], dict(desc.get("params") or {})
        allowed = {
            "linear": {"dim"},
            "glm": {"dim", "G", "link"},
            "relu_glm": {"dim", "G"},
            "one_layer_nn": {"dim", "width", "lam", "w_bound"},
            "all_measurable": {"dim", "R"},
        }
        if kind not in allowed:
            raise ConfigurationError(f"unknown family kind {kind!r}")
        extra = set(params) - allowed[kind]
        if extra:
            raise ConfigurationError(f"unknown params for {kind}: {sorted(extra)}")
        dim = int(params.pop("dim", 2))
        if kind == "linear":
            return cls.linear(dim)
        if kind == "glm":
            link = MonotoneFn.from_descriptor(params.get("link", {"kind": "identity"}))
            return cls("glm", dim, link=link, G=float(params.get("G", 1.0)))
        if kind == "relu_glm":
            return cls.relu_glm(float(params.get("G", 1.5)), dim)
        if kind == "one_layer_nn":
            return cls.one_layer_nn(dim=dim, **params)
        return cls.all_measurable(float(params.get("R", 2.0)), dim)

    def to_descriptor(self) -> dict[str, Any]:
        params: dict[str, Any] = {"dim": self.dim}
        if self.kind == "glm":
            assert self.link is not None
            params.update(G=self.G, link=self.link.to_descriptor())
        elif self.kind == "relu_glm":
            params["G"] = self.G
        elif self.kind == "one_layer_nn":
            params.update(width=self.width, lam=self.lam, w_bound=self.w_bound)
        elif self.kind == "all_measurable":
            params["R"] = self.R
        return {"kind": self.kind, "params": params}

    @property
    def is_glm(self) -> bool:
        return self.kind in ("glm", "relu_glm")

    @property
    def symmetric(self) -> bool:
        return self.kind in SYMMETRIC_KINDS

    @property
    def n_params(self) -> int:
        if self.kind == "linear":
            return self.dim
        if self.is_glm:
            return self.dim + 1
        if self.kind == "one_layer_nn":
            return self.width * (1 + self.dim)
        return 2


@dataclass(frozen=True)
class HypothesisPoint:
    """One member of a family, stored as a flat parameter vector ``theta``.

    Layouts: linear ``w``; glm ``(w, b)``; one_layer_nn ``(u, W row-major)``;
    all_measurable ``(a, b)``.
    """

    family: HypothesisFamily
    theta: tuple[float, ...]

    def __post_init__(self) -> None:
        fam = self.family
        if len(self.theta) != fam.n_params:
            raise DomainError(f"{fam.kind} expects {fam.n_params} parameters, got {len(self.theta)}")
        if fam.kind == "linear" or fam.is_glm:
            if abs(np.linalg.norm(self.w) - 1.0) > _NORM_SLACK:
                raise DomainError("weight vector must have unit norm")
        if fam.is_glm and abs(self.b) > fam.G * (1 + _NORM_SLACK) + _NORM_SLACK:
            raise DomainError(f"|b| must not exceed G={fam.G}")
        if fam.kind == "one_layer_nn":
            if np.abs(self.u).sum() > fam.lam * (1 + _NORM_SLACK):
                raise DomainError("output weights exceed the l1 bound")
            if np.any(np.linalg.norm(self.W, axis=1) > fam.w_bound * (1 + _NORM_SLACK)):
                raise DomainError("a hidden weight vector exceeds its norm bound")
        if fam.kind == "all_measurable":
            a, b = self.theta
            if a > b or max(abs(a), abs(b)) > fam.R * (1 + _NORM_SLACK):
                raise DomainError("all_measurable pair needs a <= b within [-R, R]")

    # constructors

    @classmethod
    def linear(cls, family: HypothesisFamily, w: Sequence[float]) -> "HypothesisPoint":
        return cls(family, tuple(_unit(w, family.dim).tolist()))

    @classmethod
    def glm(cls, family: HypothesisFamily, w: Sequence[float], b: float) -> "HypothesisPoint":
        return cls(family, tuple(_unit(w, family.dim).tolist()) + (float(b),))

    @classmethod
    def nn(cls, family: HypothesisFamily, u: Sequence[float],
           W: Sequence[Sequence[float]]) -> "HypothesisPoint":
        u_arr = np.asarray(u, dtype=float).reshape(family.width)
        W_arr = np.asarray(W, dtype=float).reshape(family.width, family.dim)
        return cls(family, tuple(u_arr.tolist()) + tuple(W_arr.ravel().tolist()))

    @classmethod
    def pair(cls, family: HypothesisFamily, a: float, b: float) -> "HypothesisPoint":
        return cls(family, (float(a), float(b)))

    @classmethod
    def zero(cls, family: HypothesisFamily) -> "HypothesisPoint":
        if family.kind == "one_layer_nn":
            return cls(family, (0.0,) * family.n_params)
        if family.kind == "all_measurable":
            return cls(family, (0.0, 0.0))
        raise UnsupportedFamilyError(f"{family.kind} does not contain the zero function")

    # parameter views

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.theta[: self.family.dim])

    @property
    def b(self) -> float:
        return float(self.theta[self.family.dim])

    @property
    def u(self) -> np.ndarray:
        return np.asarray(self.theta[: self.family.width])

    @property
    def W(self) -> np.ndarray:
        n, d = self.family.width, self.family.dim
        return np.asarray(self.theta[n:]).reshape(n, d)

    def negated(self) -> "HypothesisPoint":
        kind = self.family.kind
        if kind == "linear":
            return HypothesisPoint(self.family, tuple(-v for v in self.theta))
        if kind == "one_layer_nn":
            n = self.family.width
            return HypothesisPoint(self.family, tuple(-v for v in self.theta[:n]) + self.theta[n:])
        if kind == "all_measurable":
            a, b = self.theta
            return HypothesisPoint(self.family, (-b, -a))
        raise UnsupportedFamilyError(f"{kind} is not closed under negation")

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family.kind, "theta": list(self.theta)}


def _unit(w: Sequence[float], dim: int) -> np.ndarray:
    arr = np.asarray(w, dtype=float).reshape(-1)
    if arr.size != dim:
        raise DomainError(f"weight vector must have dimension {dim}")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise DomainError("weight vector must be nonzero")
    return arr / norm


def _as_x(x: Any, dim: int, check_ball: bool = True) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.size != dim:
        raise DomainError(f"input has dimension {arr.size}, family expects {dim}")
    if check_ball and np.linalg.norm(arr) > 1.0 + _NORM_SLACK:
        raise DomainError("input must lie in the unit ball")
    return arr


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 < gamma < 1.0:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    return gamma


def _eval_points(h: HypothesisPoint, X: np.ndarray) -> np.ndarray:
    fam = h.family
    if fam.kind == "linear":
        return X @ h.w
    if fam.is_glm:
        assert fam.link is not None
        return np.asarray(fam.link(X @ h.w)) + h.b
    if fam.kind == "one_layer_nn":
        return np.maximum(X @ h.W.T, 0.0) @ h.u
    return np.full(X.shape[0], h.theta[0])


def eval_hypothesis(h: HypothesisPoint, x: Any) -> float:
    """f(x). all_measurable points return their lower value by convention."""
    arr = _as_x(x, h.family.dim)
    return float(_eval_points(h, arr[None, :])[0])


# margins


def adversarial_margins(h: HypothesisPoint, x: Any, gamma: float,
                        grid: GridSpec = DEFAULT_GRID) -> MarginPair:
    """Closed-form margins for linear and glm; grid oracle for one_layer_nn."""
    gamma = _check_gamma(gamma)
    fam = h.family
    arr = _as_x(x, fam.dim)
    if fam.kind == "linear":
        c = float(h.w @ arr)
        return MarginPair(c - gamma, c + gamma)
    if fam.is_glm:
        assert fam.link is not None
        c = float(h.w @ arr)
        return MarginPair(fam.link(c - gamma) + h.b, fam.link(c + gamma) + h.b)
    if fam.kind == "one_layer_nn":
        return margins_oracle(h, arr, gamma, grid)
    a, b = h.theta
    return MarginPair(a, b)


def ball_points(x: np.ndarray, gamma: float, n: int) -> np.ndarray:
    """Uniform grid over the closed gamma-ball around ``x`` plus its boundary."""
    d = x.size
    if d > 2:
        raise UnsupportedDimensionError("ball grids are limited to d <= 2")
    if d == 1:
        return (x[0] + np.linspace(-gamma, gamma, n))[:, None]
    axis = np.linspace(-gamma, gamma, n)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    sq = np.stack([gx.ravel(), gy.ravel()], axis=1)
    inside = sq[np.einsum("ij,ij->i", sq, sq) <= gamma * gamma]
    ang = 2.0 * np.pi * np.arange(4 * n) / (4 * n)
    ring = gamma * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return x[None, :] + np.concatenate([inside, ring])


def margins_oracle(h: HypothesisPoint, x: Any, gamma: float,
                   grid: GridSpec = DEFAULT_GRID) -> MarginPair:
    """Min and max of ``f`` over a ``grid.ball``-per-axis grid of the gamma-ball."""
    fam = h.family
    if fam.dim > 2:
        raise UnsupportedDimensionError("the margin oracle is limited to d <= 2")
    arr = _as_x(x, fam.dim)
    if fam.kind == "all_measurable":
        a, b = h.theta
        return MarginPair(a, b, "grid_oracle")
    vals = _eval_points(h, ball_points(arr, float(gamma), grid.ball))
    return MarginPair(float(vals.min()), float(vals.max()), "grid_oracle")


def nn_margin_bounds(h: HypothesisPoint, x: Any, gamma: float) -> MarginPair:
    """Certified outer bounds on one_layer_nn margins, unit by unit."""
    arr = _as_x(x, h.family.dim)
    pre = h.W @ arr
    rad = gamma * np.linalg.norm(h.W, axis=1)
    lo_act, hi_act = np.maximum(pre - rad, 0.0), np.maximum(pre + rad, 0.0)
    u = h.u
    lower = float(np.where(u >= 0, u * lo_act, u * hi_act).sum())
    upper = float(np.where(u >= 0, u * hi_act, u * lo_act).sum())
    return MarginPair(lower, upper, "interval_bound")


# parameter grids


class ParamGrid(Sequence[HypothesisPoint]):
    """A family discretization stored as parameter arrays.

    Indexing yields :class:`HypothesisPoint`; the vectorized helpers evaluate
    values and margins for all members at once.
    """

    def __init__(self, family: HypothesisFamily, thetas: np.ndarray):
        self.family = family
        self.thetas = np.ascontiguousarray(thetas, dtype=float).reshape(-1, family.n_params)
        self.thetas.setflags(write=False)

    def __len__(self) -> int:
        return self.thetas.shape[0]

    def __getitem__(self, i):  # type: ignore[override]
        if isinstance(i, slice):
            return ParamGrid(self.family, self.thetas[i])
        return HypothesisPoint(self.family, tuple(self.thetas[i].tolist()))

    def __iter__(self) -> Iterator[HypothesisPoint]:
        for i in range(len(self)):
            yield self[i]

    def extended(self, points: Iterable[HypothesisPoint]) -> "ParamGrid":
        extra = [p.theta for p in points]
        if not extra:
            return self
        return ParamGrid(self.family, np.vstack([self.thetas, np.asarray(extra, dtype=float)]))

    def values_at(self, x: np.ndarray) -> np.ndarray:
        fam, th = self.family, self.thetas
        d = fam.dim
        if fam.kind == "linear":
            return th @ x
        if fam.is_glm:
            assert fam.link is not None
            return np.asarray(fam.link(th[:, :d] @ x)) + th[:, d]
        if fam.kind == "one_layer_nn":
            u, W = self._nn_parts()
            return np.einsum("mn,mn->m", u, np.maximum(W @ x, 0.0))
        return th[:, 0].copy()

    def margins_at(self, x: np.ndarray, gamma: float,
                   grid: GridSpec = DEFAULT_GRID) -> tuple[np.ndarray, np.ndarray]:
        fam, th = self.family, self.thetas
        d = fam.dim
        if fam.kind == "linear":
            c = th @ x
            return c - gamma, c + gamma
        if fam.is_glm:
            assert fam.link is not None
            c = th[:, :d] @ x
            return (np.asarray(fam.link(c - gamma)) + th[:, d],
                    np.asarray(fam.link(c + gamma)) + th[:, d])
        if fam.kind == "all_measurable":
            return th[:, 0].copy(), th[:, 1].copy()
        return self._nn_oracle(x, gamma, grid)

    def _nn_parts(self) -> tuple[np.ndarray, np.ndarray]:
        n, d = self.family.width, self.family.dim
        return self.thetas[:, :n], self.thetas[:, n:].reshape(-1, n, d)

    def _nn_oracle(self, x: np.ndarray, gamma: float,
                   grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
        if self.family.dim > 2:
            raise UnsupportedDimensionError("one_layer_nn margins are limited to d <= 2")
        u, W = self._nn_parts()
        pts = nn_extreme_candidates(W, u, x, gamma)
        vals = np.einsum("mn,mnp->mp", u, np.maximum(np.einsum("mnd,mpd->mnp", W, pts), 0.0))
        return vals.min(axis=1), vals.max(axis=1)


def nn_extreme_candidates(W: np.ndarray, u: np.ndarray, x: np.ndarray, gamma: float) -> np.ndarray:
    """Points of the gamma-ball around ``x`` that contain the extrema of each network.

    Without biases every unit kinks on a line through the origin, so each
    network is linear on cones. A linear function on a cone-ball intersection
    is extremal at the ball point along its gradient, where a kink line meets
    the sphere, or at the origin. ``W`` has shape (m, n, d) and ``u`` (m, n);
    returns (m, p, d) candidates.
    """
    m, n, d = W.shape
    centre = np.broadcast_to(x, (m, 1, d))
    origin = np.zeros((m, 1, d)) if float(np.linalg.norm(x)) <= gamma else centre
    if d == 1:
        ends = np.broadcast_to(np.array([[x[0] - gamma], [x[0] + gamma]]), (m, 2, 1))
        return np.concatenate([centre, origin, ends], axis=1)
    masks = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    grads = np.einsum("sn,mn,mnd->msd", masks, u, W)
    norms = np.linalg.norm(grads, axis=2, keepdims=True)
    dirs = np.divide(grads, norms, out=np.zeros_like(grads), where=norms > 0)
    towards = np.concatenate([dirs, -dirs], axis=1)
    wn = np.linalg.norm(W, axis=2)
    a = W @ x
    ratio = np.divide(a, gamma * wn, out=np.full_like(a, 2.0), where=wn > 0)
    hit = np.abs(ratio) <= 1.0
    ratio = np.clip(ratio, -1.0, 1.0)
    what = np.divide(W, wn[..., None], out=np.zeros_like(W), where=wn[..., None] > 0)
    perp = np.stack([-what[..., 1], what[..., 0]], axis=2)
    root = np.sqrt(1.0 - ratio ** 2)[..., None]
    cross = [-ratio[..., None] * what + sgn * root * perp for sgn in (1.0, -1.0)]
    crossings = np.concatenate([np.where(hit[..., None], c, 0.0) for c in cross], axis=1)
    on_sphere = x + gamma * np.concatenate([towards, crossings], axis=1)
    # missed kink lines fall back to the centre, which is always admissible
    missed = np.concatenate([~hit, ~hit], axis=1)
    on_sphere[:, 2 * masks.shape[0]:][missed] = x
    zero_grad = np.concatenate([norms[..., 0] == 0] * 2, axis=1)
    on_sphere[:, :2 * masks.shape[0]][zero_grad] = x
    return np.concatenate([centre, origin, on_sphere], axis=1)


def _unit_directions(dim: int, angles: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = 2.0 * np.pi * np.arange(angles) / angles
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    raise UnsupportedDimensionError("parameter grids are limited to d <= 2")


def param_grid(family: HypothesisFamily, grid: GridSpec = DEFAULT_GRID) -> ParamGrid:
    """Discretize the family for brute-force infima."""
    if family.dim > 2:
        raise UnsupportedDimensionError("parameter grids are limited to d <= 2")
    if family.kind == "linear":
        return ParamGrid(family, _unit_directions(family.dim, grid.angles))
    if family.is_glm:
        dirs = _unit_directions(family.dim, grid.angles)
        bs = symmetric_grid(family.G, grid.biases)
        rep = np.repeat(dirs, bs.size, axis=0)
        return ParamGrid(family, np.column_stack([rep, np.tile(bs, dirs.shape[0])]))
    if family.kind == "all_measurable":
        vals = symmetric_grid(family.R, grid.pairs)
        a, b = np.meshgrid(vals, vals, indexing="ij")
        keep = a <= b
        return ParamGrid(family, np.column_stack([a[keep], b[keep]]))
    return ParamGrid(family, _nn_thetas(family, grid))


def _nn_thetas(family: HypothesisFamily, grid: GridSpec) -> np.ndarray:
    n, d = family.width, family.dim
    levels = (-1.0, 0.0, 1.0)
    us = []
    for v in itertools.product(levels, repeat=n):
        arr = np.asarray(v)
        if np.any(arr):
            us.append(family.lam * arr / np.abs(arr).sum())
    radii = np.linspace(0.0, family.w_bound, grid.nn_radii)
    dirs = _unit_directions(d, grid.nn_angles)
    ws = [np.zeros(d)] + [r * v for r in radii[1:] for v in dirs]
    rows = []
    for u in us:
        for combo in itertools.product(range(len(ws)), repeat=n):
            rows.append(np.concatenate([u] + [ws[j] for j in combo]))
    return np.asarray(rows)


# regularity and link increments


def is_regular_at(family: HypothesisFamily, x: Any, gamma: float,
                  grid: GridSpec = DEFAULT_GRID) -> bool:
    """Whether some member is strictly positive and some strictly negative on the whole ball."""
    gamma = _check_gamma(gamma)
    arr = _as_x(x, family.dim)
    r = float(np.linalg.norm(arr))
    if family.kind == "linear":
        return r > gamma
    if family.kind == "all_measurable":
        return True
    if family.is_glm:
        g = family.link
        assert g is not None
        return bool(g(r - gamma) + family.G > 0 and g(-r + gamma) - family.G < 0)
    return bool(np.any(_nn_lower_bounds(param_grid(family, grid), arr, gamma) > 0))


def _nn_lower_bounds(pg: ParamGrid, x: np.ndarray, gamma: float) -> np.ndarray:
    u, W = pg._nn_parts()
    pre = W @ x
    rad = gamma * np.linalg.norm(W, axis=2)
    lo_act, hi_act = np.maximum(pre - rad, 0.0), np.maximum(pre + rad, 0.0)
    return np.where(u >= 0, u * lo_act, u * hi_act).sum(axis=1)


def a_bounds(g: MonotoneFn, t: float, gamma: float,
             grid: GridSpec = DEFAULT_GRID) -> tuple[float, float]:
    """Extremal link increments over ``s`` in ``[-t, t]``.

    Returns ``(max g(s) - g(s - gamma), min g(s) - g(s + gamma))``.
    """
    t = float(t)
    if t < 0:
        raise DomainError("t must be nonnegative")
    if g.kind == "identity":
        return gamma, -gamma
    if g.kind == "relu":
        return min(t, gamma), -gamma
    s = np.linspace(-t, t, grid.link_points)
    knots = np.asarray(g.kinks())
    extra = np.concatenate([knots, knots + gamma, knots - gamma])
    s = np.unique(np.concatenate([s, extra[(extra >= -t) & (extra <= t)]]))
    up = np.asarray(g(s)) - np.asarray(g(s - gamma))
    down = np.asarray(g(s)) - np.asarray(g(s + gamma))
    return float(up.max()), float(down.min())


def unit_angle_point(family: HypothesisFamily, angle: float, b: float | None = None) -> HypothesisPoint:
    """Member with weight ``(cos angle, sin angle)``; used to build witnesses."""
    if family.dim != 2:
        raise UnsupportedDimensionError("angle parametrization needs d = 2")
    w = (math.cos(angle), math.sin(angle))
    if family.kind == "linear":
        return HypothesisPoint.linear(family, w)
    if family.is_glm:
        return HypothesisPoint.glm(family, w, 0.0 if b is None else b)
    raise UnsupportedFamilyError(f"{family.kind} has no angle parametrization")
