"""Grid resolutions used by the brute-force and verification paths."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class GridSpec:
    """Resolution of every discretization in the toolkit.

    The defaults are the desk-scale values; tests and the acceptance suite
    refine individual fields with :meth:`with_`.
    """

    t_lo: float = -3.0
    t_hi: float = 3.0
    t_points: int = 2001
    angles: int = 720
    biases: int = 41
    pairs: int = 41
    ball: int = 200
    nn_u_points: int = 8
    nn_radii: int = 3
    nn_angles: int = 16
    interval_points: int = 10001
    link_points: int = 1001

    def __post_init__(self) -> None:
        if self.t_points < 2 or not self.t_hi > self.t_lo:
            raise ConfigurationError("t-grid must have at least two points on a nonempty range")
        for name in ("angles", "biases", "pairs", "nn_u_points", "nn_radii", "nn_angles",
                     "interval_points", "link_points"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"grid field {name} must be positive")
        if self.ball < 2:
            raise ConfigurationError("ball grid needs at least two points per axis")

    def with_(self, **changes: int | float) -> "GridSpec":
        return replace(self, **changes)

    def t_grid(self) -> np.ndarray:
        return np.linspace(self.t_lo, self.t_hi, self.t_points)


DEFAULT_GRID = GridSpec()


def symmetric_grid(bound: float, n: int) -> np.ndarray:
    """``n`` evenly spaced points on ``[-bound, bound]`` with an exact zero when ``n`` is odd."""
    if n == 1:
        return np.zeros(1)
    k = np.arange(n)
    return bound * (2.0 * k - (n - 1)) / (n - 1)
