"""Uniform space-time grids and sampled fields.

Downstream code never interpolates in time: the snapshot time T and the
lateral-window edges T - delta1, T + delta1 must be grid points, and
``make_time_window`` bumps the requested step count upward until they are.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAMMA_LEFT = "left"
GAMMA_RIGHT = "right"

# Relative tolerance for deciding that a time sits on the grid.
_SNAP_TOL = 1e-9
# Search ceiling of make_time_window, as a multiple of the requested nt.
_NT_SEARCH_FACTOR = 16


def _grid_index(value: float, step: float, limit: int) -> int | None:
    """Index of `value` on {0, step, ..., limit*step}, or None if off-grid."""
    m = value / step
    idx = int(round(m))
    if idx < 0 or idx > limit:
        return None
    if abs(m - idx) > _SNAP_TOL * max(1.0, abs(m)):
        return None
    return idx


def _trapezoid_weights(n_points: int, step: float) -> np.ndarray:
    w = np.full(n_points, step)
    w[0] = 0.5 * step
    w[-1] = 0.5 * step
    return w


@dataclass(frozen=True)
class SpatialDomain:
    """One-dimensional interval with an observed boundary subset gamma."""

    x_left: float
    x_right: float
    nx: int
    gamma: tuple = (GAMMA_LEFT, GAMMA_RIGHT)

    def __post_init__(self):
        if not (np.isfinite(self.x_left) and np.isfinite(self.x_right)):
            raise ValueError("domain endpoints must be finite")
        if not self.x_right > self.x_left:
            raise ValueError(
                f"domain endpoints must be strictly ordered, got "
                f"({self.x_left}, {self.x_right})")
        if self.nx < 8:
            raise ValueError(f"nx must be at least 8, got {self.nx}")
        sides = tuple(self.gamma) if not isinstance(self.gamma, str) else (self.gamma,)
        if not sides:
            raise ValueError("observed boundary set gamma must be nonempty")
        for side in sides:
            if side not in (GAMMA_LEFT, GAMMA_RIGHT):
                raise ValueError(f"unknown boundary label {side!r}")
        object.__setattr__(self, "gamma", tuple(sorted(set(sides))))

    @property
    def h(self) -> float:
        return (self.x_right - self.x_left) / self.nx

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_left, self.x_right, self.nx + 1)

    @property
    def gamma_indices(self) -> tuple:
        """Grid indices of the observed endpoints, in gamma order."""
        return tuple(0 if s == GAMMA_LEFT else self.nx for s in self.gamma)

    @property
    def quad_weights(self) -> np.ndarray:
        """Trapezoid weights including h; sum equals the interval length."""
        return _trapezoid_weights(self.nx + 1, self.h)


@dataclass(frozen=True)
class TimeWindow:
    """Time grid on (0, T + delta0) with measurement bookkeeping.

    T is the snapshot time, delta0 the extension past it, and delta1 the
    half-width of the lateral observation window (T - delta1, T + delta1).
    Constraint: 0 < delta1 <= min(delta0, T), and T - delta1, T, T + delta1
    all land on the grid (use make_time_window to round nt up until they do).
    """

    T: float
    delta0: float
    delta1: float
    nt: int

    def __post_init__(self):
        for name in ("T", "delta0", "delta1"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if self.delta1 > min(self.delta0, self.T) * (1.0 + 1e-12):
            raise ValueError(
                f"need 0 < delta1 <= min(delta0, T), got delta1={self.delta1} "
                f"with T={self.T}, delta0={self.delta0}")
        if self.nt < 2:
            raise ValueError(f"nt must be at least 2, got {self.nt}")
        for t in (self.T - self.delta1, self.T, self.T + self.delta1):
            if _grid_index(t, self.k, self.nt) is None:
                raise ValueError(
                    f"t={t} is not a grid point for nt={self.nt}; "
                    f"build windows with make_time_window")

    @property
    def t_end(self) -> float:
        return self.T + self.delta0

    @property
    def k(self) -> float:
        return self.t_end / self.nt

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.nt + 1)

    @property
    def quad_weights(self) -> np.ndarray:
        """Trapezoid weights including k over the full (0, T+delta0) grid."""
        return _trapezoid_weights(self.nt + 1, self.k)

    def index_of(self, t: float) -> int:
        idx = _grid_index(t, self.k, self.nt)
        if idx is None:
            raise ValueError(f"t={t} is not on the time grid (k={self.k})")
        return idx

    @property
    def snapshot_index(self) -> int:
        return self.index_of(self.T)

    @property
    def window_slice(self) -> slice:
        """Inclusive index range of the lateral window, as a python slice."""
        lo = self.index_of(self.T - self.delta1)
        hi = self.index_of(self.T + self.delta1)
        return slice(lo, hi + 1)

    @property
    def window_weights(self) -> np.ndarray:
        """Trapezoid weights including k over the lateral window only."""
        sl = self.window_slice
        return _trapezoid_weights(sl.stop - sl.start, self.k)

    def shifted(self) -> "TimeWindow":
        """Window of the translated frame t~ = t - T + delta1 on (0, 2*delta1).

        The snapshot time T maps to t~ = delta1; the grid step is unchanged,
        so shifted fields are plain copies of window columns.
        """
        sl = self.window_slice
        return TimeWindow(T=self.delta1, delta0=self.delta1, delta1=self.delta1,
                          nt=sl.stop - 1 - sl.start)


def make_time_window(T: float, delta0: float, delta1: float, nt: int) -> TimeWindow:
    """Smallest step count >= nt that puts T-delta1, T, T+delta1 on the grid."""
    start = max(int(nt), 2)
    t_end = T + delta0
    targets = (T - delta1, T, T + delta1)
    for cand in range(start, start * _NT_SEARCH_FACTOR + 1):
        k = t_end / cand
        if all(_grid_index(t, k, cand) is not None for t in targets):
            return TimeWindow(T=T, delta0=delta0, delta1=delta1, nt=cand)
    raise ValueError(
        f"no step count in [{start}, {start * _NT_SEARCH_FACTOR}] aligns the "
        f"measurement times {targets} with the grid on (0, {t_end})")


@dataclass(frozen=True)
class SpaceTimeField:
    """Grid samples over a space-time window, shape (nx+1, nt+1)."""

    values: np.ndarray
    domain: SpatialDomain
    window: TimeWindow

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        expected = (self.domain.nx + 1, self.window.nt + 1)
        if vals.shape != expected:
            raise ValueError(f"field shape {vals.shape} does not match grid {expected}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def x(self) -> np.ndarray:
        return self.domain.points

    @property
    def t(self) -> np.ndarray:
        return self.window.times


def field_from_function(domain: SpatialDomain, window: TimeWindow, fn) -> SpaceTimeField:
    """Sample fn(x, t) on the tensor grid; fn must broadcast over arrays."""
    raw = fn(domain.points[:, None], window.times[None, :])
    vals = np.broadcast_to(np.asarray(raw, dtype=float),
                           (domain.nx + 1, window.nt + 1)).copy()
    return SpaceTimeField(vals, domain, window)


def zero_field(domain: SpatialDomain, window: TimeWindow) -> SpaceTimeField:
    return SpaceTimeField(np.zeros((domain.nx + 1, window.nt + 1)), domain, window)


def sample_spatial(domain: SpatialDomain, fn) -> np.ndarray:
    """Sample fn(x) on the spatial grid as a plain array."""
    return np.asarray(fn(domain.points), dtype=float) + np.zeros(domain.nx + 1)
