"""Admissibility of data pairs: rate budget for the source, smoothness
surrogate for the initial value.

A source is admissible when its time derivative is dominated by its final
snapshot, |f_t(x,t)| <= C0 |f(x,T)| at every grid point. The smallest such
C0 is a grid supremum and is computed, never assumed. Initial values carry
a discrete C^4-type seminorm (max of divided differences up to order 4)
standing in for the smoothness constant of the continuum theory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import SpaceTimeField
from .solver import time_derivative

# Relative floor below which a final-snapshot value counts as zero.
ZERO_REL_TOL = 1e-12


def check_source_condition(f: SpaceTimeField, T: float, *, tol: float = ZERO_REL_TOL) -> float:
    """Smallest C0 with |f_t| <= C0 |f(., T)| on the grid.

    Returns math.inf when no finite budget works: some x has f(x, T) = 0
    while f_t is not identically zero along that line. Zero is detected
    relative to the overall scale of f, so sampled functions that vanish
    at T up to round-off are treated as vanishing.
    """
    i_T = f.window.index_of(T)
    ft = time_derivative(f).values
    denom = np.abs(f.values[:, i_T])
    ft_sup = np.max(np.abs(ft), axis=1)

    scale = float(np.max(np.abs(f.values)))
    if scale == 0.0:
        # f is identically zero; any budget works.
        return 0.0
    floor = tol * scale
    # the one-sided end stencils leave round-off crumbs on constant lines,
    # so rates below the floor count as zero just like snapshot values do
    ft_sup = np.where(ft_sup > floor, ft_sup, 0.0)
    zero_line = denom <= floor
    if np.any(zero_line & (ft_sup > 0.0)):
        return math.inf
    live = ~zero_line
    if not np.any(live):
        return 0.0
    return float(np.max(ft_sup[live] / denom[live]))


def c4_surrogate(g: np.ndarray, h: float) -> float:
    """Max of |g| and its divided differences up to fourth order."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 1:
        raise ValueError("initial value must be a one-dimensional sample array")
    if g.size < 5:
        raise ValueError("need at least 5 samples for fourth differences")
    worst = 0.0
    for order in range(5):
        d = np.diff(g, n=order) / h ** order
        worst = max(worst, float(np.max(np.abs(d))))
    return worst


@dataclass(frozen=True, eq=False)
class AdmissiblePair:
    """A data pair (f, g) together with its certified budget and seminorm."""
    f: SpaceTimeField | None
    g: np.ndarray | None
    C0: float
    c4_surrogate: float


def make_admissible_pair(ctx, f: SpaceTimeField | None = None,
                         g: np.ndarray | None = None,
                         C0: float | None = None) -> AdmissiblePair:
    """Validate the rate condition against the budget and record the pair.

    The inequality |f_t| <= C0 |f(., T)| is checked on the grid; a pair
    whose measured minimal budget exceeds C0 is rejected.
    """
    budget = ctx.C0 if C0 is None else float(C0)
    if budget < 0.0:
        raise ValueError("rate budget C0 must be nonnegative")
    if f is not None:
        need = check_source_condition(f, ctx.window.T)
        if not need <= budget * (1.0 + 1e-12):
            raise ValueError(
                f"source violates the rate budget: needs C0 >= {need!r}, got {budget!r}")
    seminorm = 0.0
    if g is not None:
        g = np.asarray(g, dtype=float)
        if g.shape != (ctx.domain.nx + 1,):
            raise ValueError("initial value shape does not match the spatial grid")
        seminorm = c4_surrogate(g, ctx.domain.h)
    return AdmissiblePair(f, g, budget, seminorm)
