"""Trapezoid-rule norms and inner products on grid data.

H2 kinds add the squared first and second difference quotients to the
squared values before the square root; differences are centered in the
interior and one-sided second order at the ends, matching the stencils
module, so the norms are absolutely homogeneous and exact for the constant.
"""
from __future__ import annotations

import numpy as np

from .mesh import SpaceTimeField, SpatialDomain, TimeWindow, _trapezoid_weights
from .stencils import fd_first, fd_second

L2_SPACE = "L2_space"
L2_SPACETIME = "L2_spacetime"
H2_SPACE = "H2_space"
H2_TRACE = "H2_trace"

NORM_KINDS = (L2_SPACE, L2_SPACETIME, H2_SPACE, H2_TRACE)

_MIN_H2_POINTS = 5


def l2_space_inner(a: np.ndarray, b: np.ndarray, domain: SpatialDomain) -> float:
    return float(np.sum(domain.quad_weights * np.asarray(a) * np.asarray(b)))


def l2_spacetime_inner(a: np.ndarray, b: np.ndarray, domain: SpatialDomain,
                       window: TimeWindow) -> float:
    wx = domain.quad_weights[:, None]
    wt = window.quad_weights[None, :]
    return float(np.sum(wx * wt * np.asarray(a) * np.asarray(b)))


def _h2_line_sq(values: np.ndarray, step: float, weights: np.ndarray) -> float:
    """Squared H2 content of one sampled line (last axis is the line axis)."""
    if values.shape[-1] < _MIN_H2_POINTS:
        raise ValueError(f"H2 norms need at least {_MIN_H2_POINTS} points per "
                         f"line, got {values.shape[-1]}")
    d1 = fd_first(values, step, axis=-1)
    d2 = fd_second(values, step, axis=-1)
    total = values * values + d1 * d1 + d2 * d2
    return float(np.sum(weights * total))


def discrete_norm(q, kind: str, *, domain: SpatialDomain | None = None,
                  window: TimeWindow | None = None) -> float:
    """Discrete norm of a snapshot, trace, or space-time field.

    L2_space and H2_space take a spatial snapshot with its domain.
    L2_spacetime takes a SpaceTimeField, or raw values with both grids.
    H2_trace takes per-endpoint time rows sampled at the window step; rows
    are summed before the square root, so a two-point boundary counts both.
    """
    if kind not in NORM_KINDS:
        raise ValueError(f"unknown norm kind {kind!r}, expected one of {NORM_KINDS}")
    if isinstance(q, SpaceTimeField):
        domain = q.domain
        window = q.window
        q = q.values
    q = np.asarray(q, dtype=float)

    if kind == L2_SPACE:
        if domain is None:
            raise ValueError("L2_space needs the spatial domain")
        return float(np.sqrt(np.sum(domain.quad_weights * q * q)))
    if kind == L2_SPACETIME:
        if domain is None or window is None:
            raise ValueError("L2_spacetime needs both grids")
        return float(np.sqrt(l2_spacetime_inner(q, q, domain, window)))
    if kind == H2_SPACE:
        if domain is None:
            raise ValueError("H2_space needs the spatial domain")
        return float(np.sqrt(_h2_line_sq(q, domain.h, domain.quad_weights)))

    # H2_trace: time series per observed endpoint, step taken from the window.
    if window is None:
        raise ValueError("H2_trace needs the time window for its step")
    rows = np.atleast_2d(q)
    weights = _trapezoid_weights(rows.shape[-1], window.k)
    return float(np.sqrt(sum(_h2_line_sq(row, window.k, weights) for row in rows)))
