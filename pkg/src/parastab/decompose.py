"""Splitting the time derivative of a solution into sourced and source-free
parts, and the interpolation/growth checks that drive the initial-value
stability mechanism.

For u solving u_t = Au + f, u(.,0) = g, set vartheta = u_t. Then
w solves w_t = Aw + f_t, w(.,0) = 0, and z = vartheta - w solves the
source-free equation z_t = Az with z(.,0) = Ag + f(.,0). The split is
computed forward only; the backward terminal-value problem for z is
ill-posed and is verified here as a residual identity instead.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .mesh import SpaceTimeField, TimeWindow
from .norms import L2_SPACE, discrete_norm
from .stencils import fd_first
from .solver import forward_solve, time_derivative

# A solution fed to the splitter should satisfy its equation to a few
# percent in the relative max norm; noisier fields draw a warning.
RESIDUAL_WARN_TOL = 5e-2


@dataclass(frozen=True)
class DecompositionResiduals:
    """Max-norm checks of the three identities behind the split.

    evolution: max |z_t - Az| over interior time nodes (z is source-free).
    terminal: max |z(.,T) - (Au(.,T) + f(.,T) - w(.,T))|.
    splitting: max |vartheta - (w + z)|, zero bit-exactly by construction.
    """
    evolution: float
    terminal: float
    splitting: float


@dataclass(frozen=True, eq=False)
class Decomposition:
    total: SpaceTimeField        # vartheta = u_t
    sourced: SpaceTimeField      # w, driven by f_t from rest
    source_free: SpaceTimeField  # z = vartheta - w
    residuals: DecompositionResiduals


def decompose_time_derivative(u: SpaceTimeField, f: SpaceTimeField | None,
                              ctx) -> Decomposition:
    """Split u_t = w + z with w sourced by f_t and z source-free.

    Warns when u does not satisfy the evolution equation for f on its
    grid; the residual report then quantifies the mismatch rather than
    certifying the split.
    """
    domain, window, dop = ctx.domain, ctx.window, ctx.dop
    if u.values.shape != (domain.nx + 1, window.nt + 1):
        raise ValueError("solution shape does not match the context grids")
    if f is not None and f.values.shape != u.values.shape:
        raise ValueError("source grid does not match the solution grid")

    ut = fd_first(u.values, window.k, axis=1)
    res = ut - dop.apply(u.values)
    if f is not None:
        res = res - f.values
    scale = max(float(np.max(np.abs(ut))), 1e-300)
    rel = float(np.max(np.abs(res[:, 1:-1]))) / scale
    if rel > RESIDUAL_WARN_TOL:
        warnings.warn(f"field does not solve the evolution equation "
                      f"(relative residual {rel:.2e}); the split residuals "
                      f"report the mismatch, not a certificate",
                      stacklevel=2)

    vartheta = time_derivative(u)
    if f is None:
        w = SpaceTimeField(np.zeros_like(u.values), domain, window)
    else:
        w = forward_solve(dop, time_derivative(f), None, window)
    z = SpaceTimeField(vartheta.values - w.values, domain, window)

    # columns whose centered stencil touches the frame ends are excluded:
    # the end columns of vartheta are one-sided estimates, and differencing
    # them again is only first-order accurate there
    zt = fd_first(z.values, window.k, axis=1)
    evolution = float(np.max(np.abs((zt - dop.apply(z.values))[:, 2:-2])))

    i_T = window.snapshot_index
    f_T = f.values[:, i_T] if f is not None else 0.0
    terminal_rhs = dop.apply(u.values[:, i_T]) + f_T - w.values[:, i_T]
    terminal = float(np.max(np.abs(z.values[:, i_T] - terminal_rhs)))

    # grouped so the recomputed difference reproduces z's bits exactly
    splitting = float(np.max(np.abs((vartheta.values - w.values) - z.values)))

    return Decomposition(vartheta, w, z,
                         DecompositionResiduals(evolution, terminal, splitting))


@dataclass(frozen=True, eq=False)
class LogConvexityReport:
    """Interpolation bound on the source-free part and growth bound on the
    sourced part, over grid times in [0, T].

    checked is False when the operator has drift (the sharp interpolation
    form needs self-adjointness); notice then says why. degenerate marks
    a vanishing terminal norm with nonvanishing initial norm, where the
    interpolation bound carries no information.
    """
    checked: bool
    notice: str
    degenerate: bool
    times: np.ndarray
    norms: np.ndarray
    chord: np.ndarray
    max_violation: float
    min_log_second_difference: float
    w_ratio_sup: float
    w_bound_ok: bool


def check_log_convexity_and_w_bound(z: SpaceTimeField, w: SpaceTimeField | None,
                                    f: SpaceTimeField | None, window: TimeWindow,
                                    C0: float, *, self_adjoint: bool = True,
                                    omega: float = 0.0,
                                    tol: float = 1e-8) -> LogConvexityReport:
    """Check ||z(t)|| <= ||z(0)||^(1-t/T) ||z(T)||^(t/T) and the sourced-part
    growth bound ||w(t)|| <= C0 t e^(omega t) ||f(.,T)|| on grid t in [0,T].

    The interpolation check uses the sharp self-adjoint form, so it is
    skipped with a notice when self_adjoint is False. omega is the
    reaction ceiling max c(x) of the operator that produced z and w.
    """
    domain = z.domain
    i_T = window.snapshot_index
    times = window.times[:i_T + 1]
    T = window.T

    empty = np.empty(0)
    if not self_adjoint:
        return LogConvexityReport(False, "interpolation bound skipped: the sharp "
                                  "form needs a drift-free operator", False,
                                  times, empty, empty, math.nan, math.nan,
                                  *_w_ratio(w, f, window, C0, omega, times))

    norms = np.array([discrete_norm(z.values[:, j], L2_SPACE, domain=domain)
                      for j in range(i_T + 1)])
    n0, nT = norms[0], norms[-1]
    degenerate = (nT == 0.0) and (n0 > 0.0)
    if degenerate:
        chord = np.full_like(norms, math.nan)
        max_violation = math.nan
        min_d2 = math.nan
    else:
        frac = times / T
        chord = n0 ** (1.0 - frac) * nT ** frac
        max_violation = float(np.max(norms - chord))
        if np.all(norms > 0.0):
            logn = np.log(norms)
            d2 = logn[2:] - 2.0 * logn[1:-1] + logn[:-2]
            min_d2 = float(np.min(d2)) if d2.size else 0.0
        else:
            min_d2 = math.nan

    ratio_sup, bound_ok = _w_ratio(w, f, window, C0, omega, times)
    notice = "" if not degenerate else ("terminal norm vanished while the "
                                        "initial norm did not; the bound is vacuous there")
    return LogConvexityReport(True, notice, degenerate, times, norms, chord,
                              max_violation, min_d2, ratio_sup, bound_ok)


def _w_ratio(w, f, window, C0, omega, times):
    """sup_t ||w(t)|| / ||f(.,T)|| and whether C0 t e^(omega t) dominates it."""
    i_T = window.snapshot_index
    if w is None:
        return 0.0, True
    domain = w.domain
    w_norms = np.array([discrete_norm(w.values[:, j], L2_SPACE, domain=domain)
                        for j in range(i_T + 1)])
    fT_norm = (discrete_norm(f.values[:, i_T], L2_SPACE, domain=domain)
               if f is not None else 0.0)
    if fT_norm == 0.0:
        if float(np.max(w_norms)) == 0.0:
            return 0.0, True
        return math.inf, False
    ratios = w_norms / fT_norm
    bound = C0 * times * np.exp(omega * times)
    ok = bool(np.all(ratios <= bound * (1.0 + 1e-9) + 1e-12))
    return float(np.max(ratios)), ok
