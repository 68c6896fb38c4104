"""Crank-Nicolson marching for the forward and adjoint parabolic problems.

Forward scheme for u_t = Au + f with u(., 0) = g, step k, kappa = k/2:

    (I - kappa A) u^{n+1} = (I + kappa A) u^n + kappa (f^n + f^{n+1})

The adjoint solve produces the multiplier field p of the linear functional

    Phi(f, g) = <u, r_Q>_{L2(Q)} + <u(., T), r_T>_{L2(Omega)} + <u|_Gamma, r_G>

by marching the transposed recursion backward in time. Payload terms enter
as per-level sources carrying their own quadrature weights, so the discrete
duality identity

    Phi = <f, phi>_{L2(Q)} + <g, p(., 0)>_{L2(Omega)}

holds to round-off, with phi extracted by adjoint_gradients. This is the
exact transpose of the marching scheme in the trapezoid inner products, not
a separate discretization of the continuous adjoint equation.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .mesh import SpaceTimeField, TimeWindow
from .operator import DiscreteOperator
from .stencils import fd_first


def _cn_matrices(lower, diag, upper, kappa):
    """Banded (I - kappa L) in solve_banded layout plus bands of (I + kappa L)."""
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = -kappa * upper[:-1]
    ab[1, :] = 1.0 - kappa * diag
    ab[2, :-1] = -kappa * lower[1:]
    plus = (kappa * lower, 1.0 + kappa * diag, kappa * upper)
    return ab, plus


def _band_mv(bands, q):
    lower, diag, upper = bands
    out = diag * q
    out[1:] += lower[1:] * q[:-1]
    out[:-1] += upper[:-1] * q[1:]
    return out


def _implicit_step(ab, rhs, tag, level):
    try:
        out = solve_banded((1, 1), ab, rhs, check_finite=False)
    except np.linalg.LinAlgError as err:
        raise RuntimeError(f"singular time-step system in {tag} solve at "
                           f"level {level}") from err
    if not np.all(np.isfinite(out)):
        raise RuntimeError(f"non-finite iterate in {tag} solve at level {level}")
    return out


def forward_solve(dop: DiscreteOperator, f: SpaceTimeField | None,
                  g: np.ndarray | None, window: TimeWindow) -> SpaceTimeField:
    """Solve u_t = Au + f on (0, T + delta0) with u(., 0) = g installed exactly."""
    nx = dop.domain.nx
    if g is None:
        g = np.zeros(nx + 1)
    g = np.asarray(g, dtype=float)
    if g.shape != (nx + 1,):
        raise ValueError(f"initial value shape {g.shape}, expected {(nx + 1,)}")
    kappa = 0.5 * window.k
    ab, plus = _cn_matrices(dop.lower, dop.diag, dop.upper, kappa)
    u = np.empty((nx + 1, window.nt + 1))
    u[:, 0] = g
    fv = None
    if f is not None:
        if f.values.shape != u.shape:
            raise ValueError("source field grid does not match the window")
        fv = f.values
    for n in range(window.nt):
        rhs = _band_mv(plus, u[:, n])
        if fv is not None:
            rhs += kappa * (fv[:, n] + fv[:, n + 1])
        u[:, n + 1] = _implicit_step(ab, rhs, "forward", n + 1)
    return SpaceTimeField(u, dop.domain, window)


def adjoint_solve(dop: DiscreteOperator,
                  terminal_payload: np.ndarray | None,
                  interior_source: SpaceTimeField | None,
                  boundary_source: np.ndarray | None,
                  window: TimeWindow) -> SpaceTimeField:
    """Backward multiplier field for the payload functional.

    terminal_payload pairs with u(., T) in L2(Omega) at the snapshot level;
    interior_source pairs with u in L2(Q); boundary_source has one row per
    observed endpoint (domain.gamma order) over the lateral window levels and
    pairs in the window trace product. Column 0 of the result is not a solver
    level: it stores the derivative of the functional with respect to the
    initial value, finished without a solve.
    """
    domain = dop.domain
    nx, nt = domain.nx, window.nt
    s = np.zeros((nx + 1, nt + 1))
    if interior_source is not None:
        if interior_source.values.shape != s.shape:
            raise ValueError("interior payload grid does not match the window")
        s += window.quad_weights[None, :] * interior_source.values
    if terminal_payload is not None:
        payload = np.asarray(terminal_payload, dtype=float)
        if payload.shape != (nx + 1,):
            raise ValueError(f"terminal payload shape {payload.shape}, "
                             f"expected {(nx + 1,)}")
        s[:, window.snapshot_index] += payload
    if boundary_source is not None:
        rows = np.atleast_2d(np.asarray(boundary_source, dtype=float))
        sl = window.window_slice
        ww = window.window_weights
        if rows.shape != (len(domain.gamma), ww.size):
            raise ValueError(f"boundary payload shape {rows.shape}, expected "
                             f"{(len(domain.gamma), ww.size)}")
        wx = domain.quad_weights
        # Point traces carry no spatial measure; dividing by the trapezoid
        # weight makes the weighted pairing reproduce the plain window sum.
        for row, gi in zip(rows, domain.gamma_indices):
            s[gi, sl] += ww * row / wx[gi]

    kappa = 0.5 * window.k
    ab, plus = _cn_matrices(dop.adj_lower, dop.adj_diag, dop.adj_upper, kappa)
    p = np.empty_like(s)
    p[:, nt] = _implicit_step(ab, s[:, nt], "adjoint", nt)
    for m in range(nt - 1, 0, -1):
        rhs = s[:, m] + _band_mv(plus, p[:, m + 1])
        p[:, m] = _implicit_step(ab, rhs, "adjoint", m)
    p[:, 0] = s[:, 0] + _band_mv(plus, p[:, 1])
    return SpaceTimeField(p, dop.domain, window)


def adjoint_gradients(p: SpaceTimeField) -> tuple[SpaceTimeField, np.ndarray]:
    """Riesz gradients (source field in L2(Q), initial value in L2(Omega)).

    The half-step averages below are exact: eliminating the quadrature
    weights from the transposed recursion leaves phi^0 = p^1, interior
    phi^m = (p^m + p^{m+1})/2, phi^nt = p^nt, and column 0 of the multiplier
    field is already the initial-value gradient.
    """
    pv = p.values
    phi = np.empty_like(pv)
    phi[:, 0] = pv[:, 1]
    phi[:, 1:-1] = 0.5 * (pv[:, 1:-1] + pv[:, 2:])
    phi[:, -1] = pv[:, -1]
    return SpaceTimeField(phi, p.domain, p.window), pv[:, 0].copy()


def time_shift(field: SpaceTimeField, window: TimeWindow | None = None) -> SpaceTimeField:
    """Restrict a field to the lateral window and reindex time to start at 0.

    Columns are copied, never interpolated: the window endpoints sit on the
    grid by construction, so the translated frame shares the step k.
    """
    window = field.window if window is None else window
    if window.nt != field.window.nt or window.t_end != field.window.t_end:
        raise ValueError("window does not match the field grid")
    sl = window.window_slice
    return SpaceTimeField(field.values[:, sl].copy(), field.domain,
                          window.shifted())


def time_derivative(field: SpaceTimeField) -> SpaceTimeField:
    """Second-order finite-difference time derivative on the same grid."""
    dv = fd_first(field.values, field.window.k, axis=1)
    return SpaceTimeField(dv, field.domain, field.window)
