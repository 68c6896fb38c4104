"""Discrete second-order elliptic operators with no-flux walls.

Aq = (a q')' + b q' + c q is discretized in conservative form with centered
differences on the uniform grid. The conormal (no-flux) condition a q' nu = 0
enters through mirrored ghost values; in flux form this is the half-cell
finite-volume closure at the walls, so constants lie in the kernel when c = 0.

The adjoint bands realize the transpose with respect to the trapezoid inner
product <p, q> = sum_i w_i h p_i q_i, which is what the backward-in-time
multiplier problem needs. With b = 0 the operator is its own adjoint in that
product, band for band.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import SpatialDomain


def _sample_coefficient(coef, x: np.ndarray) -> np.ndarray:
    if callable(coef):
        vals = np.asarray(coef(x), dtype=float)
    else:
        vals = np.asarray(coef, dtype=float)
    return np.broadcast_to(vals, x.shape).astype(float).copy()


@dataclass(frozen=True)
class EllipticOperator:
    """Coefficients of Aq = (a q')' + b q' + c q on the closed interval.

    Each coefficient may be a scalar, a grid array, or a callable of x.
    `ellipticity_lower_bound` is enforced pointwise on a when assembling.
    """

    a: object = 1.0
    b: object = 0.0
    c: object = 0.0
    ellipticity_lower_bound: float = 1e-10

    def __post_init__(self):
        if not self.ellipticity_lower_bound > 0:
            raise ValueError("ellipticity_lower_bound must be positive")


@dataclass(frozen=True)
class DiscreteOperator:
    """Banded realization of an elliptic operator on a SpatialDomain.

    Bands follow the row convention: row i couples to q_{i-1} with lower[i],
    to q_i with diag[i], and to q_{i+1} with upper[i]; lower[0] and upper[nx]
    are zero padding.
    """

    domain: SpatialDomain
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    adj_lower: np.ndarray
    adj_diag: np.ndarray
    adj_upper: np.ndarray
    self_adjoint: bool

    def _mv(self, lower, diag, upper, q):
        q = np.asarray(q, dtype=float)
        shape = (-1,) + (1,) * (q.ndim - 1)
        out = diag.reshape(shape) * q
        out[1:] += lower[1:].reshape((-1,) + (1,) * (q.ndim - 1)) * q[:-1]
        out[:-1] += upper[:-1].reshape((-1,) + (1,) * (q.ndim - 1)) * q[1:]
        return out

    def apply(self, q: np.ndarray) -> np.ndarray:
        """Aq for a snapshot (nx+1,) or a field (nx+1, nt+1), space on axis 0.

        Uses the flux-difference form lower*(q_{i-1}-q_i) + upper*(q_{i+1}-q_i)
        + c*q, which annihilates constants exactly when c = 0 instead of
        leaving the cancellation error of the expanded bands.
        """
        q = np.asarray(q, dtype=float)
        shape = (-1,) + (1,) * (q.ndim - 1)
        out = self.c.reshape(shape) * q
        out[1:] += self.lower[1:].reshape((-1,) + (1,) * (q.ndim - 1)) * (q[:-1] - q[1:])
        out[:-1] += self.upper[:-1].reshape((-1,) + (1,) * (q.ndim - 1)) * (q[1:] - q[:-1])
        return out

    def apply_adjoint(self, q: np.ndarray) -> np.ndarray:
        """Transpose of apply in the trapezoid inner product."""
        return self._mv(self.adj_lower, self.adj_diag, self.adj_upper, q)

    @property
    def reaction_max(self) -> float:
        """max c(x), the growth rate bound of the evolution semigroup."""
        return float(np.max(self.c))


def assemble_operator(domain: SpatialDomain, op: EllipticOperator) -> DiscreteOperator:
    """Sample coefficients and build the banded map with no-flux walls.

    Raises ValueError naming the first offending grid point if the
    ellipticity bound fails there.
    """
    x = domain.points
    a = _sample_coefficient(op.a, x)
    b = _sample_coefficient(op.b, x)
    c = _sample_coefficient(op.c, x)

    bad = np.flatnonzero(a < op.ellipticity_lower_bound)
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"ellipticity violated at x={x[i]!r}: a={a[i]!r} < "
            f"bound {op.ellipticity_lower_bound!r}")

    h = domain.h
    n = domain.nx
    a_half = 0.5 * (a[:-1] + a[1:])
    inv_h2 = 1.0 / (h * h)
    inv_2h = 0.5 / h

    lower = np.zeros(n + 1)
    upper = np.zeros(n + 1)
    lower[1:-1] = a_half[:-1] * inv_h2 - b[1:-1] * inv_2h
    upper[1:-1] = a_half[1:] * inv_h2 + b[1:-1] * inv_2h
    # Mirrored ghost values: the centered b q' term drops out at the walls
    # and the flux difference collapses to a half cell.
    upper[0] = 2.0 * a_half[0] * inv_h2
    lower[n] = 2.0 * a_half[-1] * inv_h2
    # diag = c - (lower + upper) keeps constants in the kernel to round-off.
    diag = c - (lower + upper)

    w = np.ones(n + 1)
    w[0] = 0.5
    w[-1] = 0.5
    adj_upper = np.zeros(n + 1)
    adj_lower = np.zeros(n + 1)
    adj_upper[:-1] = lower[1:] * w[1:] / w[:-1]
    adj_lower[1:] = upper[:-1] * w[:-1] / w[1:]
    adj_diag = diag.copy()

    self_adjoint = bool(np.all(b == 0.0))
    return DiscreteOperator(domain=domain, a=a, b=b, c=c,
                            lower=lower, diag=diag, upper=upper,
                            adj_lower=adj_lower, adj_diag=adj_diag,
                            adj_upper=adj_upper, self_adjoint=self_adjoint)
