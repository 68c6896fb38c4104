"""Bundled solver context: one grid pair plus the assembled operator.

Everything downstream (probes, decomposition, reconstruction, CLI) takes a
LabContext so a run is reproducible from the few numbers echoed in reports.
The elliptic operator is kept alongside its assembled form because probes
re-assemble it on refined grids.
"""
from __future__ import annotations

from dataclasses import dataclass

from .mesh import SpatialDomain, TimeWindow, make_time_window
from .operator import DiscreteOperator, EllipticOperator, assemble_operator

DEFAULT_NX = 64
DEFAULT_NT = 256
DEFAULT_T = 1.0
DEFAULT_DELTA0 = 0.5
DEFAULT_DELTA1 = 0.25
DEFAULT_C0 = 2.0       # admissibility budget |f_t| <= C0 |f(., T)|
DEFAULT_M0 = 100.0     # cap on the discrete C^4 surrogate of initial values


@dataclass(frozen=True)
class LabContext:
    domain: SpatialDomain
    window: TimeWindow
    dop: DiscreteOperator
    op: EllipticOperator
    C0: float = DEFAULT_C0
    M0: float = DEFAULT_M0

    def refined(self, factor: int = 2) -> "LabContext":
        """Same problem on a grid refined by an integer factor."""
        domain = SpatialDomain(self.domain.x_left, self.domain.x_right,
                               factor * self.domain.nx, gamma=self.domain.gamma)
        window = make_time_window(self.window.T, self.window.delta0,
                                  self.window.delta1, factor * self.window.nt)
        return LabContext(domain, window, assemble_operator(domain, self.op),
                          self.op, C0=self.C0, M0=self.M0)


def make_context(nx: int = DEFAULT_NX, nt: int = DEFAULT_NT, T: float = DEFAULT_T,
                 delta0: float = DEFAULT_DELTA0, delta1: float = DEFAULT_DELTA1,
                 op: EllipticOperator | None = None,
                 gamma=("left", "right"), C0: float = DEFAULT_C0,
                 M0: float = DEFAULT_M0) -> LabContext:
    """Build a context on (0,1); nt is bumped until the snapshot times align."""
    domain = SpatialDomain(0.0, 1.0, nx, gamma=gamma)
    window = make_time_window(T, delta0, delta1, nt)
    op = op if op is not None else EllipticOperator()
    return LabContext(domain, window, assemble_operator(domain, op), op,
                      C0=C0, M0=M0)
