"""Extracting the observed data from a solution field.

The observation is the final-time snapshot u(., T) together with the
boundary trace on the observed endpoints over the window
(T - delta1, T + delta1). Its size is measured by the combined norm
sqrt(H2_space(snapshot)^2 + H2_trace(trace)^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import SpaceTimeField, SpatialDomain, TimeWindow
from .norms import H2_SPACE, H2_TRACE, discrete_norm


@dataclass(frozen=True, eq=False)
class MeasurementData:
    final_snapshot: np.ndarray
    lateral_trace: np.ndarray
    h2_space_norm: float
    h2_trace_norm: float
    combined_norm: float


def measure(u: SpaceTimeField, domain: SpatialDomain, window: TimeWindow) -> MeasurementData:
    """Snapshot, trace, and their norms for a solution on (domain, window)."""
    if u.values.shape != (domain.nx + 1, window.nt + 1):
        raise ValueError("field shape does not match the measurement grids")
    snapshot = u.values[:, window.snapshot_index].copy()
    trace = u.values[np.array(domain.gamma_indices), window.window_slice].copy()
    h2_space = discrete_norm(snapshot, H2_SPACE, domain=domain)
    h2_trace = discrete_norm(trace, H2_TRACE, window=window)
    return MeasurementData(snapshot, trace, h2_space, h2_trace,
                           math.hypot(h2_space, h2_trace))
