"""CSV and manifest emission for command-line runs.

Every number is written as its shortest round-trip decimal (Python repr),
and nothing time- or host-dependent goes into a file, so a fixed config
and seed produce byte-identical artifacts. Wall-clock timings belong to
stdout, never to the report files.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import canonical_echo, config_hash

MANIFEST_NAME = "manifest.txt"


def fmt(value) -> str:
    """CSV cell text: shortest round-trip decimals, lowercase booleans."""
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def _write_rows(path: str, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(cell) for cell in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_field_csv(path: str, field_values: np.ndarray, domain,
                    window) -> None:
    """Solution matrix: rows are time indices, columns space indices.

    The first row is a metadata header carrying the grid parameters.
    """
    header = [f"h={fmt(domain.h)}", f"k={fmt(window.k)}",
              f"T={fmt(window.T)}", f"delta0={fmt(window.delta0)}",
              f"delta1={fmt(window.delta1)}"]
    _write_rows(path, header, field_values.T)


def write_sweep_csv(path: str, rows) -> None:
    header = ["s", "p", "lhs", "rhs", "ratio", "boundary_mode", "lambda",
              "delta1", "flag"]
    _write_rows(path, header,
                [(r.s, r.p, r.lhs, r.rhs, r.ratio, r.boundary_mode, r.lam,
                  r.delta1, r.flag) for r in rows])


def write_probe_csv(path: str, rows) -> None:
    header = ["member_id", "param", "f_norm_or_g_norm", "combined_norm",
              "ratio_or_product", "mesh_level", "flag"]
    _write_rows(path, header,
                [(r.member_id, r.param, r.data_norm, r.combined_norm,
                  r.value, r.mesh_level, r.flag) for r in rows])


def write_rate_csv(path: str, rows) -> None:
    header = ["eps", "alpha", "err_f", "err_g", "combined_norm_clean",
              "combined_norm_noisy", "iters", "converged"]
    _write_rows(path, header,
                [(r.eps, r.alpha, r.err_f, r.err_g, r.combined_norm_clean,
                  r.combined_norm_noisy, r.iters, r.converged) for r in rows])


def write_reconstruction_csv(path: str, x, phi_true, g_true, phi_est,
                             g_est) -> None:
    header = ["x", "phi_true", "g_true", "phi_est", "g_est"]
    _write_rows(path, header, zip(x, phi_true, g_true, phi_est, g_est))


def write_profile_csv(path: str, times, z_norms, chord) -> None:
    """Per-time table behind the interpolation check."""
    header = ["t", "z_norm", "chord"]
    _write_rows(path, header, zip(times, z_norms, chord))


@dataclass(frozen=True)
class RunReport:
    """What a run leaves behind: identity, files, numbers, timings."""
    config: dict
    artifacts: tuple
    summary: dict
    timings: dict = field(default_factory=dict)

    @property
    def echo(self) -> str:
        return canonical_echo(self.config)

    @property
    def sha256(self) -> str:
        return config_hash(self.config)


def write_manifest(path: str, report: RunReport) -> None:
    """Record the run identity, its artifacts, and the summary numbers.

    Deliberately excludes timings so two identical runs emit identical
    bytes. The echoed config between the begin/end markers parses back to
    the mapping that produced the run.
    """
    lines = [f"config_sha256={report.sha256}", "config_begin"]
    lines.extend(report.echo.splitlines())
    lines.append("config_end")
    for name in report.artifacts:
        lines.append(f"artifact={name}")
    for key in sorted(report.summary):
        lines.append(f"summary.{key}={fmt(report.summary[key])}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
