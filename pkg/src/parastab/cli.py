"""Command-line driver for the laboratory.

Subcommands map one-to-one onto the library modules: forward solves and
measures, carleman-audit sweeps the weighted inequality, stability-probe
runs the two estimate probes, decompose splits the time derivative and
checks the interpolation bound, reconstruct runs one inversion, rate runs
the noise sweep. Every run writes its CSV artifacts plus a manifest into
the output directory; with a fixed config and seed the bytes are
identical between runs. Exit codes: 0 success, 1 invalid usage or
configuration, 2 when any emitted row is flagged as an estimate-violation
candidate, so CI can tell the three apart.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from .admissible import make_admissible_pair
from .carleman import constant_sweep, empirical_s_threshold, sweep_statistic
from .decompose import (check_log_convexity_and_w_bound,
                        decompose_time_derivative)
from .inverse import InverseProblemSpec, minimize, rate_experiment, \
    synthesize_data
from .lab import make_context
from .measurement import measure
from .mesh import SpaceTimeField, field_from_function, zero_field
from .probes import (initial_eigenmode_family, initial_stability_probe,
                     source_eigenmode_family, source_stability_probe)
from .report import (MANIFEST_NAME, RunReport, fmt, write_field_csv,
                     write_manifest, write_probe_csv, write_profile_csv,
                     write_rate_csv, write_reconstruction_csv,
                     write_sweep_csv)
from .config import parse_config_file
from .solver import forward_solve, time_derivative, time_shift
from .weights import EXP_WEIGHTED, LITERAL_TRUNCATED, WeightConfig, \
    eval_weights

DEFAULT_OUT = "parastab_out"
OUT_ENV_VAR = "PARASTAB_OUT"

_BOUNDARY_MODES = {"exp": EXP_WEIGHTED, "literal": LITERAL_TRUNCATED}

_INHERIT = object()   # alpha0_f / alpha0_g fall back to alpha0

# (key, kind, default) per subcommand; kinds: int, float, floats, str, bool
_SHARED = [
    ("nx", "int", 64),
    ("nt", "int", 256),
    ("T", "float", 1.0),
    ("delta0", "float", 0.5),
    ("delta1", "float", 0.25),
    ("C0", "float", 2.0),
    ("seed", "int", 0),
]

_RECON_COMMON = [
    ("f", "str", "benchmark"),
    ("g", "str", "benchmark"),
    ("alpha0", "float", 1.0),
    ("alpha0_f", "float", _INHERIT),
    ("alpha0_g", "float", _INHERIT),
    ("max_iters", "int", 2000),
    ("grad_tol", "float", 1e-10),
]

_TABLES = {
    "forward": _SHARED + [("f", "str", "zero"), ("g", "str", "eigenmode:1")],
    "carleman-audit": _SHARED + [
        ("f", "str", "zero"), ("g", "str", "eigenmode:1"),
        ("lambda", "float", 1.0), ("s", "floats", ()),
        ("p", "int", 0), ("boundary", "str", "exp")],
    "stability-probe": _SHARED + [
        ("kind", "str", "source"), ("members", "int", 0),
        ("levels", "int", 2), ("normalized", "bool", True),
        ("f", "str", ""), ("M0", "float", 100.0)],
    "decompose": _SHARED + [
        ("f", "str", "zero"), ("g", "str", "eigenmode:1"),
        ("omega", "float", 0.0)],
    "reconstruct": _SHARED + _RECON_COMMON + [("noise", "floats", (0.01,))],
    "rate": _SHARED + _RECON_COMMON + [
        ("noise", "floats", (1e-1, 1e-2, 1e-3))],
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; 2 is reserved for flagged
    # violation candidates here, so usage problems are rerouted to exit 1
    def error(self, message):
        raise _UsageError(message)


def _parse_value(key: str, kind: str, raw: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "floats":
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return raw.strip()
    except ValueError as exc:
        raise ValueError(f"invalid value for {key}: {exc}") from None


def _canon(kind: str, value) -> str:
    if kind == "floats":
        return ",".join(fmt(float(v)) for v in value)
    return fmt(value)


def resolve_config(sub: str, flag_values: dict, config_path: str | None):
    """Merge builtin defaults, config file, and flags into canonical form.

    Returns the canonical string mapping whose sorted echo identifies the
    run; parsing that echo back reproduces the same mapping.
    """
    table = _TABLES[sub]
    keys = {k for k, _, _ in table}
    file_cfg = parse_config_file(config_path) if config_path else {}
    if file_cfg.get("subcommand", sub) != sub:
        raise ValueError(f"config file is for subcommand "
                         f"{file_cfg['subcommand']!r}, not {sub!r}")
    for key in file_cfg:
        if key not in keys and key != "subcommand":
            raise ValueError(f"unknown config key: {key}")

    typed = {}
    for key, kind, default in table:
        raw = flag_values.get(key)
        if raw is None:
            raw = file_cfg.get(key)
        if raw is None:
            typed[key] = default
        else:
            typed[key] = _parse_value(key, kind, raw)
    for key in ("alpha0_f", "alpha0_g"):
        if typed.get(key) is _INHERIT:
            typed[key] = typed["alpha0"]

    cfg = {"subcommand": sub}
    for key, kind, _ in table:
        cfg[key] = _canon(kind, typed[key])
    return cfg, typed


def _context(typed: dict):
    extra = {}
    if "M0" in typed:
        extra["M0"] = typed["M0"]
    return make_context(nx=typed["nx"], nt=typed["nt"], T=typed["T"],
                        delta0=typed["delta0"], delta1=typed["delta1"],
                        C0=typed["C0"], **extra)


def _parse_eigenmode(desc: str):
    parts = desc.split(":")
    if len(parts) not in (2, 3):
        raise ValueError(f"bad eigenmode descriptor: {desc!r}")
    try:
        m = int(parts[1])
        amp = float(parts[2]) if len(parts) == 3 else 1.0
    except ValueError:
        raise ValueError(f"bad eigenmode descriptor: {desc!r}") from None
    return m, amp


def spatial_profile(desc: str, domain) -> np.ndarray:
    """Named initial-value profiles: zero | one | benchmark | eigenmode:m[:amp].

    benchmark is the three-mode combination used throughout the docs; its
    staggered amplitudes keep the log-rate signature visible in rate runs.
    """
    x = domain.points
    if desc == "zero":
        return np.zeros(x.size)
    if desc == "one":
        return np.ones(x.size)
    if desc == "benchmark":
        return (np.cos(np.pi * x) + 0.5 * np.cos(2.0 * np.pi * x)
                + 0.25 * np.cos(3.0 * np.pi * x))
    if desc.startswith("eigenmode:"):
        m, amp = _parse_eigenmode(desc)
        return amp * np.cos(m * np.pi * x)
    raise ValueError(f"unknown profile descriptor: {desc!r}")


def source_member(desc: str, ctx):
    """Named continuum sources as (x, t) functions; None means zero.

    All are time-constant except late-onset, which ramps up only after the
    observation window closes, so its measurement vanishes identically
    while the source does not: the estimate-violation path made concrete
    (pair it with C0=inf, since no finite rate budget admits a source that
    is zero on the snapshot line). Its onset time is tied to the context
    given here, so refined probe levels sample the same function.
    """
    if desc in ("", "zero"):
        return None
    if desc == "late-onset":
        t_on = ctx.window.T + ctx.window.delta1 + 2.5 * ctx.window.k

        def member(x, t):
            return np.where(t > t_on, (t - t_on) ** 2, 0.0) \
                * (2.0 + np.cos(np.pi * x))
        return member
    if desc == "benchmark":
        def profile(x):
            return np.cos(np.pi * x) + 0.5
    elif desc == "one":
        def profile(x):
            return np.ones_like(x)
    elif desc.startswith("eigenmode:"):
        m, amp = _parse_eigenmode(desc)

        def profile(x):
            return amp * np.cos(m * np.pi * x)
    else:
        raise ValueError(f"unknown source descriptor: {desc!r}")

    def member(x, t):
        return profile(x) + 0.0 * t
    return member


def source_descriptor(desc: str, ctx) -> SpaceTimeField | None:
    member = source_member(desc, ctx)
    if member is None:
        return None
    return field_from_function(ctx.domain, ctx.window, member)


def _truth_phi(desc: str, domain) -> np.ndarray:
    if desc == "benchmark":
        return np.cos(np.pi * domain.points) + 0.5
    return spatial_profile(desc, domain)


def _flag_has_violation(rows) -> bool:
    return any("violation" in r.flag for r in rows)


def _run_forward(typed, outdir):
    ctx = _context(typed)
    f = source_descriptor(typed["f"], ctx)
    g = spatial_profile(typed["g"], ctx.domain)
    pair = make_admissible_pair(ctx, f=f, g=g)
    u = forward_solve(ctx.dop, pair.f, pair.g, ctx.window)
    md = measure(u, ctx.domain, ctx.window)
    write_field_csv(os.path.join(outdir, "forward.csv"), u.values,
                    ctx.domain, ctx.window)
    summary = {"h2_space_norm": md.h2_space_norm,
               "h2_trace_norm": md.h2_trace_norm,
               "combined_norm": md.combined_norm,
               "max_abs_u": float(np.max(np.abs(u.values)))}
    return ["forward.csv"], summary, False


def _run_carleman_audit(typed, outdir):
    ctx = _context(typed)
    if typed["boundary"] not in _BOUNDARY_MODES:
        raise ValueError(f"boundary must be one of "
                         f"{sorted(_BOUNDARY_MODES)}, got {typed['boundary']!r}")
    f = source_descriptor(typed["f"], ctx)
    g = spatial_profile(typed["g"], ctx.domain)
    pair = make_admissible_pair(ctx, f=f, g=g)
    u = forward_solve(ctx.dop, pair.f, pair.g, ctx.window)
    # the audited field is the time derivative on the shifted frame; it
    # solves the equation with the shifted source's derivative as data
    v = time_derivative(time_shift(u))
    if pair.f is None:
        companion = zero_field(ctx.domain, v.window)
    else:
        companion = time_derivative(time_shift(pair.f))
    wcfg = WeightConfig(lam=typed["lambda"], s_values=typed["s"],
                        p=typed["p"],
                        boundary_weighting=_BOUNDARY_MODES[typed["boundary"]])
    weights = eval_weights(wcfg, ctx.window, ctx.domain)
    rows = constant_sweep(v, companion, weights, wcfg, dop=ctx.dop)
    write_sweep_csv(os.path.join(outdir, "sweep.csv"), rows)
    summary = {"rows": len(rows), "s0": rows[0].s,
               "max_over_median": sweep_statistic(rows),
               "s1_threshold": empirical_s_threshold(rows),
               "M": weights.M}
    return ["sweep.csv"], summary, _flag_has_violation(rows)


def _run_stability_probe(typed, outdir):
    ctx = _context(typed)
    kind = typed["kind"]
    if kind == "source":
        if typed["f"]:
            member = source_member(typed["f"], ctx)
            if member is None:
                raise ValueError("custom source family needs a nonzero f")
            family = ((1.0, member),)
        else:
            family = source_eigenmode_family(typed["members"] or 6)
        report = source_stability_probe(family, ctx, levels=typed["levels"])
    elif kind == "initial":
        family = initial_eigenmode_family(typed["members"] or 8,
                                          normalized=typed["normalized"])
        report = initial_stability_probe(family, ctx, levels=typed["levels"])
    else:
        raise ValueError(f"kind must be source or initial, got {kind!r}")
    write_probe_csv(os.path.join(outdir, "probe.csv"), report.rows)
    summary = {"kind": report.kind,
               "max_agreement_factor": report.max_agreement_factor}
    for lvl, (mx, md) in enumerate(zip(report.level_max,
                                       report.level_median)):
        summary[f"level_{lvl}_max"] = mx
        summary[f"level_{lvl}_median"] = md
    return ["probe.csv"], summary, _flag_has_violation(report.rows)


def _run_decompose(typed, outdir):
    ctx = _context(typed)
    f = source_descriptor(typed["f"], ctx)
    g = spatial_profile(typed["g"], ctx.domain)
    pair = make_admissible_pair(ctx, f=f, g=g)
    u = forward_solve(ctx.dop, pair.f, pair.g, ctx.window)
    dec = decompose_time_derivative(u, pair.f, ctx)
    # the built-in operator is drift-free, so the sharp interpolation
    # check always runs; a degenerate run still carries a nan chord of
    # matching length
    report = check_log_convexity_and_w_bound(
        dec.source_free, dec.sourced, pair.f, ctx.window, ctx.C0,
        self_adjoint=True, omega=typed["omega"])
    write_profile_csv(os.path.join(outdir, "decompose.csv"), report.times,
                      report.norms, report.chord)
    summary = {"residual_evolution": dec.residuals.evolution,
               "residual_terminal": dec.residuals.terminal,
               "residual_splitting": dec.residuals.splitting,
               "checked": report.checked,
               "degenerate": report.degenerate,
               "max_violation": report.max_violation,
               "min_log_second_difference": report.min_log_second_difference,
               "w_ratio_sup": report.w_ratio_sup,
               "w_bound_ok": report.w_bound_ok}
    if report.notice:
        summary["notice"] = report.notice
    return ["decompose.csv"], summary, False


def _recon_spec(typed, eps: float) -> InverseProblemSpec:
    return InverseProblemSpec(alpha_f=typed["alpha0_f"] * eps ** 2,
                              alpha_g=typed["alpha0_g"] * eps ** 2,
                              max_iters=typed["max_iters"],
                              grad_tol=typed["grad_tol"],
                              noise_level=eps, seed=typed["seed"])


def _run_reconstruct(typed, outdir):
    ctx = _context(typed)
    if not typed["noise"]:
        raise ValueError("noise needs at least one level")
    eps = typed["noise"][0]
    phi_true = _truth_phi(typed["f"], ctx.domain)
    g_true = spatial_profile(typed["g"], ctx.domain)
    f_field = SpaceTimeField(
        np.repeat(phi_true[:, None], ctx.window.nt + 1, axis=1),
        ctx.domain, ctx.window)
    pair = make_admissible_pair(ctx, f=f_field, g=g_true)
    spec = _recon_spec(typed, eps)
    data = synthesize_data(pair, spec, ctx)
    n = ctx.domain.nx + 1
    res = minimize(spec, data, (np.zeros(n), np.zeros(n)), ctx)
    wx = ctx.domain.quad_weights

    def rel(est, truth):
        den = math.sqrt(float(np.sum(wx * truth ** 2)))
        num = math.sqrt(float(np.sum(wx * (est - truth) ** 2)))
        return num / den if den > 0.0 else num

    write_reconstruction_csv(os.path.join(outdir, "reconstruction.csv"),
                             ctx.domain.points, phi_true, g_true,
                             res.phi_est, res.g_est)
    summary = {"eps": eps, "alpha_f": spec.alpha_f, "alpha_g": spec.alpha_g,
               "final_objective": res.final_objective,
               "iterations": res.iterations, "converged": res.converged,
               "err_f": rel(res.phi_est, phi_true),
               "err_g": rel(res.g_est, g_true),
               "combined_norm_noisy": data.combined_norm}
    return ["reconstruction.csv"], summary, False


def _run_rate(typed, outdir):
    ctx = _context(typed)
    phi_true = _truth_phi(typed["f"], ctx.domain)
    g_true = spatial_profile(typed["g"], ctx.domain)
    spec = InverseProblemSpec(alpha_f=typed["alpha0_f"],
                              alpha_g=typed["alpha0_g"],
                              max_iters=typed["max_iters"],
                              grad_tol=typed["grad_tol"],
                              seed=typed["seed"])
    result = rate_experiment(spec, list(typed["noise"]),
                             (phi_true, g_true), ctx)
    write_rate_csv(os.path.join(outdir, "rate.csv"), result.rows)
    summary = {"levels": len(result.rows),
               "source_slope": result.source_slope,
               "all_converged": all(r.converged for r in result.rows)}
    if result.log_products:
        summary["log_product_min"] = min(result.log_products)
        summary["log_product_max"] = max(result.log_products)
    return ["rate.csv"], summary, False


_HANDLERS = {
    "forward": _run_forward,
    "carleman-audit": _run_carleman_audit,
    "stability-probe": _run_stability_probe,
    "decompose": _run_decompose,
    "reconstruct": _run_reconstruct,
    "rate": _run_rate,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="parastab",
                     description="numerical laboratory for simultaneous "
                                 "source and initial-value recovery")
    subs = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    for sub, table in _TABLES.items():
        sp = subs.add_parser(sub, description=f"run the {sub} pipeline")
        for key, _, _ in table:
            sp.add_argument(f"--{key}", type=str, default=None)
        sp.add_argument("--out", type=str, default=None)
        sp.add_argument("--config", type=str, default=None)
    return parser


def run_cli(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        sub = getattr(ns, "subcommand", None)
        if sub is None:
            raise _UsageError("a subcommand is required "
                              f"(one of {', '.join(_TABLES)})")
        flag_values = vars(ns)
        cfg, typed = resolve_config(sub, flag_values, flag_values["config"])
        outdir = flag_values["out"] or os.environ.get(OUT_ENV_VAR,
                                                      DEFAULT_OUT)
        os.makedirs(outdir, exist_ok=True)

        started = time.perf_counter()
        artifacts, summary, flagged = _HANDLERS[sub](typed, outdir)
        elapsed = time.perf_counter() - started

        report = RunReport(config=cfg, artifacts=tuple(artifacts),
                           summary=summary,
                           timings={"total_seconds": elapsed})
        write_manifest(os.path.join(outdir, MANIFEST_NAME), report)

        print(f"subcommand: {sub}")
        print(f"config_sha256: {report.sha256}")
        for name in artifacts:
            print(f"artifact: {os.path.join(outdir, name)}")
        print(f"artifact: {os.path.join(outdir, MANIFEST_NAME)}")
        for key in sorted(summary):
            print(f"summary.{key}: {fmt(summary[key])}")
        # timings are stdout-only so artifact bytes stay reproducible
        print(f"elapsed_seconds: {elapsed:.3f}")
        if flagged:
            print("estimate-violation candidates flagged")
            return 2
        return 0
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
