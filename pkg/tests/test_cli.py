"""CLI tests: config resolution, artifacts, exit codes, reproducibility."""
import math
import os

import numpy as np
import pytest

from parastab.cli import main, resolve_config, source_member, spatial_profile
from parastab.config import (canonical_echo, config_hash, parse_config_text)
from parastab.lab import make_context

# small grids keep each full CLI run in the tens of milliseconds
FAST = ["--nx", "16", "--nt", "32"]
RATE_FAST = ["rate", "--nx", "16", "--nt", "32", "--T", "0.25",
             "--delta0", "0.25", "--delta1", "0.125",
             "--noise", "0.1,0.05,0.025", "--max_iters", "300"]


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def manifest_lines(outdir):
    return read(os.path.join(outdir, "manifest.txt")).decode().splitlines()


def echo_of(outdir):
    lines = manifest_lines(outdir)
    i0, i1 = lines.index("config_begin"), lines.index("config_end")
    return "\n".join(lines[i0 + 1:i1]) + "\n"


def test_parse_config_text_basics():
    text = "# comment\nnx=32\n\n  T = 0.5 \nf=eigenmode:2\n"
    assert parse_config_text(text) == {"nx": "32", "T": "0.5",
                                       "f": "eigenmode:2"}


def test_parse_config_text_rejects_bad_lines():
    with pytest.raises(ValueError, match="line 2"):
        parse_config_text("nx=32\nnonsense\n")
    with pytest.raises(ValueError, match="empty key"):
        parse_config_text("=32\n")


def test_canonical_echo_sorts_and_round_trips():
    cfg = {"b": "2", "a": "1", "z": "eigenmode:3:0.5"}
    echo = canonical_echo(cfg)
    assert echo == "a=1\nb=2\nz=eigenmode:3:0.5\n"
    assert parse_config_text(echo) == cfg


def test_config_hash_tracks_content():
    h1 = config_hash({"a": "1"})
    h2 = config_hash({"a": "2"})
    assert h1 != h2
    assert len(h1) == 64
    assert h1 == config_hash({"a": "1"})


def test_spatial_profiles():
    ctx = make_context(nx=16, nt=32)
    x = ctx.domain.points
    assert np.array_equal(spatial_profile("zero", ctx.domain), np.zeros(17))
    assert np.array_equal(spatial_profile("one", ctx.domain), np.ones(17))
    got = spatial_profile("eigenmode:2:0.5", ctx.domain)
    assert np.allclose(got, 0.5 * np.cos(2 * np.pi * x))
    bench = spatial_profile("benchmark", ctx.domain)
    expect = (np.cos(np.pi * x) + 0.5 * np.cos(2 * np.pi * x)
              + 0.25 * np.cos(3 * np.pi * x))
    assert np.allclose(bench, expect)


def test_bad_descriptors_raise():
    ctx = make_context(nx=8, nt=16)
    with pytest.raises(ValueError, match="profile"):
        spatial_profile("wavelet", ctx.domain)
    with pytest.raises(ValueError, match="eigenmode"):
        spatial_profile("eigenmode:two", ctx.domain)
    with pytest.raises(ValueError, match="source"):
        source_member("wavelet", ctx)


def test_late_onset_source_misses_the_observation_window():
    ctx = make_context(nx=8, nt=64)
    member = source_member("late-onset", ctx)
    w = ctx.window
    vals = member(ctx.domain.points[:, None], w.times[None, :])
    # zero through the snapshot and the whole trace window, nonzero later
    observed = w.times <= w.T + w.delta1
    assert np.all(vals[:, observed] == 0.0)
    assert np.max(np.abs(vals)) > 0.0


def test_resolve_config_defaults_and_inheritance():
    cfg, typed = resolve_config("rate", {}, None)
    assert cfg["subcommand"] == "rate"
    assert typed["nx"] == 64
    assert typed["alpha0_f"] == 1.0     # inherited from alpha0
    assert typed["alpha0_g"] == 1.0
    cfg2, typed2 = resolve_config("rate", {"alpha0": "4.0",
                                           "alpha0_g": "0.5"}, None)
    assert typed2["alpha0_f"] == 4.0
    assert typed2["alpha0_g"] == 0.5
    assert cfg2["alpha0_f"] == "4.0"


def test_resolve_config_flags_beat_file(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("nx=24\nseed=5\n")
    cfg, typed = resolve_config("forward", {"nx": "48"}, str(cfg_file))
    assert typed["nx"] == 48
    assert typed["seed"] == 5


def test_resolve_config_rejects_unknown_key(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("granularity=3\n")
    with pytest.raises(ValueError, match="granularity"):
        resolve_config("forward", {}, str(cfg_file))


def test_resolve_config_rejects_wrong_subcommand(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("subcommand=rate\n")
    with pytest.raises(ValueError, match="rate"):
        resolve_config("forward", {}, str(cfg_file))


def test_resolution_is_idempotent_through_the_echo():
    # resolving the canonical strings again must reproduce them exactly
    cfg, _ = resolve_config("rate", {"noise": "0.2,0.02,0.002",
                                     "grad_tol": "1e-9"}, None)
    again, _ = resolve_config("rate", {k: v for k, v in cfg.items()
                                       if k != "subcommand"}, None)
    assert again == cfg


def test_forward_run_writes_field_and_manifest(tmp_path):
    out = str(tmp_path / "fwd")
    rc = main(["forward", *FAST, "--out", out])
    assert rc == 0
    rows = read(os.path.join(out, "forward.csv")).decode().splitlines()
    assert rows[0].startswith("h=")
    # nt gets bumped until the snapshot times align, so derive the count
    nt = make_context(nx=16, nt=32).window.nt
    assert len(rows) == 1 + nt + 1          # header + one row per time node
    assert len(rows[1].split(",")) == 17    # nx+1 space columns
    lines = manifest_lines(out)
    assert lines[0].startswith("config_sha256=")
    assert "artifact=forward.csv" in lines


# audits need enough time resolution for the derivative field to satisfy
# its equation; the coarse FAST grid trips the residual warning on purpose
AUDIT_FAST = ["--nx", "32", "--nt", "64"]


def test_carleman_audit_sweep_rows(tmp_path):
    # s values this large underflow exp(s*phi); rows must come back
    # flagged degenerate rather than silently zero
    out = str(tmp_path / "ca")
    rc = main(["carleman-audit", *AUDIT_FAST, "--s", "10,20,40,80",
               "--out", out])
    assert rc == 0
    rows = read(os.path.join(out, "sweep.csv")).decode().splitlines()
    assert rows[0].split(",")[0] == "s"
    assert len(rows) == 5
    s_col = [float(r.split(",")[0]) for r in rows[1:]]
    assert s_col == [10.0, 20.0, 40.0, 80.0]
    assert all(r.split(",")[-1] == "degenerate" for r in rows[1:])


def test_carleman_audit_default_sweep_spans_an_octave_triple(tmp_path):
    out = str(tmp_path / "ca2")
    rc = main(["carleman-audit", *AUDIT_FAST, "--out", out])
    assert rc == 0
    rows = read(os.path.join(out, "sweep.csv")).decode().splitlines()[1:]
    s_col = [float(r.split(",")[0]) for r in rows]
    assert len(s_col) == 4
    assert s_col[-1] == pytest.approx(8.0 * s_col[0])
    # the auto-scaled sweep must stay clean: finite quotients, no flags
    assert all(r.split(",")[-1] == "" for r in rows)
    assert all(math.isfinite(float(r.split(",")[4])) for r in rows)


def test_stability_probe_initial_unnormalized_flags_but_exits_zero(tmp_path):
    out = str(tmp_path / "sp")
    rc = main(["stability-probe", "--kind", "initial", "--members", "6",
               "--normalized", "false", "--levels", "1", *FAST,
               "--out", out])
    assert rc == 0      # expected failures are not violations
    body = read(os.path.join(out, "probe.csv")).decode()
    assert "expected_failure" in body


def test_decompose_profile_covers_zero_to_T(tmp_path):
    out = str(tmp_path / "dc")
    rc = main(["decompose", *FAST, "--f", "benchmark",
               "--g", "eigenmode:1", "--out", out])
    assert rc == 0
    rows = read(os.path.join(out, "decompose.csv")).decode().splitlines()
    assert rows[0] == "t,z_norm,chord"
    ctx = make_context(nx=16, nt=32)
    assert len(rows) - 1 == ctx.window.snapshot_index + 1
    assert float(rows[1].split(",")[0]) == 0.0


def test_reconstruct_run(tmp_path):
    out = str(tmp_path / "rc")
    rc = main(["reconstruct", "--nx", "16", "--nt", "32", "--T", "0.25",
               "--delta0", "0.25", "--delta1", "0.125", "--noise", "0.05",
               "--max_iters", "300", "--out", out])
    assert rc == 0
    rows = read(os.path.join(out, "reconstruction.csv")).decode().splitlines()
    assert rows[0] == "x,phi_true,g_true,phi_est,g_est"
    assert len(rows) == 1 + 17
    lines = manifest_lines(out)
    err_f = [l for l in lines if l.startswith("summary.err_f=")]
    assert len(err_f) == 1
    assert math.isfinite(float(err_f[0].split("=")[1]))


def test_rate_run_emits_one_row_per_level(tmp_path):
    out = str(tmp_path / "rt")
    rc = main([*RATE_FAST, "--out", out])
    assert rc == 0
    rows = read(os.path.join(out, "rate.csv")).decode().splitlines()
    assert rows[0].startswith("eps,alpha,err_f,err_g")
    assert len(rows) == 4
    assert [r.split(",")[-1] for r in rows[1:]] == ["true"] * 3


def test_exit_one_on_usage_and_validation(tmp_path, capsys):
    assert main([]) == 1
    assert main(["forward", "--bogus", "1"]) == 1
    assert main(["forward", "--nx", "abc",
                 "--out", str(tmp_path / "x")]) == 1
    err = capsys.readouterr().err
    assert "nx" in err
    assert main(["stability-probe", "--kind", "sideways",
                 "--out", str(tmp_path / "y")]) == 1
    assert main(["rate", "--noise", "0.1,0.2,0.3",
                 "--out", str(tmp_path / "z")]) == 1


def test_exit_two_flags_violation_and_still_reports(tmp_path):
    out = str(tmp_path / "v")
    rc = main(["stability-probe", "--kind", "source", "--f", "late-onset",
               "--C0", "inf", "--levels", "2", *FAST, "--out", out])
    assert rc == 2
    body = read(os.path.join(out, "probe.csv")).decode()
    assert "violation" in body
    # report written even though the run is flagged
    assert os.path.exists(os.path.join(out, "manifest.txt"))


def test_late_onset_needs_an_infinite_budget(tmp_path, capsys):
    rc = main(["stability-probe", "--kind", "source", "--f", "late-onset",
               *FAST, "--out", str(tmp_path / "w")])
    assert rc == 1
    assert "C0" in capsys.readouterr().err


def test_identical_runs_are_byte_identical(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main([*RATE_FAST, "--seed", "3", "--out", a]) == 0
    assert main([*RATE_FAST, "--seed", "3", "--out", b]) == 0
    for name in ("rate.csv", "manifest.txt"):
        assert read(os.path.join(a, name)) == read(os.path.join(b, name))


def test_seed_changes_artifact_bytes(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main([*RATE_FAST, "--seed", "3", "--out", a]) == 0
    assert main([*RATE_FAST, "--seed", "4", "--out", b]) == 0
    assert read(os.path.join(a, "rate.csv")) != read(os.path.join(b, "rate.csv"))


def test_manifest_echo_reproduces_the_run(tmp_path):
    a = str(tmp_path / "a")
    assert main([*RATE_FAST, "--seed", "3", "--out", a]) == 0
    cfg_path = tmp_path / "replay.cfg"
    cfg_path.write_text(echo_of(a))
    c = str(tmp_path / "c")
    assert main(["rate", "--config", str(cfg_path), "--out", c]) == 0
    for name in ("rate.csv", "manifest.txt"):
        assert read(os.path.join(a, name)) == read(os.path.join(c, name))


def test_output_location_does_not_touch_the_hash(tmp_path):
    a, b = str(tmp_path / "here"), str(tmp_path / "elsewhere")
    assert main(["forward", *FAST, "--out", a]) == 0
    assert main(["forward", *FAST, "--out", b]) == 0
    sha_a = manifest_lines(a)[0]
    sha_b = manifest_lines(b)[0]
    assert sha_a == sha_b


def test_semantic_config_change_moves_the_hash(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["forward", *FAST, "--out", a]) == 0
    assert main(["forward", *FAST, "--seed", "1", "--out", b]) == 0
    assert manifest_lines(a)[0] != manifest_lines(b)[0]


def test_env_var_sets_default_output(tmp_path, monkeypatch):
    envdir = str(tmp_path / "envout")
    explicit = str(tmp_path / "explicit")
    monkeypatch.setenv("PARASTAB_OUT", envdir)
    # explicit --out wins over the environment
    assert main(["forward", *FAST, "--out", explicit]) == 0
    assert os.path.exists(os.path.join(explicit, "manifest.txt"))
    assert not os.path.exists(envdir)
    # without --out the environment decides
    assert main(["forward", *FAST]) == 0
    assert os.path.exists(os.path.join(envdir, "manifest.txt"))


def test_empty_sweep_writes_header_only(tmp_path):
    from parastab.report import write_sweep_csv
    path = str(tmp_path / "empty.csv")
    write_sweep_csv(path, [])
    body = read(path).decode()
    assert body.count("\n") == 1
    assert body.startswith("s,p,lhs,rhs,ratio")


def test_timings_stay_out_of_the_manifest(tmp_path):
    out = str(tmp_path / "t")
    assert main(["forward", *FAST, "--out", out]) == 0
    body = read(os.path.join(out, "manifest.txt")).decode()
    assert "seconds" not in body
    assert "elapsed" not in body
