"""Configuration, persistence, orchestration and command-line behaviour."""
import json
import subprocess
import sys

import numpy as np
import pytest

from mongelab import harness
from mongelab.config import bundled_configs, load_config, parse_config
from mongelab.discretization import Grid, ScalarField
from mongelab.errors import ConfigError, UnknownSuite
from mongelab.geometry import make_domain
from mongelab.io import read_field_text, read_snapshot, write_field_text, write_snapshot

MINIMAL = """\
[problem]
mode = ma
domain = disk:radius=1
f = constant:value=1
phi = paraboloid
"""


def cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "mongelab", *args], capture_output=True, text=True, cwd=cwd)


def light(name, spacing, **overrides):
    """Bundled config reduced to one spacing with the expensive probes switched off."""
    cfg = load_config(name).with_overrides(**{"grid.spacing": [spacing], "probes.survey": False,
                                              "probes.functional": False, "probes.cascade_depth": 0,
                                              "probes.mollification_t": []})
    return cfg.with_overrides(**overrides) if overrides else cfg


# ------------------------------------------------------------------ config
def test_bundled_configs_listed():
    assert {"paraboloid-amc", "ma-manufactured-cosh", "amc-manufactured"} <= set(bundled_configs())


def test_defaults_filled():
    cfg = parse_config(MINIMAL)
    assert cfg.spacings == [0.03125]
    assert cfg.solver["tol"] == 1e-10
    assert cfg.problem["theta"] == 0.25
    assert cfg.run["seed"] == 0


def test_spacing_list_and_comments():
    cfg = parse_config(MINIMAL + "[grid]\nspacing = 0.1, 0.05  # two levels\n")
    assert cfg.spacings == [0.1, 0.05]


def test_unknown_catalogue_entry_names_file_and_line(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text(MINIMAL.replace("f = constant:value=1", "f = no-such-function"))
    with pytest.raises(ConfigError, match=rf"{path}:4: problem.f: unknown catalogue entry 'no-such-function'"):
        load_config(path)


@pytest.mark.parametrize("extra, where", [
    ("[grid]\nspacing = -0.1\n", ":8: grid.spacing"),
    ("[solver]\ntol = 0\n", ":8: solver.tol"),
    ("[solver]\nrelax = 1.5\n", ":8: solver.relax"),
    ("[grid]\nspacing = abc\n", ":8: cannot parse grid.spacing"),
    ("[grid]\ncolour = red\n", ":8: unknown key 'colour'"),
    ("[plots]\nx = 1\n", ":7: unknown section"),
])
def test_validation_errors_locate_the_key(extra, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(MINIMAL + "\n" + extra, "cfg.ini")


def test_unknown_domain_parameter():
    with pytest.raises(ConfigError, match="problem.domain"):
        parse_config(MINIMAL.replace("radius=1", "radius=1,height=2"))


def test_missing_config():
    with pytest.raises(ConfigError, match="no configuration file"):
        load_config("definitely-not-a-config")


def test_overrides_do_not_mutate():
    cfg = parse_config(MINIMAL)
    cfg2 = cfg.with_overrides(**{"grid.spacing": [0.5]})
    assert cfg.spacings == [0.03125] and cfg2.spacings == [0.5]


# ------------------------------------------------------------ persistence
@pytest.fixture
def field_with_trace():
    grid = Grid(make_domain("ellipse", {"a": 1.5, "b": 1.0}), 0.125)
    f = lambda x, y: np.sin(x) * np.exp(y) / 3.0
    return ScalarField(grid, f(*grid.points.T), f(*grid.bpoints.T))


def test_snapshot_round_trip(tmp_path, field_with_trace):
    fld = field_with_trace
    header, cols = read_snapshot(write_snapshot(tmp_path / "u.snap", fld))
    grid = fld.grid
    assert header["nodes"] == grid.n and header["cuts"] == grid.m
    assert header["domain"]["kind"] == "ellipse" and header["spacing"] == 0.125
    assert np.array_equal(cols["value"], np.concatenate([fld.values, fld.trace]))
    assert np.array_equal(cols["x"], np.concatenate([grid.points[:, 0], grid.bpoints[:, 0]]))
    assert cols["boundary"].sum() == grid.m and cols["boundary"].dtype == np.uint8


def test_snapshot_rejects_other_files(tmp_path):
    p = tmp_path / "x.snap"
    p.write_bytes(b"not a snapshot")
    with pytest.raises(ValueError):
        read_snapshot(p)


def test_snapshot_without_trace(tmp_path, field_with_trace):
    fld = ScalarField(field_with_trace.grid, field_with_trace.values)
    header, cols = read_snapshot(write_snapshot(tmp_path / "v.snap", fld))
    assert header["cuts"] == 0 and cols["value"].size == fld.grid.n


def test_text_round_trip_is_exact(tmp_path, field_with_trace):
    fld = field_with_trace
    header, cols = read_field_text(write_field_text(tmp_path / "u.txt", fld, name="u"))
    _, snap = read_snapshot(write_snapshot(tmp_path / "u.snap", fld))
    assert header["name"] == "u" and header["columns"] == "x y value boundary"
    for key in ("x", "y", "value", "boundary"):
        assert np.array_equal(cols[key], snap[key])


# ------------------------------------------------------------------- run
def test_paraboloid_amc_bundled_run(tmp_path):
    r = harness.run("paraboloid-amc", tmp_path / "run")
    assert r.passed and r.exit_code == 0
    row = r.stages["solve"]["runs"][0]
    assert abs(row["w_min"] - 1.0) <= 1e-8 and abs(row["w_max"] - 1.0) <= 1e-8
    for stage in ("w_bounds", "functional", "survey"):
        assert stage in r.stages
    for rel in r.artifacts:
        assert (tmp_path / "run" / rel).is_file()
    saved = json.loads((tmp_path / "run" / "result.json").read_text())
    assert saved["passed"] is True and "started" not in json.dumps(saved)
    meta = json.loads((tmp_path / "run" / "metadata.json").read_text())
    assert {"started", "finished", "wall_times"} <= set(meta)


def test_manufactured_cosh_reports_order(tmp_path):
    r = harness.run(light("ma-manufactured-cosh", 0.0625, **{"grid.spacing": [0.0625, 0.03125],
                                                               "probes.sections": False}), tmp_path)
    conv = r.stages["convergence"]
    assert conv["min_order"] >= 1.8 and conv["passed"]
    csv = (tmp_path / "tables" / "convergence.csv").read_text().splitlines()
    assert csv[0] == "spacing,error" and len(csv) == 3


def test_every_selected_probe_reports(tmp_path):
    cfg = load_config("ma-manufactured-cosh").with_overrides(**{"grid.spacing": [0.0625]})
    r = harness.run(cfg, tmp_path)
    for stage in ("solve", "sections", "survey", "functional", "mollification", "cascade"):
        assert stage in r.stages, stage


def test_solver_failure_is_captured_with_stage(tmp_path):
    cfg = parse_config(MINIMAL.replace("constant:value=1", "constant:value=-1"))
    r = harness.run(cfg, tmp_path)
    assert r.exit_code == 2 and not r.passed
    assert r.failures[0]["stage"].startswith("solve[") and r.failures[0]["error"] == "NonPositiveRHS"
    assert json.loads((tmp_path / "result.json").read_text())["failures"] == r.failures


def test_run_is_deterministic(tmp_path):
    cfg = light("ma-manufactured-cosh", 0.0625, **{"probes.mollification_t": [0.2, 0.1]})
    harness.run(cfg, tmp_path / "a", seed=3)
    harness.run(cfg, tmp_path / "b", seed=3)
    for rel in ("result.json", "tables/solve.csv", "tables/mollification.csv", "fields/u-0.snap"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_spacing_override(tmp_path):
    r = harness.run("paraboloid-amc", tmp_path, spacing_override=0.125)
    assert r.config["grid"]["spacing"] == [0.125]


# ----------------------------------------------------------------- sweep
def test_singleton_sweep_matches_run(tmp_path):
    cfg = light("paraboloid-amc", 0.0625)
    single = harness.run(cfg, tmp_path / "run")
    results, agg = harness.sweep(cfg, "spacing", [0.0625], tmp_path / "sweep")
    assert len(results) == 1
    assert results[0].to_dict() == single.to_dict()
    assert ((tmp_path / "sweep" / "spacing-0" / "result.json").read_bytes()
            == (tmp_path / "run" / "result.json").read_bytes())
    assert agg["fit"] is None


def test_t_sweep_decay_table(tmp_path):
    cfg = light("ma-manufactured-cosh", 0.0625)
    ts = [0.2, 0.1, 0.05, 0.025]
    results, agg = harness.sweep(cfg, "t", ts, tmp_path, workers=2)
    assert [r["value"] for r in agg["rows"]] == ts
    gaps = [r["sup_gap"] for r in agg["rows"]]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    alpha = cfg.probes["mollification_alpha"]
    assert abs(agg["fit"]["exponent"] - alpha / 8) <= 0.25 * alpha / 8
    assert (tmp_path / "tables" / "sweep.csv").read_text().startswith("parameter,value,passed,sup_gap")


def test_h_sweep_boundary_sections_slope(tmp_path):
    cfg = light("ma-manufactured-cosh", 0.03125, **{"problem.f": "constant:value=1", "problem.phi": "paraboloid",
                                                       "problem.reference_u": "paraboloid"})
    results, agg = harness.sweep(cfg, "h", [0.02, 0.06, 0.18, 0.54], tmp_path)
    assert agg["fit"]["quantity"] == "area"
    assert abs(agg["fit"]["exponent"] - 1.0) <= 0.15


def test_sweep_rejects_unknown_parameter():
    with pytest.raises(ConfigError):
        harness.sweep(parse_config(MINIMAL), "colour", [1.0])


# ---------------------------------------------------------------- verify
def test_verify_homotopy(tmp_path):
    summary = harness.verify("homotopy", out_dir=tmp_path)
    assert summary["passed"]
    recs = summary["suites"]["homotopy"]
    assert recs and all({"criterion", "passed", "measured", "threshold"} <= set(r) for r in recs)
    assert json.loads((tmp_path / "verify.json").read_text()) == summary


def test_verify_john():
    assert harness.verify("john")["passed"]


def test_verify_unknown_suite():
    with pytest.raises(UnknownSuite):
        harness.verify("nonsense")


# ------------------------------------------------------------------- CLI
def test_cli_run_exit_zero(tmp_path):
    p = cli("run", "--config", "paraboloid-amc", "--out", str(tmp_path), "--spacing-override", "0.0625", "--seed", "1")
    assert p.returncode == 0, p.stderr
    assert json.loads(p.stdout)["passed"] is True
    assert json.loads((tmp_path / "result.json").read_text())["config"]["run"]["seed"] == 1


def test_cli_failed_check_exits_one(tmp_path):
    cfg = tmp_path / "strict.ini"
    cfg.write_text(MINIMAL.replace("f = constant:value=1", "f = cosh-rhs:amp=0.1")
                   .replace("phi = paraboloid", "phi = cosh-solution:amp=0.1\nreference_u = cosh-solution:amp=0.1")
                   + "[grid]\nspacing = 0.125, 0.0625\n[solver]\nmin_order = 5\n")
    p = cli("run", "--config", str(cfg), "--out", str(tmp_path / "out"))
    assert p.returncode == 1, p.stderr


def test_cli_stage_error_exits_two_and_names_stage(tmp_path):
    cfg = tmp_path / "neg.ini"
    cfg.write_text(MINIMAL.replace("constant:value=1", "constant:value=-1"))
    p = cli("run", "--config", str(cfg), "--out", str(tmp_path / "out"))
    assert p.returncode == 2
    assert "stage solve[" in p.stderr and "NonPositiveRHS" in p.stderr


def test_cli_config_error_exits_two(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(MINIMAL.replace("constant:value=1", "nope"))
    p = cli("run", "--config", str(cfg))
    assert p.returncode == 2 and f"{cfg}:4" in p.stderr


def test_cli_sweep(tmp_path):
    p = cli("sweep", "--config", "paraboloid-amc", "--parameter", "spacing", "--values", "0.125,0.0625",
            "--out", str(tmp_path), "--workers", "2")
    assert p.returncode == 0, p.stderr
    assert json.loads(p.stdout)["passed"] is True
    assert (tmp_path / "spacing-1" / "result.json").is_file() and (tmp_path / "sweep.json").is_file()


def test_cli_verify(tmp_path):
    p = cli("verify", "homotopy", "--out", str(tmp_path))
    assert p.returncode == 0, p.stderr
    assert all(line.startswith("PASS homotopy:") for line in p.stdout.splitlines())
    bad = cli("verify", "nonsense")
    assert bad.returncode == 2 and "unknown suite" in bad.stderr
