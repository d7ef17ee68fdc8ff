"""Experiment orchestration: solve, probe and persist.

A run directory holds ``result.json`` (deterministic for a fixed config and
seed), ``metadata.json`` (timestamps and wall times), ``tables/*.csv``,
``fields/*.snap`` and, for AMC runs, ``continuation-<k>.jsonl``.
"""
from __future__ import annotations

import logging
import platform
import time
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .amc_solver import (AMCProblem, ContinuationConfig, consistency_residual, continuation_solve, equation_residual,
                         w_bounds_report)
from .config import ExperimentConfig, load_config  # noqa: F401  (re-exported for the CLI)
from .discretization import Grid
from .errors import ConfigError, InnerSolveFailed, MongeLabError
from .functional import affine_area, amc_energy
from .io import to_jsonable, write_csv, write_json, write_jsonl, write_snapshot
from .ma_solver import MAProblem, SolverConfig, solve_dirichlet_ma
from .probes import boundary_derivative_survey, cascade, loglog_slope, mollify_boundary_rhs
from .sections import default_heights, extract_section, volume_scaling_fit
from .errors import SectionEscapes
from .verify import run_suite

__all__ = ["ExperimentResult", "run", "sweep", "verify", "SWEEP_PARAMETERS"]

log = logging.getLogger(__name__)

SWEEP_PARAMETERS = {
    "spacing": "grid.spacing",
    "t": "probes.mollification_t",
    "h": "probes.section_heights",
    "steps": "solver.steps",
}


@dataclass
class ExperimentResult:
    config: dict
    stages: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    directory: str | None = None

    @property
    def passed(self):
        if self.failures:
            return False
        return all(st.get("passed", True) for st in self.stages.values())

    @property
    def exit_code(self):
        if self.failures:
            return 2
        return 0 if self.passed else 1

    def to_dict(self):
        """Deterministic content of ``result.json`` (no timings, no absolute paths)."""
        return to_jsonable({"config": self.config, "stages": self.stages, "failures": self.failures,
                            "artifacts": sorted(self.artifacts), "passed": self.passed})


class _Recorder:
    def __init__(self, result):
        self.result = result
        self.timings = {}

    def stage(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            out = fn(*args, **kwargs)
        except (MongeLabError, ValueError, np.linalg.LinAlgError) as exc:
            stage = f"{name}:{exc.stage}" if isinstance(exc, InnerSolveFailed) else name
            self.result.failures.append({"stage": stage, "error": type(exc).__name__, "message": str(exc)})
            log.debug("stage %s failed\n%s", name, traceback.format_exc())
            out = None
        self.timings[name] = time.perf_counter() - t0
        return out


def _coerce(cfg):
    if isinstance(cfg, ExperimentConfig):
        return cfg
    return load_config(cfg)


# ------------------------------------------------------------------ stages
def _solve_ma(cfg, dom, h, rec, k, timings):
    f, phi = cfg.function("f"), cfg.function("phi")
    s = cfg.solver
    sc = SolverConfig(tol=s["tol"], max_iter=s["max_iter"], method=s["method"], fallback=s["fallback"],
                      stencil_width=cfg.grid["stencil_width"], spacing=h)
    grid = Grid(dom, h, width=cfg.grid["stencil_width"])
    u, report = solve_dirichlet_ma(MAProblem(dom, f, phi), sc, grid=grid)
    d = report.to_dict()
    timings[f"solve-{k}"] = d.pop("wall_time")
    d.update(spacing=h, unknowns=grid.n, passed=bool(report.converged))
    ref = cfg.function("reference_u")
    if ref is not None:
        d["error_u"] = float(np.abs(u.values - ref(*grid.points.T)).max())
    return u, None, d, None


def _solve_amc(cfg, dom, h, rec, k, timings):
    p, s = cfg.problem, cfg.solver
    prob = AMCProblem(dom, cfg.function("f"), cfg.function("phi"), cfg.function("psi"), theta=p["theta"],
                      slack=p["slack"])
    cc = ContinuationConfig(spacing=h, tol=s["fixed_point_tol"], relax=s["relax"], steps=s["steps"],
                            mode=s["linear_mode"],
                            ma=SolverConfig(tol=s["tol"], max_iter=s["max_iter"], method=s["method"], fallback=False))
    grid = Grid(dom, h, width=cfg.grid["stencil_width"])
    t0 = time.perf_counter()
    u, w, states = continuation_solve(prob, None, cc, grid)
    timings[f"continuation-{k}"] = time.perf_counter() - t0
    cons = consistency_residual(u, w, p["theta"])
    eq = equation_residual(u, w, prob.f, s["linear_mode"])
    d = {"spacing": h, "unknowns": grid.n, "states": len(states), "consistency": cons, "equation_residual": eq,
         "w_min": states[-1].w_min, "w_max": states[-1].w_max,
         "inner_iterations": [st.inner_iterations for st in states],
         "boundary_minimum_held": all(st.w.values.min() >= st.w_boundary_min - 1e-9 for st in states),
         "passed": bool(cons <= 1e-6)}
    for key, fld in (("reference_u", u), ("reference_w", w)):
        ref = cfg.function(key)
        if ref is not None:
            d["error_" + key[-1]] = float(np.abs(fld.values - ref(*grid.points.T)).max())
    return u, w, d, [st.record() for st in states]


def _convergence(rows, min_order):
    errs = [r.get("error_u") for r in rows]
    if len(rows) < 2 or any(e is None for e in errs):
        return None
    hs = [r["spacing"] for r in rows]
    orders = [float(np.log(errs[i] / errs[i + 1]) / np.log(hs[i] / hs[i + 1])) for i in range(len(rows) - 1)]
    return {"spacings": hs, "errors": errs, "orders": orders, "min_order": min(orders), "required": min_order,
            "passed": min(orders) >= min_order}


def _sections_stage(cfg, u):
    pr = cfg.probes
    center = pr["section_center"]
    heights = pr["section_heights"] or list(default_heights(u.grid))
    if len(heights) == 1:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SectionEscapes)
            s = extract_section(u, center, heights[0])
        return {"rows": [s.to_row()], "passed": True}
    rep = volume_scaling_fit(u, center, heights)
    v = rep.values
    rows = [{"h": h, "area": a} for h, a in zip(v["heights"], v["areas"])]
    return {"rows": rows, "slope": v["slope"], "C1": v["C1"], "C2": v["C2"], "residual": v["residual"],
            "max_repair": v["max_repair"], "passed": abs(v["slope"] - 1.0) <= 0.15}


def _mollification_stage(cfg, dom, grid):
    pr = cfg.probes
    f = cfg.function("f")
    rows = []
    fv = f(*grid.points.T) * np.ones(grid.n)
    for t in pr["mollification_t"]:
        m = mollify_boundary_rhs(dom, f, t, pr["mollification_alpha"], grid, mode=pr["mollification_mode"])
        rows.append({**m.record(), "sup_gap": float(np.max(np.abs(m.field.values - fv))),
                     "below_f": bool(np.all(m.field.values <= fv + 1e-10))})
    out = {"rows": rows, "passed": all(r["below_f"] for r in rows)}
    if len(rows) >= 2:
        slope, _, res = loglog_slope([r["t"] for r in rows], [r["sup_gap"] for r in rows])
        pred = pr["mollification_alpha"] / 8 if pr["mollification_mode"] == "holder" else 1.0
        out.update(exponent=slope, predicted=pred, residual=res)
        out["passed"] = out["passed"] and abs(slope - pred) <= 0.25 * pred
    return out


# --------------------------------------------------------------------- run
def run(config, out_dir=None, spacing_override=None, seed=None, write=True) -> ExperimentResult:
    """Execute one experiment and write its run directory.

    ``config`` is an :class:`ExperimentConfig`, a path or a bundled config
    name.  Solver and probe failures are captured in ``result.failures``
    with their stage; configuration errors raise :class:`ConfigError`.
    """
    cfg = _coerce(config)
    if spacing_override is not None:
        cfg = cfg.with_overrides(**{"grid.spacing": [float(spacing_override)]})
    if seed is not None:
        cfg = cfg.with_overrides(**{"run.seed": int(seed)})
    np.random.seed(cfg.run["seed"])
    started = datetime.now(timezone.utc).isoformat()
    result = ExperimentResult(config=cfg.echo())
    rec = _Recorder(result)
    dom = rec.stage("domain", cfg.domain)
    out = Path(out_dir or cfg.output["directory"])
    fields, tables, traces = {}, {}, {}

    u = w = None
    if dom is not None:
        solve = _solve_amc if cfg.problem["mode"] == "amc" else _solve_ma
        rows = []
        for k, h in enumerate(cfg.spacings):
            res = rec.stage(f"solve[{h:g}]", solve, cfg, dom, h, rec, k, rec.timings)
            if res is None:
                break
            u, w, d, trace = res
            rows.append(d)
            fields[f"u-{k}"] = u
            if w is not None:
                fields[f"w-{k}"] = w
            if trace is not None:
                traces[f"continuation-{k}.jsonl"] = trace
        result.stages["solve"] = {"runs": rows, "passed": bool(rows) and all(r["passed"] for r in rows)}
        tables["solve.csv"] = [{k: v for k, v in r.items() if not isinstance(v, list)} for r in rows]
        conv = _convergence(rows, cfg.solver["min_order"])
        if conv is not None:
            result.stages["convergence"] = conv
            tables["convergence.csv"] = [{"spacing": h, "error": e} for h, e in zip(conv["spacings"], conv["errors"])]

    pr = cfg.probes
    if u is not None:
        if pr["sections"]:
            st = rec.stage("sections", _sections_stage, cfg, u)
            if st is not None:
                result.stages["sections"] = st
                tables["sections.csv"] = st["rows"]
        if pr["survey"]:
            sv = rec.stage("survey", boundary_derivative_survey, u, dom)
            if sv is not None:
                result.stages["survey"] = {**sv.to_dict(), "passed": sv.min_uxixi > 0}
        if pr["functional"]:
            fn = rec.stage("functional", lambda: {"affine_area": affine_area(u).to_dict(),
                                                  "energy": amc_energy(u, cfg.function("f")).to_dict()})
            if fn is not None:
                result.stages["functional"] = fn
        if w is not None and pr["w_bounds"]:
            wb = rec.stage("w_bounds", w_bounds_report, u, w, dom, cfg.function("f"))
            if wb is not None:
                result.stages["w_bounds"] = wb.to_dict()
    if dom is not None and pr["mollification_t"]:
        grid = u.grid if u is not None else Grid(dom, cfg.spacings[-1])
        mo = rec.stage("mollification", _mollification_stage, cfg, dom, grid)
        if mo is not None:
            result.stages["mollification"] = mo
            tables["mollification.csv"] = mo["rows"]
    if pr["cascade_depth"] > 0:
        mode = pr["mollification_mode"]
        cs = rec.stage("cascade", cascade, pr["cascade_t0"], pr["mollification_alpha"], 2, pr["cascade_depth"], mode)
        if cs is not None:
            result.stages["cascade"] = {**cs.to_dict(), "passed": bool(np.all(np.diff(cs.sequence) < 0))}
            tables["cascade.csv"] = [{"k": k, "t": t} for k, t in enumerate(cs.sequence)]

    result.metadata = {"started": started, "finished": datetime.now(timezone.utc).isoformat(),
                       "wall_times": rec.timings, "version": __version__, "python": platform.python_version(),
                       "source": cfg.source}
    if write:
        _write_run(result, out, fields, tables, traces, cfg.output["snapshots"])
    return result


def _write_run(result, out, fields, tables, traces, snapshots):
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in tables.items():
        write_csv(out / "tables" / name, rows)
        result.artifacts.append(f"tables/{name}")
    for name, recs in traces.items():
        write_jsonl(out / name, recs)
        result.artifacts.append(name)
    if snapshots:
        for name, fld in fields.items():
            write_snapshot(out / "fields" / f"{name}.snap", fld, name)
            result.artifacts.append(f"fields/{name}.snap")
    result.directory = str(out)
    write_json(out / "result.json", result.to_dict())
    write_json(out / "metadata.json", result.metadata)


# ------------------------------------------------------------------- sweep
def _run_one(args):
    cfg, out, spacing_override, seed = args
    r = run(cfg, out, spacing_override, seed)
    return r


def _coerce_value(parameter, value):
    if parameter == "steps":
        return int(value)
    return [float(value)]


def sweep(config, parameter, values, out_dir=None, workers=None, seed=None):
    """Run one experiment per value of ``parameter`` and fit across the sweep.

    Returns ``(results, aggregate)``; the aggregate is also written to
    ``sweep.json`` and ``tables/sweep.csv`` in ``out_dir``.
    """
    cfg = _coerce(config)
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"cannot sweep {parameter!r}; choose from {sorted(SWEEP_PARAMETERS)}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = Path(out_dir or cfg.output["directory"])
    jobs = []
    for i, v in enumerate(values):
        c = cfg.with_overrides(**{SWEEP_PARAMETERS[parameter]: _coerce_value(parameter, v)})
        if parameter == "h":
            c = c.with_overrides(**{"probes.sections": True})
        jobs.append((c, out / f"{parameter}-{i}", None, seed))
    workers = workers or cfg.run["workers"]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    aggregate = _aggregate(parameter, values, results)
    write_csv(out / "tables" / "sweep.csv", aggregate["rows"])
    write_json(out / "sweep.json", aggregate)
    return results, aggregate


def _aggregate(parameter, values, results):
    rows = []
    for v, r in zip(values, results):
        row = {"parameter": parameter, "value": float(v), "passed": r.passed}
        st = r.stages
        if parameter == "spacing" and "solve" in st and st["solve"]["runs"]:
            run0 = st["solve"]["runs"][-1]
            row["error_u"] = run0.get("error_u")
            row["iterations"] = run0.get("iterations", sum(run0.get("inner_iterations", [])))
        elif parameter == "t" and "mollification" in st:
            row["sup_gap"] = st["mollification"]["rows"][0]["sup_gap"]
        elif parameter == "h" and "sections" in st:
            row["area"] = st["sections"]["rows"][0]["area"]
        elif parameter == "steps" and "solve" in st and st["solve"]["runs"]:
            row["inner_iterations"] = sum(st["solve"]["runs"][-1].get("inner_iterations", []))
        rows.append(row)
    key = {"spacing": "error_u", "t": "sup_gap", "h": "area"}.get(parameter)
    fit = None
    if key and len(rows) >= 2 and all(r.get(key) for r in rows):
        slope, icpt, res = loglog_slope([r["value"] for r in rows], [r[key] for r in rows])
        fit = {"quantity": key, "exponent": slope, "intercept": icpt, "residual": res}
    return to_jsonable({"parameter": parameter, "rows": rows, "fit": fit,
                        "passed": all(r.passed for r in results)})


# ------------------------------------------------------------------ verify
def verify(suite="all", seed=0, out_dir=None):
    """Run verification suites; returns ``{"suites": ..., "passed": bool}``."""
    res = run_suite(suite, seed)
    summary = {"seed": seed, "suites": res, "passed": all(r["passed"] for recs in res.values() for r in recs)}
    summary = to_jsonable(summary)
    if out_dir is not None:
        write_json(Path(out_dir) / "verify.json", summary)
    return summary
