"""Experiment configuration files.

The format is line oriented ``key = value`` text grouped under
``[section]`` headers; ``#`` and ``;`` start comments.  Recognized sections
and keys (defaults in brackets)::

    [problem]
    name = label for reports                       [experiment]
    mode = ma | amc                                [ma]
    domain = disk:radius=1 | ellipse:a=2,b=1,angle=0 | superellipse:exponent=4
    f = catalogue reference (right-hand side)      [constant:value=1]
    phi = catalogue reference (boundary data of u) [paraboloid]
    psi = catalogue reference (boundary data of w) [constant:value=1]
    theta = exponent in w = det^(theta-1)          [0.25]
    slack = allowed positive part of f             [0]
    reference_u = exact u, for error reports       [none]
    reference_w = exact w, for error reports       [none]

    [grid]
    spacing = one or more comma-separated spacings [0.03125]
    stencil_width = 1 | 2 | 3                      [1]

    [solver]
    tol, max_iter, method (newton | monotone), fallback
    fixed_point_tol, relax, steps, linear_mode (nondivergence | divergence)
    min_order = required convergence order when several spacings are given [1.8]

    [probes]
    sections = yes | no; section_center = x, y; section_heights = list
    survey = yes | no; functional = yes | no; w_bounds = yes | no
    mollification_t = list; mollification_alpha; mollification_mode (holder | lipschitz)
    cascade_depth; cascade_t0

    [output]
    directory = run directory                      [out]
    snapshots = yes | no                           [yes]

    [run]
    seed = integer                                 [0]
    workers = integer                              [1]

Catalogue names are listed in :mod:`mongelab.catalogue`.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .catalogue import domain_from_reference, expression
from .errors import ConfigError

__all__ = ["ExperimentConfig", "load_config", "parse_config", "bundled_configs"]

_BOOL = {"yes": True, "true": True, "on": True, "1": True, "no": False, "false": False, "off": False, "0": False}


def _floats(text):
    return [float(v) for v in re.split(r"[,\s]+", text.strip()) if v]


SCHEMA = {
    "problem": {
        "name": (str, "experiment"), "mode": (str, "ma"), "domain": (str, "disk"),
        "f": (str, "constant:value=1"), "phi": (str, "paraboloid"), "psi": (str, "constant:value=1"),
        "theta": (float, 0.25), "slack": (float, 0.0), "reference_u": (str, ""), "reference_w": (str, ""),
    },
    "grid": {"spacing": (_floats, [0.03125]), "stencil_width": (int, 1)},
    "solver": {
        "tol": (float, 1e-10), "max_iter": (int, 60), "method": (str, "newton"), "fallback": (bool, True),
        "fixed_point_tol": (float, 1e-9), "relax": (float, 0.7), "steps": (int, 11),
        "linear_mode": (str, "nondivergence"), "min_order": (float, 1.8),
    },
    "probes": {
        "sections": (bool, False), "section_center": (_floats, [0.0, 0.0]), "section_heights": (_floats, []),
        "survey": (bool, False), "functional": (bool, False), "w_bounds": (bool, True),
        "mollification_t": (_floats, []), "mollification_alpha": (float, 1.0),
        "mollification_mode": (str, "holder"), "cascade_depth": (int, 0), "cascade_t0": (float, 0.1),
    },
    "output": {"directory": (str, "out"), "snapshots": (bool, True)},
    "run": {"seed": (int, 0), "workers": (int, 1)},
}


@dataclass
class ExperimentConfig:
    problem: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    probes: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    source: str = "<string>"

    @property
    def spacings(self):
        return list(self.grid["spacing"])

    def echo(self):
        """Plain dict of every setting (without the source path)."""
        d = asdict(self)
        d.pop("source")
        return d

    def with_overrides(self, **changes):
        """Copy with ``section.key`` style overrides, e.g. ``{"grid.spacing": [0.05]}``."""
        d = asdict(self)
        for dotted, value in changes.items():
            sec, key = dotted.split(".")
            d[sec][key] = value
        return ExperimentConfig(**d)

    def domain(self):
        return domain_from_reference(self.problem["domain"])

    def function(self, key):
        ref = self.problem[key]
        return expression(ref) if ref else None


def _line_of(lines, section, key=None):
    current = None
    for no, line in enumerate(lines, 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return no
    return None


def parse_config(text, source="<string>") -> ExperimentConfig:
    """Parse configuration text; errors name the line and key."""
    lines = text.splitlines()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    out = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}:{_line_of(lines, sec)}: unknown section [{sec}]")
    for sec, keys in SCHEMA.items():
        vals = {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in keys.items()}
        if cp.has_section(sec):
            for key, raw in cp.items(sec):
                where = f"{source}:{_line_of(lines, sec, key)}"
                if key not in keys:
                    raise ConfigError(f"{where}: unknown key {key!r} in [{sec}]")
                kind = keys[key][0]
                try:
                    if kind is bool:
                        if raw.strip().lower() not in _BOOL:
                            raise ValueError(raw)
                        vals[key] = _BOOL[raw.strip().lower()]
                    else:
                        vals[key] = kind(raw.strip())
                except ValueError as exc:
                    raise ConfigError(f"{where}: cannot parse {sec}.{key} = {raw!r}") from exc
        out[sec] = vals
    cfg = ExperimentConfig(**out, source=source)
    _validate(cfg, lines)
    return cfg


def _validate(cfg, lines):
    def fail(sec, key, msg):
        raise ConfigError(f"{cfg.source}:{_line_of(lines, sec, key)}: {sec}.{key}: {msg}")

    p = cfg.problem
    if p["mode"] not in ("ma", "amc"):
        fail("problem", "mode", f"expected ma or amc, got {p['mode']!r}")
    for key in ("domain", "f", "phi", "psi", "reference_u", "reference_w"):
        try:
            if key == "domain":
                cfg.domain()
            elif p[key]:
                expression(p[key])
        except ConfigError as exc:
            fail("problem", key, str(exc))
    if not cfg.grid["spacing"] or min(cfg.grid["spacing"]) <= 0:
        fail("grid", "spacing", "spacings must be positive")
    if cfg.grid["stencil_width"] not in (1, 2, 3):
        fail("grid", "stencil_width", "must be 1, 2 or 3")
    s = cfg.solver
    for key in ("tol", "fixed_point_tol"):
        if s[key] <= 0:
            fail("solver", key, "tolerance must be positive")
    if not 0 < s["relax"] <= 1:
        fail("solver", "relax", "must lie in (0, 1]")
    if s["method"] not in ("newton", "monotone"):
        fail("solver", "method", "expected newton or monotone")
    if s["linear_mode"] not in ("nondivergence", "divergence"):
        fail("solver", "linear_mode", "expected nondivergence or divergence")
    if s["steps"] < 2:
        fail("solver", "steps", "need at least 2 continuation steps")
    pr = cfg.probes
    if len(pr["section_center"]) != 2:
        fail("probes", "section_center", "expected two coordinates")
    if pr["mollification_mode"] not in ("holder", "lipschitz"):
        fail("probes", "mollification_mode", "expected holder or lipschitz")
    if any(h <= 0 for h in pr["section_heights"]):
        fail("probes", "section_heights", "heights must be positive")
    if cfg.run["workers"] < 1:
        fail("run", "workers", "must be at least 1")


def bundled_configs():
    """Names of the configuration files shipped with the package."""
    root = resources.files("mongelab") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_config(path_or_name) -> ExperimentConfig:
    """Read a configuration file, or a bundled one by name (e.g. ``paraboloid-amc``)."""
    p = Path(path_or_name)
    if p.is_file():
        return parse_config(p.read_text(), str(p))
    name = str(path_or_name)
    root = resources.files("mongelab") / "configs"
    cand = root / (name if name.endswith(".ini") else name + ".ini")
    if cand.is_file():
        return parse_config(cand.read_text(), f"<bundled:{cand.name}>")
    raise ConfigError(f"no configuration file or bundled config named {name!r}")
