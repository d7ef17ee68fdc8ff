"""Named analytic expressions and domains usable from configuration files.

An expression reference is ``name`` or ``name:key=value,key=value``; each
entry builds a vectorized callable ``(x, y) -> values``.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, MongeLabError
from .geometry import make_domain

__all__ = ["EXPRESSIONS", "DOMAINS", "expression", "parse_reference", "domain_from_reference", "amc_manufactured"]


def _constant(value=1.0):
    return lambda x, y: value + 0.0 * np.asarray(x, float)


def _paraboloid(scale=1.0):
    return lambda x, y: 0.5 * scale * (np.asarray(x) ** 2 + np.asarray(y) ** 2)


def _quadratic(a=1.0, b=0.0, c=1.0, d=0.0, e=0.0, k=0.0):
    return lambda x, y: a * x * x + b * x * y + c * y * y + d * x + e * y + k


def _cosh_rhs(amp=0.1):
    return lambda x, y: 1.0 + amp * np.cosh(x) + 0.0 * y


def _cosh_solution(amp=0.1):
    return lambda x, y: 0.5 * (x * x + y * y) + amp * np.cosh(x)


def _sin_bump(amp=0.3, base=1.0):
    return lambda x, y: base + amp * np.sin(np.pi * x) * np.sin(np.pi * y)


def _sheared_paraboloid(lam=1.0):
    return lambda x, y: 0.5 * (x + lam * y) ** 2 + 0.5 * y * y


def amc_manufactured(amp=0.05):
    """``(u, w, f)`` for ``u = |x|^2/2 + amp cosh x``.

    ``det D^2 u = D := 1 + amp cosh x``, ``w = D^(-3/4)`` and, since the
    cofactor entry multiplying ``w_xx`` is ``u_yy = 1``, ``f = w''(x)``.
    """
    def u(x, y):
        return 0.5 * (x * x + y * y) + amp * np.cosh(x)

    def w(x, y):
        return (1.0 + amp * np.cosh(x)) ** -0.75 + 0.0 * y

    def f(x, y):
        D = 1.0 + amp * np.cosh(x)
        return (21.0 / 16.0) * D ** (-11.0 / 4.0) * (amp * np.sinh(x)) ** 2 - 0.75 * D ** (-7.0 / 4.0) * amp * np.cosh(x) + 0.0 * y

    return u, w, f


EXPRESSIONS = {
    "constant": _constant,
    "paraboloid": _paraboloid,
    "quadratic": _quadratic,
    "cosh-rhs": _cosh_rhs,
    "cosh-solution": _cosh_solution,
    "sin-bump": _sin_bump,
    "sheared-paraboloid": _sheared_paraboloid,
    "amc-manufactured-u": lambda amp=0.05: amc_manufactured(amp)[0],
    "amc-manufactured-w": lambda amp=0.05: amc_manufactured(amp)[1],
    "amc-manufactured-f": lambda amp=0.05: amc_manufactured(amp)[2],
}

DOMAINS = {
    "disk": ("radius",),
    "ellipse": ("a", "b", "angle"),
    "superellipse": ("exponent", "scale", "smoothing"),
}


def parse_reference(ref):
    """Split ``name:key=value,...`` into the name and a dict of floats."""
    ref = ref.strip()
    name, _, rest = ref.partition(":")
    params = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ConfigError(f"malformed parameter {item!r} in {ref!r}")
            try:
                params[key.strip()] = float(val)
            except ValueError as exc:
                raise ConfigError(f"parameter {key.strip()!r} in {ref!r} is not a number") from exc
    return name.strip(), params


def expression(ref):
    """Callable for a catalogue reference; raises :class:`ConfigError` for unknown names or parameters."""
    name, params = parse_reference(ref)
    if name not in EXPRESSIONS:
        raise ConfigError(f"unknown catalogue entry {name!r}")
    try:
        return EXPRESSIONS[name](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name!r}: {exc}") from exc


def domain_from_reference(ref):
    name, params = parse_reference(ref)
    if name not in DOMAINS:
        raise ConfigError(f"unknown domain {name!r}")
    center = (params.pop("cx", 0.0), params.pop("cy", 0.0))
    unknown = set(params) - set(DOMAINS[name])
    if unknown:
        raise ConfigError(f"unknown parameter(s) {sorted(unknown)} for domain {name!r}")
    try:
        return make_domain(name, params or None, center=center)
    except (ValueError, MongeLabError) as exc:
        raise ConfigError(f"invalid domain {ref!r}: {exc}") from exc
