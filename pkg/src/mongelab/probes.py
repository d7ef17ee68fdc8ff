"""Boundary mollification, barrier functions and estimate fits.

These probes measure the quantities that control boundary regularity:
how far a collar-regularized right-hand side moves the solution, how the
boundary second derivatives behave, and which power laws the measured
deviations follow.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .discretization import Grid, ScalarField, directional_second, hessian
from .errors import CollarTooThick, InvalidProblem, TooFewSamples
from .ma_solver import MAProblem, SolverConfig, rhs_values, solve_dirichlet_ma
from .reports import EstimateReport

__all__ = [
    "MollifiedRHS",
    "CascadeSchedule",
    "Barrier",
    "DerivativeSurvey",
    "mollify_boundary_rhs",
    "mollification_sweep",
    "cascade",
    "barrier_field",
    "barrier_value",
    "approximation_gap",
    "approximation_gap_sweep",
    "boundary_derivative_survey",
    "holder_fit",
    "hessian_deviation_samples",
    "schauder_comparison",
    "schauder_sweep",
    "loglog_slope",
]

log = logging.getLogger(__name__)

DIM = 2
EPS0 = 1.0 / (4 * DIM)


def loglog_slope(x, y):
    """Least-squares ``(slope, intercept, rms residual)`` of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    X = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean((X @ coef - ly) ** 2)))


def _as_callable(c):
    c = float(c)
    return lambda x, y: c + 0.0 * np.asarray(x, float)


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s * s)


# ------------------------------------------------------------ mollification
@dataclass(eq=False)
class MollifiedRHS:
    t: float
    tau: float
    epsilon0: float
    alpha: float
    mode: str
    field: ScalarField
    shift_constant: float
    shift: float  # the amount subtracted in the collar, C tau^alpha or C t
    zones: dict = field(default_factory=dict)

    def record(self):
        return {"t": self.t, "tau": self.tau, "epsilon0": self.epsilon0, "alpha": self.alpha, "mode": self.mode,
                "shift_constant": self.shift_constant, "shift": self.shift, **self.zones}


def _boundary_mollified(domain, f, tau, count=4096):
    """Gaussian mollification of ``f`` along the boundary in arc length, periodized."""
    s = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
    pts = domain.boundary(s)
    vals = np.asarray(f(pts[:, 0], pts[:, 1]), float) * np.ones(count)
    L = domain.perimeter
    sigma = domain.arclength(s)
    ds = np.gradient(np.unwrap(sigma / L * 2 * np.pi)) * L / (2 * np.pi)
    diff = sigma[:, None] - sigma[None, :]
    diff -= L * np.round(diff / L)
    K = np.exp(-0.5 * (diff / tau) ** 2) * ds[None, :]
    out = (K @ vals) / K.sum(axis=1)
    return s, out


def mollify_boundary_rhs(domain, f, t, alpha=1.0, grid: Grid | None = None, spacing=1.0 / 64, mode="holder",
                         floor=None) -> MollifiedRHS:
    """Collar regularization ``f_t`` of a positive right-hand side.

    Holder mode: in the collar ``d < t`` the value is the boundary
    mollification of ``f`` (Gaussian of width ``tau = t^(1/(4n))`` in arc
    length) at the nearest boundary point, minus ``C tau^alpha``.
    Lipschitz mode: the collar value is ``f`` at the nearest boundary point
    minus ``C t``.  Beyond ``2t`` the field equals ``f``; in between a
    quintic ramp in the distance blends the two, followed by a pointwise
    minimum with ``f``.  ``C`` is the larger of ``floor`` (default half of
    ``inf f``) and the smallest constant keeping the collar value below
    ``f``, plus ``1e-12``.
    """
    if mode not in ("holder", "lipschitz"):
        raise ValueError(f"unknown mode {mode!r}")
    if not 0 < t < domain.inradius / 2:
        raise CollarTooThick(f"t = {t} must lie in (0, inradius/2 = {domain.inradius / 2:.6g})")
    grid = grid or Grid(domain, spacing)
    if not callable(f):
        f = _as_callable(f)
    P = grid.points
    fv = rhs_values(grid, f)
    if fv.min() <= 0:
        raise InvalidProblem("f must be positive")
    s_foot, foot, d = domain.project(P)
    tau = t**EPS0
    if mode == "holder":
        s_samp, moll = _boundary_mollified(domain, f, tau)
        base = np.interp(np.mod(s_foot, 2 * np.pi), s_samp, moll, period=2 * np.pi)
        unit = tau**alpha
    else:
        base = np.asarray(f(foot[:, 0], foot[:, 1]), float) * np.ones(grid.n)
        unit = t
    band = d < 2 * t
    needed = float(np.max((base[band] - fv[band]) / unit)) if band.any() else 0.0
    floor = 0.5 * float(fv.min()) if floor is None else float(floor)
    C = max(floor, needed) + 1e-12
    collar_val = base - C * unit
    ramp = _smoothstep((d - t) / t)
    ft = np.where(d < t, collar_val, np.where(d >= 2 * t, fv, (1 - ramp) * collar_val + ramp * fv))
    ft = np.minimum(ft, fv)
    if ft.min() <= 0:
        raise InvalidProblem(f"f_t lost positivity (min {ft.min():.3e}); lower the floor constant")
    # trace: the collar formula evaluated at the boundary cut points
    B = grid.bpoints
    sb, fb, _ = domain.project(B)
    if mode == "holder":
        tb = np.interp(np.mod(sb, 2 * np.pi), s_samp, moll, period=2 * np.pi) - C * unit
    else:
        tb = np.asarray(f(fb[:, 0], fb[:, 1]), float) * np.ones(grid.m) - C * unit
    tb = np.minimum(tb, np.asarray(f(B[:, 0], B[:, 1]), float) * np.ones(grid.m))
    zones = {"collar_nodes": int((d < t).sum()), "blend_nodes": int(((d >= t) & (d < 2 * t)).sum()),
             "inner_nodes": int((d >= 2 * t).sum())}
    return MollifiedRHS(float(t), float(tau), EPS0, float(alpha), mode, ScalarField(grid, ft, tb), float(C),
                        float(C * unit), zones)


def mollification_sweep(domain, f, t_values, alpha=1.0, grid=None, spacing=1.0 / 64, mode="holder",
                        floor=None) -> EstimateReport:
    """Fit ``sup |f_t - f|`` against ``t``; Holder mode predicts the exponent ``alpha / (4n)``."""
    grid = grid or Grid(domain, spacing)
    fv = rhs_values(grid, f)
    sups, below = [], True
    for t in t_values:
        m = mollify_boundary_rhs(domain, f, t, alpha, grid, mode=mode, floor=floor)
        below = below and bool(np.all(m.field.values <= fv + 1e-10))
        sups.append(float(np.max(np.abs(m.field.values - fv))))
    slope, icpt, res = loglog_slope(t_values, sups)
    predicted = alpha * EPS0 if mode == "holder" else 1.0
    values = {"t": list(map(float, t_values)), "sup_gap": sups, "exponent": slope, "predicted": predicted,
              "relative_error": abs(slope - predicted) / predicted, "residual": res}
    checks = {"below_f": below, "exponent_within_25pct": abs(slope - predicted) <= 0.25 * predicted}
    return EstimateReport("mollification_decay", values, checks)


# ------------------------------------------------------------------ cascade
@dataclass
class CascadeSchedule:
    t0: float
    theta: float
    sequence: list

    def to_dict(self):
        return asdict(self)


def cascade(t0, alpha=1.0, n=DIM, k_max=8, mode="holder") -> CascadeSchedule:
    """Scales ``t_k = t0^((1+theta)^k)``, ``theta = alpha/(16n)`` (Holder) or ``1/(16n)`` (Lipschitz)."""
    if not 0 < t0 < 1:
        raise ValueError("t0 must lie in (0, 1)")
    if mode == "holder":
        theta = alpha / (16 * n)
    elif mode == "lipschitz":
        theta = 1.0 / (16 * n)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    seq = [float(t0 ** ((1 + theta) ** k)) for k in range(k_max + 1)]
    return CascadeSchedule(float(t0), float(theta), seq)


# ----------------------------------------------------------------- barriers
@dataclass(eq=False)
class Barrier:
    t: float
    variant: str
    exponent: float  # p in -4 t^p d + t^(p-1) d^2
    field: ScalarField
    params: dict = field(default_factory=dict)

    @property
    def kink_value(self):
        return -4.0 * self.t ** (self.exponent + 1)


def _barrier_exponent(variant, params, n=DIM):
    if variant == "holder":
        return float(params.get("beta", 1.0)) + EPS0 * float(params.get("alpha", 1.0))
    if variant == "lipschitz":
        return 1.0 + 1.0 / n
    raise ValueError(f"unknown variant {variant!r}")


def barrier_value(d, t, variant="lipschitz", params=None):
    """Barrier as a function of the boundary distance ``d``.

    ``-4 t^p d + t^(p-1) d^2`` for ``d < 2t`` and ``-4 t^(p+1)`` beyond, with
    ``p = beta + alpha/(4n)`` (Holder variant) or ``p = 1 + 1/n`` (Lipschitz).
    """
    p = _barrier_exponent(variant, params or {})
    d = np.asarray(d, float)
    return np.where(d < 2 * t, -4.0 * t**p * d + t ** (p - 1) * d * d, -4.0 * t ** (p + 1))


def barrier_field(domain, t, params=None, variant="lipschitz", grid: Grid | None = None,
                  spacing=1.0 / 64) -> Barrier:
    """Barrier evaluated at grid nodes (trace 0 on the boundary cut points)."""
    params = dict(params or {})
    if not 0 < t < domain.inradius / 2:
        raise CollarTooThick(f"t = {t} must lie in (0, inradius/2)")
    grid = grid or Grid(domain, spacing)
    z = barrier_value(grid.distance, t, variant, params)
    return Barrier(float(t), variant, _barrier_exponent(variant, params), ScalarField(grid, z, np.zeros(grid.m)),
                   params)


# ------------------------------------------------------- approximation gap
def approximation_gap(u: ScalarField, u_t: ScalarField, domain, t, variant="lipschitz", params=None) -> EstimateReport:
    """``sup |u - u_t| / (t^p d)`` over nodes with ``d < t/2``.

    ``p`` is the barrier exponent of the variant.  The raw quantity
    ``sup |u - u_t| / d`` is also reported for exponent fits.  The report
    is flagged unreliable when ``t/2`` is below two grid spacings.
    """
    grid = u.grid
    p = _barrier_exponent(variant, params or {})
    d = grid.distance
    sel = d < t / 2
    h = grid.spacing
    reliable = bool(t / 2 >= 2 * h and sel.sum() > 0)
    if not sel.any():
        sel = d <= np.min(d) * (1 + 1e-12)
    raw = float(np.max(np.abs(u.values[sel] - u_t.values[sel]) / d[sel]))
    values = {"t": float(t), "exponent": p, "raw": raw, "ratio": raw / t**p, "nodes": int(sel.sum()),
              "reliable": reliable}
    checks = {"ordering": bool(np.all(u_t.values >= u.values - 1e-9))}
    return EstimateReport("approximation_gap", values, checks,
                          notes="" if reliable else "t below grid resolution")


def approximation_gap_sweep(domain, f, phi, t_values, variant="lipschitz", alpha=1.0, spacing=1.0 / 64,
                            config: SolverConfig | None = None, window=(1.0, 1.7)) -> EstimateReport:
    """Solve with ``f`` and with each ``f_t`` and fit the gap exponent in ``t``.

    The pass condition is a fitted exponent of at least ``window[0]``;
    whether it also lies inside ``window`` is reported.
    """
    config = config or SolverConfig(tol=1e-11, spacing=spacing)
    grid = Grid(domain, spacing)
    u, _ = solve_dirichlet_ma(MAProblem(domain, f, phi), config, grid=grid)
    rows = []
    mode = "holder" if variant == "holder" else "lipschitz"
    for t in t_values:
        m = mollify_boundary_rhs(domain, f, t, alpha, grid, mode=mode)
        u_t, _ = solve_dirichlet_ma(MAProblem(domain, m.field.values, phi), config, grid=grid, initial=u)
        rows.append(approximation_gap(u, u_t, domain, t, variant, {"alpha": alpha}).values)
    slope, icpt, res = loglog_slope([r["t"] for r in rows], [r["raw"] for r in rows])
    values = {"rows": rows, "exponent": slope, "predicted": 1 + 1 / DIM if variant == "lipschitz" else None,
              "in_window": window[0] <= slope <= window[1], "window": list(window), "residual": res,
              "all_reliable": all(r["reliable"] for r in rows)}
    checks = {"exponent_at_least_lower": slope >= window[0]}
    return EstimateReport("approximation_gap_sweep", values, checks)


# -------------------------------------------------------- derivative survey
@dataclass
class DerivativeSurvey:
    min_uxixi: float
    max_uxixi: float
    K: float
    max_ugammagamma: float
    collar_depth: float
    samples: int

    def to_dict(self):
        return asdict(self)


def boundary_derivative_survey(u: ScalarField, domain=None, collar_depth=None, samples=64) -> DerivativeSurvey:
    """Second derivatives in the boundary frame at points ``collar_depth`` inside the boundary.

    ``xi`` is the tangent and ``gamma`` the outward normal of the nearest
    boundary point; ``K`` is ``max |u_xi gamma|``.
    """
    grid = u.grid
    domain = domain or grid.domain
    depth = 3 * grid.spacing if collar_depth is None else float(collar_depth)
    H = hessian(u)
    s = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    xx, xg, gg = [], [], []
    for si in s:
        gam = domain.normal(si)
        xi = np.array([-gam[1], gam[0]])
        x = domain.boundary(si) - depth * gam
        xx.append(directional_second(H, x, xi, xi))
        xg.append(directional_second(H, x, xi, gam))
        gg.append(directional_second(H, x, gam, gam))
    xx, xg, gg = map(np.asarray, (xx, xg, gg))
    return DerivativeSurvey(float(xx.min()), float(xx.max()), float(np.abs(xg).max()), float(gg.max()), depth,
                            samples)


# ------------------------------------------------------------------- fits
def holder_fit(samples, min_samples=10, min_decades=1.0) -> EstimateReport:
    """Log-log least squares ``deviation = C distance^exponent``.

    ``samples`` is an ``(N, 2)`` array of ``(distance, deviation)`` pairs.
    Raises :class:`TooFewSamples` with fewer than ``min_samples`` positive
    pairs or distances spanning less than ``min_decades``.
    """
    S = np.asarray(samples, float).reshape(-1, 2)
    S = S[(S[:, 0] > 0) & (S[:, 1] > 0)]
    if len(S) < min_samples:
        raise TooFewSamples(f"{len(S)} usable samples, need {min_samples}")
    span = np.log10(S[:, 0].max() / S[:, 0].min())
    if span < min_decades - 1e-12:
        raise TooFewSamples(f"distances span {span:.2f} decades, need {min_decades}")
    slope, icpt, res = loglog_slope(S[:, 0], S[:, 1])
    return EstimateReport("holder_fit", {"exponent": slope, "constant": float(np.exp(icpt)), "residual": res,
                                         "samples": len(S), "decades": float(span)}, {"finite": np.isfinite(slope)})


def hessian_deviation_samples(u: ScalarField, point, bins=16, r_max=None):
    """Binned ``max |D^2 u(x) - D^2 u(x0)|`` against ``|x - x0|``, ``x0`` the node nearest ``point``."""
    grid = u.grid
    H = hessian(u)
    mats = np.stack([H.xx, H.xy, H.xy, H.yy], axis=1)
    ok = grid.regular
    i0 = grid.node_near(point)
    dist = np.linalg.norm(grid.points - grid.points[i0], axis=1)
    dev = np.linalg.norm(mats - mats[i0], axis=1)
    r_max = 0.5 * grid.domain.diameter if r_max is None else r_max
    edges = np.geomspace(1.5 * grid.spacing, r_max, bins + 1)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = ok & (dist >= lo) & (dist < hi)
        if sel.any():
            out.append((np.sqrt(lo * hi), dev[sel].max()))
    return np.asarray(out)


def _region_mask(grid, region):
    if region is None:
        return grid.distance > 0.5 * grid.domain.inradius
    if callable(region):
        return np.asarray(region(grid.points[:, 0], grid.points[:, 1]), bool)
    return np.asarray(region, bool)


def schauder_comparison(u1: ScalarField, u2: ScalarField, region=None) -> EstimateReport:
    """``sup |D^2(u1 - u2)| / sup |u1 - u2|`` over a region (default: depth beyond half the inradius).

    The ratio is 0 when the fields coincide.
    """
    grid = u1.grid
    mask = _region_mask(grid, region) & grid.regular
    diff = u1 - u2
    H = hessian(diff)
    d2 = float(np.max(np.sqrt(H.xx**2 + 2 * H.xy**2 + H.yy**2)[mask])) if mask.any() else 0.0
    d0 = float(np.max(np.abs(diff.values[mask]))) if mask.any() else 0.0
    ratio = 0.0 if d0 == 0 else d2 / d0
    return EstimateReport("schauder_comparison", {"sup_d2": d2, "sup_diff": d0, "ratio": ratio},
                          {"finite": np.isfinite(ratio)})


def schauder_sweep(domain, f, phi, perturbation, deltas, spacing=1.0 / 32, config=None) -> EstimateReport:
    """Paired solves with boundary data ``phi`` and ``phi + delta * perturbation``.

    Stability means the largest and smallest ratio differ by at most 2x.
    """
    config = config or SolverConfig(tol=1e-11, spacing=spacing)
    grid = Grid(domain, spacing)
    u1, _ = solve_dirichlet_ma(MAProblem(domain, f, phi), config, grid=grid)
    rows = []
    for delta in deltas:
        def phi2(x, y, delta=delta):
            return phi(x, y) + delta * perturbation(x, y)

        u2, _ = solve_dirichlet_ma(MAProblem(domain, f, phi2), config, grid=grid, initial=u1)
        rows.append({"delta": float(delta), **schauder_comparison(u1, u2).values})
    ratios = [r["ratio"] for r in rows if r["ratio"] > 0]
    spread = max(ratios) / min(ratios) if ratios else 1.0
    return EstimateReport("schauder_sweep", {"rows": rows, "spread": spread}, {"stable": spread <= 2.0})
