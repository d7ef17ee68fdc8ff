"""Second boundary value problem for the affine mean curvature equation.

The fourth-order problem is split into the pair

    det D^2 u = w^(1/(theta-1))       u = phi on the boundary
    U^{ij} w_ij = f                   w = psi on the boundary

with ``theta = 1/(n+2)`` in the affine case, so that
``w = (det D^2 u)^(-(n+1)/(n+2))``.  It is solved by continuation: the map
``T_t`` solves the first equation for ``u`` given ``w`` and then the second
with right-hand side ``t f`` and boundary data ``t psi + (1 - t)``.  At
``t = 0`` the unique fixed point is ``w = 1``; the fixed point is tracked to
``t = 1`` by under-relaxed Picard iteration.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .discretization import Grid, ScalarField, cofactor, hessian
from .errors import (ContinuationStalled, DegenerateCoefficients, InnerSolveFailed, InvalidProblem,
                     NotConverged, TooFewSamples, WLostPositivity)
from .geometry import ConvexDomain
from .ma_solver import MAProblem, SolverConfig, boundary_trace, rhs_values, solve_dirichlet_ma
from .reports import EstimateReport

__all__ = [
    "AMCProblem",
    "ContinuationConfig",
    "ContinuationState",
    "fixed_point_step",
    "solve_linearized",
    "continuation_solve",
    "fixed_point_solve",
    "uniqueness_probe",
    "w_bounds_report",
    "consistency_residual",
    "equation_residual",
]

log = logging.getLogger(__name__)

DIM = 2


@dataclass
class AMCProblem:
    """Data ``f`` (``f <= slack``), ``phi`` for ``u`` and ``psi > 0`` for ``w``.

    ``theta`` is the exponent in ``w = (det D^2 u)^(theta - 1)``; the affine
    case ``1/(n+2)`` is the default and any value in ``(0, 1/n]`` is allowed.
    """

    domain: ConvexDomain
    f: object
    phi: object
    psi: object
    theta: float = 1.0 / (DIM + 2)
    slack: float = 0.0

    def __post_init__(self):
        if not 0 < self.theta <= 1.0 / DIM:
            raise InvalidProblem(f"theta = {self.theta} outside (0, 1/{DIM}]")

    @property
    def det_power(self):
        """Exponent ``p`` with ``det D^2 u = w^p``."""
        return 1.0 / (self.theta - 1.0)

    def validate(self, grid):
        f = rhs_values(grid, self.f)
        if f.max() > self.slack:
            raise InvalidProblem(f"sup f = {f.max():.3e} exceeds the allowed slack {self.slack:.3e}")
        psi = boundary_trace(grid, self.psi)
        if psi.min() <= 0:
            raise InvalidProblem(f"inf psi = {psi.min():.3e} must be positive")
        return f, psi


@dataclass
class ContinuationConfig:
    spacing: float = 1.0 / 32
    tol: float = 1e-9
    relax: float = 0.7
    steps: int = 11
    max_inner: int = 200
    max_halvings: int = 8
    mode: str = "nondivergence"
    ma: SolverConfig = field(default_factory=lambda: SolverConfig(tol=1e-10, fallback=False))


@dataclass(frozen=True, eq=False)
class ContinuationState:
    t: float
    u: ScalarField
    w: ScalarField
    fixed_point_residual: float
    inner_iterations: int
    w_min: float
    w_max: float
    w_boundary_min: float
    ma_iterations: tuple = ()

    def record(self):
        return {
            "t": self.t,
            "fixed_point_residual": self.fixed_point_residual,
            "inner_iterations": self.inner_iterations,
            "w_min": self.w_min,
            "w_max": self.w_max,
            "w_boundary_min": self.w_boundary_min,
            "ma_iterations": list(self.ma_iterations),
        }


# ------------------------------------------------------------------ linearized
def _linearized_matrix(u: ScalarField, mode):
    grid = u.grid
    H = hessian(u)
    det = H.det()
    if det.min() <= 0 or H.min_eigenvalue().min() <= 0:
        raise DegenerateCoefficients(f"min det D^2u = {det.min():.3e}; cofactor matrix not positive definite")
    U = cofactor(H).matrices
    u11, u22, u12 = U[:, 0, 0], U[:, 1, 1], U[:, 0, 1]
    D = sp.diags
    if mode == "nondivergence":
        ops = grid.second_difference
        a12 = np.abs(u12)
        pos, neg = np.where(u12 > 0, a12, 0.0), np.where(u12 < 0, a12, 0.0)
        # U^{ij} w_ij = (U11-|U12|) w_xx + (U22-|U12|) w_yy + |U12| D_(1,+-1) w, monotone when diagonally dominant
        coef = [u11 - a12, u22 - a12, pos, neg]
        A = sum(D(c) @ ops[k][0] for k, c in enumerate(coef))
        B = sum(D(c) @ ops[k][1] for k, c in enumerate(coef))
        return A.tocsc(), B.tocsr()
    if mode == "divergence":
        G = grid.first_difference
        outer = [_outer_difference(grid, k) for k in (0, 1)]
        A = B = None
        for i in (0, 1):
            for j in (0, 1):
                Ai = outer[i] @ D(U[:, i, j])
                a, b = Ai @ G[j][0], Ai @ G[j][1]
                A = a if A is None else A + a
                B = b if B is None else B + b
        return A.tocsc(), B.tocsr()
    raise ValueError(f"unknown mode {mode!r}")


def _outer_difference(grid, k):
    """First difference of node-only data along axis ``k``; one-sided where a neighbour is cut."""
    h = grid.spacing
    n = grid.n
    rows = np.arange(n)
    p, m = grid.nbr[k, 0], grid.nbr[k, 1]
    both, only_m, only_p = (p >= 0) & (m >= 0), (p < 0) & (m >= 0), (p >= 0) & (m < 0)
    r = np.concatenate([rows[both], rows[both], rows[only_m], rows[only_m], rows[only_p], rows[only_p]])
    c = np.concatenate([p[both], m[both], rows[only_m], m[only_m], p[only_p], rows[only_p]])
    v = np.concatenate([np.full(both.sum(), 0.5 / h), np.full(both.sum(), -0.5 / h),
                        np.full(only_m.sum(), 1 / h), np.full(only_m.sum(), -1 / h),
                        np.full(only_p.sum(), 1 / h), np.full(only_p.sum(), -1 / h)])
    return sp.csr_matrix((v, (r, c)), shape=(n, n))


def solve_linearized(u: ScalarField, rhs, boundary_data, mode="nondivergence") -> ScalarField:
    """Solve ``U^{ij} w_ij = rhs`` with ``w = boundary_data``, coefficients frozen from ``u``.

    ``mode="divergence"`` discretizes ``d_i (U^{ij} d_j w)`` instead, which
    agrees in the continuum because the cofactor rows are divergence free.
    """
    grid = u.grid
    A, B = _linearized_matrix(u, mode)
    trace = boundary_trace(grid, boundary_data)
    b = rhs_values(grid, rhs) - B @ trace
    w = spsolve(A, b)
    if not np.all(np.isfinite(w)):
        raise DegenerateCoefficients("linearized system is singular")
    return ScalarField(grid, w, trace)


def equation_residual(u: ScalarField, w: ScalarField, f, mode="nondivergence"):
    """Sup norm of ``U^{ij} w_ij - f`` over the unknowns."""
    A, B = _linearized_matrix(u, mode)
    r = A @ w.values + B @ w.trace - rhs_values(u.grid, f)
    return float(np.max(np.abs(r)))


def consistency_residual(u: ScalarField, w: ScalarField, theta=1.0 / (DIM + 2)):
    """Sup norm of ``w - (det D^2 u)^(theta - 1)`` over the unknowns."""
    det = np.clip(hessian(u).det(), 1e-300, None)
    return float(np.max(np.abs(w.values - det ** (theta - 1.0))))


# ------------------------------------------------------------------ fixed point
def _t_map(problem, grid, f, psi, w_vals, t, config, u_prev=None):
    if w_vals.min() <= 0:
        raise WLostPositivity(f"min w = {w_vals.min():.3e}")
    det_rhs = w_vals**problem.det_power
    try:
        u, rep = solve_dirichlet_ma(MAProblem(problem.domain, det_rhs, problem.phi), config.ma, grid=grid,
                                    initial=u_prev)
    except NotConverged as exc:
        if u_prev is None:
            raise InnerSolveFailed(str(exc), "monge-ampere") from exc
        try:
            u, rep = solve_dirichlet_ma(MAProblem(problem.domain, det_rhs, problem.phi), config.ma, grid=grid)
        except NotConverged as exc2:
            raise InnerSolveFailed(str(exc2), "monge-ampere") from exc2
    try:
        w_next = solve_linearized(u, t * f, t * psi + (1.0 - t), mode=config.mode)
    except DegenerateCoefficients as exc:
        raise InnerSolveFailed(str(exc), "linearized") from exc
    if w_next.values.min() <= 0:
        raise WLostPositivity(f"linearized solve produced min w = {w_next.values.min():.3e} at t = {t}")
    return u, w_next, rep


def fixed_point_step(problem: AMCProblem, w, t, config: ContinuationConfig | None = None, grid: Grid | None = None,
                     u_init=None):
    """One application of ``T_t``: returns ``(u, w_next)``."""
    config = config or ContinuationConfig()
    grid = grid or (w.grid if isinstance(w, ScalarField) else Grid(problem.domain, config.spacing))
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    f, psi = problem.validate(grid)
    w_vals = w.values if isinstance(w, ScalarField) else np.broadcast_to(np.asarray(w, float), (grid.n,))
    u, w_next, _ = _t_map(problem, grid, f, psi, np.asarray(w_vals, float), t, config, u_init)
    return u, w_next


def _picard(problem, grid, f, psi, w0, t, config, u0=None, relax=None):
    """Relaxed Picard iteration on ``T_t``; returns (u, w_next, residual, iterations, ma_iters)."""
    omega = config.relax if relax is None else relax
    w = np.asarray(w0, float).copy()
    u = u0
    prev = np.inf
    ma_iters = []
    for it in range(1, config.max_inner + 1):
        u, w_next, rep = _t_map(problem, grid, f, psi, w, t, config, u)
        ma_iters.append(rep.iterations)
        res = float(np.max(np.abs(w_next.values - w)))
        if res <= config.tol:
            return u, w_next, res, it, ma_iters
        if res > 1.5 * prev:
            omega *= 0.5
            if omega < 0.02:
                break
        prev = res
        w = (1.0 - omega) * w + omega * w_next.values
    raise ContinuationStalled(f"Picard iteration at t = {t} stopped at residual {res:.3e}")


def _state(t, u, w, res, it, ma_iters):
    return ContinuationState(float(t), u, w, res, it, float(min(w.values.min(), w.trace.min())),
                             float(max(w.values.max(), w.trace.max())), float(w.trace.min()), tuple(ma_iters))


def continuation_solve(problem: AMCProblem, schedule=None, config: ContinuationConfig | None = None,
                       grid: Grid | None = None, w_init=None):
    """Track the fixed point of ``T_t`` from ``t = 0`` to ``t = 1``.

    ``schedule`` is an increasing sequence starting at 0 and ending at 1
    (default: ``config.steps`` uniform values).  When the inner iteration
    stalls the step is halved, at most ``config.max_halvings`` times in a
    row.  Returns ``(u, w, states)`` with one state per accepted ``t``.
    """
    config = config or ContinuationConfig()
    grid = grid or Grid(problem.domain, config.spacing)
    f, psi = problem.validate(grid)
    sched = np.linspace(0.0, 1.0, config.steps) if schedule is None else np.asarray(schedule, float)
    if sched[0] != 0.0 or sched[-1] != 1.0 or np.any(np.diff(sched) <= 0):
        raise ValueError("schedule must increase from 0 to 1")
    w = np.ones(grid.n) if w_init is None else rhs_values(grid, w_init)
    u = None
    states = []
    pending = list(sched[::-1])
    t_done = None
    halvings = 0
    while pending:
        t = pending.pop()
        try:
            u_new, w_next, res, it, ma_iters = _picard(problem, grid, f, psi, w, t, config, u)
        except (ContinuationStalled, InnerSolveFailed, WLostPositivity) as exc:
            if t_done is None or halvings >= config.max_halvings:
                raise ContinuationStalled(f"continuation stalled at t = {t}: {exc}") from exc
            halvings += 1
            pending.extend([t, 0.5 * (t_done + t)])
            log.info("halving continuation step below t = %.6g", t)
            continue
        halvings = 0
        u, w, t_done = u_new, w_next.values, t
        states.append(_state(t, u, w_next, res, it, ma_iters))
    return u, states[-1].w, states


def fixed_point_solve(problem: AMCProblem, w_init, t=1.0, config: ContinuationConfig | None = None,
                      grid: Grid | None = None):
    """Picard iteration on ``T_t`` straight from ``w_init`` (no continuation)."""
    config = config or ContinuationConfig()
    grid = grid or Grid(problem.domain, config.spacing)
    f, psi = problem.validate(grid)
    u, w_next, res, it, ma_iters = _picard(problem, grid, f, psi, rhs_values(grid, w_init), t, config)
    return u, w_next, _state(t, u, w_next, res, it, ma_iters)


def uniqueness_probe(problem: AMCProblem, config: ContinuationConfig | None = None, init_count=3,
                     grid: Grid | None = None):
    """Largest pairwise sup distance between ``u`` fields reached from distinct initial ``w``.

    Initial fields, in order: ``w = 1``, the harmonic extension of ``psi``,
    and ``1 + 0.3 sin(pi x) sin(pi y)``; further ones add smaller bumps.
    Each is iterated at ``t = 1`` directly, falling back to continuation
    from that start when direct iteration stalls.
    """
    config = config or ContinuationConfig()
    grid = grid or Grid(problem.domain, config.spacing)
    if init_count < 1:
        raise ValueError("init_count must be positive")
    inits = [np.ones(grid.n)]
    if init_count >= 2:
        (Axx, Bxx), (Ayy, Byy) = grid.second_difference[:2]
        psi = boundary_trace(grid, problem.psi)
        inits.append(spsolve((Axx + Ayy).tocsc(), -(Bxx + Byy) @ psi))
    P = grid.points
    k = 1
    while len(inits) < init_count:
        inits.append(1.0 + 0.3 / k * np.sin(k * np.pi * P[:, 0]) * np.sin(np.pi * P[:, 1]))
        k += 1
    us = []
    for w0 in inits:
        try:
            u, _, _ = fixed_point_solve(problem, w0, 1.0, config, grid)
        except (ContinuationStalled, InnerSolveFailed, WLostPositivity):
            u, _, _ = continuation_solve(problem, None, config, grid, w_init=w0)
        us.append(u.values)
    if len(us) == 1:
        return 0.0
    return float(max(np.max(np.abs(a - b)) for i, a in enumerate(us) for b in us[i + 1:]))


def w_bounds_report(u: ScalarField, w: ScalarField, domain=None, f=None, boundary_samples=256,
                    collar=None) -> EstimateReport:
    """Extrema of ``w`` and its boundary Lipschitz behaviour.

    The Lipschitz constant is ``sup |w(x) - w(x0)| / |x - x0|`` over
    unknowns ``x`` and sampled cut points ``x0``.  The exponent is a log-log
    fit of the binned maximal deviation against distance for distances
    between ``h/2`` and ``collar`` (default: a quarter of the inradius).  When ``f`` is
    given and ``f <= 0`` the boundary-minimum property is also checked.
    Raises :class:`WLostPositivity` if ``w`` is not positive.
    """
    from .probes import holder_fit

    grid = w.grid
    wmin = float(min(w.values.min(), w.trace.min()))
    wmax = float(max(w.values.max(), w.trace.max()))
    if wmin <= 0:
        raise WLostPositivity(f"min w = {wmin:.3e}")
    step = max(1, grid.m // boundary_samples)
    x0 = grid.bpoints[::step]
    w0 = w.trace[::step]
    dist = np.linalg.norm(grid.points[None, :, :] - x0[:, None, :], axis=-1)
    dev = np.abs(w.values[None, :] - w0[:, None])
    lip = float(np.max(dev / dist))
    values = {"w_min": wmin, "w_max": wmax, "boundary_lipschitz": lip}
    checks = {"w_positive": wmin > 0}
    h = grid.spacing
    # local fit: at macroscopic distances the deviation of a smooth w saturates
    collar = 0.25 * grid.domain.inradius if collar is None else collar
    edges = np.geomspace(0.5 * h, collar, 25)
    mids, sups = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (dist >= lo) & (dist < hi)
        if sel.any():
            mids.append(np.sqrt(lo * hi))
            sups.append(dev[sel].max())
    sups = np.asarray(sups)
    values["lipschitz_exponent"] = None
    if np.all(sups > 1e-12 * max(1.0, wmax)):
        try:
            fit = holder_fit(np.column_stack([mids, sups]))
        except TooFewSamples:
            # coarse grids span less than a decade of distances
            fit = None
        if fit is not None:
            values["lipschitz_exponent"] = fit["exponent"]
            values["lipschitz_fit_constant"] = fit["constant"]
    if f is not None:
        fv = rhs_values(grid, f)
        if fv.max() <= 0:
            gap = float(w.values.min() - w.trace.min())
            values["interior_minus_boundary_min"] = gap
            checks["boundary_minimum"] = gap >= -1e-9
    return EstimateReport("w_bounds", values, checks)
