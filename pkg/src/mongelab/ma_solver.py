"""Dirichlet problem ``det D^2 u = f`` in the domain, ``u = phi`` on its boundary."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .discretization import Grid, ScalarField, hessian, ma_determinant, stencil_directions
from .errors import InvalidProblem, NonPositiveRHS, NotConverged
from .geometry import ConvexDomain

__all__ = [
    "MAProblem",
    "SolverConfig",
    "SolveReport",
    "ComparisonVerdict",
    "solve_dirichlet_ma",
    "comparison_check",
    "ma_residual",
    "rhs_values",
    "boundary_trace",
]

log = logging.getLogger(__name__)


@dataclass
class MAProblem:
    """``f`` and ``phi`` may be callables ``(x, y) -> values`` or precomputed arrays.

    An array ``rhs`` holds values at the grid unknowns, an array
    ``boundary`` holds values at the grid cut points.
    """

    domain: ConvexDomain
    rhs: object
    boundary: object


@dataclass
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 60
    method: str = "newton"  # or "monotone"
    stencil_width: int = 1
    fallback: bool = True
    min_step: float = 2.0**-16
    spacing: float = 1.0 / 32


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    residual: float = float("inf")
    convexity_certificate: float = float("nan")
    wall_time: float = 0.0
    method: str = "newton"
    converged: bool = False
    fallback_used: bool = False
    convexify_eps: float = 0.0
    rounding_floor: float = 0.0

    def to_dict(self):
        return asdict(self)


def rhs_values(grid: Grid, rhs):
    if callable(rhs):
        P = grid.points
        return np.broadcast_to(np.asarray(rhs(P[:, 0], P[:, 1]), dtype=float), (grid.n,)).copy()
    if isinstance(rhs, ScalarField):
        return rhs.values.copy()
    arr = np.asarray(rhs, dtype=float)
    return np.broadcast_to(arr, (grid.n,)).copy()


def boundary_trace(grid: Grid, data):
    if callable(data):
        B = grid.bpoints
        return np.broadcast_to(np.asarray(data(B[:, 0], B[:, 1]), dtype=float), (grid.m,)).copy()
    if isinstance(data, ScalarField):
        return data.trace.copy()
    return np.broadcast_to(np.asarray(data, dtype=float), (grid.m,)).copy()


class _Newton:
    """Residual and Jacobian of the central-difference determinant with frozen boundary data."""

    def __init__(self, grid, f, trace):
        self.grid = grid
        self.f = f
        self.ops = grid.second_difference[:4]
        self.bvals = [B @ trace for _, B in self.ops]
        self.bround = [abs(B) @ np.abs(trace) for _, B in self.ops]

    def dd(self, u):
        return [A @ u + b for (A, _), b in zip(self.ops, self.bvals)]

    def residual(self, u):
        dxx, dyy, dpp, dpm = self.dd(u)
        dxy = 0.25 * (dpp - dpm)
        return dxx * dyy - dxy * dxy - self.f, (dxx, dyy, dxy)

    def jacobian(self, parts):
        dxx, dyy, dxy = parts
        (Axx, _), (Ayy, _), (App, _), (Apm, _) = self.ops
        D = sp.diags
        return (D(dyy) @ Axx + D(dxx) @ Ayy - D(0.5 * dxy) @ (App - Apm)).tocsc()

    @staticmethod
    def certificate(parts):
        dxx, dyy, dxy = parts
        return float(np.min(0.5 * (dxx + dyy) - np.sqrt(0.25 * (dxx - dyy) ** 2 + dxy**2)))

    def rounding_floor(self, u, parts):
        """Sup of the residual change caused by rounding ``u`` and the boundary data to machine precision."""
        eps = np.finfo(float).eps
        exx, eyy, epp, epm = (eps * (abs(A) @ np.abs(u) + b) for (A, _), b in zip(self.ops, self.bround))
        dxx, dyy, dxy = parts
        err = np.abs(dyy) * exx + np.abs(dxx) * eyy + 0.5 * np.abs(dxy) * (epp + epm)
        return float(8 * err.max() + eps * np.abs(self.f).max())


class _Monotone:
    """Semismooth Newton pieces for the wide-stencil monotone determinant."""

    def __init__(self, grid, f, trace, width):
        self.grid = grid
        self.f = f
        self.dirs = stencil_directions(width)
        self.norm2 = (self.dirs**2).sum(1).astype(float)
        self.ops = grid.second_difference[: len(self.dirs)]
        self.bvals = [B @ trace for _, B in self.ops]
        self._central = _Newton(grid, f, trace)

    def residual(self, u):
        D = np.stack([(A @ u + b) / n2 for (A, _), b, n2 in zip(self.ops, self.bvals, self.norm2)])
        P = np.maximum(D, 0.0)
        prods = P[0::2] * P[1::2]
        k = np.argmin(prods, axis=0)
        idx = np.arange(self.grid.n)
        _, parts = self._central.residual(u)
        return prods[k, idx] - self.f, (D, P, k, parts)

    def jacobian(self, state):
        D, P, k, _ = state
        J = None
        idx = np.arange(self.grid.n)
        for pair in range(len(self.dirs) // 2):
            on = k == pair
            if not on.any():
                continue
            a, b = 2 * pair, 2 * pair + 1
            ca = np.where(on & (D[a] > 0), P[b] / self.norm2[a], 0.0)
            cb = np.where(on & (D[b] > 0), P[a] / self.norm2[b], 0.0)
            term = sp.diags(ca) @ self.ops[a][0] + sp.diags(cb) @ self.ops[b][0]
            J = term if J is None else J + term
        # keep rows with a degenerate factor solvable
        diag = np.abs(J.diagonal())
        weak = diag < 1e-12
        if weak.any():
            J = J + sp.diags(np.where(weak, -1.0, 0.0))
        return J.tocsc()

    @staticmethod
    def certificate(state):
        return _Newton.certificate(state[3])


def _initial_guess(grid, f, trace, tol):
    (Axx, Bxx), (Ayy, Byy) = grid.second_difference[:2]
    L = (Axx + Ayy).tocsc()
    u = spsolve(L, 2.0 * np.sqrt(f) - Bxx @ trace - Byy @ trace)
    return _convexify(grid, f, trace, u)


def _convexify(grid, f, trace, u):
    """Add ``eps * level`` (zero on the boundary) until the discrete Hessian is positive semidefinite."""
    bump = grid.domain.level(grid.points)
    eps = 0.0
    probe = _Newton(grid, f, trace)
    for _ in range(30):
        _, parts = probe.residual(u + eps * bump)
        if probe.certificate(parts) >= 0:
            break
        eps = max(4 * eps, 0.05)
    return u + eps * bump, eps


def _damped_newton(model, u, config, report):
    r, state = model.residual(u)
    rn = float(np.max(np.abs(r)))
    report.residual_history.append(rn)
    guard = -10.0 * config.tol
    while rn > config.tol and report.iterations < config.max_iter:
        J = model.jacobian(state)
        try:
            du = spsolve(J, -r)
        except RuntimeError:
            break
        if not np.all(np.isfinite(du)):
            break
        lam = 1.0
        accepted = False
        while lam >= config.min_step:
            u_try = u + lam * du
            r_try, st_try = model.residual(u_try)
            rn_try = float(np.max(np.abs(r_try)))
            if rn_try < (1 - 1e-4 * lam) * rn and model.certificate(st_try) >= guard:
                accepted = True
                break
            lam *= 0.5
        report.iterations += 1
        if not accepted:
            log.debug("line search failed at residual %.3e", rn)
            break
        u, r, state, rn = u_try, r_try, st_try, rn_try
        report.residual_history.append(rn)
    report.residual = rn
    report.convexity_certificate = model.certificate(state)
    # a stall below the rounding floor counts as converged
    report.rounding_floor = model.rounding_floor(u, state) if hasattr(model, "rounding_floor") else 0.0
    report.converged = rn <= max(config.tol, report.rounding_floor)
    return u


def solve_dirichlet_ma(problem: MAProblem, config: SolverConfig | None = None, grid: Grid | None = None,
                       initial=None):
    """Solve the Dirichlet Monge-Ampere problem on ``grid``.

    Damped Newton on the central-difference determinant, whose derivative
    is the cofactor contraction ``U^{ij} eta_ij``.  Steps are halved until
    the sup residual decreases and the discrete Hessian stays (nearly)
    positive semidefinite.  If Newton stalls and ``config.fallback`` is set
    the monotone wide-stencil scheme is tried from the same start.

    ``initial`` (array or field) seeds Newton.  A field's change of
    boundary data is carried inward by a discrete harmonic extension, and a
    start that is not discretely convex gets the same ``eps * level``
    convexification as the default guess.

    A residual that stalls above ``config.tol`` but below the rounding
    floor of the central-difference residual (``report.rounding_floor``)
    is accepted.  Returns ``(u, report)``; raises :class:`NotConverged`
    carrying the best iterate when the tolerance is missed.
    """
    config = config or SolverConfig()
    grid = grid or Grid(problem.domain, config.spacing, width=max(1, config.stencil_width))
    t0 = time.perf_counter()
    f = rhs_values(grid, problem.rhs)
    if not np.all(np.isfinite(f)):
        raise InvalidProblem("right-hand side is not finite")
    if f.min() <= 0:
        raise NonPositiveRHS(f"inf f = {f.min():.3e} must be positive")
    trace = boundary_trace(grid, problem.boundary)

    report = SolveReport(method=config.method)
    if initial is not None:
        u0 = np.asarray(initial.values if isinstance(initial, ScalarField) else initial, dtype=float).copy()
        if isinstance(initial, ScalarField) and initial.trace is not None and initial.grid is grid:
            # carry a change of boundary data into the interior harmonically
            delta = trace - initial.trace
            if np.any(delta != 0):
                (Axx, Bxx), (Ayy, Byy) = grid.second_difference[:2]
                u0 += spsolve((Axx + Ayy).tocsc(), -(Bxx + Byy) @ delta)
        u0, report.convexify_eps = _convexify(grid, f, trace, u0)
    else:
        u0, report.convexify_eps = _initial_guess(grid, f, trace, config.tol)

    if config.method == "monotone":
        u = _damped_newton(_Monotone(grid, f, trace, config.stencil_width), u0, config, report)
    else:
        u = _damped_newton(_Newton(grid, f, trace), u0, config, report)
        if not report.converged and config.fallback:
            log.info("Newton stalled at %.3e; trying the monotone scheme", report.residual)
            mono = SolveReport(method="monotone", fallback_used=True, convexify_eps=report.convexify_eps)
            mono.iterations = report.iterations
            mono.residual_history = list(report.residual_history)
            u_m = _damped_newton(_Monotone(grid, f, trace, max(1, min(config.stencil_width, grid.width))),
                                 u0, config, mono)
            if mono.converged:
                u, report = u_m, mono
    report.wall_time = time.perf_counter() - t0
    field_u = ScalarField(grid, u, trace)
    if not report.converged:
        raise NotConverged(f"residual {report.residual:.3e} above tol {config.tol:.1e}", field_u, report)
    return field_u, report


@dataclass
class ComparisonVerdict:
    passed: bool
    hypothesis_holds: bool
    conclusion_holds: bool
    worst_violation: float
    worst_node: tuple | None

    def to_dict(self):
        return asdict(self)


def comparison_check(u: ScalarField, v: ScalarField, f_u, f_v, domain=None, tol=1e-9) -> ComparisonVerdict:
    """Check the implication (``f_v >= f_u`` inside and ``v <= u`` on the boundary) => ``v <= u``.

    ``f_u``, ``f_v`` are the discrete Monge-Ampere images of ``u``, ``v``
    (fields or nodal arrays).  When the hypotheses fail the verdict passes
    vacuously.  ``worst_violation`` is ``max(v - u)`` over the unknowns.
    """
    fu = f_u.values if isinstance(f_u, ScalarField) else np.asarray(f_u)
    fv = f_v.values if isinstance(f_v, ScalarField) else np.asarray(f_v)
    hyp = bool(np.all(fv >= fu - tol))
    if u.trace is not None and v.trace is not None:
        hyp = hyp and bool(np.all(v.trace <= u.trace + tol))
    diff = v.values - u.values
    i = int(np.argmax(diff))
    worst = float(diff[i])
    concl = worst <= tol
    node = tuple(float(c) for c in u.grid.points[i]) if worst > tol else None
    return ComparisonVerdict(bool(concl or not hyp), hyp, bool(concl), worst, node)


def ma_residual(u: ScalarField, f):
    """Sup and L2 norms of ``det D^2u - f`` over the unknowns (L2 uses the cell weights)."""
    r = ma_determinant(u).values - rhs_values(u.grid, f)
    return float(np.max(np.abs(r))), float(np.sqrt(np.sum(u.grid.weights * r * r)))
