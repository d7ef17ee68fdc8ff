"""Affine area ``A(u) = int (det D^2 u)^(1/(n+2))`` and the energy ``J[u] = A(u) - int f u``."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .discretization import ScalarField, hessian
from .errors import InvalidProblem
from .amc_solver import _linearized_matrix
from .ma_solver import rhs_values
from .reports import EstimateReport

__all__ = [
    "FunctionalValue",
    "ConcavityVerdict",
    "affine_area",
    "amc_energy",
    "concavity_check",
    "variational_gradient_check",
    "two_scale_bump",
]

DIM = 2
POWER = 1.0 / (DIM + 2)


@dataclass
class FunctionalValue:
    value: float
    spacing: float
    integrand_min: float
    integrand_max: float
    clamp_count: int = 0

    def to_dict(self):
        return asdict(self)


def _area_from_det(det, grid):
    clamped = det < 0
    integrand = np.clip(det, 0.0, None) ** POWER
    return FunctionalValue(float(grid.weights @ integrand), grid.spacing, float(integrand.min()),
                           float(integrand.max()), int(clamped.sum()))


def affine_area(u: ScalarField, domain=None) -> FunctionalValue:
    """Node quadrature of ``(det D^2 u)^(1/4)`` with cut-cell weights; negative determinants count as 0."""
    return _area_from_det(hessian(u).det(), u.grid)


def amc_energy(u: ScalarField, f, domain=None) -> FunctionalValue:
    """``A(u) - int f u`` by the same quadrature."""
    a = affine_area(u)
    load = float(u.grid.weights @ (rhs_values(u.grid, f) * u.values))
    a.value -= load
    return a


@dataclass
class ConcavityVerdict:
    passed: bool
    worst_margin: float
    s_values: list
    margins: list

    def to_dict(self):
        return asdict(self)


def concavity_check(u1: ScalarField, u2: ScalarField, sample_count=11, tol=1e-9) -> ConcavityVerdict:
    """Check ``A(s u1 + (1-s) u2) >= s A(u1) + (1-s) A(u2) - tol`` on a uniform grid of ``s``.

    The margin is left side minus right side; ``worst_margin`` is its minimum.
    """
    if u1.grid is not u2.grid:
        raise InvalidProblem("fields live on different grids")
    H1, H2 = hessian(u1), hessian(u2)
    a1 = _area_from_det(H1.det(), u1.grid).value
    a2 = _area_from_det(H2.det(), u1.grid).value
    s_values = np.linspace(0.0, 1.0, max(2, sample_count))
    margins = []
    for s in s_values:
        xx = s * H1.xx + (1 - s) * H2.xx
        yy = s * H1.yy + (1 - s) * H2.yy
        xy = s * H1.xy + (1 - s) * H2.xy
        a = _area_from_det(xx * yy - xy * xy, u1.grid).value
        margins.append(a - s * a1 - (1 - s) * a2)
    worst = float(min(margins))
    return ConcavityVerdict(worst >= -tol, worst, s_values.tolist(), [float(m) for m in margins])


def two_scale_bump(center=(0.0, 0.0), radius=0.5, inner_offset=(0.15, 0.1)):
    """Smooth compactly supported bump: a wide bump plus a narrower one at a third the radius."""
    c = np.asarray(center, float)
    c2 = c + np.asarray(inner_offset, float)

    def bump(x, y, c, r):
        q = ((x - c[0]) ** 2 + (y - c[1]) ** 2) / r**2
        out = np.zeros(np.broadcast(x, y).shape)
        inside = q < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - q[inside]))
        return out

    def eta(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return bump(x, y, c, radius) + 0.5 * bump(x, y, c2, radius / 3)

    return eta


def variational_gradient_check(u: ScalarField, w: ScalarField, f, perturbation, step_sizes=(1e-2, 1e-3, 1e-4),
                               collar=None) -> EstimateReport:
    """Compare the central difference quotient of ``J`` along ``eta`` with ``int (c L w - f) eta``.

    ``L w = U^{ij} w_ij`` with cofactors of ``u``.  Both ``c = 1`` and
    ``c = 1/(n+2)`` are reported; the matched constant is the one whose
    ratio at the smallest step is closest to 1.  ``perturbation`` must
    vanish on the boundary cut points and at nodes within ``collar``
    (default two grid spacings) of the boundary.
    """
    grid = u.grid
    collar = 2 * grid.spacing if collar is None else collar
    if isinstance(perturbation, ScalarField):
        eta, eta_b = perturbation.values, perturbation.trace
    else:
        eta = rhs_values(grid, perturbation)
        B = grid.bpoints
        eta_b = np.asarray(perturbation(B[:, 0], B[:, 1]), float)
    scale = max(1.0, float(np.max(np.abs(eta))))
    near = grid.distance < collar
    if np.max(np.abs(eta_b), initial=0.0) > 1e-14 * scale or np.max(np.abs(eta[near]), initial=0.0) > 1e-14 * scale:
        raise InvalidProblem("perturbation does not vanish near the boundary")

    fv = rhs_values(grid, f)
    A, B = _linearized_matrix(u, "nondivergence")
    Lw = A @ w.values + B @ w.trace
    pert = ScalarField(grid, eta, np.zeros(grid.m))
    quotients = []
    for s in step_sizes:
        # central quotient: the second variation is large for localized bumps
        quotients.append((amc_energy(u + s * pert, fv).value - amc_energy(u - s * pert, fv).value) / (2 * s))
    pairings = {c: float(grid.weights @ ((c * Lw - fv) * eta)) for c in (1.0, POWER)}
    values = {"step_sizes": list(step_sizes), "difference_quotients": quotients}
    best, best_err = None, np.inf
    for c, p in pairings.items():
        key = "c=1" if c == 1.0 else f"c=1/{DIM + 2}"
        ratio = quotients[-1] / p if p != 0 else (np.inf if quotients[-1] != 0 else 1.0)
        values[f"pairing[{key}]"] = p
        values[f"ratio[{key}]"] = ratio
        if abs(ratio - 1) < best_err:
            best, best_err = c, abs(ratio - 1)
    values["matched_constant"] = best
    values["residual_ratio"] = best_err
    critical = all(abs(p) < 1e-8 for p in pairings.values())
    values["critical_point"] = critical
    checks = {"finite": bool(np.all(np.isfinite(quotients)))}
    if critical:
        # at a critical point the quotient must vanish at least linearly in s
        checks["quotient_decays"] = abs(quotients[-1]) <= abs(quotients[0]) * step_sizes[-1] / step_sizes[0] + 1e-12
    else:
        checks["matched_within_5pct"] = best_err <= 0.05
    return EstimateReport("variational_gradient", values, checks)
