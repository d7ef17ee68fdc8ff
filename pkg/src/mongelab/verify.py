"""Self-verification suites run by ``mongelab verify``.

Each suite returns a list of criterion records
``{"criterion", "passed", "measured", "threshold"}``.  Randomized suites
draw from ``numpy.random.default_rng(seed)`` so results are reproducible.
"""
from __future__ import annotations

import warnings

import numpy as np

from .amc_solver import AMCProblem, ContinuationConfig, continuation_solve, fixed_point_step
from .catalogue import amc_manufactured
from .discretization import Grid, ScalarField, cofactor, hessian, ma_determinant, ma_monotone, stencil_directions
from .errors import UnknownSuite
from .functional import concavity_check
from .geometry import make_domain
from .ma_solver import MAProblem, SolverConfig, comparison_check, solve_dirichlet_ma
from .sections import john_ellipsoid

__all__ = ["SUITES", "run_suite", "random_spd", "quadratic", "monotone_oracle", "reference_mvee_volume",
           "catalogue_domains", "shear_setup"]


def random_spd(rng, lo=0.5, hi=3.0):
    ang = rng.uniform(0, np.pi)
    R = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    return R @ np.diag(rng.uniform(lo, hi, 2)) @ R.T


def quadratic(A, b=(0.0, 0.0), c=0.0):
    """``u(x) = x.A x / 2 + b.x + c`` as a vectorized callable."""
    A = np.asarray(A, float)

    def u(x, y):
        return 0.5 * (A[0, 0] * x * x + 2 * A[0, 1] * x * y + A[1, 1] * y * y) + b[0] * x + b[1] * y + c

    return u


def monotone_oracle(A, width=1):
    """Minimum over orthogonal stencil pairs of ``(e.Ae)_+ (f.Af)_+ / (|e|^2 |f|^2)``."""
    E = stencil_directions(width).astype(float)
    q = np.maximum(np.einsum("ij,jk,ik->i", E, A, E), 0.0) / (E**2).sum(1)
    return float(np.min(q[0::2] * q[1::2]))


def catalogue_domains():
    return {
        "disk": make_domain("disk"),
        "ellipse": make_domain("ellipse", {"a": 1.5, "b": 1.0}),
        "ellipse-rotated": make_domain("ellipse", {"a": 1.4, "b": 0.9, "angle": 0.5}),
        "superellipse": make_domain("superellipse", {"exponent": 4.0}),
    }


def shear_setup(shear=0.5):
    """Unimodular shear ``T`` and the ellipse ``T(unit disk)``."""
    T = np.array([[1.0, shear], [0.0, 1.0]])
    U, S, Vt = np.linalg.svd(T)
    angle = float(np.arctan2(U[1, 0], U[0, 0]))
    return T, make_domain("ellipse", {"a": float(S[0]), "b": float(S[1]), "angle": angle})


def _record(name, passed, measured, threshold):
    return {"criterion": name, "passed": bool(passed), "measured": measured, "threshold": threshold}


# ------------------------------------------------------------------ suites
def suite_quadratic_exactness(seed=0, count=100, spacing=1.0 / 32, solves=None):
    rng = np.random.default_rng(seed)
    dom = make_domain("disk")
    grid = Grid(dom, spacing)
    op_err = solve_err = 0.0
    solves = count if solves is None else solves
    for k in range(count):
        A = random_spd(rng)
        b, c = rng.normal(size=2), rng.normal()
        uf = quadratic(A, b, c)
        u = ScalarField.from_function(grid, uf)
        H = hessian(u)
        det = np.linalg.det(A)
        adj = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]])
        errs = [np.abs(H.xx - A[0, 0]).max(), np.abs(H.yy - A[1, 1]).max(), np.abs(H.xy - A[0, 1]).max(),
                np.abs(ma_determinant(u).values - det).max(),
                np.abs(ma_monotone(u, 1).values - monotone_oracle(A)).max(),
                np.abs(cofactor(H).matrices - adj).max()]
        op_err = max(op_err, float(max(errs)))
        if k < solves:
            sol, _ = solve_dirichlet_ma(MAProblem(dom, det, uf), SolverConfig(tol=1e-11), grid=grid)
            solve_err = max(solve_err, float(np.abs(sol.values - u.values).max()))
    return [_record("operators exact on quadratics", op_err <= 1e-10, op_err, 1e-10),
            _record("Dirichlet solve recovers quadratics", solve_err <= 1e-8, solve_err, 1e-8)]


def suite_comparison(seed=0, count=50, spacing=1.0 / 32):
    """Randomized pairs with ``f_v >= f_u`` and ``v <= u`` on the boundary, solved by the monotone scheme."""
    rng = np.random.default_rng(seed)
    dom = make_domain("disk")
    grid = Grid(dom, spacing)
    cfg = SolverConfig(method="monotone", tol=1e-11)
    worst, vacuous = -np.inf, 0
    for _ in range(count):
        a, k = rng.uniform(0.0, 0.3), rng.normal(size=2)
        A = random_spd(rng, 0.7, 1.5)
        phi_u = quadratic(A, rng.normal(size=2) * 0.3)

        def f_u(x, y, a=a, k=k):
            return 1.0 + a * np.cosh(k[0] * x + k[1] * y)

        amp, drop, m = rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.2), rng.normal(size=2)

        def f_v(x, y, amp=amp, m=m, f_u=f_u):
            return f_u(x, y) + amp * (1 + np.sin(m[0] * x + m[1] * y))

        def phi_v(x, y, drop=drop, phi_u=phi_u, m=m):
            return phi_u(x, y) - drop * (1 + np.cos(m[1] * x - m[0] * y)) / 2

        u, _ = solve_dirichlet_ma(MAProblem(dom, f_u, phi_u), cfg, grid=grid)
        v, _ = solve_dirichlet_ma(MAProblem(dom, f_v, phi_v), cfg, grid=grid)
        verdict = comparison_check(u, v, ma_monotone(u).values, ma_monotone(v).values, dom)
        vacuous += not verdict.hypothesis_holds
        worst = max(worst, verdict.worst_violation if verdict.hypothesis_holds else -np.inf)
    return [_record("comparison principle", worst <= 1e-9, float(worst), 1e-9),
            _record("hypotheses held", vacuous == 0, count - vacuous, count)]


def suite_concavity(seed=0, count=200, spacing=1.0 / 16):
    rng = np.random.default_rng(seed)
    grid = Grid(make_domain("disk"), spacing)
    worst = np.inf
    for _ in range(count):
        u1 = ScalarField.from_function(grid, quadratic(random_spd(rng, 0.1, 4.0), rng.normal(size=2)))
        u2 = ScalarField.from_function(grid, quadratic(random_spd(rng, 0.1, 4.0), rng.normal(size=2)))
        worst = min(worst, concavity_check(u1, u2, 11).worst_margin)
    return [_record("affine area concave along segments", worst >= -1e-9, float(worst), -1e-9)]


def reference_mvee_volume(points, tol=1e-9, max_iter=200_000):
    """Minimum enclosing ellipse area by log-det convex programming, or by multiplicative design updates."""
    P = np.asarray(points, float)
    try:
        import cvxpy as cp

        A = cp.Variable((2, 2), PSD=True)
        b = cp.Variable(2)
        cons = [cp.norm(A @ p + b) <= 1 for p in P]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cp.Problem(cp.Maximize(cp.log_det(A)), cons).solve(solver=cp.CLARABEL, tol_gap_rel=1e-11,
                                                             tol_feas=1e-11, tol_gap_abs=1e-11)
        return float(np.pi / np.linalg.det(A.value))
    except ImportError:
        pass
    Q = np.column_stack([P, np.ones(len(P))]).T
    u = np.full(len(P), 1.0 / len(P))
    for _ in range(max_iter):
        M = np.einsum("ij,ji->i", Q.T, np.linalg.solve((Q * u) @ Q.T, Q))
        if M.max() <= 3 * (1 + tol):
            break
        u *= M / 3
    c = P.T @ u
    S = (P.T * u) @ P - np.outer(c, c)
    return float(np.pi * np.sqrt(np.linalg.det(2 * S)))


def suite_john(seed=0, count=100):
    rng = np.random.default_rng(seed)
    contain = rel = 0.0
    shrink = np.inf
    for _ in range(count):
        n = int(rng.integers(5, 60))
        P = rng.normal(size=(n, 2)) @ rng.normal(size=(2, 2)) + rng.normal(size=2)
        E = john_ellipsoid(P)
        contain = max(contain, E.certificate["containment"])
        shrink = min(shrink, E.certificate["shrink_margin"])
        ref = reference_mvee_volume(P)
        rel = max(rel, abs(E.volume - ref) / ref)
    return [_record("points contained", contain <= 1e-8, contain, 1e-8),
            _record("1/n-shrink inside hull", shrink >= -1e-6, float(shrink), -1e-6),
            _record("volume matches reference", rel <= 1e-5, rel, 1e-5)]


def suite_homotopy(seed=0, spacing=1.0 / 32):
    t0_err = cont_err = 0.0
    par = quadratic(np.eye(2))
    for name, dom in catalogue_domains().items():
        cfg = ContinuationConfig(spacing=spacing)
        grid = Grid(dom, spacing)
        prob = AMCProblem(dom, 0.0, par, 1.0)
        # nonconstant psi at t = 0 is irrelevant: the boundary data blends to 1
        prob_t0 = AMCProblem(dom, 0.0, par, lambda x, y: 1.5 + 0.5 * np.sin(3 * x))
        _, w_next = fixed_point_step(prob_t0, np.ones(grid.n), 0.0, cfg, grid)
        t0_err = max(t0_err, float(np.abs(w_next.values - 1).max()))
        _, _, states = continuation_solve(prob, None, cfg, grid)
        exact = par(*grid.points.T)
        for st in states:
            cont_err = max(cont_err, float(np.abs(st.u.values - exact).max()), float(np.abs(st.w.values - 1).max()))
    return [_record("t = 0 fixed point is w = 1", t0_err <= 1e-10, t0_err, 1e-10),
            _record("paraboloid fixed at every step", cont_err <= 1e-6, cont_err, 1e-6)]


def suite_invariance(seed=0, spacing=1.0 / 32, shear=0.5):
    """Shear a problem on the unit disk onto an ellipse, solve both and compare with the pulled-back exact solution."""
    T, ell = shear_setup(shear)
    Ti = np.linalg.inv(T)
    disk = make_domain("disk")
    cfg = ContinuationConfig(spacing=spacing)
    out = []

    def pulled(fn):
        return lambda x, y: fn(Ti[0, 0] * x + Ti[0, 1] * y, Ti[1, 0] * x + Ti[1, 1] * y)

    par = quadratic(np.eye(2))
    u1, _, _ = continuation_solve(AMCProblem(ell, 0.0, pulled(par), 1.0), None, cfg)
    err = float(np.abs(u1.values - pulled(par)(*u1.grid.points.T)).max())
    out.append(_record("sheared paraboloid pulls back exactly", err <= 1e-10, err, 1e-10))

    us, ws, fs = amc_manufactured(0.05)
    u0, _, _ = continuation_solve(AMCProblem(disk, fs, us, ws), None, cfg)
    base = float(np.abs(u0.values - us(*u0.grid.points.T)).max())
    u1, _, _ = continuation_solve(AMCProblem(ell, pulled(fs), pulled(us), pulled(ws)), None, cfg)
    err = float(np.abs(u1.values - pulled(us)(*u1.grid.points.T)).max())
    out.append(_record("sheared manufactured problem within 3x discretization error", err <= 3 * base, err,
                       3 * base))
    return out


SUITES = {
    "quadratic-exactness": suite_quadratic_exactness,
    "comparison": suite_comparison,
    "concavity": suite_concavity,
    "john": suite_john,
    "homotopy": suite_homotopy,
    "invariance": suite_invariance,
}


def run_suite(name, seed=0):
    """Run one suite (or ``all``) and return ``{suite: [records]}``."""
    if name == "all":
        return {k: fn(seed=seed) for k, fn in SUITES.items()}
    if name not in SUITES:
        raise UnknownSuite(f"unknown suite {name!r}; choose from {sorted(SUITES) + ['all']}")
    return {name: SUITES[name](seed=seed)}
