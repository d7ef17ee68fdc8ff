"""Shared fixtures and independent oracles."""
import numpy as np
import pytest
import sympy as sp

from mongelab.amc_solver import AMCProblem, ContinuationConfig, continuation_solve
from mongelab.discretization import Grid
from mongelab.geometry import make_domain

X, Y = sp.symbols("x y", real=True)


def symbolic_amc(u_expr, theta=sp.Rational(1, 4)):
    """``(u, w, f)`` lambdas for a convex ``u(x, y)`` computed with sympy.

    ``w = det(D^2u)^(theta - 1)`` and ``f = U^{ij} w_ij`` with ``U`` the cofactor matrix.
    """
    H = sp.hessian(u_expr, (X, Y))
    w_expr = sp.simplify(H.det()) ** (theta - 1)
    U = H.adjugate()
    W = sp.hessian(w_expr, (X, Y))
    f_expr = sum(U[i, j] * W[i, j] for i in range(2) for j in range(2))
    mods = ["numpy"]
    lam = [sp.lambdify((X, Y), e, mods) for e in (u_expr, w_expr, f_expr)]
    return tuple(lambda x, y, g=g: g(x, y) + 0.0 * np.asarray(x, float) for g in lam)


@pytest.fixture(scope="session")
def disk():
    return make_domain("disk")


@pytest.fixture(scope="session")
def ellipse():
    return make_domain("ellipse", {"a": 2.0, "b": 1.0})


@pytest.fixture(scope="session")
def grid32(disk):
    return Grid(disk, 1.0 / 32)


@pytest.fixture(scope="session")
def grid16(disk):
    return Grid(disk, 1.0 / 16)


@pytest.fixture(scope="session")
def manufactured_amc():
    u = (X**2 + Y**2) / 2 + sp.Rational(1, 20) * sp.cosh(X)
    return symbolic_amc(u)


@pytest.fixture(scope="session")
def manufactured_amc_solution(disk, manufactured_amc):
    """Continuation solve of the manufactured problem on the unit disk at h = 1/32."""
    us, ws, fs = manufactured_amc
    cfg = ContinuationConfig(spacing=1.0 / 32)
    prob = AMCProblem(disk, fs, us, ws)
    u, w, states = continuation_solve(prob, None, cfg)
    return prob, cfg, u, w, states


@pytest.fixture(scope="session")
def paraboloid_amc_solution(disk):
    par = lambda x, y: 0.5 * (x * x + y * y)
    prob = AMCProblem(disk, 0.0, par, 1.0)
    cfg = ContinuationConfig(spacing=1.0 / 16)
    u, w, states = continuation_solve(prob, None, cfg)
    return prob, cfg, u, w, states


def mvee_reference(points):
    """Minimum-volume enclosing ellipse by log-det maximization (cvxpy); returns ``(area, center)``.

    The ellipse is ``{x : |A x + b| <= 1}``, area ``pi / det A``, center ``-A^{-1} b``.
    """
    import warnings

    import cvxpy as cp

    P = np.asarray(points, float)
    A = cp.Variable((2, 2), PSD=True)
    b = cp.Variable(2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cp.Problem(cp.Maximize(cp.log_det(A)), [cp.norm(A @ p + b) <= 1 for p in P]).solve(
            solver=cp.CLARABEL, tol_gap_rel=1e-11, tol_feas=1e-11, tol_gap_abs=1e-11)
    Av = A.value
    return float(np.pi / np.linalg.det(Av)), -np.linalg.solve(Av, b.value)


ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; a criterion whose test errors before recording is reported as FAIL."""
    lines = request.config.stash[ACCEPTANCE]
    name = request.node.name
    holder = {}

    def record(number, title, passed, measured, threshold):
        holder["number"] = number
        status = "PASS" if passed else "FAIL"
        lines[number] = f"{status} criterion {number:>2} {title}: measured {measured}, threshold {threshold}"
        return passed

    yield record
    if "number" not in holder:
        lines[name] = f"FAIL {name}: no measurement recorded (test raised)"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=lambda k: (isinstance(k, str), k)):
            terminalreporter.write_line(lines[key])
