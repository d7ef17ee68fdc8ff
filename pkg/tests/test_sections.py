import warnings

import numpy as np
import pytest
from scipy.interpolate import LinearNDInterpolator
from scipy.optimize import linprog

from conftest import mvee_reference
from mongelab.discretization import Grid, ScalarField
from mongelab.errors import DegeneratePointSet, EmptySection, SectionEscapes
from mongelab.geometry import boundary_frame, make_domain
from mongelab.ma_solver import MAProblem, SolverConfig, solve_dirichlet_ma
from mongelab.sections import (default_heights, extract_section, good_shape_bounds, john_ellipsoid, local_gradient,
                               shape_metrics, volume_scaling_fit)


def paraboloid(x, y):
    return 0.5 * (x * x + y * y)


def quiet(fn, *a, **k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SectionEscapes)
        return fn(*a, **k)


def chebyshev_radius(P):
    """Largest inscribed disk of a convex CCW polygon by linear programming."""
    E = np.roll(P, -1, axis=0) - P
    n = np.stack([E[:, 1], -E[:, 0]], axis=1)
    n /= np.linalg.norm(n, axis=1, keepdims=True)  # outward normals
    b = (n * P).sum(1)
    res = linprog([0, 0, -1], A_ub=np.column_stack([n, np.ones(len(P))]), b_ub=b,
                  bounds=[(None, None), (None, None), (0, None)])
    return -res.fun


@pytest.fixture(scope="module")
def par64(disk):
    return ScalarField.from_function(Grid(disk, 1 / 64), paraboloid)


@pytest.fixture(scope="module")
def ellipse_solution():
    dom = make_domain("ellipse", {"a": 1.5, "b": 1.0})
    u, _ = solve_dirichlet_ma(MAProblem(dom, lambda x, y: 1 + 0.1 * np.cosh(x), paraboloid),
                              SolverConfig(tol=1e-10, spacing=1 / 32))
    return dom, u


class TestExtract:
    def test_paraboloid_interior(self, grid32):
        u = ScalarField.from_function(grid32, paraboloid)
        s = extract_section(u, [0.0, 0.0], 0.08)
        assert s.area == pytest.approx(0.16 * np.pi, rel=1e-2)
        assert s.is_convex() and s.contains([0.0, 0.0]).all() and not s.touches_boundary

    def test_anisotropic(self):
        big = Grid(make_domain("disk", {"radius": 3.5}), 1 / 16)
        u = ScalarField.from_function(big, lambda x, y: x * x + y * y / 8)
        s = extract_section(u, [0.0, 0.0], 1.0)
        assert s.area == pytest.approx(np.sqrt(8) * np.pi, rel=1e-2)
        m = shape_metrics(s)
        assert m.ratio == pytest.approx(np.sqrt(8), rel=1e-2)

    def test_boundary_center_against_mask_count(self, ellipse_solution):
        dom, u = ellipse_solution
        y = dom.boundary(0.8)
        h = 0.05
        with pytest.warns(SectionEscapes):
            s = extract_section(u, y, h)
        pts, vals = u.all_points()
        interp = LinearNDInterpolator(pts, vals)
        step = 1 / 800
        xs = np.arange(-1.5, 1.5, step)
        ys = np.arange(-1.0, 1.0, step)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        P = np.column_stack([X.ravel(), Y.ravel()])
        P = P[dom.level(P) < 0]
        g = interp(P) - s.slope @ (P - y).T
        u0, _ = local_gradient(u, y)
        count = np.sum(g - u0 < h) * step * step
        assert s.area == pytest.approx(count, rel=2e-2)
        assert s.touches_boundary

    def test_empty(self, grid32):
        u = ScalarField.from_function(grid32, paraboloid)
        with pytest.raises(EmptySection):
            extract_section(u, [0.0, 0.0], 1e-6)

    def test_default_heights(self, grid32):
        hv = default_heights(grid32)
        assert hv[0] == pytest.approx(25 * grid32.spacing**2)
        assert np.log10(hv[-1] / hv[0]) == pytest.approx(1.5)
        assert len(hv) == 19


class TestJohn:
    def test_square(self):
        E = john_ellipsoid([[-1, -1], [1, -1], [1, 1], [-1, 1]])
        assert np.allclose(E.center, 0, atol=1e-8)
        assert np.allclose(E.semi_axes, np.sqrt(2), rtol=1e-6)

    def test_points_on_ellipse(self):
        s = np.linspace(0, 2 * np.pi, 50, endpoint=False)
        E = john_ellipsoid(np.column_stack([2 * np.cos(s), np.sin(s)]))
        assert E.volume == pytest.approx(2 * np.pi, rel=1e-4)

    def test_random_against_reference(self):
        rng = np.random.default_rng(7)
        P = rng.normal(size=(40, 2)) @ np.array([[1.0, 0.4], [0.0, 0.6]])
        E = john_ellipsoid(P)
        ref, center = mvee_reference(P)
        assert E.volume == pytest.approx(ref, rel=1e-5)
        assert np.allclose(E.center, center, atol=1e-4)
        assert E.certificate["containment"] <= 1e-8
        assert E.certificate["shrink_margin"] >= -1e-6

    def test_degenerate(self):
        with pytest.raises(DegeneratePointSet):
            john_ellipsoid([[0, 0], [1, 1], [2, 2], [3, 3]])


class TestShapeMetrics:
    def test_disk_section(self, grid32):
        u = ScalarField.from_function(grid32, paraboloid)
        m = shape_metrics(extract_section(u, [0.0, 0.0], 0.08))
        assert m.circumradius == pytest.approx(0.4, rel=1e-2)
        assert m.inradius == pytest.approx(0.4, rel=1e-2)
        assert m.ratio == pytest.approx(1.0, abs=2e-2)

    def test_inradius_against_lp(self, ellipse_solution):
        dom, u = ellipse_solution
        s = quiet(extract_section, u, dom.boundary(2.0), 0.1)
        m = shape_metrics(s)
        assert m.inradius == pytest.approx(chebyshev_radius(s.polygon), rel=1e-5)
        assert m.circumradius >= m.inradius > 0

    def test_frame_extents_paraboloid(self, par64, disk):
        h = 0.01
        s = quiet(extract_section, par64, [1.0, 0.0], h)
        m = shape_metrics(s, boundary_frame(disk, [1.0, 0.0]))
        # circular segment: |x - e1|^2 < 2h inside the unit disk
        assert m.a_h == pytest.approx(np.sqrt(2 * h - h * h), rel=1e-2)
        assert m.b_h == pytest.approx(np.sqrt(2 * h), rel=1e-2)


def sheared_extent(lam, h, count=400_000):
    """Tangential reach at (0, -1) of the exact section of (x + lam y)^2/2 + y^2/2 on the unit disk."""
    y0 = np.array([0.0, -1.0])
    du = np.array([-lam, -1 - lam * lam])
    u = lambda P: 0.5 * (P[:, 0] + lam * P[:, 1]) ** 2 + 0.5 * P[:, 1] ** 2
    th = np.linspace(0, 2 * np.pi, count, endpoint=False)
    # boundary of the tilted quadratic's ellipse around y0, plus the unit circle
    A = np.array([[1, lam], [lam, 1 + lam * lam]])
    L = np.linalg.cholesky(np.linalg.inv(A))
    ell = y0 + np.sqrt(2 * h) * (np.column_stack([np.cos(th), np.sin(th)]) @ L.T)
    circ = np.column_stack([np.cos(th), np.sin(th)])
    tilt = lambda P: u(P) - u(y0[None])[0] - (P - y0) @ du
    pts = np.concatenate([ell[(ell ** 2).sum(1) <= 1], circ[tilt(circ) <= h]])
    return np.abs(pts[:, 0]).max()


class TestScaling:
    def test_interior_slope(self, grid32):
        u = ScalarField.from_function(grid32, lambda x, y: 0.7 * x * x + 0.2 * x * y + 1.3 * y * y)
        rep = volume_scaling_fit(u, [0.1, -0.05], np.geomspace(0.005, 0.15, 15))
        assert rep["slope"] == pytest.approx(1.0, abs=0.02)

    def test_boundary_slope(self, par64):
        rep = volume_scaling_fit(par64, [0.0, 1.0])
        assert rep["decades"] >= 1.5 - 1e-12
        assert rep["slope"] == pytest.approx(1.0, abs=0.15)
        assert rep["C1"] <= rep["C2"]

    def test_solver_boundary_slope(self, disk):
        u, _ = solve_dirichlet_ma(MAProblem(disk, lambda x, y: 1 + 0.1 * np.cosh(x), paraboloid),
                                  SolverConfig(tol=1e-10, spacing=1 / 64))
        rep = volume_scaling_fit(u, [np.cos(0.4), np.sin(0.4)])
        assert 0.85 <= rep["slope"] <= 1.15


class TestGoodShape:
    def test_paraboloid(self, par64, disk):
        hv = np.geomspace(0.005, 0.1, 6)
        rep = good_shape_bounds(par64, [1.0, 0.0], hv, 1.0)
        assert rep.passed
        a = np.array(rep["a_ratio"])
        b = np.array(rep["b_ratio"])
        assert np.allclose(a, np.sqrt(2 - hv), rtol=2e-2)
        assert np.allclose(b, np.sqrt(2), rtol=2e-2)

    def test_sheared_growth(self, disk):
        g = Grid(disk, 1 / 64)
        h = 0.01
        reach = {}
        for lam in (1.0, 2.0):
            u = ScalarField.from_function(g, lambda x, y, lam=lam: 0.5 * (x + lam * y) ** 2 + 0.5 * y * y)
            rep = good_shape_bounds(u, [0.0, -1.0], [h], lam)
            reach[lam] = rep["rows"][0]["a_h"]
            assert reach[lam] == pytest.approx(sheared_extent(lam, h), rel=3e-2)
            assert rep.passed
        assert reach[2.0] / reach[1.0] == pytest.approx(np.sqrt(5 / 2), rel=5e-2)

    def test_small_K_breaches_window(self, disk):
        g = Grid(disk, 1 / 64)
        u = ScalarField.from_function(g, lambda x, y: 0.5 * (x + 4 * y) ** 2 + 0.5 * y * y)
        rep = good_shape_bounds(u, [0.0, -1.0], [0.01, 0.02], 1.0)
        assert not rep.checks["a_window"] and not rep.passed
