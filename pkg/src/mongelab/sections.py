"""Sections of convex functions, minimum enclosing ellipsoids and shape metrics.

A section of ``u`` centred at ``y`` with height ``h`` is the set

    { x in the closed domain : u(x) < u(y) + Du(y).(x - y) + h }.

It is extracted from the piecewise-linear interpolant of the tilted
function on the grid triangulation and then replaced by its convex hull;
the area defect of that repair is recorded on the section.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree
from shapely.geometry import Polygon
from shapely.ops import polylabel

from .discretization import ScalarField
from .errors import DegeneratePointSet, EmptySection, InsufficientStencil, SectionEscapes
from .geometry import BoundaryFrame, boundary_frame
from .reports import EstimateReport

__all__ = [
    "Section",
    "Ellipsoid",
    "ShapeMetrics",
    "local_gradient",
    "extract_section",
    "john_ellipsoid",
    "shape_metrics",
    "volume_scaling_fit",
    "good_shape_bounds",
    "default_heights",
]

log = logging.getLogger(__name__)

DIM = 2


# ----------------------------------------------------------------- sections
@dataclass(eq=False)
class Section:
    center: np.ndarray
    height: float
    slope: np.ndarray
    polygon: np.ndarray  # counter-clockwise hull vertices
    area: float
    repair: float = 0.0  # relative area added by the convex-hull repair
    touches_boundary: bool = False

    def is_convex(self, tol=1e-12):
        P = self.polygon
        e = np.roll(P, -1, axis=0) - P
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        return bool(np.all(cross >= -tol))

    def contains(self, pts, tol=1e-12):
        """Half-plane test against every hull edge."""
        pts = np.atleast_2d(np.asarray(pts, float))
        P = self.polygon
        e = np.roll(P, -1, axis=0) - P
        rel = pts[:, None, :] - P[None, :, :]
        cross = e[None, :, 0] * rel[..., 1] - e[None, :, 1] * rel[..., 0]
        scale = max(1.0, float(np.max(np.abs(P))))
        return np.all(cross >= -tol * scale, axis=1)

    def to_row(self):
        return {"cx": float(self.center[0]), "cy": float(self.center[1]), "h": self.height, "area": self.area,
                "vertices": len(self.polygon), "repair": self.repair, "touches_boundary": self.touches_boundary}


def _all_values(u: ScalarField):
    if u.trace is None:
        raise InsufficientStencil("section extraction needs the boundary trace of u")
    return u.all_points()


def local_gradient(u: ScalarField, y, radius=None):
    """Value and gradient at ``y`` from a least-squares quadratic fit to nearby nodes and cut points.

    The fit is exact on quadratics and one-sided near the boundary.
    Returns ``(value, gradient)``.
    """
    pts, vals = _all_values(u)
    y = np.asarray(y, float)
    h = u.grid.spacing
    radius = 4.0 * h if radius is None else radius
    tree = cKDTree(pts)
    for _ in range(6):
        idx = tree.query_ball_point(y, radius)
        if len(idx) >= 12:
            break
        radius *= 1.5
    idx = np.asarray(idx)
    if idx.size < 6:
        raise InsufficientStencil("too few points for a quadratic fit")
    q = (pts[idx] - y) / h
    V = np.column_stack([np.ones(len(q)), q[:, 0], q[:, 1], q[:, 0] ** 2, q[:, 0] * q[:, 1], q[:, 1] ** 2])
    coef, *_ = np.linalg.lstsq(V, vals[idx], rcond=None)
    return float(coef[0]), coef[1:3] / h


def extract_section(u: ScalarField, y, h, domain=None, slope=None, warn=True) -> Section:
    """Section of ``u`` at ``y`` with height ``h``; ``slope`` overrides the fitted gradient.

    Raises :class:`EmptySection` when no grid triangle lies inside the
    section.  Issues :class:`SectionEscapes` when the section reaches the
    boundary.
    """
    if not h > 0:
        raise EmptySection("height must be positive")
    grid = u.grid
    y = np.asarray(y, float)
    u0, du = local_gradient(u, y)
    if slope is not None:
        du = np.asarray(slope, float)
    tri, sel = grid.triangulation
    pts = tri.points
    vals = np.concatenate([u.values, u.trace[sel]])
    g = vals - u0 - (pts - y) @ du - h  # section is {g < 0}
    below = g < 0
    S = tri.simplices
    gb = below[S]
    nb = gb.sum(1)
    if not np.any(nb == 3):
        raise EmptySection(f"h = {h:.3e} below grid resolution at this center")

    # crossing points on edges with one end inside
    E = np.concatenate([S[:, [0, 1]], S[:, [1, 2]], S[:, [2, 0]]])
    E = np.unique(np.sort(E, axis=1), axis=0)
    cross = below[E[:, 0]] != below[E[:, 1]]
    a, b = E[cross, 0], E[cross, 1]
    lam = g[a] / (g[a] - g[b])
    xp = pts[a] + lam[:, None] * (pts[b] - pts[a])
    cand = np.concatenate([pts[below], xp, y[None, :]])
    try:
        hull = ConvexHull(cand)
    except QhullError as exc:
        raise EmptySection(f"degenerate section at h = {h:.3e}") from exc
    poly = cand[hull.vertices]
    hull_area = float(hull.volume)

    # area of the piecewise-linear sublevel set, for the repair defect
    P0, P1, P2 = pts[S[:, 0]], pts[S[:, 1]], pts[S[:, 2]]
    tri_area = 0.5 * np.abs((P1[:, 0] - P0[:, 0]) * (P2[:, 1] - P0[:, 1]) - (P1[:, 1] - P0[:, 1]) * (P2[:, 0] - P0[:, 0]))
    G = g[S]
    pl = np.where(nb == 3, tri_area, 0.0)
    for count, inside in ((1, True), (2, False)):
        rows = np.flatnonzero(nb == count)
        if rows.size == 0:
            continue
        gg, ins = G[rows], gb[rows]
        k = np.argmax(ins == inside, axis=1)  # the lone vertex
        gk = gg[np.arange(rows.size), k]
        others = np.stack([gg[np.arange(rows.size), (k + 1) % 3], gg[np.arange(rows.size), (k + 2) % 3]], axis=1)
        frac = (gk[:, None] / (gk[:, None] - others)).prod(axis=1)
        pl[rows] = tri_area[rows] * (frac if inside else 1.0 - frac)
    pl_area = float(pl.sum())
    repair = max(0.0, (hull_area - pl_area) / hull_area)
    if repair > 1e-2:
        log.info("convex repair added %.2e of the section area at h = %.3e", repair, h)

    touches = bool(np.any(below[grid.n:])) or (grid.domain.level(y) > -1e-12)
    if touches and warn:
        warnings.warn(f"section at h = {h:.3e} reaches the boundary", SectionEscapes, stacklevel=2)
    return Section(y, float(h), du, poly, hull_area, repair, touches)


def default_heights(grid, decades=1.5, per_decade=12):
    """Log-spaced heights starting at ``25 h^2`` (``h`` the grid spacing)."""
    lo = 25.0 * grid.spacing**2
    count = int(round(decades * per_decade)) + 1
    return lo * 10.0 ** (np.arange(count) / per_decade)


# --------------------------------------------------------------- ellipsoids
@dataclass(eq=False)
class Ellipsoid:
    """``{x : (x - c)^T A (x - c) <= 1}`` with ``A`` symmetric positive definite."""

    center: np.ndarray
    matrix: np.ndarray
    certificate: dict = field(default_factory=dict)

    def __post_init__(self):
        self.center = np.asarray(self.center, float)
        self.matrix = np.asarray(self.matrix, float)
        if np.linalg.eigvalsh(self.matrix).min() <= 0:
            raise DegeneratePointSet("ellipsoid matrix is not positive definite")

    @property
    def semi_axes(self):
        return 1.0 / np.sqrt(np.linalg.eigvalsh(self.matrix))[::-1]

    @property
    def volume(self):
        return float(np.pi / np.sqrt(np.linalg.det(self.matrix)))

    def level(self, pts):
        q = np.atleast_2d(np.asarray(pts, float)) - self.center
        return np.einsum("ij,jk,ik->i", q, self.matrix, q)

    def support(self, directions):
        """Support function ``max_{x in E} d.x`` for each row ``d``."""
        d = np.atleast_2d(np.asarray(directions, float))
        inv = np.linalg.inv(self.matrix)
        return d @ self.center + np.sqrt(np.einsum("ij,jk,ik->i", d, inv, d))

    def scaled(self, factor):
        """Homothetic copy about the center."""
        return Ellipsoid(self.center, self.matrix / factor**2)

    def transformed(self, T, shift=(0.0, 0.0)):
        """Image under ``x -> T x + shift``."""
        T = np.asarray(T, float)
        Ti = np.linalg.inv(T)
        return Ellipsoid(T @ self.center + np.asarray(shift, float), Ti.T @ self.matrix @ Ti)

    def boundary_points(self, count=256):
        s = np.linspace(0, 2 * np.pi, count, endpoint=False)
        vals, vecs = np.linalg.eigh(self.matrix)
        circle = np.column_stack([np.cos(s), np.sin(s)]) / np.sqrt(vals)
        return self.center + circle @ vecs.T

    def to_dict(self):
        return {"center": self.center.tolist(), "matrix": self.matrix.tolist(),
                "semi_axes": self.semi_axes.tolist(), "volume": self.volume, "certificate": dict(self.certificate)}


def _khachiyan(P, tol, max_iter):
    """Minimum-volume enclosing ellipsoid weights by Khachiyan's method with away steps."""
    N, d = P.shape
    Q = np.column_stack([P, np.ones(N)]).T
    u = np.full(N, 1.0 / N)
    for it in range(max_iter):
        X = (Q * u) @ Q.T
        M = np.einsum("ij,ji->i", Q.T, np.linalg.solve(X, Q))
        j = int(np.argmax(M))
        active = u > 0
        k = int(np.flatnonzero(active)[np.argmin(M[active])])
        eps_plus = M[j] / (d + 1) - 1
        eps_minus = 1 - M[k] / (d + 1)
        if max(eps_plus, eps_minus) <= tol:
            return u, it, float(eps_plus)
        if eps_plus >= eps_minus:
            step = (M[j] - d - 1) / ((d + 1) * (M[j] - 1))
            u *= 1 - step
            u[j] += step
        else:
            # away step, clipped so the weight stays nonnegative
            step = min((d + 1 - M[k]) / ((d + 1) * (M[k] - 1)), u[k] / (1 - u[k]))
            u *= 1 + step
            u[k] -= step
            u = np.clip(u, 0.0, None)
    return u, max_iter, float(eps_plus)


def john_ellipsoid(points, tol=1e-10, max_iter=100_000) -> Ellipsoid:
    """Minimum-volume ellipsoid containing ``points``, with its two certificates.

    ``certificate["containment"]`` is ``max level - 1`` over the input
    points (the ellipsoid is rescaled so that this is at most ``1e-12``);
    ``certificate["shrink_margin"]`` is the smallest gap between the hull
    facets and the support function of the ``1/n``-shrunk ellipsoid
    (nonnegative when the shrunk ellipsoid lies inside the hull).
    """
    P = np.asarray(points, float)
    if P.ndim != 2 or P.shape[1] != DIM or len(P) < DIM + 1:
        raise DegeneratePointSet(f"need at least {DIM + 1} points in the plane")
    try:
        hull = ConvexHull(P)
    except QhullError as exc:
        raise DegeneratePointSet("points are affinely dependent") from exc
    scale = float(np.max(np.ptp(P, axis=0)))
    if hull.volume <= 1e-14 * scale**2:
        raise DegeneratePointSet("points are affinely dependent")
    V = P[hull.vertices]
    shift = V.mean(axis=0)
    Vs = (V - shift) / scale
    u, iters, gap = _khachiyan(Vs, tol, max_iter)
    c = Vs.T @ u
    S = (Vs.T * u) @ Vs - np.outer(c, c)
    A = np.linalg.inv(S) / DIM
    E = Ellipsoid(c * scale + shift, A / scale**2)
    worst = float(E.level(P).max())
    if worst > 1.0:
        E = Ellipsoid(E.center, E.matrix / worst)
    normals, offsets = hull.equations[:, :2], -hull.equations[:, 2]
    shrunk = E.scaled(1.0 / DIM)
    margin = float(np.min(offsets - shrunk.support(normals)))
    E.certificate = {"containment": float(E.level(P).max() - 1.0), "shrink_margin": margin,
                     "iterations": iters, "duality_gap": gap}
    return E


# ------------------------------------------------------------ shape metrics
@dataclass
class ShapeMetrics:
    circumradius: float
    inradius: float
    ratio: float
    a_h: float | None
    b_h: float | None
    incenter: tuple

    def to_dict(self):
        return asdict(self)


def shape_metrics(section, frame: BoundaryFrame | None = None, tol=None) -> ShapeMetrics:
    """Inscribed and circumscribed radii about the Chebyshev center, plus frame extents.

    ``r`` is the depth of the pole of inaccessibility, ``R`` the distance
    from that point to the farthest vertex.  With a boundary frame,
    ``a_h`` is the largest tangential coordinate in absolute value and
    ``b_h`` the largest inward normal coordinate.
    """
    P = section.polygon if isinstance(section, Section) else np.asarray(section, float)
    poly = Polygon(P)
    if poly.area <= 0:
        raise EmptySection("section polygon has no area")
    diam = float(np.max(np.linalg.norm(P[:, None] - P[None], axis=-1)))
    tol = 1e-7 * diam if tol is None else tol
    c = polylabel(poly, tolerance=tol)
    r = float(poly.exterior.distance(c))
    cxy = np.array([c.x, c.y])
    R = float(np.max(np.linalg.norm(P - cxy, axis=1)))
    a_h = b_h = None
    if frame is not None:
        loc = frame.to_local(P)
        a_h, b_h = float(np.max(np.abs(loc[:, 0]))), float(np.max(loc[:, 1]))
    return ShapeMetrics(R, r, R / r, a_h, b_h, (float(c.x), float(c.y)))


# ------------------------------------------------------------ scaling laws
def _section_sweep(u, y, h_values):
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SectionEscapes)
        for h in h_values:
            out.append(extract_section(u, y, float(h)))
    return out


def volume_scaling_fit(u: ScalarField, y, h_values=None, domain=None) -> EstimateReport:
    """Least-squares slope of ``log |S_h|`` against ``log h`` (``n/2 = 1`` expected).

    ``C1`` and ``C2`` are the extreme values of ``|S_h| / h^(n/2)`` over the sweep.
    """
    h_values = default_heights(u.grid) if h_values is None else np.asarray(h_values, float)
    sections = _section_sweep(u, y, h_values)
    areas = np.array([s.area for s in sections])
    X = np.column_stack([np.log(h_values), np.ones(len(h_values))])
    coef, res, *_ = np.linalg.lstsq(X, np.log(areas), rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - np.log(areas)) ** 2)))
    norm = areas / h_values ** (DIM / 2)
    decades = float(np.log10(h_values.max() / h_values.min()))
    values = {"slope": float(coef[0]), "intercept": float(coef[1]), "residual": resid, "C1": float(norm.min()),
              "C2": float(norm.max()), "decades": decades, "heights": h_values.tolist(), "areas": areas.tolist(),
              "max_repair": float(max(s.repair for s in sections))}
    checks = {"finite": bool(np.isfinite(coef[0]))}
    return EstimateReport("volume_scaling", values, checks)


def good_shape_bounds(u: ScalarField, y, h_values, K_mixed, domain=None, windows=(3.0, 0.3)) -> EstimateReport:
    """Normalized extents ``a_h / (K sqrt h)`` and ``b_h K / sqrt h`` over a height sweep.

    Passes when every ``a`` ratio is at most ``windows[0]`` and every ``b``
    ratio at least ``windows[1]``; the default window was calibrated on
    paraboloids and sheared quadratics.
    """
    domain = domain or u.grid.domain
    if not K_mixed > 0:
        raise ValueError("K_mixed must be positive")
    frame = boundary_frame(domain, y)
    h_values = np.atleast_1d(np.asarray(h_values, float))
    a_ratio, b_ratio, rows = [], [], []
    for s in _section_sweep(u, y, h_values):
        m = shape_metrics(s, frame)
        a_ratio.append(m.a_h / (K_mixed * np.sqrt(s.height)))
        b_ratio.append(m.b_h * K_mixed / np.sqrt(s.height))
        rows.append({"h": s.height, "a_h": m.a_h, "b_h": m.b_h, "R": m.circumradius, "r": m.inradius})
    values = {"K": float(K_mixed), "a_ratio": a_ratio, "b_ratio": b_ratio, "rows": rows,
              "a_ratio_max": float(max(a_ratio)), "b_ratio_min": float(min(b_ratio)), "windows": list(windows)}
    checks = {"a_window": max(a_ratio) <= windows[0], "b_window": min(b_ratio) >= windows[1]}
    return EstimateReport("good_shape", values, checks)
