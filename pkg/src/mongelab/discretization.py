"""Structured grids clipped to a convex domain and the finite-difference operators on them.

A :class:`Grid` holds the lattice nodes strictly inside the domain (the
unknowns) together with, for every stencil direction ``e`` and sign, either
the neighbouring unknown or the exact point where the ray ``x + s*h*e``
leaves the domain (a *cut point*).  Boundary data live on the cut points,
so every second difference uses the Shortley-Weller three-point formula on
the actual boundary.  That formula interpolates a quadratic exactly, which
is why all operators here are exact on quadratic polynomials.

Only the planar case is implemented.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.spatial import Delaunay, cKDTree

from .errors import InsufficientStencil, OutsideDomain
from .geometry import ConvexDomain

__all__ = [
    "Grid",
    "ScalarField",
    "HessianField",
    "CofactorField",
    "stencil_directions",
    "hessian",
    "ma_determinant",
    "ma_monotone",
    "cofactor",
    "cofactor_divergence",
    "directional_second",
    "gradient",
]

_DIRECTIONS = {
    1: [(1, 0), (0, 1), (1, 1), (1, -1)],
    2: [(1, 2), (2, -1), (2, 1), (1, -2)],
    3: [(1, 3), (3, -1), (3, 1), (1, -3), (2, 3), (3, -2), (3, 2), (2, -3)],
}


def stencil_directions(width):
    """Unsigned lattice directions up to ``width``: 4, 8 and 16 of them.

    The list is ordered so that entries ``2k`` and ``2k + 1`` are
    orthogonal partners.
    """
    if width not in (1, 2, 3):
        raise ValueError("stencil width must be 1, 2 or 3")
    out = []
    for w in range(1, width + 1):
        out.extend(_DIRECTIONS[w])
    return np.array(out, dtype=int)


class Grid:
    """Lattice of spacing ``spacing`` clipped to ``domain``.

    Nodes closer to the boundary than ``min_arm * spacing`` are not
    unknowns; rays through them are continued to the boundary instead, so
    no Shortley-Weller arm is shorter than ``min_arm`` lattice steps.
    """

    def __init__(self, domain: ConvexDomain, spacing: float, width: int = 1, min_arm: float = 0.25):
        if spacing <= 0:
            raise ValueError("grid spacing must be positive")
        self.domain = domain
        self.spacing = h = float(spacing)
        self.width = width
        self.directions = stencil_directions(width)
        c = np.asarray(domain.center, dtype=float)
        lo, hi = domain.bounding_box
        i0 = np.floor((lo - c) / h).astype(int) - 1
        i1 = np.ceil((hi - c) / h).astype(int) + 1
        self.origin = c + h * i0
        self.shape = tuple(int(v) for v in (i1 - i0 + 1))
        I, J = np.meshgrid(np.arange(self.shape[0]), np.arange(self.shape[1]), indexing="ij")
        lattice = self.origin + h * np.stack([I, J], axis=-1)
        inside = domain.level(lattice) < 0
        cand = np.argwhere(inside)
        pts = lattice[inside]
        _, _, dist = domain.project(pts)
        keep = dist > min_arm * h
        self.ij = cand[keep]
        self.points = pts[keep]
        self.distance = dist[keep]
        if len(self.points) == 0:
            raise InsufficientStencil("grid has no interior nodes; refine the spacing")
        self.index = -np.ones(self.shape, dtype=int)
        self.index[self.ij[:, 0], self.ij[:, 1]] = np.arange(len(self.ij))
        self._build_stencils()

    # ------------------------------------------------------------------ stencils
    def _build_stencils(self):
        h, N = self.spacing, self.n
        nbr = np.empty((len(self.directions), 2, N), dtype=int)
        arm = np.ones((len(self.directions), 2, N))
        cut = -np.ones((len(self.directions), 2, N), dtype=int)
        bpts, bdir = [], []
        m = 0
        for k, e in enumerate(self.directions):
            for sgn in (0, 1):
                step = e if sgn == 0 else -e
                tgt = self.ij + step
                ok = ((tgt >= 0) & (tgt < np.array(self.shape))).all(axis=1)
                idx = -np.ones(N, dtype=int)
                idx[ok] = self.index[tgt[ok, 0], tgt[ok, 1]]
                nbr[k, sgn] = idx
                miss = np.flatnonzero(idx < 0)
                if len(miss):
                    s = self._ray_exit(self.points[miss], h * step.astype(float))
                    arm[k, sgn, miss] = s
                    cut[k, sgn, miss] = m + np.arange(len(miss))
                    bpts.append(self.points[miss] + s[:, None] * h * step)
                    bdir.append(np.full(len(miss), k))
                    m += len(miss)
        self.nbr, self.arm, self.cut = nbr, arm, cut
        self.bpoints = np.concatenate(bpts) if bpts else np.zeros((0, 2))
        self.bdirection = np.concatenate(bdir) if bdir else np.zeros(0, dtype=int)

    def _ray_exit(self, p, v):
        """Parameter ``s > 0`` with ``p + s v`` on the boundary (convexity: unique)."""
        F = self.domain.level
        hi = np.ones(len(p))
        for _ in range(60):
            inside = F(p + hi[:, None] * v) < 0
            if not inside.any():
                break
            hi[inside] *= 1.5
        lo = np.zeros(len(p))
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            inside = F(p + mid[:, None] * v) < 0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return 0.5 * (lo + hi)

    @property
    def n(self):
        return len(self.points)

    @property
    def m(self):
        return len(self.bpoints)

    def direction_index(self, e):
        e = np.asarray(e)
        for k, d in enumerate(self.directions):
            if np.array_equal(d, e) or np.array_equal(d, -e):
                return k
        raise InsufficientStencil(f"direction {tuple(e)} not in the width-{self.width} stencil")

    @cached_property
    def second_difference(self):
        """Per direction, sparse ``(A, B)`` with ``D_e u = A u + B trace``, approximating ``e^T D^2u e``."""
        ops = []
        h2 = self.spacing**2
        rows = np.arange(self.n)
        for k in range(len(self.directions)):
            sp_, sm = self.arm[k, 0], self.arm[k, 1]
            cp = 2.0 / (sp_ * (sp_ + sm) * h2)
            cm = 2.0 / (sm * (sp_ + sm) * h2)
            A, B = self._assemble(k, -(cp + cm), cp, cm, rows)
            ops.append((A, B))
        return ops

    @cached_property
    def first_difference(self):
        """Per direction, sparse ``(A, B)`` approximating ``e . grad u`` (three-point, exact on quadratics)."""
        ops = []
        rows = np.arange(self.n)
        for k in range(len(self.directions)):
            sp_, sm = self.arm[k, 0], self.arm[k, 1]
            den = sp_ * sm * (sp_ + sm) * self.spacing
            cp = sm * sm / den
            cm = -sp_ * sp_ / den
            A, B = self._assemble(k, -(cp + cm), cp, cm, rows)
            ops.append((A, B))
        return ops

    def _assemble(self, k, c0, cp, cm, rows):
        N, M = self.n, self.m
        r, c, v = [rows], [rows], [c0]
        br, bc, bv = [], [], []
        for sgn, coef in ((0, cp), (1, cm)):
            nb = self.nbr[k, sgn]
            inner = nb >= 0
            r.append(rows[inner]); c.append(nb[inner]); v.append(coef[inner])
            br.append(rows[~inner]); bc.append(self.cut[k, sgn, ~inner]); bv.append(coef[~inner])
        A = sp.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=(N, N))
        B = sp.csr_matrix((np.concatenate(bv), (np.concatenate(br), np.concatenate(bc))), shape=(N, M))
        return A, B

    # ----------------------------------------------------------------- geometry
    @cached_property
    def regular(self):
        """Nodes whose full width-``w`` neighbourhood (two rings) consists of unknowns."""
        ok = np.ones(self.n, dtype=bool)
        for k in range(len(self.directions)):
            ok &= (self.nbr[k] >= 0).all(axis=0)
        ring1 = ok.copy()
        for k in range(len(self.directions)):
            for sgn in (0, 1):
                nb = self.nbr[k, sgn]
                ok &= np.where(nb >= 0, ring1[np.maximum(nb, 0)], False)
        return ok

    @cached_property
    def weights(self):
        """Quadrature weights: area of each lattice cell inside the domain, lumped onto unknowns.

        Cells cut by the boundary are intersected exactly with the
        4096-gon inscribed in the boundary; cells whose node is not an
        unknown hand their area to the nearest unknown.
        """
        import shapely

        h = self.spacing
        I, J = np.meshgrid(np.arange(self.shape[0]), np.arange(self.shape[1]), indexing="ij")
        ctr = self.origin + h * np.stack([I, J], axis=-1)
        corners = [ctr + h * np.array([dx, dy]) for dx in (-0.5, 0.5) for dy in (-0.5, 0.5)]
        ins = np.stack([self.domain.level(cc) < 0 for cc in corners])
        full = ins.all(axis=0)
        mixed = ins.any(axis=0) & ~full
        grow = mixed.copy()
        grow[1:, :] |= mixed[:-1, :]; grow[:-1, :] |= mixed[1:, :]
        grow[:, 1:] |= mixed[:, :-1]; grow[:, :-1] |= mixed[:, 1:]
        cand = grow & ~full
        area = np.where(full, h * h, 0.0)
        ci = np.argwhere(cand)
        if len(ci):
            cc = ctr[ci[:, 0], ci[:, 1]]
            boxes = shapely.box(cc[:, 0] - h / 2, cc[:, 1] - h / 2, cc[:, 0] + h / 2, cc[:, 1] + h / 2)
            poly = shapely.Polygon(self.domain.samples[1])
            area[ci[:, 0], ci[:, 1]] = shapely.area(shapely.intersection(boxes, poly))
        w = np.zeros(self.n)
        own = self.index >= 0
        w += area[self.ij[:, 0], self.ij[:, 1]]
        orphan = (area > 0) & ~own
        if orphan.any():
            _, near = cKDTree(self.points).query(ctr[orphan])
            np.add.at(w, near, area[orphan])
        return w

    @cached_property
    def triangulation(self):
        """Delaunay triangulation of unknowns plus axis/diagonal cut points."""
        sel = self.bdirection < 4
        pts = np.concatenate([self.points, self.bpoints[sel]])
        return Delaunay(pts), np.flatnonzero(sel)

    def node_near(self, point):
        d, i = cKDTree(self.points).query(np.asarray(point, dtype=float))
        return int(i)

    def __repr__(self):
        return f"Grid({self.domain.kind}, h={self.spacing:g}, n={self.n}, cuts={self.m}, width={self.width})"


@dataclass(eq=False)
class ScalarField:
    """Nodal values on the unknowns plus a boundary trace on the cut points.

    ``trace`` may be ``None`` for fields that only live in the interior
    (right-hand sides, determinants).
    """

    grid: Grid
    values: np.ndarray
    trace: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} nodal values, got {self.values.shape}")
        if self.trace is not None:
            self.trace = np.asarray(self.trace, dtype=float)
            if self.trace.shape != (self.grid.m,):
                raise ValueError(f"expected {self.grid.m} trace values, got {self.trace.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def from_function(cls, grid, fn, interior_only=False):
        """Sample ``fn(x, y)`` at the unknowns and (unless ``interior_only``) at the cut points."""
        P, B = grid.points, grid.bpoints
        vals = np.broadcast_to(fn(P[:, 0], P[:, 1]), (grid.n,)).astype(float)
        tr = None if interior_only else np.broadcast_to(fn(B[:, 0], B[:, 1]), (grid.m,)).astype(float)
        return cls(grid, vals, tr)

    @classmethod
    def constant(cls, grid, c, interior_only=False):
        return cls(grid, np.full(grid.n, float(c)), None if interior_only else np.full(grid.m, float(c)))

    def _require_trace(self):
        if self.trace is None:
            raise InsufficientStencil("field has no boundary trace; second differences need one")

    def copy(self):
        return ScalarField(self.grid, self.values.copy(), None if self.trace is None else self.trace.copy())

    def _combine(self, other, op):
        if isinstance(other, ScalarField):
            tr = None if self.trace is None or other.trace is None else op(self.trace, other.trace)
            return ScalarField(self.grid, op(self.values, other.values), tr)
        return ScalarField(self.grid, op(self.values, other), None if self.trace is None else op(self.trace, other))

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def all_points(self):
        """Nodes and cut points stacked, with the matching values (needs a trace)."""
        self._require_trace()
        return np.concatenate([self.grid.points, self.grid.bpoints]), np.concatenate([self.values, self.trace])

    def sup(self):
        return float(np.max(np.abs(self.values)))

    def interpolate(self, pts):
        """Piecewise-linear interpolation over the grid triangulation (nodes and cut points)."""
        self._require_trace()
        tri, sel = self.grid.triangulation
        vals = np.concatenate([self.values, self.trace[sel]])
        pts = np.asarray(pts, dtype=float)
        simplex = tri.find_simplex(pts)
        if np.any(simplex < 0):
            raise OutsideDomain("interpolation point outside the discrete domain")
        T = tri.transform[simplex]
        b = np.einsum("...ij,...j->...i", T[..., :2, :], pts - T[..., 2, :])
        bary = np.concatenate([b, 1 - b.sum(-1, keepdims=True)], axis=-1)
        return (vals[tri.simplices[simplex]] * bary).sum(-1)


@dataclass(eq=False)
class HessianField:
    grid: Grid
    matrices: np.ndarray  # (n, 2, 2)

    @property
    def xx(self):
        return self.matrices[:, 0, 0]

    @property
    def yy(self):
        return self.matrices[:, 1, 1]

    @property
    def xy(self):
        return self.matrices[:, 0, 1]

    def det(self):
        return self.xx * self.yy - self.xy**2

    def min_eigenvalue(self):
        tr = 0.5 * (self.xx + self.yy)
        return tr - np.sqrt(0.25 * (self.xx - self.yy) ** 2 + self.xy**2)


@dataclass(eq=False)
class CofactorField:
    grid: Grid
    matrices: np.ndarray  # (n, 2, 2)


# --------------------------------------------------------------------- operators
def _dd(field: ScalarField, k):
    field._require_trace()
    A, B = field.grid.second_difference[k]
    return A @ field.values + B @ field.trace


def hessian(field: ScalarField) -> HessianField:
    """Discrete Hessian: axis second differences on the diagonal, diagonal-direction
    differences for the mixed entry, ``u_xy = (D_(1,1) - D_(1,-1)) / 4``."""
    dxx, dyy, dpp, dpm = (_dd(field, k) for k in range(4))
    dxy = 0.25 * (dpp - dpm)
    H = np.empty((field.grid.n, 2, 2))
    H[:, 0, 0], H[:, 1, 1] = dxx, dyy
    H[:, 0, 1] = H[:, 1, 0] = dxy
    return HessianField(field.grid, H)


def ma_determinant(field: ScalarField) -> ScalarField:
    """Nodal determinant of the central-difference Hessian."""
    return ScalarField(field.grid, hessian(field).det())


def _monotone_parts(field, stencil_width):
    grid = field.grid
    if stencil_width > grid.width:
        raise InsufficientStencil(f"grid built with width {grid.width}, operator needs {stencil_width}")
    dirs = stencil_directions(stencil_width)
    norms2 = (dirs**2).sum(axis=1).astype(float)
    D = np.stack([_dd(field, k) / norms2[k] for k in range(len(dirs))])
    P = np.maximum(D, 0.0)
    prods = P[0::2] * P[1::2]
    return D, P, prods


def ma_monotone(field: ScalarField, stencil_width: int = 1, return_pairs=False):
    """Wide-stencil monotone determinant ``min over orthogonal pairs of (D_e u)_+ (D_e' u)_+``.

    Second differences are normalised by ``|e|^2`` so each factor
    approximates ``v^T D^2u v`` for the unit vector ``v = e/|e|``; for a
    positive semidefinite Hessian the minimum over all orthonormal pairs is
    the determinant.  Ties resolve to the first pair in stencil order.
    """
    _, _, prods = _monotone_parts(field, stencil_width)
    k = np.argmin(prods, axis=0)
    out = ScalarField(field.grid, prods[k, np.arange(field.grid.n)])
    return (out, k) if return_pairs else out


def cofactor(hess: HessianField) -> CofactorField:
    """Cofactor (adjugate) matrices; in 2D ``[[u_yy, -u_xy], [-u_xy, u_xx]]``."""
    H = hess.matrices
    U = np.empty_like(H)
    U[:, 0, 0], U[:, 1, 1] = H[:, 1, 1], H[:, 0, 0]
    U[:, 0, 1] = U[:, 1, 0] = -H[:, 0, 1]
    return CofactorField(hess.grid, U)


def gradient(field: ScalarField):
    """Three-point first differences along the axes, shape ``(n, 2)``."""
    field._require_trace()
    out = np.empty((field.grid.n, 2))
    for k in (0, 1):
        A, B = field.grid.first_difference[k]
        out[:, k] = A @ field.values + B @ field.trace
    return out


def cofactor_divergence(cof: CofactorField):
    """Discrete ``sum_i d_i U^{ij}`` for ``j = 0, 1`` on regular nodes.

    Returns ``(div, mask)`` where ``div`` has shape ``(n_regular, 2)``.
    Only nodes whose two neighbour rings are unknowns are used, so the
    central differences never see a one-sided Hessian.
    """
    grid = cof.grid
    mask = grid.regular
    h = grid.spacing
    U = cof.matrices
    div = np.zeros((grid.n, 2))
    for i in (0, 1):
        nb_p, nb_m = grid.nbr[i, 0], grid.nbr[i, 1]
        ok = (nb_p >= 0) & (nb_m >= 0)
        for j in (0, 1):
            d = np.zeros(grid.n)
            d[ok] = (U[nb_p[ok], i, j] - U[nb_m[ok], i, j]) / (2 * h)
            div[:, j] += d
    return div[mask], mask


def directional_second(field, point, dir_a, dir_b):
    """``sum a_i b_j u_ij`` at ``point`` from the linearly interpolated nodal Hessian.

    ``field`` may be a :class:`ScalarField` or a precomputed
    :class:`HessianField`.  ``point`` may be a single point or an array.
    """
    hess = field if isinstance(field, HessianField) else hessian(field)
    grid = hess.grid
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    if np.any(grid.domain.level(pts) > 0):
        raise OutsideDomain("point outside the domain")
    H = _interp_nodes(grid, hess.matrices.reshape(grid.n, 4), pts).reshape(-1, 2, 2)
    a = np.broadcast_to(np.asarray(dir_a, dtype=float), pts.shape)
    b = np.broadcast_to(np.asarray(dir_b, dtype=float), pts.shape)
    val = np.einsum("ni,nij,nj->n", a, H, b)
    return float(val[0]) if np.ndim(point) == 1 else val


def _interp_nodes(grid, data, pts):
    """Linear interpolation of node-only data; nearest node outside the node hull."""
    tri = grid.__dict__.get("_node_tri")
    if tri is None:
        tri = Delaunay(grid.points)
        grid.__dict__["_node_tri"] = tri
    simplex = tri.find_simplex(pts)
    out = np.empty((len(pts), data.shape[1]))
    ok = simplex >= 0
    if ok.any():
        T = tri.transform[simplex[ok]]
        b = np.einsum("nij,nj->ni", T[:, :2, :], pts[ok] - T[:, 2, :])
        bary = np.concatenate([b, 1 - b.sum(-1, keepdims=True)], axis=-1)
        out[ok] = np.einsum("nk,nkd->nd", bary, data[tri.simplices[simplex[ok]]])
    if (~ok).any():
        _, near = cKDTree(grid.points).query(pts[~ok])
        out[~ok] = data[near]
    return out
