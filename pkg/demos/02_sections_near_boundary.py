"""
Sections of a solution at the boundary
======================================

A section is the part of the domain where u lies below its tangent plane
at a center y, raised by a height h.  For boundary centers its area grows
linearly in h.  We measure that slope, fit the minimum enclosing ellipse
of one section and compare the section's extents with those of the
paraboloid, where they are known in closed form.
"""

import numpy as np

from mongelab.discretization import Grid, ScalarField
from mongelab.geometry import boundary_frame, make_domain
from mongelab.ma_solver import MAProblem, SolverConfig, solve_dirichlet_ma
from mongelab.sections import default_heights, extract_section, john_ellipsoid, shape_metrics, volume_scaling_fit

disk = make_domain("disk")
grid = Grid(disk, 1 / 64)


def phi(x, y):
    return 0.5 * (x * x + y * y) + 0.1 * x**3


u, _ = solve_dirichlet_ma(MAProblem(disk, 1.0, phi), SolverConfig(tol=1e-11), grid=grid)

# area against height at a point of the boundary
y = (0.0, -1.0)
heights = default_heights(grid)
fit = volume_scaling_fit(u, y, heights)
print(f"log-area slope {fit['slope']:.3f} over {len(heights)} heights, |S_h|/h in [{fit['C1']:.3f}, {fit['C2']:.3f}]")

# one section in detail
section = extract_section(u, y, 0.05, warn=False)
E = john_ellipsoid(section.polygon)
print(f"section area {section.area:.4f}, enclosing ellipse area {E.volume:.4f}, "
      f"semi-axes {np.round(E.semi_axes, 4)}")
print(f"containment {E.certificate['containment']:.1e}, half-size ellipse margin {E.certificate['shrink_margin']:.2e}")

# extents in the boundary frame against the paraboloid's closed form
frame = boundary_frame(disk, y)
p = ScalarField.from_function(grid, lambda x, y: 0.5 * (x * x + y * y))
for h in (0.02, 0.08):
    m = shape_metrics(extract_section(p, y, h, warn=False), frame)
    print(f"paraboloid h = {h}: a_h {m.a_h:.4f} (exact {np.sqrt(2 * h - h * h):.4f}), "
          f"b_h {m.b_h:.4f} (exact {np.sqrt(2 * h):.4f})")
