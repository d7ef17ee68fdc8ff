"""
Regularizing the right-hand side near the boundary
==================================================

The boundary estimates replace f in a collar of width t by a smoothed
version f_t that lies below f.  Its distance to f decays like a small
power of t; barrier functions bound how far the corresponding solutions
drift apart.  The last part prints the sequence of collar widths used when
the estimates are iterated.
"""

import numpy as np

from mongelab.discretization import Grid
from mongelab.geometry import make_domain
from mongelab.probes import approximation_gap_sweep, barrier_field, cascade, mollify_boundary_rhs

ellipse = make_domain("ellipse", {"a": 1.5, "b": 1.0})
grid = Grid(ellipse, 1 / 64)


def f(x, y):
    return 1 + 0.1 * np.cosh(x) + 0.05 * np.sin(2 * y)


fv = f(*grid.points.T)
ts, gaps = [0.2, 0.1, 0.05, 0.025], []
for t in ts:
    m = mollify_boundary_rhs(ellipse, f, t, alpha=0.5, grid=grid)
    gaps.append(np.abs(m.field.values - fv).max())
    print(f"t = {t:<6} tau = {m.tau:.4f}  sup|f_t - f| = {gaps[-1]:.4f}  max(f_t - f) = {(m.field.values - fv).max():.1e}")
slope = np.polyfit(np.log(ts), np.log(gaps), 1)[0]
print(f"decay exponent {slope:.4f} (alpha / 8 = {0.5 / 8})")

# the barrier vanishes on the boundary and is negative inside
z = barrier_field(ellipse, 0.1, grid=grid).field
print(f"barrier: max inside {z.values.max():.2e}, max |boundary| {np.abs(z.trace).max():.1e}")

# gap between solutions with f and f_t in the Lipschitz regime
disk = make_domain("disk")
rep = approximation_gap_sweep(disk, lambda x, y: 1 + 0.1 * np.cosh(x), lambda x, y: 0.5 * (x * x + y * y), ts)
print(f"gap exponent {rep['exponent']:.3f}, estimate {rep['predicted']}, in [1, 1.7]: {rep['in_window']}")

print("collar widths:", ", ".join(f"{t:.3e}" for t in cascade(0.1, 1.0, 2, 6).sequence))
