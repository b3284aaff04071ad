"""
Sprays and curvature from a metric string
=========================================

A Finsler metric is given as an expression in x1..xn and y1..yn.  Everything
below is derived from it symbolically and evaluated with numpy.
"""

import numpy as np

from finslab import MetricSpec, TangentSample, parse_expr, to_text
from finslab.geometry import geometry, is_berwald, spray_coefficients, spray_curvature

# A 3-dimensional non-Riemannian metric: F^2 contains a y1-dependent quartic term
F = "sqrt(x1*x2*y1^2 + y3^2 + y2^4/y1^2)"
spec = MetricSpec.finsler("demo", 3, F, domain=["x1", "x2"])
print("F =", to_text(parse_expr(F, 3)))

# Spray coefficients as expressions, and their values at one tangent vector
geo = geometry(spec)
for i, g in enumerate(geo.G, 1):
    print(f"G^{i} =", to_text(g))

s = TangentSample(np.array([1.0, 2.0, 0.0]), np.array([1.0, 0.5, -1.0]))
print("G(x, y)  =", spray_coefficients(spec, s))

# G is positively 2-homogeneous in y
print("G(x, 3y) / 9 =", geo.values("G", s.x, 3 * s.y)[0] / 9)

# Spray curvature R^i_jk is antisymmetric in (j, k)
R = spray_curvature(spec, s)
print("R^1_12 =", R[0, 0, 1], "  R^1_21 =", R[0, 1, 0])

# The y-derivative of the Berwald connection does not vanish: not a Berwald metric
rng = np.random.default_rng(0)
samples = [TangentSample(rng.uniform(0.5, 1.5, 3), rng.uniform(0.5, 1.5, 3)) for _ in range(20)]
flag, worst = is_berwald(spec, samples)
print(f"Berwald: {flag}  (max |G^h_ijk| = {worst:.3g})")
