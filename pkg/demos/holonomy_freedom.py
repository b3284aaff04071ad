"""
Holonomy distribution and metrizability freedom
===============================================

Brackets of the horizontal frame on TM span the holonomy distribution.  Its
corank counts independent functions constant along every horizontal lift.
"""

import numpy as np

from finslab.catalog import catalog_dict
from finslab.config import config_from_dict, draw_samples
from finslab.geometry import geometry
from finslab.holonomy import horizontal_frame, lie_bracket, metrizability_freedom

for name in ("ex3", "sphere2", "euclidean-2"):
    cfg = config_from_dict(catalog_dict(name))
    rep = metrizability_freedom(cfg.spec, draw_samples(cfg, 10), depth=4)
    print(f"{name:12s} n={cfg.dim}  rank={rep.max_rank}  mu_S={rep.mu_s}  "
          f"stable from depth {rep.stable_depth}")

# First bracket of the frame is the spray curvature in the vertical block
cfg = config_from_dict(catalog_dict("ex3"))
h = horizontal_frame(cfg.spec)
X = Y = np.ones((1, 4))
b = lie_bracket(h[0], h[1]).evaluate(X, Y)[0]
R = geometry(cfg.spec).values("R", X, Y)[0]
print("[h1, h2] at x = y = 1:", b)
print("R^i_12 at x = y = 1:  ", R[:, 0, 1])
