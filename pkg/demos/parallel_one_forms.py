"""
Which one-forms are parallel?
=============================

Curvature gives algebraic constraints on a parallel covector.  Transport
around small loops at a base point gives the rest: a parallel form must be
fixed by every loop's holonomy.
"""

import numpy as np

from finslab.catalog import catalog_dict
from finslab.config import base_point, config_from_dict, draw_samples, y_samples_at
from finslab.parallel import (
    LoopSet, nullity_space, parallel_form_basis, verify_parallel_form,
)

# A 4-dimensional Riemannian metric with a warped (x2, x3) block
cfg = config_from_dict(catalog_dict("ex1"))
spec = cfg.spec
x0 = base_point(cfg)
print("metric:", spec.source["metric"])
print("base point:", x0)

# The nullity space of the curvature is 2-dimensional
Ys = y_samples_at(cfg, x0, 16)
nul = nullity_space(spec, x0, Ys)
print("nullity basis:\n", np.round(nul.vectors, 6))

# Algebraic candidates, then the fixed space of loop holonomy
loops = LoopSet.rectangles(spec, x0, (0.1, 0.3))
verdict = parallel_form_basis(spec, loops, Ys)
print("algebraic dim", verdict.algebraic_dim, " holonomy dim", verdict.holonomy_dim,
      " parallel dim", verdict.final_dim)
print("parallel basis:", np.round(verdict.final.vectors, 10))

# Check d_h beta = 0 away from the base point by finite differences
for form in verdict.forms():
    res = verify_parallel_form(spec, form, draw_samples(cfg, 10))
    print(f"residual d_h = {res['d_h']:.2e}")

# The 3-dimensional Finsler example: the only parallel form is dx3
cfg5 = config_from_dict(catalog_dict("ex5"))
x5 = base_point(cfg5)
v5 = parallel_form_basis(cfg5.spec, LoopSet.rectangles(cfg5.spec, x5, (0.1,)),
                         y_samples_at(cfg5, x5, 12))
print("ex5 parallel basis:", np.round(v5.final.vectors, 10), "policy", v5.policy)
