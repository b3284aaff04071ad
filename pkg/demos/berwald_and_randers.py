"""
Berwald metrics from parallel forms
===================================

A quartic Finsler metric can share its spray with a Riemannian one.  And a
parallel one-form beta turns a Riemannian alpha into the Randers metric
alpha + beta with the same spray.
"""

import numpy as np

from finslab.catalog import catalog_dict
from finslab.config import base_point, config_from_dict, draw_samples, y_samples_at
from finslab.geometry import geometry, is_berwald
from finslab.parallel import LoopSet, construct_berwald, parallel_form_basis

# Quartic alternate of a product metric: Berwald, same spray
cfg = config_from_dict(catalog_dict("ex3-quartic"))
alpha = config_from_dict(catalog_dict("ex3"))
samples = draw_samples(alpha, 50)
X = np.array([s.x for s in samples])
Y = np.array([s.y for s in samples])
flag, worst = is_berwald(cfg.spec, samples)
dG = np.max(np.abs(geometry(cfg.spec).values("G", X, Y) - geometry(alpha.spec).values("G", X, Y)))
print(f"quartic: Berwald={flag} (max |G^h_ijk| {worst:.1e}), max |dG| vs alpha {dG:.1e}")

# Randers metric from the parallel form of a warped product
cfg1 = config_from_dict(catalog_dict("ex1"))
x0 = base_point(cfg1)
verdict = parallel_form_basis(cfg1.spec, LoopSet.rectangles(cfg1.spec, x0),
                              y_samples_at(cfg1, x0, 16))
form = verdict.forms()[0]
form.b0 = 0.5 * form.b0
randers, match = construct_berwald(cfg1.spec, form, draw_samples(cfg1, 50))
print("Randers F =", randers.source["F"])
print(f"max |G_F - G_alpha| = {match:.1e}")
print("Randers is Berwald:", is_berwald(randers, draw_samples(cfg1, 20))[0])
