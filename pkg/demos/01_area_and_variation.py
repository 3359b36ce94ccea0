# # Area and first variation of an intrinsic graph
#
# A graph u(x, t) over a rectangle is lifted to the surface y = u in the
# Heisenberg chart.  Its sub-Riemannian area is the integral of the length
# of the horizontal part of the normal.

import numpy as np

from srpmc.geometry import ContactMetric, heisenberg
from srpmc.graph import GraphDomain, IntrinsicGraph, area, first_variation, pmc_value, volume

# %%
# The flat metric first.  For u = x the integrand is sqrt(2) everywhere.
H = heisenberg()
d = GraphDomain.unit(33)
print("area of u = x:", area(IntrinsicGraph.from_expression(d, "x"), H), "vs", np.sqrt(2))

# %%
# A perturbed metric, given by its horizontal Gram matrix.
m = ContactMetric("1 + 0.1*sin(x + 2*t)", "0.05*sin(x*y - t)", "1 + 0.1*cos(y - x)")
g = IntrinsicGraph.from_expression(GraphDomain(-0.5, 0.5, -0.5, 0.5, 64, 64), "0.1 + 0.2*x - 0.3*t")
print("area", area(g, m), "enclosed volume", volume(g, m))

# %%
# The weak form against a centered difference of the functional.
v = "sin(pi*(x + 0.5))*sin(pi*(t + 0.5))"
f = "0.5 + x*t"
s = 1e-4
fd = (pmc_value(g.plus(v, s), m, f) - pmc_value(g.plus(v, -s), m, f)) / (2 * s)
exact = first_variation(g, m, f, v)
print(f"first variation {exact:.12f}  finite difference {fd:.12f}")
