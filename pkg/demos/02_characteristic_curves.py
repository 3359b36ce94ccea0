# # Tracing characteristic curves
#
# Characteristic curves solve t' = 2u(s, t) in the parameter plane.  For
# u = t they are exponentials, which makes a clean convergence check.

import numpy as np

from srpmc.curves import foliation_jacobian, trace
from srpmc.graph import GraphDomain, IntrinsicGraph

g = IntrinsicGraph.from_expression(GraphDomain(0, 1, 0.1, 2.0, 201, 401), "t")
a, b = 0.5, 0.5

# %%
for h in (0.05, 0.025, 0.0125):
    c = trace(g, (a, b), 0.2, h)
    err = np.max(np.abs(c.t - b * np.exp(2 * (c.s - a))))
    print(f"step {h:<7} max error {err:.3e}")

# %%
# The Jacobian of the foliation along the curve, q = dt/db, is e^{2(s - a)} here.
c = trace(g, (a, b), 0.2, 1e-3)
q = foliation_jacobian(g, c)
print("max |q - exp|:", np.max(np.abs(q - np.exp(2 * (c.s - a)))))
