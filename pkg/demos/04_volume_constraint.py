# # Prescribing the enclosed volume
#
# With a volume constraint the mean curvature becomes a Lagrange
# multiplier H0.  The bordered Newton solve returns it, along with two
# projections of the discrete gradient that should agree at a critical point.

import numpy as np

from srpmc.geometry import heisenberg
from srpmc.graph import GraphDomain
from srpmc.solver import DiscretizedProblem, assemble_residual, volume_constrained_solve
from srpmc.variation import AmbientField, ParamSurface, h0_estimate

H = heisenberg()
prob = DiscretizedProblem(GraphDomain.unit(65), 0.0, H)
res = volume_constrained_solve(prob, 0.05)
print("volume", res.volume, "H0", res.multiplier)
print("projections", res.multipliers)
print("unconstrained residual at f = H0:", np.max(np.abs(assemble_residual(prob.with_f(res.multiplier), res.u))))

# %%
# The continuous estimate from an ambient field is close but carries the
# discretization error of the grid.
surf = ParamSurface.from_graph(res.graph(prob.domain))
U = AmbientField(0, 1, 0, box=([0.1, -1, 0.1], [0.9, 1, 0.9]))
print("continuous H0 estimate", h0_estimate(surf, H, U))
