# # First variation of a general surface
#
# The pointwise first-variation formula integrated over a surface, compared
# with the derivative of the area along the flow of a compactly supported
# ambient field.

import numpy as np

from srpmc.geometry import heisenberg
from srpmc.suites import surface_variation_suite
from srpmc.variation import AmbientField, ParamSurface, first_variation_general, flow_area_derivative

H = heisenberg()
surf = ParamSurface.intrinsic_graph("0.3*sin(x)*t + 0.2*x*x - 0.1*t", *[np.linspace(-0.5, 0.5, 41)] * 2)
U = AmbientField("x*t", "y + 1", "sin(x)", box=([-0.3, -1, -0.3], [0.3, 1, 0.3]))
print("formula", first_variation_general(surf, H, U))
print("flow   ", flow_area_derivative(surf, H, U))

# %%
# The same comparison over random graphs and fields.
cases = surface_variation_suite(surfaces=4, fields=3)
for c in cases:
    print(f"{c.label:<10} {c.analytic: .6e} {c.oracle: .6e}")

# %%
# The vertical plane is minimal, yet its rows above are not zero.  Tangential
# parts of a field contribute the integral of a divergence, which the
# trapezoid rule only sends to zero once the bump is resolved.
U = AmbientField("x", 0, 0, box=([-0.3, -1, -0.3], [0.3, 1, 0.3]))
for n in (41, 81, 161, 321):
    plane = ParamSurface.vertical_plane(-0.5, 0.5, -0.5, 0.5, n)
    print(f"plane, {n:3d} samples: {first_variation_general(plane, H, U): .3e}")
