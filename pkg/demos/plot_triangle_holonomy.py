"""
Mixing around a Gaussian triangle
=================================

Going once around a triangle whose sides are McCann geodesics brings the
distribution back to itself, but not the particles: the composed transport
is a nontrivial rotation in the isotropy group of the starting covariance.
"""

# %%
import numpy as np
import matplotlib.pyplot as plt

import omt_holonomy as omt

V = [
    np.diag([0.3, 1.0]),
    np.array([[1.6, 0.6], [0.6, 0.9]]),
    np.array([[2.3, -1.2], [-1.2, 0.8]]),
]

Theta = omt.triangle_holonomy(*V)
print("closed-form holonomy\n", Theta)
print("fixes the first vertex:", np.allclose(Theta @ V[0] @ Theta.T, V[0]))
print("|Theta - I| =", np.linalg.norm(Theta - np.eye(2)))

# %%
# The same element comes out of integrating the lift around the loop.
# Corners are marked as breaks so no derivative straddles them.

K = 3000
_, S = omt.triangle_curve(*V, K)
loop = omt.CovCurve(S, breaks=(K // 3, 2 * K // 3))
factors, _ = omt.transition_factors(loop)
print("ODE vs closed form", np.linalg.norm(factors[-1] - Theta))

# %%
# Whitened by the vertex, the holonomy is a plain rotation.

w = omt.sym_inv_sqrt(V[0]) @ Theta @ omt.sym_sqrt(V[0])
print(f"rotation angle {np.degrees(omt.rotation_angle(w)):.2f} deg")

dump = omt.run({"kind": "triangle", "vertices": [v.tolist() for v in V], "steps": 600})
omt.render_ellipses(dump, stride=50, path="triangle.svg")
plt.close("all")
