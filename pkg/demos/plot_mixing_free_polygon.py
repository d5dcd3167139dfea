"""
Mixing-free polygons
====================

Register every vertex of a polygon to one reference covariance and ask each
edge to realize the registration. The edges are no longer McCann geodesics,
but going around the polygon returns every particle home.
"""

# %%
import numpy as np

import omt_holonomy as omt

V = [
    np.diag([0.3, 1.0]),
    np.array([[1.6, 0.6], [0.6, 0.9]]),
    np.array([[2.3, -1.2], [-1.2, 0.8]]),
]

print("Wasserstein barycenter\n", omt.ac_barycenter(V))
print("geometric mean\n", omt.alm_mean(V))
print("McCann perimeter", sum(omt.w2(V[i], V[(i + 1) % 3]) for i in range(3)))

# %%
# Each polygon costs three shooting solves.

for policy in omt.REF_POLICIES:
    sol = omt.solve_polygon(omt.PolygonSpec(V, policy, steps=1000))
    edges = ", ".join(f"{e.length:.4f}" for e in sol.edges)
    print(f"{policy}: perimeter {sol.perimeter:.4f} (edges {edges}), |Par - I| = {sol.holonomy_error:.1e}")
