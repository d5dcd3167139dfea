"""
Monge maps and McCann geodesics
===============================

Optimal transport between two centered Gaussians is a linear map, and the
displacement interpolation between them stays Gaussian. Particles pushed
along it travel on straight lines.
"""

# %%
import numpy as np
import matplotlib.pyplot as plt

import omt_holonomy as omt
from omt_holonomy.plotting import ellipse_points

s0 = np.array([[3.0, 2.0], [2.0, 3.0]])
s1 = np.array([[3.0, -2.0], [-2.0, 3.0]])

T = omt.monge_map(s0, s1)
print("Monge map\n", T)
print("pushforward residual", np.linalg.norm(T @ s0 @ T - s1))
print("W2 =", omt.w2(s0, s1))

# %%
# The interpolation can be run past its endpoints until ``I + t (T - I)``
# becomes singular.

g = omt.mccann(s0, s1)
ext = omt.extension_interval(g)
print(f"extension interval ({ext.t_min:.4f}, {ext.t_max:.4f})")

# %%
# Lifting the geodesic to factors gives the particle map at every time.
# Its endpoint is the Monge map, and the covariance curve has length W2.

ts, S = omt.mccann_samples(s0, s1, 400)
curve = omt.CovCurve(S)
factors, _ = omt.transition_factors(curve)
print("transport vs Monge map", np.linalg.norm(factors[-1] - T))
print("curve length", omt.curve_length(None, curve))

fig, ax = plt.subplots(figsize=(5, 5))
for k in range(0, 401, 50):
    pts = ellipse_points(S[k])
    ax.plot(pts[:, 0], pts[:, 1], "--", lw=0.8, color=plt.cm.viridis(k / 400))
for seed in omt.experiments.default_tracers(2):
    path = factors @ seed
    ax.plot(path[:, 0], path[:, 1], "k-")
ax.set_aspect("equal")
ax.set_title("McCann geodesic, tracers move on lines")
fig.savefig("mccann.svg", metadata={"Date": None})
