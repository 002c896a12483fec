# %% [markdown]
# Where random direction distributions fall between the two extremes of the
# vertex-number variance, and how the volume product drives it in the plane.

# %%
import math

import numpy as np

from hyperfaces import oracle, zonoid

# %% Variance of f_0 for the typical cell, lower bound 0 and upper bound from the ball
rng = np.random.default_rng(3)
for d in (2, 3):
    upper = oracle.vertex_variance_upper_bound(d)
    vals = []
    for _ in range(20):
        dist = zonoid.random_atoms(d, int(rng.integers(3, 9)), rng)
        vals.append(oracle.variance_bounds(dist, d).variance)
    print(f"d = {d}: variance in [{min(vals):.4f}, {max(vals):.4f}], upper bound {upper:.4f}")

# %% In the plane the stability functional is constant, so the variance is an
# affine function of the volume product of the associated zonotope
for _ in range(5):
    dist = zonoid.random_atoms(2, 5, rng)
    vp = zonoid.volume_product(dist.zonotope)
    var = oracle.variance_bounds(dist, 2).variance
    print(f"vp = {vp:.5f}   Var f_0 = {var:.5f}   vp/2 - 4 = {vp / 2 - 4:.5f}")

# %% Volume variance against its square mean: 2^d - 1 for boxes, larger for rounder zonoids
for d in (2, 3):
    print(d, oracle.volume_variance_ratio(zonoid.cuboid(d)),
          oracle.volume_variance_ratio(zonoid.Isotropic(d)),
          2.0**-d * math.factorial(d) * zonoid.kappa(d) ** 2 - 1)
