# %% [markdown]
# Exact moment tables for the typical k-face of a Poisson hyperplane
# tessellation: a random discrete direction distribution, the quasi-isotropic
# cuboid process and the isotropic limit.

# %%
import math

import numpy as np

from hyperfaces import oracle, zonoid

np.set_printoptions(precision=4, suppress=True)

# %% Four random directions in R^3 with random masses
rng = np.random.default_rng(7)
dist = zonoid.random_atoms(3, 4, rng, intensity=1.0)
print("directions\n", dist.directions)
print("weights", dist.weights)
print("cell intensity", oracle.cell_intensity(dist))

# %% Means, second moments and covariances of (L_0, ..., L_k) for every k
for k in range(1, 4):
    t = oracle.build_moment_table(dist, k)
    print(f"k = {k}")
    print("  E L_r      ", t.first_moments)
    print("  covariance\n", t.covariances)

# %% The mean vertex number is 2^k whatever the directions are
print([oracle.first_moment(dist, k, 0) for k in (1, 2, 3)])

# %% Parallel planes: every cell of the cuboid process is a box, so f_0 does not vary
cub = zonoid.cuboid(3)
print("Var f_0 (cuboid)", oracle.variance_bounds(cub, 3).variance)
print("derived closed form", oracle.cuboid_closed_form(1.0, 3, 0, 0))
print(oracle.cuboid_prefactor_check(3))

# %% The isotropic process attains the upper bound
iso = zonoid.Isotropic(2)
print("Var f_0 (isotropic plane)", oracle.variance_bounds(iso, 2).variance, math.pi**2 / 2 - 4)

# %% Equal-mass discretisations converge to it at rate n^-2
ref = oracle.isotropic_closed_form(1.0, 2, 2, 0, 0)
for n in (12, 24, 48, 96, 180):
    val = oracle.second_moment_general(zonoid.isotropic_discretized(2, n), 2, 0, 0)
    print(n, val, abs(val - ref) / ref)
