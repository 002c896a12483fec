# %% [markdown]
# Monte Carlo estimates from simulated hyperplane processes compared with the
# exact values, and the per-realization multiplicity identity behind them.

# %%
import math

import numpy as np

from hyperfaces import oracle, simulator, zonoid
from hyperfaces.simulator import SimulationConfig, Target

# %% One realization: the zero cell and the pieces cut out by two lines through 0
rng = np.random.default_rng(11)
dist = zonoid.isotropic_discretized(2, 36)
sample, cell = simulator.zero_cell_with_retry(dist, rng)
print(len(sample), "lines in the window; zero cell has", cell.n_vertices, "vertices")
U = dist.sample_directions(rng, 2)[0]
pieces = simulator.origin_k_faces(sample, U, 2, cell=cell)
print("pieces:", [p.n_vertices for p in pieces])
print("identity (lhs, rhs):", simulator.check_miles_identity(sample, U, 2, 0, cell=cell))

# %% The whole second-moment table from one set of replicates
targets = [Target("kface", 2, r, s) for r in range(3) for s in range(2)]
targets += [Target("first_moment", 2, r) for r in range(3)]
cfg = SimulationConfig(dist, targets, replicates=3000, seed=5)
for est in simulator.run_experiment(cfg):
    print(f"{est.label:32s} {est.mean:10.4f} +- {est.std_error:7.4f}   exact {est.oracle_value:10.4f}")

# %% Variance of the vertex number, simulated
est = simulator.estimate_kface_moment(dist, 2, 0, 0, 5000, rng)
print("Var f_0:", est.mean - 16, "+-", est.std_error, " exact", oracle.second_moment(dist, 2, 0, 0) - 16,
      " isotropic", math.pi**2 / 2 - 4)
