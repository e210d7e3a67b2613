"""High-temperature Glauber dynamics with a rate tilt that breaks detailed balance.

Down-to-up flips with an up forward neighbour speed up by (1 + eps).
The resulting magnetisation shift at site 0 stays put as the ring grows.
Kinetic Monte Carlo on a larger ring agrees with the exact small-ring curve.
"""

import numpy as np

from lindstab import GlauberModel, Lattice
from lindstab.glauber import RatePerturbation, glauber_stability, kmc_simulate, magnetization_curve

eps = 0.05
times = np.linspace(0, 10, 21)
base = GlauberModel(Lattice(1, 8), beta=0.2)

res = glauber_stability(base, eps, [4, 6, 8, 10], times)
for L, v in res.sup_dev.items():
    print(f"L={L:2d}  sup |m~ - m| = {v:.5f}")
print(f"flatness {res.flatness:.2%}, detailed balance kept: {res.detailed_balance}")

tilt = RatePerturbation(eps, "asymmetric")
exact = magnetization_curve(base.perturbed(tilt), times)
mc = kmc_simulate(GlauberModel(Lattice(1, 16), beta=0.2).perturbed(tilt), times, chains=1000, seed=5)
z = np.abs(mc.mean - exact) / np.where(mc.stderr > 0, mc.stderr, np.inf)
print(f"KMC (L=16) vs exact (L=8): max |z| = {z.max():.2f}")
