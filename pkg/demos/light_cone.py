"""Light cone and decay envelope for depolarizing noise plus an Ising coupling.

We probe ||[X_u, Z0(t)]|| at growing distances, fit k (e^{vt} - 1) e^{-mu d},
and then build the size-independent decay envelope from restricted lattices.
Two ambient sizes should give the same envelope.
"""

import numpy as np

from lindstab import decay_envelope, fit_lr, lr_probe, make_model, pauli_string
from lindstab.diagnostics import default_slopes, schedule_horizon

A = pauli_string({0: "Z"})
m8 = make_model("ising-depolarizing", 1, 8)

table = lr_probe(A, m8, np.linspace(0, 4, 17))
fit = fit_lr(table)
print(f"LR fit: k={fit.k:.3f} v={fit.v:.3f} mu={fit.mu:.3f}")
for j, d in enumerate(table.distances):
    print(f"  d={d}: max probe {table.values[:, j].max():.2e}")

slopes = default_slopes(fit)
grid = np.linspace(0, schedule_horizon(slopes, 2), 11)
env8 = decay_envelope(A, m8, grid, slopes=slopes, max_radius=2)
env10 = decay_envelope(A, make_model("ising-depolarizing", 1, 10), grid, slopes=slopes, max_radius=2)

print("\n   t      Delta(L=8)   Delta(L=10)")
for t, a, b in zip(grid, env8.values, env10.values):
    print(f"{t:6.3f}  {a:.6e}  {b:.6e}")
