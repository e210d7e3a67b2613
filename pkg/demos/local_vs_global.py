"""Why only local observables can be stable.

A reset channel with a slightly tilted target state: every single-site
expectation moves by at most 2 eps, yet the global steady states drift
apart and become orthogonal as the number of sites grows.
"""

from lindstab import counterexample_degenerate

rep = counterexample_degenerate(0.1, [1, 2, 4, 8, 16, 32, 64])
print("  N   trace distance   fidelity   local shift")
for N, td, f, loc in zip(rep.sizes, rep.global_trace_distance, rep.global_fidelity, rep.local_deviation):
    print(f"{N:3d}   {td:.6f}        {f:.2e}   {loc:.3f}")
