"""Stability of local observables in rapidly mixing Lindblad dynamics on lattices."""

from .diagnostics import (
    DecayEnvelope,
    LRFit,
    MixingFit,
    convergence_curve,
    decay_envelope,
    fit_lr,
    fit_rapid_mixing,
    fixed_point_gap,
    localized_error,
    lr_probe,
    spectral_gap,
)
from .evolution import DegenerateFixedPoint, EvolutionEngine, evolve, fixed_point
from .glauber import GlauberModel, classical_generator, embed_glauber, kmc_simulate, perturb_rates
from .lattice import Lattice, Region, grow_region, torus_distance
from .liouvillian import LindbladData, Liouvillian, LocalTerm, Perturbation
from .presets import make_model, make_perturbation, parse_observable
from .quantum_algebra import Operator, operator_norm, pauli_string
from .stability import bound_audit, counterexample_degenerate, duhamel_check, stability_sweep

__version__ = "0.1.0"
