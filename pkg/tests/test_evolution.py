import warnings

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_hermitian, random_state
from lindstab.evolution import (
    DegenerateFixedPoint,
    EvolutionEngine,
    evolve,
    expm_krylov,
    fixed_point,
    infinite_time_limit,
)
from lindstab.glauber import GlauberModel, embed_glauber, gibbs_distribution
from lindstab.lattice import Lattice
from lindstab.presets import make_model
from lindstab.quantum_algebra import SZ, embed, operator_norm, trace_norm, vectorize


@pytest.mark.parametrize("L", [3, 5])
def test_depolarizing_analytic(L):
    g = 0.25
    m = make_model("depolarizing", 1, L, gamma=g)
    eng = EvolutionEngine(m)
    A = embed(SZ, [0], L)
    for t in [0.0, 0.3, 2.0, 7.5]:
        assert np.abs(evolve(A, t, eng) - np.exp(-2 * g * t) * A).max() < 1e-8


def test_identity_is_fixed():
    m = make_model("ising-depolarizing", 1, 4)
    eng = EvolutionEngine(m)
    assert np.abs(eng.evolve(np.eye(16), 3.0) - np.eye(16)).max() < 1e-12


def test_krylov_matches_dense(rng):
    m = make_model("ising-depolarizing", 1, 3)
    G = m.generator()
    A = random_hermitian(rng, 8)
    for t in [0.1, 1.0, 10.0]:
        w, _ = expm_krylov(G, vectorize(A), t, tol=1e-12)
        ref = la.expm(t * G.toarray()) @ vectorize(A)
        assert np.abs(w - ref).max() < 1e-9


def test_semigroup_and_contractivity(rng):
    m = make_model("ising-depolarizing", 1, 4)
    eng = EvolutionEngine(m)
    A = random_hermitian(rng, 16)
    a = eng.evolve(eng.evolve(A, 0.7), 1.9)
    b = eng.evolve(A, 2.6)
    assert np.abs(a - b).max() < 1e-7
    for B in eng.evolve_grid(A, np.linspace(0, 5, 11)):
        assert operator_norm(B) <= operator_norm(A) * (1 + 10 * eng.rtol)


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 5.0))
def test_duality(seed, t):
    rng = np.random.default_rng(seed)
    m = make_model("amplitude-damping", 1, 3)
    eng = EvolutionEngine(m)
    A = random_hermitian(rng, 8)
    rho = random_state(rng, 8)
    lhs = np.trace(eng.evolve(A, t) @ rho)
    rhs = np.trace(A @ eng.dual_evolve(rho, t))
    assert abs(lhs - rhs) < 1e-8


def test_trace_distance_monotone(rng):
    m = make_model("ising-depolarizing", 1, 3)
    eng = EvolutionEngine(m)
    r1, r2 = random_state(rng, 8), random_state(rng, 8)
    times = np.linspace(0, 4, 9)
    d = [trace_norm(a - b) for a, b in zip(eng.evolve_grid(r1, times, dual=True), eng.evolve_grid(r2, times, dual=True))]
    assert all(x2 <= x1 + 1e-10 for x1, x2 in zip(d, d[1:]))


def test_fixed_point_depolarizing():
    fp = fixed_point(make_model("depolarizing", 1, 4))
    assert np.abs(fp.rho - np.eye(16) / 16).max() < 1e-12
    assert fp.kernel_dim == 1
    assert fp.residual <= 1e-10


def test_fixed_point_dephasing_degenerate():
    with pytest.raises(DegenerateFixedPoint):
        fixed_point(make_model("dephasing", 1, 3))
    with pytest.raises(DegenerateFixedPoint):
        fixed_point(make_model("dephasing", 1, 6))


def test_fixed_point_glauber_gibbs():
    model = GlauberModel(Lattice(1, 4), 0.2)
    fp = fixed_point(embed_glauber(model))
    assert np.abs(np.diag(fp.rho).real - gibbs_distribution(model)).max() < 1e-10


def test_fixed_point_relaxation_path():
    m = make_model("ising-depolarizing", 1, 6)
    fp = fixed_point(m)
    assert fp.certification != "dense"
    assert fp.residual <= 1e-10
    w = np.linalg.eigvalsh(fp.rho)
    assert w.min() >= -1e-10
    assert abs(np.trace(fp.rho) - 1) < 1e-12


def test_infinite_time_limit_examples():
    m = make_model("depolarizing", 1, 3)
    fp = fixed_point(m)
    assert np.abs(infinite_time_limit(embed(SZ, [0], 3), fp)).max() < 1e-12
    assert np.allclose(infinite_time_limit(np.eye(8), fp), np.eye(8))
    P = embed(np.diag([1.0, 0.0]), [0], 3)
    assert np.allclose(infinite_time_limit(P, fp), 0.5 * np.eye(8))


def test_convergence_to_limit():
    m = make_model("ising-depolarizing", 1, 4)
    fp = fixed_point(m)
    A = embed(SZ, [0], 4)
    Ainf = infinite_time_limit(A, fp)
    eng = EvolutionEngine(m)
    devs = [operator_norm(eng.evolve(A, T) - Ainf) for T in (1, 5, 20)]
    assert devs[0] > devs[1] > devs[2]
    assert devs[2] < 1e-3


def test_evolve_rejects_bad_input():
    eng = EvolutionEngine(make_model("depolarizing", 1, 3))
    with pytest.raises(ValueError):
        eng.evolve(np.eye(4), 1.0)
    with pytest.raises(ValueError):
        eng.evolve(np.eye(8), -1.0)
