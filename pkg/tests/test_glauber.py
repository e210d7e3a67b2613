import numpy as np
import pytest
import scipy.linalg as la

from lindstab.diagnostics import fit_rapid_mixing
from lindstab.evolution import EvolutionEngine, fixed_point
from lindstab.glauber import (
    GlauberModel,
    RatePerturbation,
    _all_spins,
    classical_generator,
    detailed_balance_violation,
    embed_glauber,
    gibbs_distribution,
    glauber_stability,
    kmc_deviation,
    kmc_simulate,
    magnetization_curve,
    perturb_rates,
    stationary_distribution,
)
from lindstab.lattice import Lattice
from lindstab.quantum_algebra import vectorize


def model(L=4, beta=0.3, D=1, **kw):
    return GlauberModel(Lattice(D, L), beta, **kw)


@pytest.mark.parametrize("rule", ["heat-bath", "metropolis"])
def test_rates_detailed_balance_pairwise(rule):
    m = model(beta=0.7, h=0.3, rule=rule)
    for s in (1, -1):
        for nb in [(1, 1), (1, -1), (-1, -1)]:
            r = m.rate(s, nb)
            assert 0 < r <= 1
            dE = 2 * s * (sum(nb) + 0.3)
            assert r / m.rate(-s, nb) == pytest.approx(np.exp(-0.7 * dE), rel=1e-12)


def test_heat_bath_formula():
    m = model(beta=0.4)
    dE = 2 * (1 + 1)
    assert m.rate(1, (1, 1)) == pytest.approx(1 / (1 + np.exp(0.4 * dE)))


def test_classical_generator_columns_and_balance():
    m = model(L=5, beta=0.5, h=0.2)
    Q = classical_generator(m).toarray()
    assert np.abs(Q.sum(axis=0)).max() < 1e-15
    assert detailed_balance_violation(m) < 1e-12


def test_infinite_temperature_gap():
    Q = classical_generator(model(L=3, beta=0.0)).toarray()
    vals = np.sort(la.eigvals(Q).real)[::-1]
    assert vals[0] == pytest.approx(0, abs=1e-12)
    assert -vals[1] == pytest.approx(1.0, rel=1e-12)


def test_gibbs_is_stationary_up_to_ten_sites():
    for L, beta in [(4, 0.3), (10, 1.0)]:
        m = model(L=L, beta=beta)
        pi = stationary_distribution(classical_generator(m))
        assert np.abs(pi - gibbs_distribution(m)).max() < 1e-10


def test_embedding_fixed_point_is_gibbs():
    m = model(L=4, beta=0.3)
    fp = fixed_point(embed_glauber(m))
    assert np.abs(np.diag(fp.rho).real - gibbs_distribution(m)).max() < 1e-8
    assert np.abs(fp.rho - np.diag(np.diag(fp.rho))).max() < 1e-10


def test_embedding_preserves_diagonal_and_matches_classical(rng):
    m = model(L=4, beta=0.3)
    liou = embed_glauber(m)
    G = liou.generator()
    p = rng.random(16)
    p /= p.sum()
    out = (G.conj().T @ vectorize(np.diag(p))).reshape(16, 16, order="F")
    assert np.abs(out - np.diag(np.diag(out))).max() < 1e-12
    # diagonal observable in the Heisenberg picture follows Q^T
    f = rng.normal(size=16)
    eng = EvolutionEngine(liou)
    Q = classical_generator(m).toarray()
    for t in (0.5, 2.0):
        quantum = np.diag(eng.evolve(np.diag(f).astype(complex), t)).real
        classical = la.expm(t * Q.T) @ f
        assert np.abs(quantum - classical).max() < 1e-8


def test_embedding_at_infinite_temperature_diagonal_sector():
    # each site flips at rate 1/2: magnetisation decays as exp(-t)
    curve = magnetization_curve(model(L=3, beta=0.0), [0.0, 0.5, 2.0])
    assert np.allclose(curve, np.exp(-np.array([0.0, 0.5, 2.0])), atol=1e-12)


def test_perturb_rates_flags():
    m = model(L=4, beta=0.2)
    same, Q0, db0 = perturb_rates(m, 0.0)
    assert db0
    assert np.array_equal(Q0.toarray(), classical_generator(m).toarray())
    uni, Qu, dbu = perturb_rates(m, 0.05, "uniform")
    assert dbu
    assert np.abs(stationary_distribution(Qu) - gibbs_distribution(m)).max() < 1e-12
    asym, Qa, dba = perturb_rates(m, 0.05, "asymmetric")
    assert not dba
    assert np.abs(Qa.toarray().sum(axis=0)).max() < 1e-15
    off = ~np.eye(16, dtype=bool)
    Qa_, Q0_ = Qa.toarray()[off], Q0.toarray()[off]
    # off-diagonal rates move by at most a factor 1 + eps
    assert np.all(Qa_ >= Q0_) and np.all(Qa_ <= 1.05 * Q0_ + 1e-15)
    with pytest.raises(ValueError):
        perturb_rates(m, -0.1)


def test_glauber_rejects_bad_parameters():
    with pytest.raises(ValueError):
        model(L=2)
    with pytest.raises(ValueError):
        model(beta=-1.0)
    with pytest.raises(ValueError):
        RatePerturbation(0.1, "sideways")


def test_kmc_infinite_temperature():
    times = np.linspace(0, 3, 13)
    traj = kmc_simulate(model(L=8, beta=0.0), times, chains=400, seed=3)
    assert traj.mean[0] == 1.0 and traj.stderr[0] == 0.0
    z = np.abs(traj.mean[1:] - np.exp(-times[1:])) / traj.stderr[1:]
    assert z.max() < 4


def test_kmc_reproducible():
    times = np.linspace(0, 2, 5)
    a = kmc_simulate(model(L=6), times, chains=20, seed=9)
    b = kmc_simulate(model(L=6), times, chains=20, seed=9)
    assert np.array_equal(a.samples, b.samples)


def test_kmc_waiting_times_exponential():
    traj = kmc_simulate(model(L=6, beta=0.2), [0.0, 20.0], chains=50, seed=1, record_waits=True)
    scaled = np.array([dt * R for dt, R in traj.waiting_times])
    # R * dt is Exp(1): mean 1, variance 1
    assert scaled.mean() == pytest.approx(1.0, abs=5 / np.sqrt(scaled.size))


def test_kmc_matches_exact_at_high_temperature():
    times = np.linspace(0, 4, 17)
    exact = magnetization_curve(model(L=8, beta=0.2), times)
    traj = kmc_simulate(model(L=16, beta=0.2), times, chains=500, seed=7)
    se = np.where(traj.stderr > 0, traj.stderr, np.inf)
    z = np.abs(traj.mean - exact) / se
    assert np.mean(z <= 3) >= 0.95


def test_high_temperature_gamma_size_independent():
    times = np.linspace(0, 12, 61)
    curves = {L: np.abs(magnetization_curve(model(L=L, beta=0.2), times)) for L in range(4, 11)}
    fit = fit_rapid_mixing(times, curves)
    g = np.array(list(fit.per_size_gamma.values()))
    assert (g.max() - g.min()) / g.min() < 0.05


def test_glauber_stability_flat():
    res = glauber_stability(model(beta=0.2), 0.05, [4, 6, 8], np.linspace(0, 10, 41))
    assert not res.detailed_balance
    assert res.flatness < 0.2
    assert all(v > 0 for v in res.sup_dev.values())


def test_kmc_deviation_paired():
    times = np.linspace(0, 2, 5)
    d, se = kmc_deviation(model(L=6), 0.0, times, chains=50, seed=2)
    assert np.all(d == 0) and np.all(se == 0)


def test_spin_encoding():
    spins = _all_spins(3)
    assert list(spins[0]) == [1, 1, 1]
    assert list(spins[1]) == [1, 1, -1]
    assert list(spins[4]) == [-1, 1, 1]
