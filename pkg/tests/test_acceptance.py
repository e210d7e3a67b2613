"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Tolerances are pinned as module constants so a change shows up in review.
"""

import json
import time

import numpy as np
import pytest
import scipy.linalg as la

from lindstab.cli import main as cli_main
from lindstab.diagnostics import (
    convergence_curve,
    decay_envelope,
    default_slopes,
    fit_lr,
    fit_rapid_mixing,
    localized_error,
    lr_probe,
    schedule_horizon,
    support_region,
)
from lindstab.evolution import DegenerateFixedPoint, EvolutionEngine, fixed_point
from lindstab.glauber import (
    GlauberModel,
    RatePerturbation,
    gibbs_distribution,
    glauber_stability,
    kmc_deviation,
    kmc_simulate,
    magnetization_curve,
)
from lindstab.lattice import Lattice
from lindstab.liouvillian import translation_superoperator
from lindstab.presets import PRESETS, DEFAULTS, field_perturbation, make_model
from lindstab.quantum_algebra import devectorize, operator_norm, pauli_string, trace_norm, vectorize
from lindstab.stability import counterexample_degenerate, duhamel_check

pytestmark = pytest.mark.slow

Z0 = pauli_string({0: "Z"})

# criterion 1
ORACLE_TOL = 1e-8
GAMMA_REL_TOL = 0.02
DELTA_TOL = 0.05
RUNTIME_1 = 60.0
# criterion 2
FP_TRACE_TOL = 1e-10
GIBBS_TOL = 1e-8
# criterion 3
FLATNESS_TOL = 0.20
LINEARITY_TOL = 0.05
# criterion 4
DUHAMEL_TOL = 1e-6
# "exactly zero" for product models, allowing a few ulps from summation order
PRODUCT_ZERO_TOL = 1e-15
# criterion 6
ENVELOPE_TOL = 1e-6
# criterion 7
GLAUBER_FLATNESS_TOL = 0.20
KMC_SIGMAS = 3.0
KMC_COVERAGE = 0.95
# criterion 8
LOCAL_SLACK = 1e-12
# criterion 9
INVARIANT_TOL = 1e-9


def verdict(capsys, n, title, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n} ({title}): {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def test_criterion_1_analytic_oracle(capsys):
    start = time.perf_counter()
    g = DEFAULTS["depolarizing"]["gamma"]
    times = np.linspace(0, 20, 201)
    sizes = range(3, 8)
    err = 0.0
    for L in sizes:
        m = make_model("depolarizing", 1, L)
        A = Z0.embed(L)
        traj = EvolutionEngine(m).evolve_grid(A, times)
        err = max(err, max(np.abs(B - np.exp(-2 * g * t) * A).max() for t, B in zip(times, traj)))
    fit = fit_rapid_mixing(times, convergence_curve(Z0, make_model("depolarizing", 1, 3), sizes, times))
    elapsed = time.perf_counter() - start
    rel = abs(fit.gamma - 2 * g) / (2 * g)
    ok = err <= ORACLE_TOL and rel <= GAMMA_REL_TOL and abs(fit.delta) < DELTA_TOL and elapsed < RUNTIME_1
    verdict(capsys, 1, "analytic oracle", ok,
            f"max err {err:.1e}, gamma {fit.gamma:.5f} vs {2 * g}, delta {fit.delta:.3g}, {elapsed:.1f} s")


def test_criterion_2_fixed_points(capsys):
    dists = []
    for L in (3, 4, 5, 6):
        fp = fixed_point(make_model("depolarizing", 1, L))
        dists.append(trace_norm(fp.rho - np.eye(2**L) / 2**L))
    try:
        fixed_point(make_model("dephasing", 1, 3))
        raised = False
    except DegenerateFixedPoint:
        raised = True
    gm = GlauberModel(Lattice(1, 4), 0.3)
    fp = fixed_point(make_model("glauber-ising", 1, 4, beta=0.3))
    gibbs_err = np.abs(np.diag(fp.rho).real - gibbs_distribution(gm)).max()
    ok = max(dists) <= FP_TRACE_TOL and raised and gibbs_err <= GIBBS_TOL
    verdict(capsys, 2, "fixed points", ok,
            f"depolarizing trace distance {max(dists):.1e}, dephasing raises {raised}, Gibbs err {gibbs_err:.1e}")


def test_criterion_3_stability(capsys, tmp_path):
    start = time.perf_counter()
    code = cli_main(["stability", "--model", "depolarizing", "--sizes", "3..7", "--eps", "1e-3,1e-2,1e-1",
                     "--times", "0:20:201", "--perturbation", "field-x", "--threads", "2",
                     "--out-dir", str(tmp_path)])
    (run,) = [p for p in tmp_path.iterdir() if p.is_dir()]
    rep = json.loads((run / "report.json").read_text())
    elapsed = time.perf_counter() - start
    ok = (code == 0 and rep["theorem_consistent"] and rep["flatness"] <= FLATNESS_TOL
          and rep["linearity_spread"] <= LINEARITY_TOL)
    verdict(capsys, 3, "size-independent stability", ok,
            f"exit {code}, C_X {rep['C_X']:.4f}, flatness {rep['flatness']:.1e}, "
            f"slope {rep['linearity_slope']:.4f}, spread {rep['linearity_spread']:.4f}, {elapsed:.0f} s")


def test_criterion_4_duhamel(capsys):
    res = [
        duhamel_check(Z0, make_model("depolarizing", 1, 3), field_perturbation(1, "X", 0.1), 1.0, nodes=64),
        duhamel_check(Z0, make_model("ising-depolarizing", 1, 3), field_perturbation(1, "X", 0.1), 3.0, nodes=64),
    ]
    verdict(capsys, 4, "Duhamel identity", max(res) <= DUHAMEL_TOL, f"residuals {res[0]:.1e}, {res[1]:.1e}")


def test_criterion_5_lieb_robinson(capsys):
    times = np.linspace(0, 4, 17)
    product = {}
    for name in ("depolarizing", "dephasing", "amplitude-damping"):
        L = 8 if name == "depolarizing" else 5
        tab = lr_probe(Z0, make_model(name, 1, L), times)
        product[name] = np.abs(tab.values[:, tab.distances >= 1]).max()
    products_zero = all(v <= PRODUCT_ZERO_TOL for v in product.values())

    m = make_model("ising-depolarizing", 1, 8)
    tab = lr_probe(Z0, m, times)
    fit = fit_lr(tab)
    t, d, y = tab.samples()
    y = y / tab.probe_cb_norm
    dominated = np.mean(y <= fit.bound(t, d) * (1 + 1e-9) + 1e-14)

    le_times = np.linspace(0, 2, 5)
    errs = [localized_error(Z0, m, s, le_times).max() for s in (1, 2, 3)]
    decreasing = errs[0] > errs[1] > errs[2]
    ok = products_zero and fit.mu > 0 and dominated == 1.0 and decreasing and errs[2] == 0.0
    verdict(capsys, 5, "Lieb-Robinson structure", ok,
            f"product max {max(product.values()):.1e}, k {fit.k:.3g} v {fit.v:.3g} mu {fit.mu:.3g}, "
            f"dominated {dominated:.0%}, localized errors {['%.1e' % e for e in errs]}")


def test_criterion_6_envelope(capsys):
    m8 = make_model("ising-depolarizing", 1, 8)
    lr = fit_lr(lr_probe(Z0, m8, np.linspace(0, 4, 17)))
    slopes = default_slopes(lr)
    radius = 2
    grid = np.linspace(0, schedule_horizon(slopes, radius), 21)
    env8 = decay_envelope(Z0, m8, grid, slopes=slopes, max_radius=radius)
    env10 = decay_envelope(Z0, make_model("ising-depolarizing", 1, 10), grid, slopes=slopes, max_radius=radius)
    diff = np.abs(env8.values - env10.values).max()
    verdict(capsys, 6, "size-independent envelope", diff <= ENVELOPE_TOL,
            f"max |Delta_8 - Delta_10| {diff:.1e} on {grid.size} times up to t={grid[-1]:.3f}")


def test_criterion_7_glauber(capsys):
    eps = 0.05
    times = np.linspace(0, 10, 41)
    base = GlauberModel(Lattice(1, 8), 0.2)
    res = glauber_stability(base, eps, [4, 6, 8], times, "asymmetric")

    pert8 = base.perturbed(RatePerturbation(eps, "asymmetric"))
    exact = magnetization_curve(pert8, times)
    big = GlauberModel(Lattice(1, 16), 0.2)
    traj = kmc_simulate(big.perturbed(RatePerturbation(eps, "asymmetric")), times, chains=1000, seed=11)
    se = np.where(traj.stderr > 0, traj.stderr, np.inf)
    cover_m = np.mean(np.abs(traj.mean - exact) <= KMC_SIGMAS * se + 1e-15)

    m8, mp8 = res.curves[8]
    diff, dse = kmc_deviation(big, eps, times, chains=1000, seed=12)
    dse = np.where(dse > 0, dse, np.inf)
    cover_d = np.mean(np.abs(diff - (mp8 - m8)) <= KMC_SIGMAS * dse + 1e-15)
    ok = (not res.detailed_balance and res.flatness <= GLAUBER_FLATNESS_TOL
          and cover_m >= KMC_COVERAGE and cover_d >= KMC_COVERAGE)
    verdict(capsys, 7, "Glauber stability", ok,
            f"sup dev {', '.join(f'L={L}: {v:.4f}' for L, v in res.sup_dev.items())}, flatness {res.flatness:.1%}, "
            f"KMC within 3 SE: magnetisation {cover_m:.0%}, deviation {cover_d:.0%}")


def test_criterion_8_counterexample(capsys):
    eps = 0.1
    sizes = [1, 2, 3, 4, 8, 16, 32, 50]
    rep = counterexample_degenerate(eps, sizes)
    td = np.asarray(rep.global_trace_distance)
    closed = 2 * np.sqrt(1 - (1 - eps) ** np.asarray(sizes, dtype=float))
    ok = (np.all(np.diff(td) > 0) and td[-1] > 1.99 and np.abs(td - closed).max() < 1e-8
          and np.max(rep.local_deviation) <= 2 * eps + LOCAL_SLACK)
    verdict(capsys, 8, "counterexample contrast", ok,
            f"trace distance {td[0]:.3f} (N=1) to {td[-1]:.4f} (N=50), local deviation max "
            f"{np.max(rep.local_deviation):.3f} <= {2 * eps}")


def _invariants(model, rng):
    n = model.n_sites
    d = 2**n
    G = model.generator()
    eng = EvolutionEngine(G)
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    A = (X + X.conj().T) / 2
    A /= operator_norm(A)
    Y = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = Y @ Y.conj().T
    rho /= np.trace(rho).real
    checks = {}
    checks["unitality"] = np.abs(G @ vectorize(np.eye(d))).max()
    At = {t: eng.evolve(A, t) for t in (0.4, 1.0, 1.4)}
    checks["contractivity"] = max(0.0, max(operator_norm(B) for B in At.values()) - 1.0)
    checks["semigroup"] = np.abs(eng.evolve(At[0.4], 1.0) - At[1.4]).max()
    rho_t = eng.dual_evolve(rho, 1.0)
    checks["duality"] = max(abs(np.trace(rho @ At[1.0]) - np.trace(rho_t @ A)), abs(np.trace(rho_t) - 1))
    checks["hermiticity"] = max(np.abs(B - B.conj().T).max() for B in At.values())
    lat = model.lattice
    shifts = [tuple(int(i == a) for i in range(lat.dimension)) for a in range(lat.dimension)]
    checks["translation"] = max(
        abs(T @ G @ T.T - G).max() for T in (translation_superoperator(lat, s) for s in shifts)
    )
    return checks


def test_criterion_9_invariants(capsys):
    rng = np.random.default_rng(2024)
    cases = [(name, 1, 3) for name in PRESETS] + [(name, 1, 4) for name in PRESETS]
    cases += [(name, 2, 2) for name in PRESETS if name != "glauber-ising"]
    worst = {}
    for name, D, L in cases:
        for key, val in _invariants(make_model(name, D, L), rng).items():
            worst[key] = max(worst.get(key, 0.0), float(val))
    ok = all(v <= INVARIANT_TOL for v in worst.values())
    verdict(capsys, 9, "invariants across presets", ok,
            f"{len(cases)} models, worst " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
