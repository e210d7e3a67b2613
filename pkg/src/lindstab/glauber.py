"""Glauber dynamics of the Ising model: exact classical generator, kinetic
Monte Carlo, and the embedding as a diagonal-preserving Lindbladian.

Spin ``+1`` is the qubit state ``|0>`` (the ``+1`` eigenvector of Z). A
configuration is an integer whose most significant bit is site 0, bit
value 1 meaning spin down, so it doubles as a computational-basis index.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .lattice import Lattice
from .liouvillian import LindbladData, Liouvillian, LocalTerm, Perturbation

CLASSICAL_STATE_CAP = 2**20


@dataclass(frozen=True)
class RatePerturbation:
    """Site-local change of flip rates, ``r -> r * (1 + eps * f(s_u, neighbours))``.

    ``kind="uniform"`` multiplies every rate (keeps detailed balance).
    ``kind="asymmetric"`` speeds up down-to-up flips whose forward neighbour
    (along axis 0) is up; the left/right asymmetry drives a current, so no
    measure is reversible for the perturbed chain.
    """

    eps: float
    kind: str = "asymmetric"

    def __post_init__(self):
        if self.kind not in ("uniform", "asymmetric"):
            raise ValueError(f"unknown rate perturbation kind {self.kind!r}")

    def factor(self, spin: int, forward: int) -> float:
        if self.kind == "uniform":
            return 1.0 + self.eps
        return 1.0 + self.eps if (spin < 0 and forward > 0) else 1.0

    @property
    def preserves_detailed_balance(self) -> bool:
        return self.kind == "uniform" or self.eps == 0


@dataclass(frozen=True)
class GlauberModel:
    lattice: Lattice
    beta: float
    J: float = 1.0
    h: float = 0.0
    rule: str = "heat-bath"
    perturbation: RatePerturbation | None = None

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("inverse temperature must be non-negative")
        if self.rule not in ("heat-bath", "metropolis"):
            raise ValueError(f"unknown rate rule {self.rule!r}")
        if min(self.lattice.shape) < 3:
            raise ValueError("Glauber dynamics needs linear size >= 3 (distinct neighbours)")

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def neighbour_offsets(self) -> list[tuple[int, ...]]:
        D = self.lattice.dimension
        out = []
        for axis in range(D):
            for step in (-1, 1):
                e = [0] * D
                e[axis] = step
                out.append(tuple(e))
        return out

    def rate(self, spin: int, neighbours) -> float:
        """Flip rate of a site given its spin and its neighbours' spins, ordered
        as :attr:`neighbour_offsets`."""
        dE = 2.0 * spin * (self.J * float(sum(neighbours)) + self.h)
        if self.rule == "heat-bath":
            r = 0.5 * (1.0 - np.tanh(0.5 * self.beta * dE))
        else:
            r = min(1.0, float(np.exp(-self.beta * dE)))
        if self.perturbation is not None:
            r *= self.perturbation.factor(spin, int(neighbours[1]))
        if r <= 0:
            raise ValueError("flip rates must be positive")
        return float(r)

    def energy(self, spins: np.ndarray) -> float:
        s = np.asarray(spins).reshape(self.lattice.shape)
        bonds = sum(float((s * np.roll(s, -1, axis=a)).sum()) for a in range(self.lattice.dimension))
        return -self.J * bonds - self.h * float(s.sum())

    def perturbed(self, perturbation: RatePerturbation) -> "GlauberModel":
        return replace(self, perturbation=perturbation)

    def with_lattice(self, lattice: Lattice) -> "GlauberModel":
        return replace(self, lattice=lattice)


def _neighbour_table(lattice: Lattice, offsets) -> np.ndarray:
    return np.array(
        [[lattice.index(lattice.translate(u, o)) for o in offsets] for u in lattice.sites()],
        dtype=np.int64,
    )


def _all_spins(n: int) -> np.ndarray:
    states = np.arange(2**n, dtype=np.int64)
    bits = (states[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1 - 2 * bits


def gibbs_distribution(model: GlauberModel) -> np.ndarray:
    n = model.n_sites
    if 2**n > CLASSICAL_STATE_CAP:
        raise ValueError("state space exceeds cap")
    spins = _all_spins(n)
    E = np.array([model.energy(s) for s in spins])
    w = np.exp(-model.beta * (E - E.min()))
    return w / w.sum()


def classical_generator(model: GlauberModel) -> sp.csr_matrix:
    """Rate matrix ``Q`` with ``Q[s', s]`` the rate of ``s -> s'``; columns sum to zero."""
    n = model.n_sites
    N = 2**n
    if N > CLASSICAL_STATE_CAP:
        raise ValueError(f"state space 2^{n} exceeds cap {CLASSICAL_STATE_CAP}")
    spins = _all_spins(n)
    nbr = _neighbour_table(model.lattice, model.neighbour_offsets)
    rows, cols, vals = [], [], []
    diag = np.zeros(N)
    states = np.arange(N, dtype=np.int64)
    for u in range(n):
        rates = np.array([model.rate(int(s), nb) for s, nb in zip(spins[:, u], spins[:, nbr[u]])])
        target = states ^ (1 << (n - 1 - u))
        rows.append(target)
        cols.append(states)
        vals.append(rates)
        diag -= rates
    rows.append(states)
    cols.append(states)
    vals.append(diag)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )


def detailed_balance_violation(model: GlauberModel, pi: np.ndarray | None = None) -> float:
    """``max |pi(s) Q[s',s] - pi(s') Q[s,s']|`` against the Gibbs measure (or ``pi``)."""
    Q = classical_generator(model).toarray()
    pi = gibbs_distribution(replace(model, perturbation=None)) if pi is None else pi
    flux = Q * pi[None, :]
    np.fill_diagonal(flux, 0.0)
    return float(np.abs(flux - flux.T).max())


def magnetization_curve(model: GlauberModel, times, initial_spin: int = 1, site: int = 0) -> np.ndarray:
    """Exact ``<s_site(t)>`` starting from the all-``initial_spin`` configuration."""
    Q = classical_generator(model).tocsc()
    n = model.n_sites
    p = np.zeros(2**n)
    p[0 if initial_spin > 0 else 2**n - 1] = 1.0
    obs = _all_spins(n)[:, site].astype(float)
    out = []
    t_prev = 0.0
    for t in np.asarray(times, dtype=float):
        if t < t_prev:
            raise ValueError("time grid must be sorted")
        if t > t_prev:
            p = expm_multiply((t - t_prev) * Q, p)
        t_prev = t
        out.append(float(obs @ p))
    return np.array(out)


def perturb_rates(model: GlauberModel, eps: float, kind: str = "asymmetric"):
    """Perturbed model plus its classical generator and whether detailed balance survives.

    ``eps`` bounds the per-site rate change: ``|r~ - r| <= eps * r <= eps``.
    """
    if eps < 0:
        raise ValueError("epsilon must be >= 0")
    pert = RatePerturbation(eps, kind)
    perturbed = model.perturbed(pert)
    Q = classical_generator(perturbed)
    pi = stationary_distribution(Q)
    db = detailed_balance_violation(perturbed, pi) <= 1e-12
    return perturbed, Q, db


def stationary_distribution(Q) -> np.ndarray:
    """Normalised null vector of a rate matrix (dense solve with one row replaced by normalisation)."""
    Q = Q.toarray() if sp.issparse(Q) else np.asarray(Q)
    N = Q.shape[0]
    M = Q.copy()
    M[-1, :] = 1.0
    b = np.zeros(N)
    b[-1] = 1.0
    return np.linalg.solve(M, b)


def glauber_lindblad_data(model: GlauberModel) -> tuple[LindbladData, tuple[tuple[int, ...], ...]]:
    """Jumps ``sqrt(r(c)) |c^u><c|`` for every configuration ``c`` of a site and
    its neighbours, with the flipped site first in the local ordering."""
    offs = [(0,) * model.lattice.dimension] + model.neighbour_offsets
    k = len(offs)
    dim = 2**k
    jumps = []
    for c in range(dim):
        bits = [(c >> (k - 1 - q)) & 1 for q in range(k)]
        spins = [1 - 2 * b for b in bits]
        r = model.rate(spins[0], spins[1:])
        flipped = c ^ (1 << (k - 1))
        K = np.zeros((dim, dim), dtype=complex)
        K[flipped, c] = np.sqrt(r)
        jumps.append(K)
    return LindbladData(np.zeros((dim, dim)), tuple(jumps)), tuple(offs)


def embed_glauber(model: GlauberModel, **kwargs) -> Liouvillian:
    """Quantum Liouvillian whose action on diagonal operators is the classical generator."""
    data, offs = glauber_lindblad_data(replace(model, perturbation=None))
    liou = Liouvillian(model.lattice, LocalTerm(data, offs), name="glauber-ising", **kwargs)
    if model.perturbation is not None:
        pdata, _ = glauber_lindblad_data(model)
        liou = liou.perturb(Perturbation(pdata - data, offs, 1.0))
    return liou


class _RateTree:
    """Binary sum tree over site rates for O(log n) event selection."""

    def __init__(self, rates: np.ndarray):
        n = len(rates)
        size = 1
        while size < n:
            size *= 2
        self.size = size
        self.tree = np.zeros(2 * size)
        self.tree[size : size + n] = rates
        for i in range(size - 1, 0, -1):
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1]

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def update(self, i: int, rate: float) -> None:
        j = i + self.size
        self.tree[j] = rate
        j //= 2
        while j:
            self.tree[j] = self.tree[2 * j] + self.tree[2 * j + 1]
            j //= 2

    def find(self, x: float) -> int:
        j = 1
        while j < self.size:
            left = self.tree[2 * j]
            if x < left:
                j = 2 * j
            else:
                x -= left
                j = 2 * j + 1
        return j - self.size


@dataclass
class ClassicalTrajectorySet:
    """Per-chain site-averaged magnetisation sampled on a time grid."""

    seed: int
    times: np.ndarray
    samples: np.ndarray  # (chains, len(times))
    events: np.ndarray  # flips per chain
    initial_spin: int = 1
    waiting_times: list = field(default_factory=list)

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        n = self.samples.shape[0]
        return self.samples.std(axis=0, ddof=1) / np.sqrt(n)


def _chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(chain)]))


def kmc_simulate(
    model: GlauberModel,
    times,
    chains: int = 1000,
    seed: int = 0,
    initial_spin: int = 1,
    record_waits: bool = False,
) -> ClassicalTrajectorySet:
    """Gillespie trajectories of the mean magnetisation.

    The initial state is translation invariant, so the site average is an
    unbiased estimator of ``<s_0(t)>`` with lower variance.
    """
    times = np.asarray(times, dtype=float)
    if times.size and np.any(np.diff(times) < 0):
        raise ValueError("time grid must be sorted")
    n = model.n_sites
    nbr = _neighbour_table(model.lattice, model.neighbour_offsets)
    samples = np.empty((chains, times.size))
    events = np.zeros(chains, dtype=np.int64)
    waits = []
    horizon = times[-1] if times.size else 0.0
    for c in range(chains):
        rng = _chain_rng(seed, c)
        spins = np.full(n, initial_spin, dtype=np.int64)
        rates = np.array([model.rate(int(spins[u]), spins[nbr[u]]) for u in range(n)])
        tree = _RateTree(rates)
        total_m = float(spins.sum())
        t = 0.0
        k = 0
        while True:
            R = tree.total
            if R <= 0:
                raise RuntimeError("frozen configuration: total rate is zero")
            dt = rng.exponential(1.0 / R)
            if record_waits:
                waits.append((dt, R))
            t_next = t + dt
            while k < times.size and times[k] < t_next:
                samples[c, k] = total_m / n
                k += 1
            if t_next > horizon:
                break
            u = tree.find(rng.random() * R)
            spins[u] = -spins[u]
            total_m += 2 * spins[u]
            events[c] += 1
            for v in [u, *nbr[u]]:
                tree.update(int(v), model.rate(int(spins[v]), spins[nbr[v]]))
            t = t_next
        while k < times.size:
            samples[c, k] = total_m / n
            k += 1
    return ClassicalTrajectorySet(seed, times, samples, events, initial_spin, waits)


@dataclass
class GlauberStability:
    """Exact local-magnetisation deviation under a rate perturbation, per size."""

    eps: float
    kind: str
    times: np.ndarray
    curves: dict  # L -> (unperturbed, perturbed)
    detailed_balance: bool

    @property
    def sup_dev(self) -> dict:
        return {L: float(np.max(np.abs(a - b))) for L, (a, b) in self.curves.items()}

    @property
    def flatness(self) -> float:
        sup = self.sup_dev
        ref = sup[max(sup)]
        return max(abs(v - ref) for v in sup.values()) / ref if ref > 0 else 0.0

    def rows(self):
        for L, (a, b) in self.curves.items():
            for t, x, y in zip(self.times, a, b):
                yield L, self.eps, float(t), float(x), float(y), float(abs(x - y))


def glauber_stability(model: GlauberModel, eps: float, sizes, times, kind: str = "asymmetric") -> GlauberStability:
    times = np.asarray(times, dtype=float)
    curves = {}
    db = True
    for L in sizes:
        m = model.with_lattice(Lattice(model.lattice.dimension, L))
        mp, _, db_L = perturb_rates(m, eps, kind)
        db = db and db_L
        curves[int(L)] = (magnetization_curve(m, times), magnetization_curve(mp, times))
    return GlauberStability(eps, kind, times, curves, db)


def kmc_deviation(model: GlauberModel, eps: float, times, chains: int = 1000, seed: int = 0, kind: str = "asymmetric"):
    """Monte Carlo estimate of ``m~(t) - m(t)`` and its standard error.

    Both dynamics are driven by the same per-chain random streams, so the
    per-chain differences are paired and their spread is small.
    """
    base = kmc_simulate(model, times, chains, seed)
    pert = kmc_simulate(model.perturbed(RatePerturbation(eps, kind)), times, chains, seed)
    diff = pert.samples - base.samples
    return diff.mean(axis=0), diff.std(axis=0, ddof=1) / np.sqrt(chains)
