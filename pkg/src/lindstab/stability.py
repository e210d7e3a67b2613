"""Stability of local observables under local perturbations of the generator.

The sweep measures ``dev(L, eps, t) = ||A(t) - A~(t)||`` and derives the
size-independent constant ``C_X``. ``duhamel_check`` verifies the integral
identity behind the estimate, ``bound_audit`` assembles the per-site bound
from measured envelopes, and ``counterexample_degenerate`` shows why only
local observables can be expected to be stable.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la

from .diagnostics import (
    INFINITE_DECAY,
    DecayEnvelope,
    LRFit,
    MixingFit,
    ObservableSpec,
    _engine,
    place,
    support_region,
)
from .evolution import fixed_point
from .lattice import Lattice, Region
from .liouvillian import LindbladData, Liouvillian, LocalTerm, Perturbation, single_site_offsets
from .quantum_algebra import SZ, devectorize, operator_norm, trace_norm, vectorize

log = logging.getLogger(__name__)


@dataclass
class StabilityReport:
    sizes: tuple
    eps: tuple
    times: np.ndarray
    deviations: dict  # (L, eps) -> array over times
    observable_norm: float
    observable: ObservableSpec
    model: Liouvillian
    perturbation: Perturbation
    flatness_tol: float = 0.2
    linearity_tol: float = 0.05
    sup_dev: dict = field(default_factory=dict)
    C_by_size: dict = field(default_factory=dict)
    C_X: float = math.nan
    flatness: float = math.nan
    linearity_slope: float = math.nan
    linearity_spread: float = math.nan
    tail_flat: bool = False
    zero_column_max: float = 0.0
    max_dev_ratio: float = 0.0

    def __post_init__(self):
        self._summarise()

    def _summarise(self):
        normA = self.observable_norm
        nonzero = [e for e in self.eps if e > 0]
        for L in self.sizes:
            for e in self.eps:
                self.sup_dev[(L, e)] = float(np.max(self.deviations[(L, e)]))
        zero = [self.sup_dev[(L, 0.0)] for L in self.sizes if 0.0 in self.eps]
        self.zero_column_max = max(zero, default=0.0)
        self.max_dev_ratio = max(self.sup_dev.values()) / normA if normA > 0 else 0.0
        if not nonzero or normA == 0:
            return
        for L in self.sizes:
            self.C_by_size[L] = max(self.sup_dev[(L, e)] / (e * normA) for e in nonzero)
        self.C_X = max(self.C_by_size.values())
        ref = self.C_by_size[max(self.sizes)]
        self.flatness = (
            max(abs(c - ref) for c in self.C_by_size.values()) / ref if ref > 0 else math.inf
        )
        if len(nonzero) >= 2:
            slopes, spreads = [], []
            for L in self.sizes:
                y = np.array([self.sup_dev[(L, e)] for e in nonzero])
                if np.any(y <= 0):
                    slopes.append(math.nan)
                    continue
                slopes.append(np.polyfit(np.log(nonzero), np.log(y), 1)[0])
                ratio = y / np.array(nonzero)
                spreads.append((ratio.max() - ratio.min()) / ratio.mean())
            self.linearity_slope = float(np.mean(slopes))
            self.linearity_spread = float(max(spreads)) if spreads else math.nan
        self.tail_flat = all(self._tail_is_flat(self.deviations[(L, e)]) for L in self.sizes for e in nonzero)

    def _tail_is_flat(self, dev) -> bool:
        """The supremum is attained before the end and the last window does not
        rise above the one before it."""
        n = dev.size
        if n < 10:
            return True
        w = max(2, n // 10)
        last, prev = dev[-w:], dev[-2 * w : -w]
        peak = dev.max()
        tol = 1e-9 * max(peak, 1e-300)
        return bool(last.max() <= prev.max() + tol and (dev[-1] < peak - tol or peak <= tol))

    @property
    def linear(self) -> bool:
        return (
            abs(self.linearity_slope - 1) <= self.linearity_tol
            and self.linearity_spread <= self.linearity_tol
        )

    @property
    def theorem_consistent(self) -> bool:
        return bool(
            self.flatness <= self.flatness_tol
            and self.linear
            and self.tail_flat
            and self.max_dev_ratio <= 2 + 1e-9
        )

    def rows(self):
        """CSV rows ``(L, eps, t, dev)``."""
        for L in self.sizes:
            for e in self.eps:
                for t, d in zip(self.times, self.deviations[(L, e)]):
                    yield L, e, float(t), float(d)

    def to_dict(self) -> dict:
        return {
            "theorem_consistent": self.theorem_consistent,
            "C_X": self.C_X,
            "flatness": self.flatness,
            "flatness_tol": self.flatness_tol,
            "linearity_slope": self.linearity_slope,
            "linearity_spread": self.linearity_spread,
            "linearity_tol": self.linearity_tol,
            "tail_flat": self.tail_flat,
            "zero_column_max": self.zero_column_max,
            "max_dev_over_norm": self.max_dev_ratio,
            "C_by_size": {str(L): c for L, c in self.C_by_size.items()},
            "sup_dev": [{"L": L, "eps": e, "sup_dev": v} for (L, e), v in self.sup_dev.items()],
        }


def stability_sweep(
    A: ObservableSpec,
    model: Liouvillian,
    perturbation: Perturbation,
    sizes: Sequence[int],
    eps: Sequence[float],
    times,
    engine_options: dict | None = None,
    workers: int = 1,
    flatness_tol: float = 0.2,
    linearity_tol: float = 0.05,
) -> StabilityReport:
    """Deviation grid over sizes, strengths and times.

    The unperturbed trajectory is computed once per size and shared by all
    strengths; both evolutions use the same integrator settings and grid.
    Raises :class:`DegenerateFixedPoint` if any unperturbed size has more
    than one steady state.
    """
    times = np.asarray(times, dtype=float)
    sizes = tuple(int(L) for L in sizes)
    eps = tuple(float(e) for e in eps)
    base = model.unperturbed() if model.perturbation is not None else model
    normA = None
    deviations = {}

    def run_size(L):
        m = base.with_lattice(Lattice(base.lattice.dimension, L))
        fixed_point(m)
        op = place(A, m.lattice)
        Ag = op.embed(m.n_sites)
        ref = _engine(m, engine_options).evolve_grid(Ag, times)
        out = {}
        for e in eps:
            if e == 0:
                out[e] = np.zeros(times.size)
                continue
            mp = m.perturb(perturbation.with_strength(perturbation.strength * e))
            traj = _engine(mp, engine_options).evolve_grid(Ag, times)
            out[e] = np.array([operator_norm(a - b) for a, b in zip(ref, traj)])
            log.info("L=%d eps=%g sup dev %.3e", L, e, out[e].max())
        return L, op.norm(), out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_size, sizes))
    else:
        results = [run_size(L) for L in sizes]
    for L, n, out in sorted(results, key=lambda r: r[0]):
        normA = n
        for e, dev in out.items():
            deviations[(L, e)] = dev
    return StabilityReport(
        sizes, eps, times, deviations, normA, A, base, perturbation, flatness_tol, linearity_tol
    )


def duhamel_check(
    A: ObservableSpec, model: Liouvillian, perturbation: Perturbation, t: float, nodes: int = 64
) -> float:
    """Residual of ``A~(t) - A(t) = int_0^t e^{(t-s) L~} E e^{s L} A ds``.

    Dense, so the lattice must be small. Gauss-Legendre quadrature with
    ``nodes`` points.
    """
    base = model.unperturbed() if model.perturbation is not None else model
    if base.superop_dim > 4**5:
        raise ValueError("duhamel_check is dense; use a smaller lattice")
    op = place(A, base.lattice)
    a = vectorize(op.embed(base.n_sites))
    G = base.generator().toarray()
    Gp = base.perturb(perturbation).generator().toarray()
    E = Gp - G
    lhs = la.expm(t * Gp) @ a - la.expm(t * G) @ a
    if t == 0:
        return float(operator_norm(devectorize(lhs)))
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * t * (x + 1)
    w = 0.5 * t * w
    rhs = np.zeros_like(lhs)
    for si, wi in zip(s, w):
        rhs += wi * (la.expm((t - si) * Gp) @ (E @ (la.expm(si * G) @ a)))
    return float(operator_norm(devectorize(lhs - rhs)))


@dataclass
class AuditRow:
    L: int
    eps: float
    bound: float
    measured: float
    shells: list  # cumulative sum over distance shells
    shell_converged: bool

    @property
    def passes(self) -> bool:
        return self.bound >= self.measured


@dataclass
class BoundAudit:
    rows: list
    t0: dict  # distance -> t0(d)
    per_distance: dict  # distance -> contribution per unit cb-norm

    @property
    def passes(self) -> bool:
        return all(r.passes for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "passes": self.passes,
            "t0": {str(d): v for d, v in self.t0.items()},
            "per_distance": {str(d): v for d, v in self.per_distance.items()},
            "rows": [
                {"L": r.L, "eps": r.eps, "bound": r.bound, "measured": r.measured,
                 "shell_converged": r.shell_converged, "passes": r.passes}
                for r in self.rows
            ],
        }


def _envelope_integral(env: DecayEnvelope, t0: float, mixing_fit: MixingFit | None) -> float:
    if mixing_fit is None or not np.isfinite(mixing_fit.gamma):
        return env.integral(t0)
    # beyond the sampled window the slower of the two decay rates is used
    head = env.integral(t0, env.times[-1]) if t0 < env.times[-1] else 0.0
    rate = min(env.tail_rate(), mixing_fit.gamma)
    start = max(t0, env.times[-1])
    v = env(start) if start <= env.times[-1] else env.values[-1] * math.exp(-rate * (start - env.times[-1]))
    return head + v / rate


def bound_audit(
    report: StabilityReport,
    mixing_fit: MixingFit | None,
    lr_fit: LRFit,
    envelope: DecayEnvelope,
    shell_tol: float = 0.01,
) -> BoundAudit:
    """Assemble ``eps sum_u (short-time LR part + int_{t0(d)}^inf Delta)`` and
    compare with the measured supremum deviations.

    For a site at distance ``d >= 1`` the Lieb-Robinson bound controls
    ``||E_u(A(s))||`` up to ``t0(d) = mu d / (2 v)``; its integral is
    ``k e^{-mu d} ((e^{v t0} - 1)/v - t0)``. Past ``t0`` the envelope takes
    over. Sites whose perturbation overlaps ``X`` get the full envelope
    integral. For a non-interacting model (infinite decay rate) distant
    sites contribute nothing.
    """
    cache_t0, per_distance = {}, {}

    def per_unit(d: int) -> float:
        if d in per_distance:
            return per_distance[d]
        if d == 0:
            val = _envelope_integral(envelope, 0.0, mixing_fit)
            cache_t0[d] = 0.0
        elif lr_fit.verdict == INFINITE_DECAY:
            val = 0.0
            cache_t0[d] = math.inf
        else:
            k, v, mu = lr_fit.k, lr_fit.v, lr_fit.mu
            t0 = mu * d / (2 * v)
            cache_t0[d] = t0
            short = k * math.exp(-mu * d) * (math.expm1(v * t0) / v - t0)
            val = short + _envelope_integral(envelope, t0, mixing_fit)
        per_distance[d] = val
        return val

    rows = []
    model = report.model
    pert = report.perturbation
    for L in report.sizes:
        lat = Lattice(model.lattice.dimension, L)
        op = place(report.observable, lat)
        X = support_region(op, lat)
        term = pert.local_term()
        by_d: dict[int, int] = {}
        for u in lat.sites():
            supp = [lat.site(i) for i in term.support(lat, u)]
            d = min(X.distance_to(s) for s in supp)
            by_d[d] = by_d.get(d, 0) + 1
        for e in report.eps:
            if e == 0:
                continue
            cb = pert.with_strength(pert.strength * e).cb_norm_bound() * report.observable_norm
            shells, total = [], 0.0
            for d in sorted(by_d):
                total += cb * by_d[d] * per_unit(d)
                shells.append(total)
            converged = len(shells) < 2 or shells[-1] == 0 or (shells[-1] - shells[-2]) <= shell_tol * shells[-1]
            rows.append(AuditRow(L, e, total, report.sup_dev[(L, e)], shells, converged))
    return BoundAudit(rows, cache_t0, per_distance)


@dataclass
class CounterexampleReport:
    eps: float
    sizes: tuple
    global_trace_distance: np.ndarray
    global_fidelity: np.ndarray
    local_deviation: np.ndarray  # |<Z>_rho - <Z>_rho~| at one site
    local_trace_distance: float
    numeric: np.ndarray  # True where computed from steady states rather than closed form

    def rows(self):
        for i, N in enumerate(self.sizes):
            yield (N, self.eps, float(self.global_trace_distance[i]), float(self.global_fidelity[i]),
                   float(self.local_deviation[i]), bool(self.numeric[i]))

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "sizes": list(self.sizes),
            "global_trace_distance": self.global_trace_distance.tolist(),
            "global_fidelity": self.global_fidelity.tolist(),
            "local_deviation": self.local_deviation.tolist(),
            "local_trace_distance": self.local_trace_distance,
        }


def _reset_data(phi: np.ndarray, gamma: float) -> LindbladData:
    """Single-qubit dissipator pumping everything into ``|phi>``."""
    perp = np.array([-np.conj(phi[1]), np.conj(phi[0])])
    return LindbladData(np.zeros((2, 2)), (math.sqrt(gamma) * np.outer(phi, perp.conj()),))


def counterexample_degenerate(
    eps: float, sizes: Sequence[int], gamma: float = 0.25, numeric_max: int = 4
) -> CounterexampleReport:
    """Product of single-site resets towards ``|0>`` versus towards a state of
    fidelity ``1 - eps`` with it.

    Each site stays within ``2 eps`` in ``<Z>`` while the global steady
    states drift apart: trace distance ``2 sqrt(1 - (1-eps)^N)``. Sizes up
    to ``numeric_max`` are computed from the actual steady states.
    """
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    theta = 2 * math.acos(math.sqrt(1 - eps))
    phi0 = np.array([1.0, 0.0], dtype=complex)
    phi1 = np.array([math.cos(theta / 2), math.sin(theta / 2)], dtype=complex)
    sizes = tuple(int(N) for N in sizes)
    td, fid, loc, num = [], [], [], []
    for N in sizes:
        closed_f = (1 - eps) ** N
        if 2 <= N <= numeric_max:
            lat = Lattice(1, N)
            offs = single_site_offsets(1)
            r0 = fixed_point(Liouvillian(lat, LocalTerm(_reset_data(phi0, gamma), offs))).rho
            r1 = fixed_point(Liouvillian(lat, LocalTerm(_reset_data(phi1, gamma), offs))).rho
            td.append(trace_norm(r0 - r1))
            fid.append(float(np.real(np.trace(r0 @ r1))))
            Z0 = np.kron(SZ, np.eye(2 ** (N - 1)))
            loc.append(float(abs(np.trace(Z0 @ (r0 - r1)))))
            num.append(True)
        else:
            td.append(2 * math.sqrt(max(0.0, 1 - closed_f)))
            fid.append(closed_f)
            loc.append(2 * eps)
            num.append(False)
    local_td = 2 * math.sqrt(eps)
    return CounterexampleReport(eps, sizes, np.array(td), np.array(fid), np.array(loc), local_td, np.array(num))
