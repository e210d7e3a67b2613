"""Numerical probes of the hypotheses and intermediate inequalities.

Every fitted bound here is a dominating envelope of its data, never a
least-squares regression through it: the statements being checked are
inequalities, so a fit that undercuts a sample would not certify anything.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg as la
from scipy.optimize import linprog, minimize_scalar

from .evolution import EvolutionEngine, FixedPoint, fixed_point, infinite_time_limit
from .lattice import Lattice, Region, torus_distance
from .liouvillian import Liouvillian, RestrictedLiouvillian
from .quantum_algebra import SX, Operator, embed, operator_norm

log = logging.getLogger(__name__)

RAPIDLY_MIXING = "RapidlyMixing"
NOT_RAPIDLY_MIXING = "NotRapidlyMixing"
FINITE = "Finite"
INFINITE_DECAY = "InfiniteDecay"

ObservableSpec = Operator | Callable[[Lattice], Operator]


class ScheduleExhausted(ValueError):
    pass


def place(A: ObservableSpec, lattice: Lattice) -> Operator:
    op = A(lattice) if callable(A) else A
    if max(op.sites) >= lattice.n_sites:
        raise ValueError(f"observable support {op.sites} does not fit on lattice {lattice.shape}")
    return op


def support_region(A: Operator, lattice: Lattice) -> Region:
    return Region(lattice, tuple(lattice.site(s) for s in A.sites))


def _engine(generator, options) -> EvolutionEngine:
    return EvolutionEngine(generator, **(options or {}))


# ---------------------------------------------------------------------------
# rapid mixing


def convergence_curve(
    A: ObservableSpec,
    model: Liouvillian,
    sizes: Sequence[int],
    times,
    engine_options: dict | None = None,
) -> dict[int, np.ndarray]:
    """``||A(t) - A(inf)||`` on ``times`` for each linear size in ``sizes``."""
    times = np.asarray(times, dtype=float)
    out = {}
    for L in sizes:
        m = model.with_lattice(Lattice(model.lattice.dimension, L))
        op = place(A, m.lattice)
        Ag = op.embed(m.n_sites)
        fp = fixed_point(m)
        Ainf = infinite_time_limit(Ag, fp)
        traj = _engine(m, engine_options).evolve_grid(Ag, times)
        out[L] = np.array([operator_norm(B - Ainf) for B in traj])
    return out


@dataclass
class MixingFit:
    """Dominating bound ``c L^delta exp(-gamma t)``."""

    c: float
    delta: float
    gamma: float
    window: tuple[float, float]
    residual: float
    verdict: str = RAPIDLY_MIXING
    per_size_gamma: dict = field(default_factory=dict)
    eta: float | None = None

    def bound(self, L, t):
        return self.c * np.power(L, self.delta) * np.exp(-self.gamma * np.asarray(t))

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "delta": self.delta,
            "gamma": self.gamma,
            "window": list(self.window),
            "residual": self.residual,
            "verdict": self.verdict,
            "per_size_gamma": {str(k): v for k, v in self.per_size_gamma.items()},
        }


def _post_transient(t, y, floor_rel=1e-12):
    y0 = y[0]
    if y0 <= 0:
        return None
    below = np.flatnonzero(y < 0.9 * y0)
    if below.size == 0:
        return np.zeros(0, dtype=int)
    idx = np.arange(below[0], y.size)
    return idx[y[idx] > floor_rel * y0]


def fit_rapid_mixing(times, curves: Mapping[int, np.ndarray], min_points: int = 10) -> MixingFit:
    """Fit ``||A(t)-A(inf)|| <= c L^delta exp(-gamma t)`` to curves at >= 3 sizes.

    ``gamma`` is the smallest late-time log-slope over sizes, ``delta`` the
    log-log slope of the per-size prefactors (clamped at 0), and ``c`` the
    smallest constant for which the bound dominates every sample.
    """
    t = np.asarray(times, dtype=float)
    if len(curves) < 3:
        raise ValueError("need curves at three or more sizes")
    gammas = {}
    windows = []
    for L, y in curves.items():
        y = np.asarray(y, dtype=float)
        idx = _post_transient(t, y)
        if idx is None:
            raise ValueError(f"curve at L={L} starts at zero; nothing to fit")
        if idx.size < min_points:
            # a curve that never leaves its initial plateau is not decaying
            if np.flatnonzero(y < 0.9 * y[0]).size == 0:
                gammas[L] = 0.0
                continue
            raise ValueError(f"curve at L={L} has only {idx.size} usable points past the transient")
        late = idx[idx.size // 2 :]
        slope = np.polyfit(t[late], np.log(y[late]), 1)[0]
        gammas[L] = -float(slope)
        windows.append((t[idx[0]], t[idx[-1]]))
    gamma = min(gammas.values())
    if gamma <= 0:
        return MixingFit(math.nan, math.nan, gamma, (math.nan, math.nan), math.nan,
                         NOT_RAPIDLY_MIXING, gammas)
    sizes = np.array(sorted(curves), dtype=float)
    pref = np.array([np.max(np.asarray(curves[int(L)]) * np.exp(gamma * t)) for L in sizes])
    delta = max(0.0, float(np.polyfit(np.log(sizes), np.log(pref), 1)[0]))
    c = float(max(np.max(np.asarray(curves[int(L)]) * np.exp(gamma * t)) / L**delta for L in sizes))
    window = (min(w[0] for w in windows), max(w[1] for w in windows))
    slack = []
    for L in sizes:
        y = np.asarray(curves[int(L)], dtype=float)
        idx = _post_transient(t, y)
        b = c * L**delta * np.exp(-gamma * t[idx])
        slack.append(np.log(b) - np.log(y[idx]))
    residual = float(np.mean(np.concatenate(slack)))
    return MixingFit(c, delta, gamma, window, residual, RAPIDLY_MIXING, gammas)


def spectral_gap(model: Liouvillian, L: int | None = None) -> float:
    """``-max Re(lambda)`` over the spectrum with the leading (stationary) eigenvalue removed."""
    m = model if L is None else model.with_lattice(Lattice(model.lattice.dimension, L))
    if m.superop_dim > 4**5:
        raise ValueError("spectral gap is computed densely; dimension above 4^5")
    vals = la.eigvals(m.generator().toarray())
    re = np.sort(vals.real)[::-1]
    return float(-re[1]) if re.size > 1 else 0.0


# ---------------------------------------------------------------------------
# Lieb-Robinson structure


@dataclass
class LRProbeTable:
    times: np.ndarray
    distances: np.ndarray
    values: np.ndarray  # (len(times), len(distances))
    probe_sites: tuple
    probe_cb_norm: float

    def samples(self):
        T, Dd = np.meshgrid(self.times, self.distances, indexing="ij")
        return T.ravel(), Dd.ravel(), self.values.ravel()


def probe_site(region: Region, d: int) -> int:
    """First site along the positive axis-0 direction at distance ``d`` from ``region``."""
    lattice = region.lattice
    origin = region.sites[0]
    for k in range(1, lattice.shape[0]):
        cand = list(origin)
        cand[0] = (cand[0] + k) % lattice.shape[0]
        if region.distance_to(tuple(cand)) == d:
            return lattice.index(tuple(cand))
    raise ValueError(f"no site at distance {d} from the region along axis 0")


def commutator_probe(P: np.ndarray = SX) -> tuple[Callable, float]:
    """Probe ``T(B) = i[P, B]`` and its cb-norm bound ``2||P||``."""

    def apply(Pg, B):
        return 1j * (Pg @ B - B @ Pg)

    return apply, 2.0 * operator_norm(P)


def lr_probe(
    A: ObservableSpec,
    model: Liouvillian,
    times,
    distances: Sequence[int] | None = None,
    probe: np.ndarray = SX,
    engine_options: dict | None = None,
) -> LRProbeTable:
    """``||T_d(A(t))||`` for single-site commutator probes at distance ``d`` from ``supp A``."""
    times = np.asarray(times, dtype=float)
    op = place(A, model.lattice)
    X = support_region(op, model.lattice)
    if distances is None:
        far = max(X.distance_to(u) for u in model.lattice.sites())
        distances = range(1, max(far, 1) + 1)
    distances = np.array(list(distances), dtype=int)
    if np.any(distances < 1):
        raise ValueError("probe distances must be >= 1")
    apply, cb = commutator_probe(probe)
    n = model.n_sites
    sites = [probe_site(X, int(d)) for d in distances]
    probes = [embed(probe, [u], n) for u in sites]
    ident = np.eye(2**n)
    for Pg in probes:
        if np.abs(apply(Pg, ident)).max() != 0:
            raise ValueError("probe does not annihilate the identity")
    traj = _engine(model, engine_options).evolve_grid(op.embed(n), times)
    vals = np.array([[operator_norm(apply(Pg, B)) for Pg in probes] for B in traj])
    return LRProbeTable(times, distances, vals, tuple(sites), cb)


@dataclass
class LRFit:
    """Dominating bound ``k (exp(v t) - 1) exp(-mu d)`` per unit probe cb-norm."""

    k: float
    v: float
    mu: float
    residual: float
    verdict: str = FINITE

    def bound(self, t, d):
        if self.verdict == INFINITE_DECAY:
            return np.zeros(np.broadcast(np.asarray(t), np.asarray(d)).shape)
        return self.k * np.expm1(self.v * np.asarray(t)) * np.exp(-self.mu * np.asarray(d))

    def to_dict(self) -> dict:
        return {"k": self.k, "v": self.v, "mu": self.mu, "residual": self.residual, "verdict": self.verdict}


def _log_expm1(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 30, x + np.log1p(-np.exp(-np.minimum(x, 700))), np.log(np.expm1(np.minimum(x, 30))))


def _lr_lp(t, d, logy, v):
    """Best ``(log k, mu)`` for fixed ``v``; returns (total slack, log k, mu)."""
    b = logy - _log_expm1(v * t)
    n = t.size
    # minimise sum(logk - mu d_i - b_i) s.t. logk - mu d_i >= b_i, mu >= 0
    res = linprog(
        c=[n, -d.sum()],
        A_ub=np.column_stack([-np.ones(n), d]),
        b_ub=-b,
        bounds=[(None, None), (0, None)],
        method="highs",
    )
    if not res.success:
        return math.inf, math.nan, math.nan
    logk, mu = res.x
    return float(res.fun - b.sum()), float(logk), float(mu)


def fit_lr(table: LRProbeTable, floor: float = 1e-14) -> LRFit:
    """Smallest-slack dominating Lieb-Robinson bound for the probe data.

    For each trial velocity the pair ``(log k, mu)`` solves a linear
    program in the log domain; the velocity is then optimised in one
    dimension.
    """
    t, d, y = table.samples()
    y = y / table.probe_cb_norm
    keep = y > floor
    if not np.any(keep):
        return LRFit(0.0, math.nan, math.inf, 0.0, INFINITE_DECAY)
    t, d, y = t[keep], d[keep].astype(float), y[keep]
    if np.any(t <= 0):
        raise ValueError("nonzero probe signal at t=0 cannot be dominated by the bound")
    if np.unique(d).size < 2:
        raise ValueError("need nonzero probe data at two or more distances to fit a decay rate")
    logy = np.log(y)

    def slack(logv):
        return _lr_lp(t, d, logy, math.exp(logv))[0]

    grid = np.linspace(math.log(1e-3), math.log(1e2), 61)
    vals = [slack(g) for g in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    opt = minimize_scalar(slack, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    logv = opt.x if opt.fun <= vals[i] else grid[i]
    v = math.exp(logv)
    total, logk, mu = _lr_lp(t, d, logy, v)
    k = math.exp(logk)
    # guard the dominance against LP round-off
    log_ratio = np.max(logy - logk - _log_expm1(v * t) + mu * d)
    if log_ratio > 0:
        k *= math.exp(log_ratio)
    return LRFit(k, v, mu, total / t.size, FINITE)


def _restricted_trajectory(restricted: RestrictedLiouvillian, op: Operator, times, engine_options):
    local = restricted.to_restricted(op.sites)
    A_s = embed(op.matrix, local, restricted.n_sites)
    return _engine(restricted, engine_options).evolve_grid(A_s, times)


def localized_error(
    A: ObservableSpec,
    model: Liouvillian,
    s: int,
    times,
    engine_options: dict | None = None,
) -> np.ndarray:
    """``||A(t) - A_s(t)||`` with ``A_s`` evolved on the restricted tori of ``X(s)``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    op = place(A, model.lattice)
    X = support_region(op, model.lattice)
    restricted = model.restrict(s, X)
    n = model.n_sites
    full = _engine(model, engine_options).evolve_grid(op.embed(n), times)
    part = _restricted_trajectory(restricted, op, times, engine_options)
    out = []
    for B, Bs in zip(full, part):
        out.append(operator_norm(B - embed(Bs, restricted.ambient_sites, n)))
    return np.array(out)


def fixed_point_gap(A: ObservableSpec, model: Liouvillian, s: int) -> float:
    """``|tr(A rho_inf) - tr(A rho_inf^s)|`` between the ambient and restricted steady states."""
    op = place(A, model.lattice)
    X = support_region(op, model.lattice)
    restricted = model.restrict(s, X)
    fp = fixed_point(model)
    fps = fixed_point(restricted)
    local = restricted.to_restricted(op.sites)
    a = fp.expectation(op.embed(model.n_sites))
    b = fps.expectation(embed(op.matrix, local, restricted.n_sites))
    return float(abs(a - b))


@dataclass
class DecayEnvelope:
    """Size-independent decay bound assembled from restricted-lattice runs only.

    ``localization[s]`` holds ``||A_ref(t) - A_s(t)||`` (``A_ref`` being the
    largest restricted lattice, standing in for the ambient one) and
    ``mixing[s]`` holds ``||A_s(t) - A_s(inf)||``.
    """

    times: np.ndarray
    values: np.ndarray
    radius: np.ndarray  # radius chosen at each time
    slopes: tuple
    localization: dict
    mixing: dict
    reference_radius: int
    decay_exponent: float
    exponent_residual: float
    required_exponent: float

    @property
    def meets_requirement(self) -> bool:
        return self.decay_exponent > self.required_exponent

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def integral(self, t0: float, t1: float = math.inf) -> float:
        """Integral of the envelope over ``[t0, t1]``; beyond the grid an
        exponential tail is fitted to the last samples."""
        t, v = self.times, self.values
        total = 0.0
        hi = min(t1, t[-1])
        if t0 < hi:
            mask = (t > t0) & (t < hi)
            tt = np.concatenate([[t0], t[mask], [hi]])
            total += float(np.trapezoid(np.interp(tt, t, v), tt))
        if t1 > t[-1]:
            rate = self.tail_rate()
            start = max(t0, t[-1])
            if rate <= 0:
                return math.inf
            v_end = v[-1] * math.exp(-rate * (start - t[-1]))
            total += v_end / rate * (1 - math.exp(-rate * (t1 - start))) if math.isfinite(t1) else v_end / rate
        return total

    def tail_rate(self) -> float:
        t, v = self.times, self.values
        k = max(3, t.size // 5)
        tt, vv = t[-k:], v[-k:]
        if np.any(vv <= 0):
            return math.inf
        return float(-np.polyfit(tt, np.log(vv), 1)[0])

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "values": self.values.tolist(),
            "radius": self.radius.tolist(),
            "slopes": list(self.slopes),
            "reference_radius": self.reference_radius,
            "decay_exponent": self.decay_exponent,
            "exponent_residual": self.exponent_residual,
            "required_exponent": self.required_exponent,
            "meets_requirement": self.meets_requirement,
        }


def default_slopes(lr: LRFit | None) -> tuple:
    if lr is None or lr.verdict == INFINITE_DECAY:
        return (0.0,)
    base = lr.mu / lr.v
    return (base / 4, base / 2, base)


def schedule_horizon(slopes: Sequence[float], max_radius: int) -> float:
    """Latest time at which some schedule ``ceil(a t)`` still fits within ``max_radius``."""
    a = min(slopes)
    return math.inf if a <= 0 else max_radius / a


def max_unsaturated_radius(model: Liouvillian, X: Region) -> int:
    s = 0
    while not model.restrict(s + 1, X).saturated:
        s += 1
        if s > max(model.lattice.shape):
            break
    return s


def decay_envelope(
    A: ObservableSpec,
    model: Liouvillian,
    times,
    slopes: Sequence[float] | None = None,
    lr: LRFit | None = None,
    max_radius: int | None = None,
    engine_options: dict | None = None,
) -> DecayEnvelope:
    """``Delta(t) = min_a 2||A(t)-A_s(t)|| + 2||A_s(t)-A_s(inf)||`` with ``s = ceil(a t)``.

    Only restricted lattices with radius ``<= max_radius`` are simulated, so
    two ambient sizes that both admit ``max_radius`` give identical output.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 3:
        raise ScheduleExhausted("the envelope needs at least three time points within the schedule horizon")
    op = place(A, model.lattice)
    X = support_region(op, model.lattice)
    if max_radius is None:
        max_radius = max_unsaturated_radius(model, X)
    if max_radius < 1:
        raise ScheduleExhausted("the ambient lattice admits no unsaturated restriction")
    if model.restrict(max_radius, X).saturated:
        raise ScheduleExhausted(f"radius {max_radius} saturates the ambient lattice")
    slopes = tuple(default_slopes(lr) if slopes is None else slopes)

    ref = model.restrict(max_radius, X)
    ref_traj = _restricted_trajectory(ref, op, times, engine_options)
    localization, mixing = {}, {}
    for s in range(1, max_radius + 1):
        r = model.restrict(s, X)
        traj = _restricted_trajectory(r, op, times, engine_options)
        fp = fixed_point(r)
        local = r.to_restricted(op.sites)
        Ainf = infinite_time_limit(embed(op.matrix, local, r.n_sites), fp)
        mixing[s] = np.array([operator_norm(B - Ainf) for B in traj])
        into_ref = ref.to_restricted(r.ambient_sites)
        localization[s] = np.array(
            [operator_norm(Bref - embed(B, into_ref, ref.n_sites)) for Bref, B in zip(ref_traj, traj)]
        )

    values = np.empty(times.size)
    radius = np.empty(times.size, dtype=int)
    for i, t in enumerate(times):
        best, best_s = math.inf, -1
        for a in slopes:
            s = max(1, math.ceil(a * t - 1e-12))
            if s > max_radius:
                continue
            val = 2 * localization[s][i] + 2 * mixing[s][i]
            if val < best:
                best, best_s = val, s
        if best_s < 0:
            raise ScheduleExhausted(
                f"at t={t:g} every schedule needs a radius above {max_radius}; shorten the time grid"
            )
        values[i], radius[i] = best, best_s

    D = model.lattice.dimension
    expo, res = _decay_exponent(times, values)
    return DecayEnvelope(times, values, radius, slopes, localization, mixing, max_radius,
                         expo, res, float(D + 2))


def _decay_exponent(times, values):
    """Slope of ``-log Delta`` against ``log(1+t)`` over the last third of the window."""
    mask = values > 1e-14 * values.max() if values.max() > 0 else np.zeros_like(values, bool)
    idx = np.flatnonzero(mask)
    if idx.size < 3:
        return math.inf, 0.0
    tail = idx[-max(3, idx.size // 3):]
    x = np.log1p(times[tail])
    y = np.log(values[tail])
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    resid = float(np.sqrt(res[0] / tail.size)) if res.size else 0.0
    return float(-coef[0]), resid
