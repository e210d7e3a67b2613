"""Semigroup action, fixed points and the infinite-time limit.

Heisenberg evolution ``A(t) = exp(tL)(A)`` is computed with an Arnoldi
approximation of the exponential action and adaptive step control; the
Schrodinger dual uses the conjugate-transposed generator.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import norm as spnorm

from .quantum_algebra import devectorize, trace_norm, vectorize

log = logging.getLogger(__name__)

DENSE_FIXED_POINT_MAX_DIM = 4**5
KERNEL_THRESHOLD = 1e-10


class DegenerateFixedPoint(RuntimeError):
    """The generator has more than one stationary state."""

    def __init__(self, kernel_dim, message=None):
        self.kernel_dim = kernel_dim
        super().__init__(message or f"fixed-point space has dimension {kernel_dim}")


class NonConvergent(RuntimeError):
    pass


def _as_linear(G):
    if sp.issparse(G):
        return G.tocsr()
    return np.asarray(G)


def expm_krylov(G, v, t, *, m=30, tol=1e-9, anorm=None, max_step=None, max_steps=100000):
    """Approximate ``exp(t G) v`` with restarted Arnoldi steps.

    Each step builds an ``m``-dimensional Krylov space and uses the
    augmented Hessenberg exponential for the local error estimate. A step
    is rejected and its length shrunk until the estimate is below
    ``tol * ||v|| * step / t``. Returns ``(w, info)``.
    """
    v = np.asarray(v, dtype=complex)
    n = v.size
    info = {"steps": 0, "rejected": 0, "matvecs": 0, "error": 0.0}
    vnorm = np.linalg.norm(v)
    if t == 0 or vnorm == 0:
        return v.copy(), info
    if t < 0:
        raise ValueError("only forward evolution is supported")
    if anorm is None:
        anorm = spnorm(G, np.inf) if sp.issparse(G) else np.linalg.norm(G, np.inf)
    if anorm == 0:
        return v.copy(), info
    m = max(1, min(m, n - 1)) if n > 1 else 1
    btol = 1e-13 * anorm * vnorm
    abs_tol = tol * vnorm

    w = v.copy()
    t_now = 0.0
    # standard initial step guess for Krylov exponentials
    xm = 1.0 / m
    fact = (((m + 1) / math.e) ** (m + 1)) * math.sqrt(2 * math.pi * (m + 1))
    t_new = (1.0 / anorm) * ((fact * tol) / (4.0 * anorm)) ** xm if tol > 0 else t
    t_new = max(t_new, 1e-3 / anorm)
    if max_step is not None:
        t_new = min(t_new, max_step)

    V = np.empty((m + 1, n), dtype=complex)
    while t_now < t:
        info["steps"] += 1
        if info["steps"] > max_steps:
            raise NonConvergent(f"Krylov integrator exceeded {max_steps} steps at t={t_now}")
        beta = np.linalg.norm(w)
        if beta == 0:
            break
        tau = min(t - t_now, t_new)
        V[0] = w / beta
        Hm = np.zeros((m + 2, m + 2), dtype=complex)
        breakdown = False
        k = m
        for j in range(m):
            p = G @ V[j]
            info["matvecs"] += 1
            for i in range(j + 1):
                Hm[i, j] = np.vdot(V[i], p)
                p -= Hm[i, j] * V[i]
            # one reorthogonalisation pass keeps the basis orthonormal
            for i in range(j + 1):
                c = np.vdot(V[i], p)
                Hm[i, j] += c
                p -= c * V[i]
            h = np.linalg.norm(p)
            if h <= btol:
                breakdown = True
                k = j + 1
                tau = t - t_now
                break
            Hm[j + 1, j] = h
            V[j + 1] = p / h
        if breakdown:
            F = la.expm(tau * Hm[:k, :k])
            w = beta * (V[:k].T @ F[:k, 0])
            t_now += tau
            break
        Hm[m + 1, m] = 1.0
        avnorm = np.linalg.norm(G @ V[m])
        info["matvecs"] += 1
        while True:
            F = la.expm(tau * Hm)
            err1 = abs(beta * F[m, 0])
            err2 = abs(beta * F[m + 1, 0]) * avnorm
            if err1 > 10 * err2:
                err = err2
            elif err1 > err2:
                err = err1 * err2 / (err1 - err2)
            else:
                err = err1
            allowed = 1.2 * abs_tol * tau / t
            if err <= allowed or tau <= 1e-14 * t:
                break
            info["rejected"] += 1
            tau = min(0.9 * tau * (allowed / err) ** xm, 0.5 * tau)
        w = beta * (V[: m + 1].T @ F[: m + 1, 0])
        t_now += tau
        info["error"] += err
        grow = 0.9 * tau * ((abs_tol * tau / t) / max(err, 1e-300)) ** xm
        t_new = min(grow, 5.0 * tau)
        if max_step is not None:
            t_new = min(t_new, max_step)
    return w, info


@dataclass(frozen=True)
class EvolutionEngine:
    """Exponential action of a fixed Heisenberg generator.

    ``rtol`` bounds the Frobenius-norm error relative to the input; the
    operator-norm error is no larger.
    """

    generator: object
    rtol: float = 1e-9
    krylov_dim: int = 30
    max_step: float | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        G = self.generator
        if hasattr(G, "generator"):
            G = G.generator()
        object.__setattr__(self, "generator", _as_linear(G))

    @property
    def dim(self) -> int:
        return int(round(math.sqrt(self.generator.shape[0])))

    def _norm(self, dual=False):
        key = "anorm_dual" if dual else "anorm"
        if key not in self._cache:
            G = self.dual_generator() if dual else self.generator
            self._cache[key] = spnorm(G, np.inf) if sp.issparse(G) else np.linalg.norm(G, np.inf)
        return self._cache[key]

    def dual_generator(self):
        if "dual" not in self._cache:
            G = self.generator
            self._cache["dual"] = G.conj().T.tocsr() if sp.issparse(G) else G.conj().T
        return self._cache["dual"]

    def _check(self, A):
        A = np.asarray(A, dtype=complex)
        if A.shape != (self.dim, self.dim):
            raise ValueError(f"operator of shape {A.shape} does not match generator dimension {self.dim}")
        return A

    def _apply(self, G, anorm, vec, t):
        w, _ = expm_krylov(
            G, vec, t, m=self.krylov_dim, tol=self.rtol, anorm=anorm, max_step=self.max_step
        )
        return w

    def evolve(self, A, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("time must be non-negative")
        A = self._check(A)
        return devectorize(self._apply(self.generator, self._norm(), vectorize(A), t))

    def dual_evolve(self, rho, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("time must be non-negative")
        rho = self._check(rho)
        return devectorize(self._apply(self.dual_generator(), self._norm(True), vectorize(rho), t))

    def evolve_grid(self, A, times, dual: bool = False) -> list[np.ndarray]:
        """Evolve to each time in the (sorted, non-negative) grid by stepping between points."""
        times = np.asarray(times, dtype=float)
        if times.size and (times.min() < 0 or np.any(np.diff(times) < 0)):
            raise ValueError("time grid must be sorted and non-negative")
        A = self._check(A)
        G = self.dual_generator() if dual else self.generator
        anorm = self._norm(dual)
        out = []
        vec = vectorize(A).astype(complex)
        t_prev = 0.0
        for t in times:
            if t > t_prev:
                vec = self._apply(G, anorm, vec, t - t_prev)
            out.append(devectorize(vec.copy()))
            t_prev = t
        return out


def evolve(A, t, engine: EvolutionEngine) -> np.ndarray:
    return engine.evolve(A, t)


@dataclass(frozen=True)
class FixedPoint:
    rho: np.ndarray
    residual: float
    kernel_dim: int
    certification: str = "dense"

    def expectation(self, A) -> complex:
        return complex(np.trace(np.asarray(A) @ self.rho))


def _finish(rho_vec, GH, d, kernel_dim, cert) -> FixedPoint:
    rho = devectorize(rho_vec)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    scale = max(np.abs(GH).max(), 1.0)
    residual = float(np.linalg.norm(GH @ vectorize(rho)) / scale)
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < -1e-10:
        raise NonConvergent(f"fixed point is not positive (min eigenvalue {evals.min():.3e})")
    if residual > 1e-10:
        raise NonConvergent(f"fixed-point residual {residual:.3e} above 1e-10")
    return FixedPoint(rho, residual, kernel_dim, cert)


def fixed_point(generator, *, threshold: float = KERNEL_THRESHOLD, probe_time=None) -> FixedPoint:
    """Stationary state of the Schrodinger dual, with a uniqueness check.

    Up to dimension ``4**5`` the full spectrum is computed and eigenvalues
    with ``|lambda| / ||G||_1 < threshold`` counted. Above that two
    orthogonal product states are relaxed with the Krylov integrator; if
    they converge to different states the kernel is declared degenerate.
    """
    G = generator.generator() if hasattr(generator, "generator") else generator
    G = _as_linear(G)
    D = G.shape[0]
    d = int(round(math.sqrt(D)))
    GH = G.conj().T
    if sp.issparse(GH):
        GH = GH.tocsr()
    scale = spnorm(G, 1) if sp.issparse(G) else np.linalg.norm(G, 1)
    if scale == 0:
        raise DegenerateFixedPoint(D)
    if D <= DENSE_FIXED_POINT_MAX_DIM:
        M = GH.toarray() if sp.issparse(GH) else GH
        vals, vecs = la.eig(M)
        rel = np.abs(vals) / scale
        kernel = int(np.sum(rel < threshold))
        borderline = np.sum((rel >= threshold) & (rel < 1e3 * threshold))
        if borderline:
            warnings.warn(
                f"{borderline} eigenvalue(s) within a factor 1e3 of the kernel threshold",
                RuntimeWarning,
                stacklevel=2,
            )
        if kernel > 1:
            raise DegenerateFixedPoint(kernel)
        if kernel == 0:
            raise NonConvergent(f"no eigenvalue below threshold; smallest |lambda|/||G|| = {rel.min():.3e}")
        vec = vecs[:, int(np.argmin(rel))]
        return _finish(vec, GH, d, 1, "dense")
    return _relaxation_fixed_point(G, GH, d, scale, probe_time)


def _relaxation_fixed_point(G, GH, d, scale, probe_time) -> FixedPoint:
    engine = EvolutionEngine(G, rtol=1e-13)
    n = int(round(math.log2(d)))
    probes = []
    for state in (0, d - 1):
        rho = np.zeros((d, d), dtype=complex)
        rho[state, state] = 1.0
        probes.append(vectorize(rho))
    chunk = probe_time or 20.0 / max(1e-3, scale / max(n, 1))
    total, limit = 0.0, 400 * chunk
    anorm = engine._norm(True)
    while True:
        probes = [
            expm_krylov(GH, p, chunk, m=engine.krylov_dim, tol=1e-13, anorm=anorm)[0]
            for p in probes
        ]
        total += chunk
        res = [np.linalg.norm(GH @ p) / scale for p in probes]
        gap = trace_norm(devectorize(probes[0] - probes[1]))
        if max(res) <= 1e-11:
            if gap > 1e-6:
                raise DegenerateFixedPoint(2, f"probes relaxed to states {gap:.3e} apart in trace norm")
            return _finish(probes[0], GH, d, 1, "probe")
        if total >= limit:
            if gap > 1e-3:
                raise DegenerateFixedPoint(2, f"probes did not merge after t={total:g}")
            raise NonConvergent(f"relaxation residual {max(res):.3e} after t={total:g}")
        log.debug("relaxation t=%g residual=%.3e probe gap=%.3e", total, max(res), gap)


def infinite_time_limit(A, fp: FixedPoint) -> np.ndarray:
    """``A(inf) = tr(A rho_inf) * identity``."""
    A = np.asarray(A)
    return fp.expectation(A) * np.eye(A.shape[0], dtype=complex)
