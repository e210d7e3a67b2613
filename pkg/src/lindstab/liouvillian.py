"""Translation-invariant local Lindblad generators on periodic lattices.

A :class:`Liouvillian` is a lattice plus one or more :class:`LocalTerm`
templates; the global Heisenberg-picture generator is the sparse sum of the
template translated to every anchor site. Restriction to a grown region
instantiates the same templates on smaller tori, one per hull component.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .lattice import Lattice, Region, grow_region, hull_components
from .quantum_algebra import LOCAL_DIM, cb_norm_bound, lindblad_superoperator, trace_norm

log = logging.getLogger(__name__)

DEFAULT_DIMENSION_CAP = 4**12


class DimensionCapExceeded(ValueError):
    pass


class DegenerateRestriction(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LindbladData:
    """Hamiltonian plus weighted jump operators on ``n_sites`` qubits.

    Weights default to one (a proper Lindblad generator). Signed weights
    encode differences of generators, e.g. rate perturbations.
    """

    hamiltonian: np.ndarray
    jumps: tuple = ()
    weights: tuple | None = None

    def __post_init__(self):
        H = np.asarray(self.hamiltonian, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("Hamiltonian must be a square matrix")
        if not np.allclose(H, H.conj().T, atol=1e-12):
            raise ValueError("Hamiltonian must be Hermitian")
        jumps = tuple(np.asarray(K, dtype=complex) for K in self.jumps)
        for K in jumps:
            if K.shape != H.shape:
                raise ValueError("jump operators must match the Hamiltonian dimension")
        weights = (1.0,) * len(jumps) if self.weights is None else tuple(float(w) for w in self.weights)
        if len(weights) != len(jumps):
            raise ValueError("one weight per jump operator")
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "weights", weights)

    physical = property(lambda self: all(w >= 0 for w in self.weights))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def n_sites(self) -> int:
        return int(round(np.log2(self.dim)))

    @classmethod
    def zero(cls, n_sites: int = 1) -> "LindbladData":
        return cls(np.zeros((LOCAL_DIM**n_sites,) * 2))

    def superoperator(self) -> np.ndarray:
        return lindblad_superoperator(self.hamiltonian, self.jumps, self.weights)

    def cb_norm_bound(self) -> float:
        return cb_norm_bound(self.hamiltonian, self.jumps, self.weights)

    def scaled(self, factor: float) -> "LindbladData":
        return LindbladData(
            factor * self.hamiltonian, self.jumps, tuple(factor * w for w in self.weights)
        )

    def __add__(self, other: "LindbladData") -> "LindbladData":
        return _merge(
            self.hamiltonian + other.hamiltonian,
            list(self.jumps) + list(other.jumps),
            list(self.weights) + list(other.weights),
        )

    def __sub__(self, other: "LindbladData") -> "LindbladData":
        return self + other.scaled(-1.0)


def _merge(H, jumps, weights) -> LindbladData:
    """Collapse proportional jumps: w1 D[c K] + w2 D[K] = (w1 |c|^2 + w2) D[K]."""
    kept, kw = [], []
    for K, w in zip(jumps, weights):
        nK = np.vdot(K, K).real
        if nK == 0 or w == 0:
            continue
        for i, K2 in enumerate(kept):
            lam = np.vdot(K2, K) / np.vdot(K2, K2)
            if np.linalg.norm(K - lam * K2) <= 1e-12 * np.sqrt(nK):
                kw[i] += w * abs(lam) ** 2
                break
        else:
            kept.append(K)
            kw.append(w)
    pairs = [(K, w) for K, w in zip(kept, kw) if abs(w) > 1e-15]
    return LindbladData(H, tuple(K for K, _ in pairs), tuple(w for _, w in pairs))


@dataclass(frozen=True, eq=False)
class SuperoperatorTerm:
    """A raw local superoperator delta (Heisenberg picture, column stacking).

    Used for perturbations that are unital but not checked to be of Lindblad
    form, e.g. classical rate changes that break detailed balance.
    """

    matrix: np.ndarray
    physical: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d2 = m.shape[0]
        d = int(round(np.sqrt(d2)))
        if m.shape != (d2, d2) or d * d != d2:
            raise ValueError("superoperator must be square on a vectorised space")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    @property
    def n_sites(self) -> int:
        return int(round(np.log2(self.dim)))

    def superoperator(self) -> np.ndarray:
        return self.matrix

    def cb_norm_bound(self) -> float:
        """Trace norm of the realigned matrix: sum of operator-Schmidt coefficients."""
        d = self.dim
        R = self.matrix.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
        return trace_norm(R)

    def scaled(self, factor: float) -> "SuperoperatorTerm":
        return SuperoperatorTerm(factor * self.matrix, self.physical)


def is_unital(term, atol: float = 1e-12) -> bool:
    S = term.superoperator()
    d = int(round(np.sqrt(S.shape[0])))
    return bool(np.abs(S @ np.eye(d).reshape(-1, order="F")).max() <= atol)


@dataclass(frozen=True, eq=False)
class LocalTerm:
    """Lindblad data anchored at a site, acting on ``anchor + offsets``."""

    data: LindbladData | SuperoperatorTerm
    offsets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        offsets = tuple(tuple(int(c) for c in o) for o in self.offsets)
        object.__setattr__(self, "offsets", offsets)
        if len(offsets) != self.data.n_sites:
            raise ValueError(
                f"{len(offsets)} offsets given for data on {self.data.n_sites} sites"
            )
        if len(set(offsets)) != len(offsets):
            raise ValueError("offsets must be distinct")
        if len({len(o) for o in offsets}) != 1:
            raise ValueError("offsets must share one dimension")

    @property
    def dimension(self) -> int:
        return len(self.offsets[0])

    @property
    def reach(self) -> int:
        return max(max(abs(c) for c in o) for o in self.offsets)

    def support(self, lattice: Lattice, anchor) -> tuple[int, ...]:
        sites = [lattice.index(lattice.translate(anchor, o)) for o in self.offsets]
        if len(set(sites)) != len(sites):
            raise DegenerateRestriction(
                f"term support collapses on a torus of shape {lattice.shape}"
            )
        return tuple(sites)

    def cb_norm_bound(self) -> float:
        return self.data.cb_norm_bound()

    def normalized(self) -> "LocalTerm":
        b = self.cb_norm_bound()
        if b <= 1.0:
            return self
        return LocalTerm(self.data.scaled(1.0 / b), self.offsets)


def single_site_offsets(D: int) -> tuple[tuple[int, ...], ...]:
    return ((0,) * D,)


def forward_offsets(D: int) -> tuple[tuple[int, ...], ...]:
    """A site and its forward neighbours ``u, u+e_1, ..., u+e_D``."""
    out = [(0,) * D]
    for axis in range(D):
        e = [0] * D
        e[axis] = 1
        out.append(tuple(e))
    return tuple(out)


def heisenberg_generator(term) -> sp.csr_matrix:
    """Sparse local Heisenberg generator of a term (or of bare Lindblad data)."""
    data = term.data if isinstance(term, LocalTerm) else term
    S = sp.csr_matrix(data.superoperator())
    S.eliminate_zeros()
    return S


def _site_weights(sites: Sequence[int], n_sites: int) -> tuple[np.ndarray, np.ndarray]:
    d = LOCAL_DIM**n_sites
    row_w = np.array([LOCAL_DIM ** (n_sites - 1 - s) for s in sites], dtype=np.int64)
    return row_w, row_w * d


def _local_offsets(k: int, sites, n_sites: int) -> np.ndarray:
    """Global vec-index offset contributed by each local vec index."""
    row_w, col_w = _site_weights(sites, n_sites)
    dl = LOCAL_DIM**k
    idx = np.arange(dl * dl, dtype=np.int64)
    c, r = idx // dl, idx % dl
    off = np.zeros_like(idx)
    for q in range(k):
        shift = k - 1 - q
        off += ((r >> shift) & 1) * row_w[q] + ((c >> shift) & 1) * col_w[q]
    return off


def _rest_offsets(sites, n_sites: int) -> np.ndarray:
    rest = [s for s in range(n_sites) if s not in set(sites)]
    row_w, col_w = _site_weights(rest, n_sites)
    base = np.zeros(1, dtype=np.int64)
    for w in list(row_w) + list(col_w):
        base = np.concatenate([base, base + w])
    return base


def embed_superoperator(local: sp.spmatrix | np.ndarray, sites: Sequence[int], n_sites: int) -> sp.csr_matrix:
    """Global sparse superoperator acting as ``local`` on the operators of ``sites``."""
    local = sp.coo_matrix(local)
    k = len(sites)
    if local.shape != (LOCAL_DIM ** (2 * k),) * 2:
        raise ValueError("local superoperator does not match its support")
    off = _local_offsets(k, sites, n_sites)
    base = _rest_offsets(sites, n_sites)
    rows = (base[:, None] + off[local.row][None, :]).ravel()
    cols = (base[:, None] + off[local.col][None, :]).ravel()
    data = np.tile(local.data, base.size)
    D = LOCAL_DIM ** (2 * n_sites)
    return sp.csr_matrix((data, (rows, cols)), shape=(D, D))


class LocalGenerator:
    """Sum of local superoperator terms on ``n_sites`` qubits."""

    def __init__(self, n_sites: int, dimension_cap: int = DEFAULT_DIMENSION_CAP):
        self.n_sites = n_sites
        self.dimension_cap = dimension_cap
        self._generator = None

    @property
    def superop_dim(self) -> int:
        return LOCAL_DIM ** (2 * self.n_sites)

    def site_terms(self) -> list[tuple[object, tuple[int, ...]]]:
        raise NotImplementedError

    def generator(self) -> sp.csr_matrix:
        """Global Heisenberg generator (assembled once, then cached)."""
        if self._generator is None:
            if self.superop_dim > self.dimension_cap:
                raise DimensionCapExceeded(
                    f"superoperator dimension {self.superop_dim} exceeds cap {self.dimension_cap}"
                )
            G = sp.csr_matrix((self.superop_dim, self.superop_dim), dtype=complex)
            for data, sites in self.site_terms():
                G = G + embed_superoperator(heisenberg_generator(data), sites, self.n_sites)
            G.sum_duplicates()
            G.eliminate_zeros()
            self._generator = G
        return self._generator

    assemble_global = generator


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Local perturbation ``sum_u E_u`` with ``E_u = strength * template`` at each anchor.

    ``anchors=None`` perturbs every site.
    """

    template: LindbladData | SuperoperatorTerm
    offsets: tuple[tuple[int, ...], ...]
    strength: float = 1.0
    anchors: tuple | None = None

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("perturbation strength must be non-negative")
        object.__setattr__(self, "offsets", tuple(tuple(int(c) for c in o) for o in self.offsets))

    @property
    def physicality_checked(self) -> bool:
        return isinstance(self.template, LindbladData)

    def with_strength(self, strength: float) -> "Perturbation":
        return replace(self, strength=strength)

    def local_term(self) -> LocalTerm:
        return LocalTerm(self.template.scaled(self.strength), self.offsets)

    def cb_norm_bound(self) -> float:
        return self.local_term().cb_norm_bound()


class Liouvillian(LocalGenerator):
    """Translation-invariant generator ``sum_u L_u`` on a periodic lattice."""

    def __init__(
        self,
        lattice: Lattice,
        terms: Sequence[LocalTerm] | LocalTerm,
        perturbation: Perturbation | None = None,
        dimension_cap: int = DEFAULT_DIMENSION_CAP,
        name: str | None = None,
    ):
        if min(lattice.shape) < 2:
            raise ValueError("linear size must be at least 2 on every axis")
        super().__init__(lattice.n_sites, dimension_cap)
        if isinstance(terms, LocalTerm):
            terms = [terms]
        self.lattice = lattice
        self.terms = tuple(terms)
        self.perturbation = perturbation
        self.name = name
        for t in self.terms:
            if t.dimension != lattice.dimension:
                raise ValueError("term dimension does not match lattice")
            for u in lattice.sites():
                t.support(lattice, u)
        if perturbation is not None:
            self._check_perturbation(perturbation)

    def __repr__(self):
        return f"Liouvillian({self.name or 'custom'}, shape={self.lattice.shape}, perturbed={self.perturbation is not None})"

    def _check_perturbation(self, p: Perturbation):
        term = p.local_term()
        if term.dimension != self.lattice.dimension:
            raise ValueError("perturbation dimension does not match lattice")
        if term.reach > max([1] + [t.reach for t in self.terms]):
            raise ValueError("perturbation support exceeds the interaction neighbourhood")
        if not is_unital(term.data, atol=1e-12 * max(1.0, np.abs(term.data.superoperator()).max())):
            raise ValueError("perturbation does not annihilate the identity")
        for u in self._anchors(p):
            term.support(self.lattice, u)

    def _anchors(self, p: Perturbation):
        if p.anchors is None:
            return self.lattice.sites()
        return [self.lattice.validate(a) for a in p.anchors]

    def site_terms(self):
        out = []
        for t in self.terms:
            for u in self.lattice.sites():
                out.append((t, t.support(self.lattice, u)))
        if self.perturbation is not None and self.perturbation.strength != 0:
            pt = self.perturbation.local_term()
            for u in self._anchors(self.perturbation):
                out.append((pt, pt.support(self.lattice, u)))
        return out

    def with_lattice(self, lattice: Lattice) -> "Liouvillian":
        p = self.perturbation
        if p is not None and p.anchors is not None:
            raise ValueError("site-specific perturbations cannot be moved to another lattice")
        return Liouvillian(lattice, self.terms, p, self.dimension_cap, self.name)

    def perturb(self, p: Perturbation) -> "Liouvillian":
        if self.perturbation is not None:
            raise ValueError("model is already perturbed")
        return Liouvillian(self.lattice, self.terms, p, self.dimension_cap, self.name)

    def unperturbed(self) -> "Liouvillian":
        return Liouvillian(self.lattice, self.terms, None, self.dimension_cap, self.name)

    def cb_norm_bound(self) -> float:
        """Largest bound on ``||L_u||_cb`` over anchors (all templates at one anchor)."""
        return float(sum(t.cb_norm_bound() for t in self.terms))

    def restrict(self, s: int, X: Region) -> "RestrictedLiouvillian":
        return RestrictedLiouvillian(self, s, X)


class RestrictedLiouvillian(LocalGenerator):
    """The templates of ``parent`` instantiated on one small torus per hull
    component of ``X(s)``.

    Restricted sites are numbered component by component, each in the
    row-major order of its box. ``ambient_sites[k]`` is the ambient index
    of restricted site ``k``.
    """

    def __init__(self, parent: Liouvillian, s: int, X: Region):
        if X.lattice != parent.lattice:
            raise ValueError("region does not live on the model lattice")
        self.parent = parent
        self.radius = s
        self.region = grow_region(X, s)
        self.boxes = hull_components(self.region)
        self.components = []
        ambient = []
        for box in self.boxes:
            if min(box.lengths) < 2:
                raise DegenerateRestriction(f"restricted torus of shape {box.lengths} is degenerate")
            sub = Lattice(parent.lattice.dimension, tuple(box.lengths))
            try:
                comp = parent.with_lattice(sub)
            except DegenerateRestriction as exc:
                raise DegenerateRestriction(str(exc)) from None
            self.components.append(comp)
            for local_site in sub.sites():
                ambient_site = tuple(
                    (a + c) % n for a, c, n in zip(box.start, local_site, parent.lattice.shape)
                )
                ambient.append(parent.lattice.index(ambient_site))
        self.ambient_sites = tuple(ambient)
        self._to_restricted = {a: k for k, a in enumerate(ambient)}
        self.dropped_terms = self._count_straddling()
        super().__init__(len(ambient), parent.dimension_cap)
        if self.dropped_terms:
            log.debug("restriction dropped %d straddling terms", self.dropped_terms)

    @property
    def saturated(self) -> bool:
        return len(self.boxes) == 1 and tuple(self.boxes[0].lengths) == self.parent.lattice.shape

    def _count_straddling(self) -> int:
        comp_of = {}
        for i, box in enumerate(self.boxes):
            for site in box.sites():
                comp_of[self.parent.lattice.index(site)] = i
        count = 0
        for term, sites in self.parent.site_terms():
            owners = {comp_of.get(s) for s in sites}
            if len(owners - {None}) > 1:
                count += 1
        return count

    def to_restricted(self, ambient_sites) -> tuple[int, ...]:
        try:
            return tuple(self._to_restricted[int(a)] for a in ambient_sites)
        except KeyError as exc:
            raise ValueError(f"site {exc.args[0]} lies outside the restricted region") from None

    def site_terms(self):
        out = []
        offset = 0
        for comp in self.components:
            for data, sites in comp.site_terms():
                out.append((data, tuple(offset + s for s in sites)))
            offset += comp.n_sites
        return out


def site_permutation_superoperator(perm: Sequence[int]) -> sp.csr_matrix:
    """Superoperator of ``A -> P A P^T`` where ``P`` moves site ``i`` to ``perm[i]``."""
    n = len(perm)
    D = LOCAL_DIM ** (2 * n)
    idx = np.arange(D, dtype=np.int64)
    new = np.zeros_like(idx)
    d = LOCAL_DIM**n
    c, r = idx // d, idx % d
    for i, j in enumerate(perm):
        bit_r = (r >> (n - 1 - i)) & 1
        bit_c = (c >> (n - 1 - i)) & 1
        new += bit_r * LOCAL_DIM ** (n - 1 - j) + bit_c * LOCAL_DIM ** (n - 1 - j) * d
    return sp.csr_matrix((np.ones(D), (new, idx)), shape=(D, D))


def translation_superoperator(lattice: Lattice, shift) -> sp.csr_matrix:
    perm = [lattice.index(lattice.translate(u, shift)) for u in lattice.sites()]
    return site_permutation_superoperator(perm)
