"""Operators, superoperators and norms for qubit lattices.

Conventions used everywhere in the package:

* site 0 is the most significant tensor factor, so ``embed(Z, [0], n=2)`` is
  ``kron(Z, I)``;
* vectorisation stacks columns, ``vec(A)[r + c*d] = A[r, c]``, hence
  ``vec(X A Y) = (Y^T kron X) vec(A)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh, ArpackNoConvergence

LOCAL_DIM = 2
DENSE_NORM_MAX_DIM = 2**10

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
# |0><1| lowers the sigma_z eigenvalue from +1 to -1 in the |0>=up convention
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()
PAULI = {"I": I2, "X": SX, "Y": SY, "Z": SZ}


@dataclass(frozen=True)
class Operator:
    """A matrix acting on an ordered tuple of site indices."""

    matrix: np.ndarray
    sites: tuple[int, ...]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("operator matrix must be square")
        if m.shape[0] != LOCAL_DIM ** len(self.sites):
            raise ValueError(
                f"matrix of dimension {m.shape[0]} does not match {len(self.sites)} sites"
            )
        if len(set(self.sites)) != len(self.sites):
            raise ValueError("repeated site in operator support")

    @property
    def is_hermitian(self) -> bool:
        return np.allclose(self.matrix, self.matrix.conj().T, atol=1e-12)

    def norm(self) -> float:
        return operator_norm(self.matrix)

    def embed(self, n_sites: int) -> np.ndarray:
        return embed(self.matrix, self.sites, n_sites)


def pauli_string(spec: dict[int, str]) -> Operator:
    """``pauli_string({0: "Z", 3: "Z"})`` is Z on site 0 times Z on site 3."""
    sites = tuple(sorted(spec))
    mat = np.ones((1, 1), dtype=complex)
    for s in sites:
        mat = np.kron(mat, PAULI[spec[s].upper()])
    return Operator(mat, sites)


def embed(local: np.ndarray, sites: Sequence[int], n_sites: int) -> np.ndarray:
    """Dense global matrix acting as ``local`` on ``sites`` and trivially elsewhere.

    ``sites`` gives the tensor-factor order of ``local``; it need not be sorted.
    """
    local = np.asarray(local, dtype=complex)
    sites = [int(s) for s in sites]
    k = len(sites)
    if local.shape != (LOCAL_DIM**k, LOCAL_DIM**k):
        raise ValueError("local operator dimension does not match its support")
    if len(set(sites)) != k or any(not 0 <= s < n_sites for s in sites):
        raise ValueError(f"support {sites} is not a set of sites of a {n_sites}-site system")
    rest = [s for s in range(n_sites) if s not in sites]
    full = np.kron(local, np.eye(LOCAL_DIM ** len(rest), dtype=complex))
    order = sites + rest
    # axes currently ordered as `order` (rows then columns); move to 0..n-1
    t = full.reshape((LOCAL_DIM,) * (2 * n_sites))
    perm = np.argsort(order)
    t = t.transpose(list(perm) + [n_sites + p for p in perm])
    d = LOCAL_DIM**n_sites
    return t.reshape(d, d)


def restrict_to_sites(A: np.ndarray, sites: Sequence[int], n_sites: int) -> np.ndarray:
    """Partial normalised trace of a global operator onto ``sites`` (inverse of ``embed``
    for operators of the form ``a kron I``)."""
    sites = [int(s) for s in sites]
    rest = [s for s in range(n_sites) if s not in sites]
    t = np.asarray(A).reshape((LOCAL_DIM,) * (2 * n_sites))
    order = sites + rest
    t = t.transpose(order + [n_sites + s for s in order])
    k = len(sites)
    dk, dr = LOCAL_DIM**k, LOCAL_DIM ** len(rest)
    t = t.reshape(dk, dr, dk, dr)
    return np.einsum("ajbj->ab", t) / dr


def _check_finite(A):
    if sp.issparse(A):
        data = A.data
    else:
        data = np.asarray(A)
    if not np.all(np.isfinite(data)):
        raise ValueError("matrix has non-finite entries")


def operator_norm(A) -> float:
    """Largest singular value.

    Dense SVD up to dimension 1024 (ten qubits); above that, Lanczos on ``A^H A`` (or on
    ``A`` itself when Hermitian) to relative accuracy well below 1e-10.
    """
    if sp.issparse(A):
        A = A.toarray()
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("operator_norm expects a square matrix")
    _check_finite(A)
    n = A.shape[0]
    if n == 0:
        return 0.0
    if n <= DENSE_NORM_MAX_DIM:
        return float(np.linalg.norm(A, 2))
    scale = np.abs(A).max()
    if scale == 0:
        return 0.0
    B = A / scale
    hermitian = np.allclose(B, B.conj().T, atol=1e-14)
    try:
        if hermitian:
            vals = eigsh(B, k=1, which="LM", tol=1e-14, return_eigenvectors=False)
            return float(abs(vals[0]) * scale)
        Bh = B.conj().T.copy()
        op = LinearOperator((n, n), matvec=lambda x: Bh @ (B @ x), dtype=B.dtype)
        vals = eigsh(op, k=1, which="LA", tol=1e-14, return_eigenvectors=False)
        return float(np.sqrt(max(vals[0].real, 0.0)) * scale)
    except ArpackNoConvergence:
        return float(np.linalg.norm(A, 2))


def trace_norm(A) -> float:
    """Sum of singular values."""
    if sp.issparse(A):
        A = A.toarray()
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("trace_norm expects a square matrix")
    _check_finite(A)
    return float(np.linalg.svd(A, compute_uv=False).sum())


def vectorize(A) -> np.ndarray:
    return np.asarray(A).reshape(-1, order="F")


def devectorize(v) -> np.ndarray:
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise ValueError(f"vector of length {v.size} is not a vectorised square matrix")
    return v.reshape(d, d, order="F")


def spre_post(X, Y) -> sp.csr_matrix:
    """Superoperator of ``A -> X A Y`` in column-stacking convention."""
    return sp.kron(sp.csr_matrix(Y).T, sp.csr_matrix(X), format="csr")


def lindblad_superoperator(hamiltonian, jumps, weights=None) -> np.ndarray:
    """Dense Heisenberg-picture generator of

        A -> i[H, A] + sum_j w_j (K_j^+ A K_j - 1/2 {K_j^+ K_j, A})

    acting on column-stacked operators.
    """
    H = np.asarray(hamiltonian, dtype=complex)
    d = H.shape[0]
    eye = np.eye(d, dtype=complex)
    S = 1j * (np.kron(eye, H) - np.kron(H.T, eye))
    if weights is None:
        weights = [1.0] * len(jumps)
    for w, K in zip(weights, jumps):
        K = np.asarray(K, dtype=complex)
        KdK = K.conj().T @ K
        S += w * (np.kron(K.T, K.conj().T) - 0.5 * np.kron(eye, KdK) - 0.5 * np.kron(KdK.T, eye))
    return S


def cb_norm_bound(hamiltonian=None, jumps=(), weights=None) -> float:
    """Upper bound ``2||H|| + 2 sum_j |w_j| ||K_j||^2`` on the cb-norm of a Lindblad generator.

    Signed ``weights`` describe differences of dissipators; the bound is the
    triangle inequality applied term by term.
    """
    total = 0.0
    if hamiltonian is not None:
        H = np.asarray(hamiltonian, dtype=complex)
        if not np.allclose(H, H.conj().T, atol=1e-12):
            raise ValueError("Hamiltonian part must be Hermitian")
        total += 2.0 * operator_norm(H)
    if weights is None:
        weights = [1.0] * len(jumps)
    for w, K in zip(weights, jumps):
        total += 2.0 * abs(w) * operator_norm(np.asarray(K, dtype=complex)) ** 2
    return total


_MAGIC = b"LSOP"


def save_operator(path, A) -> None:
    """Dense complex binary: magic, uint32 version, two uint64 dims, then
    row-major little-endian float64 (re, im) pairs."""
    A = np.ascontiguousarray(np.asarray(A, dtype="<c16"))
    if A.ndim != 2:
        raise ValueError("only matrices can be saved")
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<IQQ", 1, *A.shape))
        fh.write(A.tobytes(order="C"))


def load_operator(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    head = len(_MAGIC) + struct.calcsize("<IQQ")
    if raw[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path}: not an operator file")
    version, rows, cols = struct.unpack("<IQQ", raw[len(_MAGIC) : head])
    if version != 1:
        raise ValueError(f"{path}: unsupported version {version}")
    data = np.frombuffer(raw[head:], dtype="<c16")
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated payload")
    return data.reshape(rows, cols).astype(complex)
