"""Named models, perturbations and observables, plus the YAML model-file format.

A model file looks like::

    dimension: 1
    size: 6
    offsets: [[0], [1]]
    hamiltonian: [["0.1", "0"], ...]   # complex literals, strings or numbers
    jumps:
      - [[...], ...]

or names a preset with parameters::

    preset: ising-depolarizing
    size: 8
    params: {gamma: 0.2, J: 0.1, g: 0.1}
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .glauber import GlauberModel, embed_glauber
from .lattice import Lattice
from .liouvillian import (
    LindbladData,
    Liouvillian,
    LocalTerm,
    Perturbation,
    forward_offsets,
    single_site_offsets,
)
from .quantum_algebra import I2, SIGMA_MINUS, SX, SY, SZ, Operator, pauli_string

DEFAULTS = {
    "depolarizing": {"gamma": 0.25},
    "dephasing": {"gamma": 0.25},
    "ising-depolarizing": {"gamma": 0.2, "J": 0.1, "g": 0.1},
    "amplitude-damping": {"gamma": 0.25},
    "glauber-ising": {"beta": 0.2, "J": 1.0, "h": 0.0, "rule": "heat-bath"},
}
PRESETS = tuple(DEFAULTS)


def depolarizing_data(gamma: float) -> LindbladData:
    """Jumps sqrt(gamma/2) X, Y, Z: every Pauli decays as exp(-2 gamma t)."""
    c = np.sqrt(gamma / 2)
    return LindbladData(np.zeros((2, 2)), (c * SX, c * SY, c * SZ))


def _on_first(op: np.ndarray, k: int) -> np.ndarray:
    return np.kron(op, np.eye(2 ** (k - 1)))


def ising_depolarizing_data(D: int, gamma: float, J: float, g: float) -> LindbladData:
    """Depolarizing noise plus a transverse-field Ising Hamiltonian on forward bonds."""
    k = D + 1
    H = g * _on_first(SX, k)
    for axis in range(D):
        ops = [I2] * k
        ops[0] = SZ
        ops[axis + 1] = SZ
        zz = ops[0]
        for o in ops[1:]:
            zz = np.kron(zz, o)
        H = H + J * zz
    c = np.sqrt(gamma / 2)
    jumps = tuple(c * _on_first(P, k) for P in (SX, SY, SZ))
    return LindbladData(H, jumps)


def make_model(name: str, dimension: int = 1, size: int = 4, **params) -> Liouvillian:
    if name not in DEFAULTS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    p = {**DEFAULTS[name], **params}
    lattice = Lattice(dimension, size)
    if name == "depolarizing":
        term = LocalTerm(depolarizing_data(p["gamma"]), single_site_offsets(dimension))
    elif name == "dephasing":
        term = LocalTerm(
            LindbladData(np.zeros((2, 2)), (np.sqrt(p["gamma"]) * SZ,)), single_site_offsets(dimension)
        )
    elif name == "amplitude-damping":
        term = LocalTerm(
            LindbladData(np.zeros((2, 2)), (np.sqrt(p["gamma"]) * SIGMA_MINUS,)),
            single_site_offsets(dimension),
        )
    elif name == "ising-depolarizing":
        term = LocalTerm(
            ising_depolarizing_data(dimension, p["gamma"], p["J"], p["g"]), forward_offsets(dimension)
        )
    else:
        model = GlauberModel(lattice, p["beta"], p["J"], p["h"], p["rule"])
        return embed_glauber(model)
    return Liouvillian(lattice, term, name=name)


def field_perturbation(D: int = 1, axis: str = "X", strength: float = 1.0) -> Perturbation:
    """``E_u(A) = i strength [sigma_axis^(u), A]`` at every site."""
    P = {"X": SX, "Y": SY, "Z": SZ}[axis.upper()]
    return Perturbation(LindbladData(P), single_site_offsets(D), strength)


def rate_perturbation(D: int, gamma: float, strength: float = 1.0) -> Perturbation:
    """Depolarizing rate change ``gamma -> gamma (1 + strength)`` as a weighted dissipator."""
    delta = depolarizing_data(gamma * (1 + strength)) - depolarizing_data(gamma)
    return Perturbation(delta, single_site_offsets(D), 1.0)


PERTURBATIONS = ("field-x", "field-z", "depolarizing-rate")


def make_perturbation(name: str, model: Liouvillian, strength: float, gamma: float | None = None) -> Perturbation:
    """``gamma`` is the base rate for ``depolarizing-rate`` (defaults to the preset's)."""
    D = model.lattice.dimension
    if name == "field-x":
        return field_perturbation(D, "X", strength)
    if name == "field-z":
        return field_perturbation(D, "Z", strength)
    if name == "depolarizing-rate":
        if gamma is None:
            gamma = DEFAULTS["depolarizing"]["gamma"]
        return rate_perturbation(D, gamma, strength)
    raise KeyError(f"unknown perturbation {name!r}; choose from {', '.join(PERTURBATIONS)}")


def parse_observable(spec: str, lattice: Lattice) -> Operator:
    """``"Z0"``, ``"X0"``, ``"Z0*Z3"``; the keyword ``"corr"`` means Z at the
    origin times Z at the site half-way along axis 0."""
    spec = spec.strip()
    if spec == "corr":
        half = [0] * lattice.dimension
        half[0] = lattice.shape[0] // 2
        return pauli_string({0: "Z", lattice.index(half): "Z"})
    factors = {}
    for tok in spec.split("*"):
        tok = tok.strip()
        if len(tok) < 2 or tok[0].upper() not in "XYZ":
            raise ValueError(f"cannot parse observable factor {tok!r}")
        site = int(tok[1:])
        if not 0 <= site < lattice.n_sites:
            raise ValueError(f"observable site {site} outside lattice")
        if site in factors:
            raise ValueError(f"site {site} repeated in observable")
        factors[site] = tok[0].upper()
    return pauli_string(factors)


def _complex_matrix(rows) -> np.ndarray:
    return np.array([[complex(str(x).replace(" ", "")) for x in row] for row in rows], dtype=complex)


def model_from_dict(cfg: dict) -> Liouvillian:
    if not isinstance(cfg, dict):
        raise ValueError("model definition must be a mapping")
    dimension = int(cfg.get("dimension", 1))
    size = cfg.get("size", 4)
    size = tuple(size) if isinstance(size, list) else int(size)
    if "preset" in cfg:
        return make_model(cfg["preset"], dimension, size, **(cfg.get("params") or {}))
    if cfg.get("local_dimension", 2) != 2:
        raise ValueError("only local dimension 2 is supported")
    for key in ("hamiltonian", "offsets"):
        if key not in cfg:
            raise ValueError(f"model definition is missing field {key!r}")
    H = _complex_matrix(cfg["hamiltonian"])
    jumps = tuple(_complex_matrix(K) for K in cfg.get("jumps", []))
    term = LocalTerm(LindbladData(H, jumps), tuple(tuple(o) for o in cfg["offsets"]))
    return Liouvillian(Lattice(dimension, size), term, name=cfg.get("name", "custom"))


def load_model(spec: str, dimension: int = 1, size: int | None = None) -> Liouvillian:
    """A preset name or the path of a YAML model file."""
    if spec in DEFAULTS:
        return make_model(spec, dimension, size or 4)
    path = Path(spec)
    if not path.exists():
        raise ValueError(f"{spec!r} is neither a preset nor a model file")
    cfg = yaml.safe_load(path.read_text())
    if size is not None:
        cfg = {**cfg, "size": size}
    return model_from_dict(cfg)


def dump_preset(name: str) -> str:
    if name not in DEFAULTS:
        raise KeyError(f"unknown preset {name!r}")
    return yaml.safe_dump({"preset": name, "dimension": 1, "size": 4, "params": dict(DEFAULTS[name])}, sort_keys=False)
