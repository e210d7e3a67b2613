import numpy as np
import pytest
import yaml

from lindstab.evolution import EvolutionEngine
from lindstab.lattice import Lattice
from lindstab.liouvillian import is_unital
from lindstab.presets import (
    DEFAULTS,
    PERTURBATIONS,
    PRESETS,
    dump_preset,
    load_model,
    make_model,
    make_perturbation,
    model_from_dict,
    parse_observable,
)
from lindstab.quantum_algebra import SX, SZ, pauli_string


@pytest.mark.parametrize("name", PRESETS)
def test_presets_are_unital_and_trace_preserving(name):
    m = make_model(name, 1, 3)
    G = m.generator()
    I = np.eye(2**3, dtype=complex).reshape(-1, order="F")
    # Heisenberg picture: the identity is annihilated
    assert np.abs(G @ I).max() < 1e-12


@pytest.mark.parametrize("name", PRESETS)
def test_dump_round_trip(name):
    cfg = yaml.safe_load(dump_preset(name))
    assert cfg["preset"] == name
    a = model_from_dict(cfg).generator().toarray()
    b = make_model(name, 1, 4).generator().toarray()
    assert np.array_equal(a, b)


def test_unknown_preset():
    with pytest.raises(KeyError):
        make_model("spin-glass")
    with pytest.raises(KeyError):
        make_perturbation("field-w", make_model("depolarizing"), 0.1)


def test_depolarizing_pauli_decay():
    m = make_model("depolarizing", 1, 3, gamma=0.3)
    out = EvolutionEngine(m).evolve(pauli_string({1: "Y"}).embed(3), 1.5)
    assert np.abs(out - np.exp(-0.6 * 1.5) * pauli_string({1: "Y"}).embed(3)).max() < 1e-10


@pytest.mark.parametrize("name", PERTURBATIONS)
def test_perturbations_unital(name):
    p = make_perturbation(name, make_model("ising-depolarizing", 1, 4), 0.1)
    assert is_unital(p.local_term().data, atol=1e-12)


def test_observable_parsing():
    lat = Lattice(1, 8)
    def same(a, b):
        return np.array_equal(a.embed(8), b.embed(8))

    assert same(parse_observable("Z0", lat), pauli_string({0: "Z"}))
    assert same(parse_observable("corr", lat), pauli_string({0: "Z", 4: "Z"}))
    assert same(parse_observable("x1 * Z3", lat), pauli_string({1: "X", 3: "Z"}))
    for bad in ("Q0", "Z9", "Z1*Z1", "Z"):
        with pytest.raises(ValueError):
            parse_observable(bad, lat)


def test_model_file(tmp_path):
    c = float(np.sqrt(0.125))
    spec = {
        "dimension": 1,
        "size": 3,
        "offsets": [[0]],
        "hamiltonian": [[0, 0], [0, 0]],
        "jumps": [[[0, c], [c, 0]], [[0, "-%rj" % c], ["%rj" % c, 0]], [[c, 0], [0, -c]]],
    }
    path = tmp_path / "m.yaml"
    path.write_text(yaml.safe_dump(spec))
    a = load_model(str(path)).generator().toarray()
    b = make_model("depolarizing", 1, 3).generator().toarray()
    assert np.abs(a - b).max() < 1e-14
    assert load_model(str(path), size=4).n_sites == 4
    with pytest.raises(ValueError):
        load_model(str(tmp_path / "missing.yaml"))
    with pytest.raises(ValueError):
        model_from_dict({"size": 3, "offsets": [[0]]})
