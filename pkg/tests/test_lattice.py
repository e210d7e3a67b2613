import pytest
from hypothesis import given
from hypothesis import strategies as st

from lindstab.lattice import (
    Lattice,
    Region,
    grow_region,
    hull_components,
    region_diameter,
    torus_distance,
)


def region(L, sites, D=1):
    lat = Lattice(D, L)
    return Region.from_sites(lat, sites)


def test_torus_distance_examples():
    assert torus_distance(Lattice(1, 5), 0, 4) == 1
    assert torus_distance(Lattice(2, 4), (0, 0), (2, 2)) == 2
    assert torus_distance(Lattice(1, 5), 2, 2) == 0


def test_torus_distance_rejects_bad_site():
    with pytest.raises(ValueError):
        torus_distance(Lattice(1, 5), 0, 5)
    with pytest.raises(ValueError):
        torus_distance(Lattice(2, 4), (0, 0), (0, -1))


@given(st.integers(2, 7), st.integers(1, 3), st.data())
def test_torus_distance_is_metric(L, D, data):
    lat = Lattice(D, L)
    pick = st.integers(0, lat.n_sites - 1).map(lat.site)
    u, v, w = data.draw(pick), data.draw(pick), data.draw(pick)
    d = lambda a, b: torus_distance(lat, a, b)
    assert d(u, v) == d(v, u)
    assert (d(u, v) == 0) == (u == v)
    assert d(u, w) <= d(u, v) + d(v, w)


def test_grow_region_examples():
    assert [s[0] for s in grow_region(region(5, [2]), 1)] == [1, 2, 3]
    assert len(grow_region(region(5, [2]), 3)) == 5
    grown = grow_region(region(9, [0, 4]), 1)
    assert sorted(s[0] for s in grown) == [0, 1, 3, 4, 5, 8]
    boxes = hull_components(grown)
    assert sorted(b.lengths for b in boxes) == [(3,), (3,)]


def test_grow_region_hull_fills_touching_sites():
    # diagonal neighbours form one component whose hull is a 2x2 box
    grown = grow_region(region(6, [(0, 0), (1, 1)], D=2), 0)
    assert len(grown) == 4
    assert [b.lengths for b in hull_components(grown)] == [(2, 2)]
    # separated by a gap of one site: stays two boxes
    apart = grow_region(region(12, [1, 5]), 1)
    assert sorted(b.lengths for b in hull_components(apart)) == [(3,), (3,)]


def test_grow_region_two_dimensional_cube():
    grown = grow_region(region(7, [(3, 3)], D=2), 1)
    assert len(grown) == 9
    assert region_diameter(grown) == 2


def test_grow_region_saturates_near_full_axis():
    # a 4-site arc on a ring of 5 leaves one site out: saturates per the L-1 rule
    grown = grow_region(region(5, [0, 1, 2, 3]), 0)
    assert len(grown) == 5


def test_grow_region_negative():
    with pytest.raises(ValueError):
        grow_region(region(5, [0]), -1)


def test_region_diameter_examples():
    assert region_diameter(region(5, [2])) == 0
    assert region_diameter(region(5, [1, 3])) == 2
    assert region_diameter(region(5, [0, 2, 4])) == 2
    with pytest.raises(ValueError):
        region_diameter(region(5, []))


@given(st.integers(3, 9), st.integers(1, 2), st.data())
def test_grow_region_properties(L, D, data):
    lat = Lattice(D, L)
    idx = data.draw(st.sets(st.integers(0, lat.n_sites - 1), min_size=1, max_size=3))
    X = Region(lat, tuple(lat.site(i) for i in idx))
    grown = [grow_region(X, s) for s in range(4)]
    assert X.issubset(grown[0])
    for a, b in zip(grown, grown[1:]):
        assert a.issubset(b)
    # every site within distance s is included
    for s, G in enumerate(grown):
        for u in lat.sites():
            if X.distance_to(u) <= s:
                assert u in G


@given(st.integers(5, 15), st.integers(0, 3))
def test_diameter_bound_before_saturation(L, s):
    X = region(L, [0])
    G = grow_region(X, s)
    if len(G) < L:
        assert region_diameter(G) <= region_diameter(X) + 2 * s


def test_grow_region_zero_is_identity_for_hull_closed():
    X = region(8, [2, 3, 4])
    assert grow_region(X, 0) == X


def test_region_text_round_trip(tmp_path):
    lat = Lattice(2, 4)
    X = Region.from_sites(lat, [(0, 1), (3, 2), (0, 1)])
    assert X.to_text() == "0,1\n3,2\n"
    path = tmp_path / "x.txt"
    X.save(path)
    assert Region.load(lat, path) == X
    with pytest.raises(ValueError, match="line 1"):
        Region.from_text(lat, "a,b\n")


def test_sites_row_major():
    lat = Lattice(2, 3)
    assert lat.sites()[:4] == [(0, 0), (0, 1), (0, 2), (1, 0)]
    assert all(lat.index(lat.site(i)) == i for i in range(lat.n_sites))
