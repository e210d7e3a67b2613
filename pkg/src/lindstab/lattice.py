"""Periodic hypercubic lattices, torus distances and grown regions.

Sites are integer coordinate tuples ``(x_0, ..., x_{D-1})``. They are
enumerated in row-major order, so site index ``i`` corresponds to the
coordinate tuple obtained by ``np.unravel_index(i, lattice.shape)``. The
distance is the l-infinity metric on the torus, which makes a site and its
forward neighbours a set of diameter one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

Site = tuple[int, ...]


@dataclass(frozen=True)
class Lattice:
    """The torus ``Z_L^D``.

    ``size`` is normally a single integer; a tuple gives per-axis lengths,
    which is what restrictions to non-cubic boxes produce.
    """

    dimension: int
    size: int | tuple[int, ...]
    periodic: bool = True

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        shape = self.shape
        if len(shape) != self.dimension:
            raise ValueError(f"size {self.size!r} does not match dimension {self.dimension}")
        if any(n < 1 for n in shape):
            raise ValueError("linear sizes must be positive")
        if not self.periodic:
            raise ValueError("only periodic boundary conditions are supported")

    @property
    def shape(self) -> tuple[int, ...]:
        if isinstance(self.size, (int, np.integer)):
            return (int(self.size),) * self.dimension
        return tuple(int(n) for n in self.size)

    @property
    def linear_size(self) -> int:
        return max(self.shape)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    def sites(self) -> list[Site]:
        return [tuple(int(c) for c in s) for s in itertools.product(*(range(n) for n in self.shape))]

    def index(self, site: Sequence[int]) -> int:
        site = self.validate(site)
        return int(np.ravel_multi_index(site, self.shape))

    def site(self, index: int) -> Site:
        if not 0 <= index < self.n_sites:
            raise ValueError(f"site index {index} out of range")
        return tuple(int(c) for c in np.unravel_index(index, self.shape))

    def validate(self, site) -> Site:
        site = _as_site(site)
        if len(site) != self.dimension:
            raise ValueError(f"site {site} has wrong dimension for D={self.dimension}")
        for c, n in zip(site, self.shape):
            if not 0 <= c < n:
                raise ValueError(f"coordinate {c} out of range [0, {n})")
        return site

    def wrap(self, site) -> Site:
        site = _as_site(site)
        return tuple(c % n for c, n in zip(site, self.shape))

    def translate(self, site, shift) -> Site:
        return self.wrap(tuple(a + b for a, b in zip(_as_site(site), _as_site(shift))))


def _as_site(site) -> Site:
    if isinstance(site, (int, np.integer)):
        return (int(site),)
    return tuple(int(c) for c in site)


def torus_distance(lattice: Lattice, u, v) -> int:
    """l-infinity distance between two sites on the torus."""
    u = lattice.validate(u)
    v = lattice.validate(v)
    d = 0
    for a, b, n in zip(u, v, lattice.shape):
        delta = abs(a - b)
        d = max(d, min(delta, n - delta))
    return d


def _distance_table(lattice: Lattice, sites: Sequence[Site]) -> np.ndarray:
    """Torus distance from every lattice site (rows, row-major) to each of ``sites``."""
    coords = np.array(lattice.sites()).reshape(lattice.n_sites, lattice.dimension)
    targets = np.array(sites).reshape(len(sites), lattice.dimension)
    shape = np.array(lattice.shape)
    delta = np.abs(coords[:, None, :] - targets[None, :, :])
    delta = np.minimum(delta, shape - delta)
    return delta.max(axis=2)


@dataclass(frozen=True)
class Region:
    """A sorted, duplicate-free set of sites of ``lattice``."""

    lattice: Lattice
    sites: tuple[Site, ...] = field(default=())

    def __post_init__(self):
        checked = sorted({self.lattice.validate(s) for s in self.sites})
        object.__setattr__(self, "sites", tuple(checked))

    @classmethod
    def from_sites(cls, lattice: Lattice, sites: Iterable) -> "Region":
        return cls(lattice, tuple(_as_site(s) for s in sites))

    def __len__(self):
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, site):
        return _as_site(site) in set(self.sites)

    @property
    def indices(self) -> list[int]:
        return [self.lattice.index(s) for s in self.sites]

    def issubset(self, other: "Region") -> bool:
        return set(self.sites) <= set(other.sites)

    def distance_to(self, site) -> int:
        if not self.sites:
            raise ValueError("distance to an empty region")
        site = self.lattice.validate(site)
        return min(torus_distance(self.lattice, site, s) for s in self.sites)

    def components(self) -> list["Region"]:
        """Connected components, two sites being adjacent at distance <= 1."""
        remaining = set(self.sites)
        out = []
        while remaining:
            seed = remaining.pop()
            comp = {seed}
            stack = [seed]
            while stack:
                cur = stack.pop()
                near = [s for s in remaining if torus_distance(self.lattice, cur, s) <= 1]
                for s in near:
                    remaining.discard(s)
                    comp.add(s)
                    stack.append(s)
            out.append(Region(self.lattice, tuple(comp)))
        out.sort(key=lambda r: r.sites[0])
        return out

    def to_text(self) -> str:
        return "".join(",".join(str(c) for c in s) + "\n" for s in self.sites)

    @classmethod
    def from_text(cls, lattice: Lattice, text: str) -> "Region":
        sites = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                sites.append(tuple(int(tok) for tok in line.split(",")))
            except ValueError:
                raise ValueError(f"line {lineno}: cannot parse site {line!r}") from None
        return cls(lattice, tuple(sites))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, lattice: Lattice, path) -> "Region":
        return cls.from_text(lattice, Path(path).read_text())


def _arc(coords: Iterable[int], n: int) -> tuple[int, int]:
    """Smallest circular interval covering ``coords`` on a ring of ``n`` sites.

    Returns ``(start, length)``. Covers of length >= n - 1 saturate to the
    whole ring, returned as ``(0, n)``.
    """
    occupied = sorted(set(c % n for c in coords))
    if len(occupied) == n:
        return 0, n
    # the complement's largest gap fixes the arc
    best_gap, best_start = -1, occupied[0]
    for i, c in enumerate(occupied):
        nxt = occupied[(i + 1) % len(occupied)]
        gap = (nxt - c - 1) % n if len(occupied) > 1 else n - 1
        if gap > best_gap:
            best_gap, best_start = gap, nxt
    length = n - best_gap
    if length >= n - 1:
        return 0, n
    return best_start, length


@dataclass(frozen=True)
class Box:
    """A periodic coordinate box: per-axis start and length."""

    lattice: Lattice
    start: tuple[int, ...]
    lengths: tuple[int, ...]

    def sites(self) -> list[Site]:
        axes = [
            [(a + k) % n for k in range(m)]
            for a, m, n in zip(self.start, self.lengths, self.lattice.shape)
        ]
        return [tuple(s) for s in itertools.product(*axes)]

    def local_coordinate(self, site) -> Site:
        """Coordinate of an ambient site inside the box (origin at ``start``)."""
        site = self.lattice.validate(site)
        out = []
        for c, a, m, n in zip(site, self.start, self.lengths, self.lattice.shape):
            k = (c - a) % n
            if k >= m:
                raise ValueError(f"site {site} is outside the box")
            out.append(k)
        return tuple(out)


def hull_box(region: Region) -> Box:
    lattice = region.lattice
    start, lengths = [], []
    for axis, n in enumerate(lattice.shape):
        a, m = _arc((s[axis] for s in region.sites), n)
        start.append(a)
        lengths.append(m)
    return Box(lattice, tuple(start), tuple(lengths))


def hull_components(region: Region) -> list[Box]:
    """Merge touching components into coordinate boxes until nothing changes."""
    if not region.sites:
        return []
    current = region
    while True:
        boxes = [hull_box(c) for c in current.components()]
        merged = Region(region.lattice, tuple(s for b in boxes for s in b.sites()))
        if merged.sites == current.sites:
            return boxes
        current = merged


def grow_region(X: Region, s: int) -> Region:
    """All sites within distance ``s`` of ``X``, with touching components hull-merged."""
    if s < 0:
        raise ValueError("growth radius must be non-negative")
    if not X.sites:
        return X
    lattice = X.lattice
    dist = _distance_table(lattice, X.sites).min(axis=1)
    grown = Region(lattice, tuple(lattice.site(int(i)) for i in np.flatnonzero(dist <= s)))
    boxes = hull_components(grown)
    return Region(lattice, tuple(site for b in boxes for site in b.sites()))


def region_diameter(X: Region) -> int:
    if not X.sites:
        raise ValueError("diameter of an empty region")
    table = _distance_table(X.lattice, X.sites)
    rows = X.indices
    return int(table[rows].max())
