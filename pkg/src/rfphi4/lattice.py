"""Finite lattice geometry: boxes in Z^d, site sets, boundaries, hulls.

Sites of a box are indexed row-major over coordinates (index order equals
lexicographic coordinate order), and every matrix in the package uses this
indexing.  Distances are 1-norm throughout; "nearest neighbor" always means
1-norm distance 1.
"""

from __future__ import annotations

import functools as _functools
import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LatticeVolume",
    "SiteSet",
    "outer_boundary",
    "ambient_boundary",
    "connected_components",
    "r_hull",
    "connected_subsets",
    "l1_ball_size",
]


@dataclass(frozen=True)
class LatticeVolume:
    """An axis-aligned box in Z^d with a site <-> index bijection."""

    shape: tuple[int, ...]

    def __post_init__(self):
        if len(self.shape) < 1 or any(s < 1 for s in self.shape):
            raise ValueError(f"invalid box shape {self.shape}")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def nsites(self) -> int:
        return int(np.prod(self.shape))

    def index(self, coord) -> int:
        idx = 0
        for c, s in zip(coord, self.shape):
            if not 0 <= c < s:
                raise ValueError(f"coordinate {tuple(coord)} outside box {self.shape}")
            idx = idx * s + c
        return idx

    def coord(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.nsites:
            raise ValueError(f"site index {index} out of range")
        out = []
        for s in reversed(self.shape):
            out.append(index % s)
            index //= s
        return tuple(reversed(out))

    def contains_coord(self, coord) -> bool:
        return all(0 <= c < s for c, s in zip(coord, self.shape))

    def neighbor_table(self) -> tuple[np.ndarray, np.ndarray]:
        """In-box neighbors as an (n, 2d) index array, -1 marking ambient slots.

        Second return: per-site count of ambient (out-of-box) neighbor slots.
        Cached per shape; treat the returned arrays as read-only.
        """
        return _neighbor_table_cached(self.shape)

    def ambient_neighbors(self, index: int) -> list[tuple[int, ...]]:
        """Out-of-box neighbor coordinates of a site."""
        c = self.coord(index)
        out = []
        for ax in range(self.dim):
            for step in (-1, 1):
                cc = list(c)
                cc[ax] += step
                if not self.contains_coord(cc):
                    out.append(tuple(cc))
        return out

    def all_sites(self) -> "SiteSet":
        return SiteSet(self, tuple(range(self.nsites)))


@dataclass(frozen=True)
class SiteSet:
    """An ordered subset of a LatticeVolume, stored sorted by site index."""

    volume: LatticeVolume
    members: tuple[int, ...] = field(default=())

    def __post_init__(self):
        mem = tuple(sorted(set(int(m) for m in self.members)))
        if mem and (mem[0] < 0 or mem[-1] >= self.volume.nsites):
            raise ValueError("site index outside volume")
        object.__setattr__(self, "members", mem)

    @classmethod
    def from_coords(cls, volume: LatticeVolume, coords) -> "SiteSet":
        return cls(volume, tuple(volume.index(c) for c in coords))

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, index):
        return index in set(self.members)

    def indices(self) -> np.ndarray:
        return np.asarray(self.members, dtype=np.int64)

    def coords(self) -> list[tuple[int, ...]]:
        return [self.volume.coord(i) for i in self.members]

    def issubset(self, other: "SiteSet") -> bool:
        return set(self.members) <= set(other.members)

    def union(self, other: "SiteSet") -> "SiteSet":
        self._check_same_volume(other)
        return SiteSet(self.volume, self.members + other.members)

    def intersection(self, other: "SiteSet") -> "SiteSet":
        self._check_same_volume(other)
        return SiteSet(self.volume, tuple(set(self.members) & set(other.members)))

    def difference(self, other: "SiteSet") -> "SiteSet":
        self._check_same_volume(other)
        return SiteSet(self.volume, tuple(set(self.members) - set(other.members)))

    def complement(self) -> "SiteSet":
        return SiteSet(self.volume, tuple(set(range(self.volume.nsites)) - set(self.members)))

    def _check_same_volume(self, other):
        if other.volume != self.volume:
            raise ValueError("site sets live on different volumes")


@_functools.lru_cache(maxsize=None)
def _neighbor_table_cached(shape):
    vol = LatticeVolume(shape)
    n, d = vol.nsites, vol.dim
    table = np.full((n, 2 * d), -1, dtype=np.int64)
    for i in range(n):
        c = vol.coord(i)
        k = 0
        for ax in range(d):
            for step in (-1, 1):
                cc = list(c)
                cc[ax] += step
                if vol.contains_coord(cc):
                    table[i, k] = vol.index(cc)
                k += 1
    out_count = np.sum(table < 0, axis=1).astype(np.int64)
    table.setflags(write=False)
    out_count.setflags(write=False)
    return table, out_count


def outer_boundary(G: SiteSet, universe: SiteSet | None = None) -> SiteSet:
    """Outer boundary of G inside `universe` (default: the full box).

    Returns {x in universe \\ G : d(x, G) = 1}.  Raises if G is not a
    subset of the universe.  For the ambient-lattice variant (sites of
    Z^d outside the box included) see `ambient_boundary`.
    """
    vol = G.volume
    if universe is None:
        universe = vol.all_sites()
    if not G.issubset(universe):
        raise ValueError("G is not contained in the universe")
    table, _ = vol.neighbor_table()
    gset = set(G.members)
    uni = set(universe.members)
    out = set()
    for i in G.members:
        for j in table[i]:
            if j >= 0 and j in uni and j not in gset:
                out.add(int(j))
    return SiteSet(vol, tuple(out))


def ambient_boundary(G: SiteSet) -> tuple[SiteSet, list[tuple[int, ...]]]:
    """Outer boundary of G in the ambient lattice Z^d.

    Returns the in-box part as a SiteSet plus the out-of-box part as a
    list of coordinates (sorted lexicographically).
    """
    vol = G.volume
    inside = outer_boundary(G, vol.all_sites())
    outside = set()
    for i in G.members:
        outside.update(vol.ambient_neighbors(i))
    return inside, sorted(outside)


def connected_components(S: SiteSet) -> list[SiteSet]:
    """Nearest-neighbor connected components, ordered by minimum site index.

    Row-major index order makes this the lexicographic-minimum-site order.
    """
    vol = S.volume
    table, _ = vol.neighbor_table()
    remaining = set(S.members)
    comps = []
    for seed in S.members:  # members are sorted, so components come out ordered
        if seed not in remaining:
            continue
        comp = {seed}
        frontier = [seed]
        remaining.discard(seed)
        while frontier:
            i = frontier.pop()
            for j in table[i]:
                if j >= 0 and j in remaining:
                    remaining.discard(int(j))
                    comp.add(int(j))
                    frontier.append(int(j))
        comps.append(SiteSet(vol, tuple(comp)))
    return comps


def r_hull(G: SiteSet, r: int, volume: LatticeVolume | None = None) -> SiteSet:
    """The r-hull {x in the box : d(x, G) <= r}.

    An axis-aligned box is 1-norm convex, so multi-source BFS distance
    equals the ambient 1-norm distance.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    vol = volume if volume is not None else G.volume
    if volume is not None and G.volume != volume:
        raise ValueError("G lives on a different volume")
    if len(G) == 0:
        return SiteSet(vol, ())
    table, _ = vol.neighbor_table()
    dist = {i: 0 for i in G.members}
    frontier = list(G.members)
    for step in range(1, r + 1):
        nxt = []
        for i in frontier:
            for j in table[i]:
                if j >= 0 and int(j) not in dist:
                    dist[int(j)] = step
                    nxt.append(int(j))
        frontier = nxt
        if not frontier:
            break
    return SiteSet(vol, tuple(dist.keys()))


def connected_subsets(volume: LatticeVolume, min_size: int = 1,
                      max_size: int | None = None, within: SiteSet | None = None,
                      size_cap: int = 20):
    """Yield all connected subsets of the box (or of `within`) as SiteSets.

    Exhaustive over the power set; the universe is capped at `size_cap`
    sites because the enumeration is exponential.
    """
    base = within.members if within is not None else tuple(range(volume.nsites))
    n = len(base)
    if n > size_cap:
        raise ValueError(f"universe of {n} sites exceeds enumeration cap {size_cap}")
    table, _ = volume.neighbor_table()
    adj = [set(int(j) for j in table[i] if j >= 0) for i in range(volume.nsites)]
    hi = max_size if max_size is not None else n
    for k in range(max(1, min_size), hi + 1):
        for combo in itertools.combinations(base, k):
            if _is_connected(combo, adj):
                yield SiteSet(volume, combo)


def _is_connected(sites, adj) -> bool:
    sset = set(sites)
    seen = {sites[0]}
    stack = [sites[0]]
    while stack:
        i = stack.pop()
        for j in adj[i]:
            if j in sset and j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == len(sset)


def contact_matrix(A: SiteSet, B: SiteSet) -> np.ndarray:
    """|A| x |B| indicator of nearest-neighbor contact between two site sets."""
    if A.volume != B.volume:
        raise ValueError("site sets live on different volumes")
    table, _ = A.volume.neighbor_table()
    bpos = {int(s): k for k, s in enumerate(B.members)}
    M = np.zeros((len(A), len(B)))
    for i, s in enumerate(A.members):
        for j in table[s]:
            if j >= 0 and int(j) in bpos:
                M[i, bpos[int(j)]] = 1.0
    return M


def l1_ball_size(r: int, d: int) -> int:
    """Number of lattice points within 1-norm distance r in Z^d."""
    import math
    return sum(math.comb(d, k) * 2**k * math.comb(r, k) for k in range(min(r, d) + 1))
