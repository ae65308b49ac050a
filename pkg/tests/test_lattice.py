import itertools

import numpy as np
import pytest

from rfphi4.lattice import (LatticeVolume, SiteSet, ambient_boundary,
                            connected_components, connected_subsets,
                            contact_matrix, l1_ball_size, outer_boundary,
                            r_hull)


def test_index_coord_roundtrip():
    vol = LatticeVolume((3, 4, 2))
    for i in range(vol.nsites):
        assert vol.index(vol.coord(i)) == i


def test_neighbor_relation_symmetric():
    vol = LatticeVolume((3, 3))
    table, _ = vol.neighbor_table()
    for i in range(vol.nsites):
        for j in table[i]:
            if j >= 0:
                assert i in table[j]


def test_boundary_center_of_3x3():
    vol = LatticeVolume((3, 3))
    G = SiteSet.from_coords(vol, [(1, 1)])
    assert sorted(outer_boundary(G).coords()) == [(0, 1), (1, 0), (1, 2), (2, 1)]


def test_boundary_of_full_box_is_empty():
    vol = LatticeVolume((3, 3))
    assert len(outer_boundary(vol.all_sites())) == 0


def test_boundary_corner_ambient_variant():
    vol = LatticeVolume((3, 3))
    G = SiteSet.from_coords(vol, [(0, 0)])
    inside, outside = ambient_boundary(G)
    assert sorted(inside.coords()) == [(0, 1), (1, 0)]
    assert outside == [(-1, 0), (0, -1)]


def test_boundary_requires_containment():
    vol = LatticeVolume((3, 3))
    G = SiteSet(vol, (0, 1))
    small = SiteSet(vol, (4, 5))
    with pytest.raises(ValueError):
        outer_boundary(G, small)


def test_boundary_disjoint_from_set(rng):
    vol = LatticeVolume((4, 4))
    for _ in range(25):
        members = tuple(rng.choice(16, size=rng.integers(1, 8), replace=False))
        G = SiteSet(vol, members)
        assert len(outer_boundary(G).intersection(G)) == 0


def test_components_diagonal_pair():
    vol = LatticeVolume((2, 2))
    S = SiteSet.from_coords(vol, [(0, 0), (1, 1)])
    assert len(connected_components(S)) == 2


def test_components_empty():
    vol = LatticeVolume((2, 2))
    assert connected_components(SiteSet(vol, ())) == []


def test_components_tromino_connected():
    vol = LatticeVolume((3, 3))
    S = SiteSet.from_coords(vol, [(0, 0), (1, 0), (1, 1)])
    comps = connected_components(S)
    assert len(comps) == 1 and comps[0].members == S.members


def test_components_idempotent_and_partition(rng):
    vol = LatticeVolume((4, 3))
    for _ in range(20):
        members = tuple(rng.choice(12, size=rng.integers(1, 10), replace=False))
        S = SiteSet(vol, members)
        comps = connected_components(S)
        rebuilt = sorted(i for c in comps for i in c.members)
        assert rebuilt == list(S.members)
        for c in comps:
            again = connected_components(c)
            assert len(again) == 1 and again[0].members == c.members
        # deterministic order: ascending minimum site
        mins = [min(c.members) for c in comps]
        assert mins == sorted(mins)


def test_hull_r0_is_identity():
    vol = LatticeVolume((3, 3))
    G = SiteSet.from_coords(vol, [(1, 1), (0, 0)])
    assert r_hull(G, 0).members == G.members


def test_hull_interior_site_d3():
    vol = LatticeVolume((3, 3, 3))
    G = SiteSet.from_coords(vol, [(1, 1, 1)])
    assert len(r_hull(G, 1)) == 7  # 1 + 2d


def test_hull_saturates_at_box():
    vol = LatticeVolume((3, 3))
    G = SiteSet.from_coords(vol, [(0, 0)])
    assert r_hull(G, 10).members == vol.all_sites().members


def test_hull_monotone(rng):
    vol = LatticeVolume((4, 4))
    for _ in range(20):
        members = tuple(rng.choice(16, size=rng.integers(1, 5), replace=False))
        G = SiteSet(vol, members)
        prev = set()
        for r in range(4):
            cur = set(r_hull(G, r).members)
            assert prev <= cur
            prev = cur


def test_hull_monotone_in_set():
    vol = LatticeVolume((4, 4))
    G1 = SiteSet.from_coords(vol, [(1, 1)])
    G2 = SiteSet.from_coords(vol, [(1, 1), (2, 2)])
    assert set(r_hull(G1, 2).members) <= set(r_hull(G2, 2).members)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("r", [0, 1, 2, 3, 4])
def test_ball_cardinality_vs_enumeration(d, r):
    # direct enumeration oracle for the closed-form count
    count = 0
    for point in itertools.product(range(-r, r + 1), repeat=d):
        if sum(abs(x) for x in point) <= r:
            count += 1
    assert l1_ball_size(r, d) == count
    # hull of a center site in a large box realizes the same count
    side = 2 * r + 3
    vol = LatticeVolume((side,) * d)
    center = SiteSet.from_coords(vol, [(r + 1,) * d])
    assert len(r_hull(center, r)) == count


def test_connected_subsets_count_small():
    vol = LatticeVolume((2, 2))
    subs = list(connected_subsets(vol))
    # 4 singletons + 4 edges + 4 L-triples + 1 full square
    assert len(subs) == 13


def test_contact_matrix_matches_adjacency():
    vol = LatticeVolume((3,))
    A = SiteSet(vol, (0,))
    B = SiteSet(vol, (1, 2))
    M = contact_matrix(A, B)
    assert M.tolist() == [[1.0, 0.0]]
