import numpy as np
import pytest

from sep_ergo.core import (
    BOTH,
    OccupancyConfig,
    SignedConfig,
    TorusLattice,
    TwoSpeciesConfig,
    annihilate_pair,
    config_from_text,
    count_species,
    difference,
    hamming,
    make_rng,
    replica_rng,
    set_pair,
    swap,
)


class TestTorusLattice:
    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            TorusLattice(0, 5)
        with pytest.raises(ValueError):
            TorusLattice(1, 2)

    def test_edge_count(self):
        # a d-torus with side L has d * L^d unordered edges
        for dim, side in [(1, 3), (1, 8), (2, 3), (2, 5), (3, 3)]:
            lat = TorusLattice(dim, side)
            assert len(lat.edge_sites) == dim * side**dim
            assert lat.n_sites == side**dim

    def test_edges_are_unordered_and_unique(self):
        lat = TorusLattice(2, 4)
        seen = {frozenset(e) for e in lat.edge_sites}
        assert len(seen) == len(lat.edge_sites)
        assert np.array_equal(lat.edge_a, lat.edge_sites[:, 0])
        assert np.array_equal(lat.edge_b, lat.edge_sites[:, 1])

    def test_neighbors_symmetric(self):
        lat = TorusLattice(2, 5)
        for x in range(lat.n_sites):
            for y in lat.neighbors[x]:
                assert x in lat.neighbors[y]

    def test_coords_site_roundtrip(self):
        lat = TorusLattice(3, 4)
        for s in range(lat.n_sites):
            assert lat.site(lat.coords(s)) == s

    def test_translate_is_additive(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            dim = int(rng.integers(1, 4))
            lat = TorusLattice(dim, int(rng.integers(3, 7)))
            sites = np.arange(lat.n_sites)
            u = rng.integers(-5, 6, size=dim)
            v = rng.integers(-5, 6, size=dim)
            one = lat.translate(lat.translate(sites, u), v)
            both = lat.translate(sites, u + v)
            assert np.array_equal(one, both)
            assert sorted(one.tolist()) == sites.tolist()  # bijection

    def test_box_row_major(self):
        lat = TorusLattice(2, 4)
        got = lat.box((3, 3), (2, 2))  # wraps both axes
        expect = [lat.site((a, b)) for a in (3, 0) for b in (3, 0)]
        assert got.tolist() == expect


class TestConfigs:
    def test_alphabets_enforced(self):
        lat = TorusLattice(1, 4)
        with pytest.raises(ValueError):
            OccupancyConfig(lat, [0, 1, 2, 0])
        with pytest.raises(ValueError):
            SignedConfig(lat, [0, 2, 0, 0])
        TwoSpeciesConfig(lat, [0, BOTH, -1, 1])  # full alphabet is fine

    def test_values_frozen(self):
        cfg = OccupancyConfig(TorusLattice(1, 4), [1, 0, 0, 1])
        with pytest.raises(ValueError):
            cfg.values[0] = 0

    def test_text_roundtrip(self):
        lat = TorusLattice(1, 6)
        for cfg in (
            OccupancyConfig(lat, [1, 0, 1, 1, 0, 0]),
            SignedConfig(lat, [1, -1, 0, 0, 1, -1]),
            TwoSpeciesConfig(lat, [BOTH, 0, 1, -1, 0, BOTH]),
        ):
            assert config_from_text(cfg.to_text()) == cfg

    def test_from_text_rejects_garbage(self):
        with pytest.raises(ValueError):
            config_from_text("1 4 occupancy\n01x1\n")
        with pytest.raises(ValueError):
            config_from_text("1 4 nosuch\n0101\n")
        with pytest.raises(ValueError):
            config_from_text("1 4 occupancy\n010\n")

    def test_swap(self):
        cfg = OccupancyConfig(TorusLattice(1, 4), [1, 0, 0, 1])
        assert swap(cfg, 0, 1).values.tolist() == [0, 1, 0, 1]
        with pytest.raises(ValueError):
            swap(cfg, 1, 1)

    def test_annihilate_pair(self):
        cfg = SignedConfig(TorusLattice(1, 4), [1, -1, 0, 0])
        assert annihilate_pair(cfg, 0, 1).values.tolist() == [0, 0, 0, 0]
        with pytest.raises(ValueError):
            annihilate_pair(cfg, 1, 1)
        with pytest.raises(TypeError):
            annihilate_pair(OccupancyConfig(cfg.lattice, [1, 0, 0, 0]), 0, 1)

    def test_set_pair(self):
        cfg = TwoSpeciesConfig(TorusLattice(1, 4), [1, -1, 0, 0])
        out = set_pair(cfg, 0, 1, BOTH, 0)
        assert out.values.tolist() == [BOTH, 0, 0, 0]

    def test_difference(self):
        lat = TorusLattice(1, 4)
        eta = OccupancyConfig(lat, [1, 1, 0, 0])
        zeta = OccupancyConfig(lat, [1, 0, 1, 0])
        assert difference(eta, zeta).values.tolist() == [0, 1, -1, 0]

    def test_count_species_and_hamming(self):
        lat = TorusLattice(1, 5)
        cfg = SignedConfig(lat, [1, -1, 1, 0, 0])
        assert count_species(cfg, range(5), 1) == 2
        assert count_species(cfg, [0, 1], -1) == 1
        other = SignedConfig(lat, [1, 1, 1, 0, 0])
        assert hamming(cfg, other) == 1


class TestRng:
    def test_replica_streams_differ_and_repeat(self):
        a1 = replica_rng(123, 0).integers(0, 2**32, size=8)
        a2 = replica_rng(123, 0).integers(0, 2**32, size=8)
        b = replica_rng(123, 1).integers(0, 2**32, size=8)
        assert np.array_equal(a1, a2)
        assert not np.array_equal(a1, b)

    def test_replica_stream_ignores_batching(self):
        # the replica index fully determines the stream, so any assignment
        # of replicas to workers gives the same per-replica draws
        draws = {r: replica_rng(9, r).random(4) for r in range(16)}
        for r in np.random.default_rng(0).permutation(16):
            assert np.array_equal(draws[int(r)], replica_rng(9, int(r)).random(4))

    def test_make_rng_passthrough(self):
        rng = np.random.default_rng(5)
        assert make_rng(rng) is rng
        assert make_rng(11).random() == make_rng(11).random()
