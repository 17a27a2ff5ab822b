import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given

from src.app.exceptions import ConfigError
from src.app.models.lattice_model import FockState, ModelSpec
from src.app.services.basis_service import DomainError, SiteIndexError
from src.app.services.fragmentation_service import (
    FragmentationService,
    domain_wall,
    frozen_rightmost_mask,
    hop_targets,
    rightmost_sites,
)


def bits(*strings):
    return np.array([int(s, 2) for s in strings], dtype=np.int64)


def test_domain_wall():
    assert format(domain_wall(7, 3), "07b") == "1110000"


def test_rightmost_sites():
    assert rightmost_sites(bits("11000", "10010", "00000"), 5).tolist() == [2, 4, 0]


def test_hop_targets(spec):
    assert hop_targets(bits("11000"), 5, spec).tolist() == [int("10100", 2)]
    assert sorted(hop_targets(bits("10100"), 5, spec).tolist()) == sorted(bits("11000", "10010").tolist())


def test_frozen_rightmost_mask(spec):
    assert frozen_rightmost_mask(bits("11000", "10010"), 5, spec).tolist() == [False, False]
    assert frozen_rightmost_mask(bits("100010", "110000"), 6, spec).tolist() == [True, False]


def test_largest_sector_small(fragmentation_service, spec):
    basis = fragmentation_service.largest_sector(5, 2, spec)
    assert basis.bitstrings() == ["11000", "10100", "10010"]
    assert basis.r == 2


def test_largest_sector_size(fragmentation_service, spec, sector13):
    basis, _ = sector13
    assert len(basis) == 273
    assert len(fragmentation_service.largest_sector(None, 5, spec)) == 273

    wider = fragmentation_service.largest_sector(16, 5, spec)
    assert len(wider) == 273
    assert rightmost_sites(wider.states, 16).max() == 13


def test_largest_sector_rejects_np_above_l(fragmentation_service, spec):
    with pytest.raises(DomainError):
        fragmentation_service.largest_sector(3, 4, spec)


def test_dw_sector_is_one_component(fragmentation_service, spec, sector13):
    basis, _ = sector13
    decomposition = fragmentation_service.connected_components(fragmentation_service.build_graph(basis, spec))
    assert decomposition.count == 1
    assert decomposition.sizes == [273]
    assert decomposition.dw_component == 0


def test_full_sector_fragments(fragmentation_service, basis_service, spec):
    full = basis_service.enumerate_sector(10, 4)
    decomposition = fragmentation_service.connected_components(fragmentation_service.build_graph(full, spec))
    assert decomposition.count > 1
    assert sum(decomposition.sizes) == len(full)
    dw_size = decomposition.sizes[decomposition.dw_component]
    assert dw_size == len(fragmentation_service.largest_sector(10, 4, spec))


def test_export_graph(fragmentation_service, spec):
    g = fragmentation_service.build_graph(fragmentation_service.largest_sector(5, 2, spec), spec)
    edges, vertices = fragmentation_service.export_graph(g, fragmentation_service.connected_components(g))
    assert edges == "1 2\n2 3\n"
    assert vertices == "1 2 0 -1\n2 3 0 -1\n3 4 0 -1\n"


def test_backbone_legs_partition_sector(fragmentation_service, spec, sector13):
    basis, _ = sector13
    legs = fragmentation_service.backbone_legs(fragmentation_service.build_graph(basis, spec))
    assert legs.backbone_size + sum(legs.populations.values()) == len(basis)
    assert legs.leg_count == len(legs.leg_i_max)
    assert all(level > 2 * basis.Np for level in legs.leg_i_max)
    assert np.count_nonzero(legs.leg_id >= 0) == sum(legs.populations.values())


@pytest.mark.parametrize("state, site, expected", [("1010", 1, 1), ("0100", 2, 2), ("1100", 2, 0)])
def test_frozen_site_charge(state, site, expected):
    assert FragmentationService.frozen_site_charge(FockState.from_string(state), site) == expected


@pytest.mark.parametrize("site", [0, 5])
def test_frozen_site_charge_range(site):
    with pytest.raises(ConfigError):
        FragmentationService.frozen_site_charge(FockState.from_string("0100"), site)
    with pytest.raises(SiteIndexError):
        FragmentationService.frozen_site_charge(FockState.from_string("0100"), site)


def test_left_block_charge(fragmentation_service, spec):
    assert fragmentation_service.left_block_charge(FockState.from_string("10010001"), 2, 7, spec) == 1
    assert fragmentation_service.left_block_charge(FockState.from_string("11100000"), 2, 7, spec) == 0


@pytest.mark.parametrize("L_left", [6, 8])
def test_left_block_charge_domain(fragmentation_service, spec, L_left):
    with pytest.raises(DomainError):
        fragmentation_service.left_block_charge(FockState.from_string("10010001"), 2, L_left, spec)


def test_left_block_charges_are_conserved(fragmentation_service, basis_service, spec):
    basis = basis_service.enumerate_sector(10, 4)
    g = fragmentation_service.build_graph(basis, spec)
    edges = np.array(list(g.graph.edges))
    for label in fragmentation_service.frozen_region_labels(10, 4, spec):
        charges = fragmentation_service.left_block_charges(basis, *label, spec)
        np.testing.assert_array_equal(charges[edges[:, 0]], charges[edges[:, 1]])


@pytest.mark.parametrize("r", [1, 2, 3])
@pytest.mark.parametrize("Np", [2, 3, 4, 5, 6])
def test_frozen_region_sector_count(fragmentation_service, r, Np):
    count = fragmentation_service.count_frozen_region_sectors(Np, ModelSpec(r=r))
    assert count.enumerated == count.closed_form == r * (Np - 1) * (Np - 2) // 2
    assert count.per_range_form * r == pytest.approx(count.closed_form)
    assert len(count.labels) == count.enumerated


def test_component_count_growth(fragmentation_service, spec):
    growth = fragmentation_service.component_count_growth([3, 4, 5, 6, 7], spec)
    assert growth.Np == [3, 4, 5, 6, 7]
    assert growth.counts == [3, 8, 21, 55, 144]
    assert all(b > a for a, b in zip(growth.counts, growth.counts[1:]))
    assert growth.slope == pytest.approx(0.967, abs=1e-3)
    assert growth.r_squared > 0.99


@pytest.mark.parametrize("state, expected", [("110", -1), ("101", 1)])
def test_parity(state, expected):
    assert FragmentationService.parity(FockState.from_string(state)) == expected


@given(st.integers(min_value=4, max_value=10), st.data())
def test_every_edge_flips_parity(L, data):
    Np = data.draw(st.integers(min_value=2, max_value=L - 1))
    service = FragmentationService()
    spec = ModelSpec(r=2)
    basis = service.basis_service.enumerate_sector(L, Np)
    g = service.build_graph(basis, spec)
    p = service.parities(basis)
    for u, v in g.graph.edges:
        assert p[u] == -p[v]


def test_parities_match_scalar_form(fragmentation_service, sector13):
    basis, _ = sector13
    p = fragmentation_service.parities(basis)
    for k in (0, 17, 100, 272):
        assert p[k] == fragmentation_service.parity(basis.state(k))
