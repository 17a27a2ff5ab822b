import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given

from src.app.models.lattice_model import FockState, ModelSpec, SectorBasis
from src.app.services.basis_service import DimensionMismatchError, SiteIndexError
from src.app.services.hamiltonian_service import (
    BasisMismatchError,
    HamiltonianService,
    HermiticityError,
)

T1, T2 = 0.84, 0.49
ROBUST = ModelSpec(r=2, t=(T1, T2))


@pytest.mark.parametrize(
    "bits, i, expected",
    [
        ("1000", 1, 0.0),
        ("1000", 2, T1),
        ("1000", 3, T2),
        ("1100", 3, T1),
        ("0100", 3, T1),
        ("00100", 4, T1),
    ],
)
def test_kinetic_coefficient(bits, i, expected):
    assert HamiltonianService.kinetic_coefficient(FockState.from_string(bits), i, ROBUST) == expected


@pytest.mark.parametrize("spec", [ROBUST, ModelSpec(r=3, t=(1.0, 0.5, 0.25))])
@given(st.data())
def test_hop_amplitude_ignores_sites_right_of_bond(spec, data):
    L = data.draw(st.integers(min_value=2, max_value=16))
    i = data.draw(st.integers(min_value=1, max_value=L - 1))
    left = data.draw(st.integers(min_value=0, max_value=2**i - 1))
    rights = data.draw(st.lists(st.integers(min_value=0, max_value=2 ** (L - i) - 1), min_size=2, max_size=2))
    a, b = (FockState(value=(left << (L - i)) | right, L=L) for right in rights)
    assert HamiltonianService.kinetic_coefficient(a, i, spec) == HamiltonianService.kinetic_coefficient(b, i, spec)


def test_kinetic_coefficient_out_of_range():
    with pytest.raises(SiteIndexError):
        HamiltonianService.kinetic_coefficient(FockState.from_string("1100"), 4, ROBUST)


def test_restricted_block(hamiltonian_service, spec):
    basis = SectorBasis.from_states(["11000", "10100", "10010"], L=5)
    H = hamiltonian_service.build_hamiltonian(basis, spec, mode="restricted")
    assert list(H.entries()) == [(0, 1, 1.0), (1, 2, 1.0)]
    assert hamiltonian_service.dump_matrix(H) == (
        "3 2\n1 2 1.000000000000e+00\n2 3 1.000000000000e+00\n"
    )
    energies = np.linalg.eigvalsh(hamiltonian_service.to_dense(H))
    np.testing.assert_allclose(energies, [-np.sqrt(2), 0.0, np.sqrt(2)], atol=1e-12)
    zero_mode = np.array([1.0, 0.0, -1.0]) / np.sqrt(2)
    np.testing.assert_allclose(hamiltonian_service.apply(H, zero_mode), 0.0, atol=1e-15)


def test_strict_mode_rejects_open_basis(hamiltonian_service, spec):
    basis = SectorBasis.from_states(["1100", "1010"], L=4)
    with pytest.raises(BasisMismatchError):
        hamiltonian_service.build_hamiltonian(basis, spec)


def test_empty_basis_is_rejected(hamiltonian_service, spec):
    basis = SectorBasis(states=np.zeros(0, dtype=np.int64), L=4, Np=2)
    with pytest.raises(DimensionMismatchError):
        hamiltonian_service.build_hamiltonian(basis, spec)


def test_sector_hamiltonian_is_symmetric(sector13, hamiltonian_service):
    _, H = sector13
    dense = hamiltonian_service.to_dense(H)
    assert dense.shape == (273, 273)
    np.testing.assert_array_equal(dense, dense.T)
    assert np.all(np.diag(dense) == 0.0)


@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_apply_matches_dense_product(seed):
    service = HamiltonianService(n_jobs=1)
    spec = ModelSpec(r=2)
    basis = SectorBasis.from_states(["110000", "101000", "100100", "100010", "011000"], L=6)
    H = service.build_hamiltonian(basis, spec, mode="restricted")
    v = np.random.default_rng(seed).normal(size=len(basis))
    np.testing.assert_allclose(service.apply(H, v), service.to_dense(H) @ v, atol=1e-12)


def test_parallel_assembly_matches_serial(sector13, spec):
    basis, H = sector13
    parallel = HamiltonianService(n_jobs=2).build_hamiltonian(basis, spec)
    assert (parallel.upper != H.upper).nnz == 0


def test_from_dense_round_trip(hamiltonian_service):
    matrix = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 2.0], [0.0, 2.0, 0.0]])
    H = hamiltonian_service.from_dense(matrix)
    np.testing.assert_array_equal(hamiltonian_service.to_dense(H), matrix)
    assert H.nnz == 2


def test_from_dense_rejects_bad_input(hamiltonian_service):
    with pytest.raises(HermiticityError):
        hamiltonian_service.from_dense([[0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(ValueError):
        hamiltonian_service.from_dense([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(DimensionMismatchError):
        hamiltonian_service.from_dense([[0.0, 1.0, 0.0]])


def test_apply_rejects_wrong_length(hamiltonian_service, sector13):
    _, H = sector13
    with pytest.raises(DimensionMismatchError):
        hamiltonian_service.apply(H, np.ones(10))


def test_expectation_is_real(hamiltonian_service):
    H = hamiltonian_service.from_dense([[0.0, 1.0], [1.0, 0.0]])
    v = np.array([1.0, 1.0j]) / np.sqrt(2)
    assert hamiltonian_service.expectation(H, v) == pytest.approx(0.0, abs=1e-15)
    assert hamiltonian_service.expectation(H, np.array([1.0, 1.0]) / np.sqrt(2)) == pytest.approx(1.0)


def test_constraint_polynomial_r2():
    polynomial = HamiltonianService.constraint_polynomial(ROBUST)
    assert polynomial == {(1,): T1, (2,): T2, (1, 2): -T2}


@pytest.mark.parametrize("r", [1, 2, 3])
def test_constraint_expansion_agrees(hamiltonian_service, r):
    assert hamiltonian_service.constraint_expansion_mismatch(ModelSpec(r=r)) == []
    t = tuple(0.3 + 0.2 * k for k in range(r))
    assert hamiltonian_service.constraint_expansion_mismatch(ModelSpec(r=r, t=t)) == []


def test_model_spec_checks_amplitude_count():
    with pytest.raises(ValueError):
        ModelSpec(r=2, t=(1.0,))
    assert ModelSpec(r=3).t == (1.0, 1.0, 1.0)
