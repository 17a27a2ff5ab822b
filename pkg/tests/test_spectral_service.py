import numpy as np
import pytest
from scipy import integrate

from src.app.exceptions import ResourceCapError
from src.app.services.fitting_service import InsufficientStatisticsError
from src.app.services.spectral_service import (
    DiagonalizationCapError,
    SpectralService,
    goe_cdf,
    goe_pdf,
)


def goe_levels(n=1500, seed=11):
    a = np.random.default_rng(seed).normal(size=(n, n))
    return np.linalg.eigvalsh(0.5 * (a + a.T))


def test_goe_surmise_is_normalised():
    norm, _ = integrate.quad(goe_pdf, 0.0, np.inf)
    mean, _ = integrate.quad(lambda s: s * goe_pdf(s), 0.0, np.inf)
    assert norm == pytest.approx(1.0)
    assert mean == pytest.approx(1.0)
    assert goe_cdf(0.0) == 0.0
    assert goe_cdf(10.0) == pytest.approx(1.0)


def test_diagonalize(eigensystem13, hamiltonian_service, sector13):
    _, H = sector13
    es = eigensystem13
    assert es.dim == 273
    assert np.all(np.diff(es.energies) >= 0)
    np.testing.assert_allclose(es.vectors.T @ es.vectors, np.eye(273), atol=1e-10)
    dense = hamiltonian_service.to_dense(H)
    np.testing.assert_allclose(dense @ es.vectors[:, :5], es.vectors[:, :5] * es.energies[:5], atol=1e-10)


def test_spectrum_is_symmetric(eigensystem13):
    energies = eigensystem13.energies
    np.testing.assert_allclose(energies, -energies[::-1], atol=1e-10)


@pytest.mark.parametrize("L", range(4, 17))
def test_spectrum_is_symmetric_up_to_l16(fragmentation_service, hamiltonian_service, spec, L):
    Np = (L + 4) // 3
    basis = fragmentation_service.largest_sector(L, Np, spec)
    energies = np.linalg.eigvalsh(hamiltonian_service.to_dense(hamiltonian_service.build_hamiltonian(basis, spec)))
    np.testing.assert_allclose(energies, -energies[::-1], atol=1e-10)


def test_dense_cap(hamiltonian_service, sector13):
    basis, H = sector13
    with pytest.raises(DiagonalizationCapError) as excinfo:
        SpectralService(hamiltonian_service, dense_cap=100).diagonalize(H, basis)
    assert isinstance(excinfo.value, ResourceCapError)


def test_tol_zero(eigensystem13):
    assert SpectralService.tol_zero(eigensystem13) == pytest.approx(1e-10 * np.abs(eigensystem13.energies).max())
    assert SpectralService.tol_zero(np.zeros(0)) == 0.0


def test_density_of_states(spectral_service, fragmentation_service, eigensystem13, sector13):
    basis, _ = sector13
    dos = spectral_service.density_of_states(eigensystem13)
    assert dos.counts.sum() == 273
    assert np.sum(dos.density * np.diff(dos.edges)) == pytest.approx(1.0)
    np.testing.assert_array_equal(dos.counts, dos.counts[::-1])
    assert dos.zero_modes >= fragmentation_service.zero_mode_lower_bound(basis)
    assert dos.zero_modes == np.count_nonzero(np.abs(eigensystem13.energies) < dos.tol_zero)


def test_unfold_equally_spaced_levels():
    unfolded = SpectralService.unfold(0.5 * np.arange(100.0), degree=7)
    np.testing.assert_allclose(np.diff(unfolded), 1.0, atol=1e-8)


def test_goe_levels_match_surmise(spectral_service):
    histogram = spectral_service.level_spacings(goe_levels(), window=(-30.0, 30.0))
    assert histogram.n_levels > 800
    assert histogram.ks_distance < 0.06
    assert histogram.spacings.mean() == pytest.approx(1.0)
    assert histogram.masses.sum() == pytest.approx(1.0)


def test_poisson_levels_do_not(spectral_service):
    levels = np.cumsum(np.random.default_rng(7).exponential(size=2000))
    histogram = spectral_service.level_spacings(levels, window=(levels[0], levels[-1]))
    assert histogram.ks_distance > 0.15


def test_level_spacings_needs_enough_levels(spectral_service):
    with pytest.raises(InsufficientStatisticsError):
        spectral_service.level_spacings(np.arange(10.0), window=(0.0, 9.0))
    with pytest.raises(ValueError):
        spectral_service.level_spacings(np.arange(100.0), window=(5.0, 1.0))


def test_unfolding_stability_and_window_comparison(spectral_service):
    levels = goe_levels()
    stability = spectral_service.unfolding_stability(levels, window=(-30.0, 30.0))
    assert sorted(stability) == [5, 6, 7, 8, 9]
    assert all(ks < 0.08 for ks in stability.values())
    comparison = spectral_service.compare_windows(levels, window=(-30.0, 30.0))
    assert set(comparison) == {"window", "full", "difference"}
    assert comparison["difference"] == pytest.approx(abs(comparison["window"] - comparison["full"]))


def test_ground_state_report(spectral_service, eigensystem13):
    report = spectral_service.ground_state_report(eigensystem13)
    assert report.energy == eigensystem13.energies[0]
    assert report.gap >= 0.0
    assert report.density.sum() == pytest.approx(5.0)
    assert report.half_cut == 6
    assert report.half_cut_entropy >= 0.0


def test_ground_state_report_needs_basis(spectral_service, eigensystem13):
    bare = eigensystem13.model_copy(update={"basis": None})
    with pytest.raises(ValueError):
        spectral_service.ground_state_report(bare)


def test_scaling_fits(spectral_service):
    Ls = np.array([10, 13, 16, 19])
    assert spectral_service.gap_scaling(Ls, 3.0 / Ls).slope == pytest.approx(-1.0)
    assert spectral_service.entropy_log_fit(Ls, 0.2 + 0.5 * np.log(Ls)).slope == pytest.approx(0.5)
    profile = np.exp(-0.3 * np.arange(1, 21))
    fit = spectral_service.density_decay_fit(profile, start=11)
    assert fit.slope == pytest.approx(-0.3)
    assert fit.n_points == 10


@pytest.mark.slow
def test_goe_statistics_at_l19(fragmentation_service, hamiltonian_service, spectral_service, spec):
    basis = fragmentation_service.largest_sector(19, 7, spec)
    es = spectral_service.diagonalize(hamiltonian_service.build_hamiltonian(basis, spec), basis)
    stability = spectral_service.unfolding_stability(es)
    assert all(ks < 0.05 for ks in stability.values())
    dos = spectral_service.density_of_states(es)
    assert dos.zero_modes >= fragmentation_service.zero_mode_lower_bound(basis)


def test_lowest_eigenpairs_match_dense(spectral_service, sector13, eigensystem13):
    basis, H = sector13
    lowest = spectral_service.lowest_eigenpairs(H, basis, k=2)
    np.testing.assert_allclose(lowest.energies, eigensystem13.energies[:2], atol=1e-9)
    sparse_report = spectral_service.ground_state_report(lowest)
    dense_report = spectral_service.ground_state_report(eigensystem13)
    assert sparse_report.gap == pytest.approx(dense_report.gap, abs=1e-9)
    assert sparse_report.half_cut_entropy == pytest.approx(dense_report.half_cut_entropy, abs=1e-8)
    np.testing.assert_allclose(sparse_report.density, dense_report.density, atol=1e-8)
    for k in (0, len(basis)):
        with pytest.raises(ValueError):
            spectral_service.lowest_eigenpairs(H, basis, k=k)


@pytest.mark.slow
def test_ground_state_gap_closes_to_l22(fragmentation_service, hamiltonian_service, spectral_service, spec):
    Ls = [10, 13, 16, 19, 22]
    gaps, entropies = [], []
    for L in Ls:
        basis = fragmentation_service.largest_sector(L, (L + 2) // 3, spec)
        report = spectral_service.ground_state_report(
            spectral_service.lowest_eigenpairs(hamiltonian_service.build_hamiltonian(basis, spec), basis)
        )
        gaps.append(report.gap)
        entropies.append(report.half_cut_entropy)
    np.testing.assert_allclose(gaps, [0.50996, 0.39969, 0.32944, 0.28024, 0.24367], atol=1e-4)
    gamma = -spectral_service.gap_scaling(Ls, gaps).slope
    assert gamma == pytest.approx(1.0, abs=0.15)
    assert spectral_service.entropy_log_fit(Ls, entropies).slope > 0.0
