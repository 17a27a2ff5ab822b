import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given

from src.app.services.basis_service import DomainError
from src.app.services.dynamics_service import PRESET_STATES, DynamicsService, NormDriftError
from src.app.services.fitting_service import InsufficientStatisticsError
from src.app.services.hamiltonian_service import BasisMismatchError

SQRT2 = np.sqrt(2.0)
TIMES = np.linspace(0.0, 20.0, 2001)


@pytest.fixture(scope="module")
def psi0(dynamics_service, sector13):
    basis, _ = sector13
    return dynamics_service.initial_state(basis, "psi0")


def test_log_schedule():
    times = DynamicsService.log_schedule(0.1, 1e4, 32)
    assert times.size == 161
    assert times[0] == pytest.approx(0.1)
    assert times[-1] == pytest.approx(1e4)
    np.testing.assert_allclose(np.diff(np.log(times)), np.log(10.0) / 32)
    with pytest.raises(DomainError):
        DynamicsService.log_schedule(10.0, 1.0)


def test_initial_states(dynamics_service, sector13):
    basis, _ = sector13
    dw = dynamics_service.initial_state(basis, "dw")
    assert dw[0] == 1.0
    assert np.linalg.norm(dw) == pytest.approx(1.0)
    for name in PRESET_STATES:
        assert np.linalg.norm(dynamics_service.initial_state(basis, name)) == pytest.approx(1.0)
    with pytest.raises(BasisMismatchError):
        dynamics_service.initial_state(basis, "0000000011111")


def test_psi0_fidelity_exact(dynamics_service, eigensystem13, psi0):
    trace = dynamics_service.evolve_exact(eigensystem13, psi0, TIMES, cuts=[11])
    np.testing.assert_allclose(trace.fidelity, np.cos(SQRT2 * TIMES) ** 2, atol=1e-8)
    np.testing.assert_allclose(trace.norms, 1.0, atol=1e-12)
    assert trace.densities.shape == (TIMES.size, 13)
    np.testing.assert_allclose(trace.densities.sum(axis=1), 5.0, atol=1e-10)
    assert set(trace.entropies) == {11}


def test_psi0_fidelity_rk4(dynamics_service, sector13, psi0):
    basis, H = sector13
    trace = dynamics_service.evolve_rk4(H, basis, psi0, TIMES, dt=1e-3)
    np.testing.assert_allclose(trace.fidelity, np.cos(SQRT2 * TIMES) ** 2, atol=1e-6)
    np.testing.assert_allclose(trace.energies, trace.energies[0], atol=1e-8)


def test_rk4_matches_exact(dynamics_service, sector13, eigensystem13):
    basis, H = sector13
    dw = dynamics_service.initial_state(basis, "dw")
    times = np.array([0.0, 0.37, 1.0, 2.5, 5.0])
    exact = dynamics_service.evolve_exact(eigensystem13, dw, times)
    rk4 = dynamics_service.evolve_rk4(H, basis, dw, times, dt=1e-3)
    np.testing.assert_allclose(rk4.densities, exact.densities, atol=1e-8)
    np.testing.assert_allclose(rk4.displacement, exact.displacement, atol=1e-8)
    assert exact.displacement[0] == pytest.approx(0.0, abs=1e-6)


@given(st.integers(min_value=0, max_value=272), st.floats(min_value=0.1, max_value=3.0))
def test_rk4_agrees_with_exact_from_any_product_state(dynamics_service, sector13, eigensystem13, ordinal, t):
    basis, H = sector13
    psi = np.zeros(len(basis))
    psi[ordinal] = 1.0
    times = np.array([0.0, t])
    exact = dynamics_service.evolve_exact(eigensystem13, psi, times)
    rk4 = dynamics_service.evolve_rk4(H, basis, psi, times, dt=1e-3)
    np.testing.assert_allclose(rk4.fidelity, exact.fidelity, atol=1e-8)
    np.testing.assert_allclose(rk4.densities, exact.densities, atol=1e-8)


def test_rk4_aborts_on_drift(dynamics_service, sector13, psi0):
    basis, H = sector13
    with pytest.raises(NormDriftError):
        dynamics_service.evolve_rk4(H, basis, psi0, [50.0], dt=0.5, renormalize=False)


def test_rk4_renormalizes(dynamics_service, sector13, psi0):
    basis, H = sector13
    trace = dynamics_service.evolve_rk4(H, basis, psi0, [5.0], dt=0.2, renormalize=True)
    assert trace.renormalizations > 0
    assert trace.norms[-1] == pytest.approx(1.0, abs=1e-9)


def test_revivals(dynamics_service):
    report = dynamics_service.revivals(TIMES, np.cos(SQRT2 * TIMES) ** 2)
    assert report.period == pytest.approx(np.pi / SQRT2, abs=0.02)
    assert len(report.peaks) >= 5
    assert np.isnan(dynamics_service.revivals(TIMES, np.zeros_like(TIMES)).period)


def test_dominant_frequency(dynamics_service):
    frequency = dynamics_service.dominant_frequency(TIMES, np.cos(SQRT2 * TIMES) ** 2)
    assert frequency == pytest.approx(2 * SQRT2, abs=0.1)
    with pytest.raises(DomainError):
        dynamics_service.dominant_frequency(np.array([0.0, 1.0, 3.0]), np.ones(3))


def test_ensembles_hold_np_particles(dynamics_service, eigensystem13):
    basis = eigensystem13.basis
    dw = dynamics_service.initial_state(basis, "dw")
    diagonal = dynamics_service.diagonal_ensemble(eigensystem13, dw)
    assert diagonal.sum() == pytest.approx(5.0)
    assert dynamics_service.diagonal_ensemble(eigensystem13, dw, site=1) == pytest.approx(diagonal[0])
    infinite = dynamics_service.infinite_temperature_profile(basis)
    assert infinite.sum() == pytest.approx(5.0)
    assert infinite[0] == 1.0


def test_rms_displacement():
    densities = np.array([[1.0, 1.0, 0.0, 0.0], [1.0, 0.0, 1.0, 0.0], [1.0, 0.0, 0.0, 1.0]])
    np.testing.assert_allclose(DynamicsService.rms_displacement(densities, 2), [0.0, 1.0, 2.0])


def test_dynamical_exponent_of_power_law():
    times = DynamicsService.log_schedule(0.1, 1e3, 16)
    series = DynamicsService.dynamical_exponent(times, 3.0 * times**0.5)
    np.testing.assert_allclose(series.values, 0.5, atol=1e-8)
    assert series.window == 9


def test_dynamical_exponent_resamples_uniform_time():
    times = np.linspace(0.1, 100.0, 400)
    series = DynamicsService.dynamical_exponent(times, times**0.74)
    np.testing.assert_allclose(series.values, 0.74, atol=1e-6)


def test_dynamical_exponent_window():
    times = DynamicsService.log_schedule(0.1, 10.0, 8)
    with pytest.raises(DomainError):
        DynamicsService.dynamical_exponent(times, times, window=8)


def test_threshold_front(dynamics_service, eigensystem13):
    dw = dynamics_service.initial_state(eigensystem13.basis, "dw")
    trace = dynamics_service.evolve_exact(eigensystem13, dw, DynamicsService.log_schedule(0.1, 100.0, 16))
    front = dynamics_service.threshold_front(trace, 1e-4)
    assert front.delta_r.size > 0
    assert np.all(np.diff(front.delta_r) >= -8)
    assert front.delta_r.max() <= 13 - 5
    for epsilon in (0.5, 1e-12):
        with pytest.raises(DomainError):
            dynamics_service.threshold_front(trace, epsilon)


def test_collapse_recovers_exponent(dynamics_service):
    times = np.logspace(-2, 6, 400)
    populations = {11: 3, 12: 10, 13: 40}
    curves = {site: 1.0 - np.exp(-times / n**1.15) for site, n in populations.items()}
    fit = dynamics_service.fit_collapse_exponent(times, curves, populations)
    assert fit.alpha == pytest.approx(1.15, abs=0.01)
    assert fit.score == pytest.approx(0.0, abs=1e-4)
    assert fit.alphas.size == fit.scores.size == 29
    worse = dynamics_service.leg_rescaled_collapse(times, curves, populations, 0.8)
    assert worse > fit.score


def test_late_time_average(dynamics_service, eigensystem13):
    dw = dynamics_service.initial_state(eigensystem13.basis, "dw")
    trace = dynamics_service.evolve_exact(eigensystem13, dw, np.linspace(0.0, 10.0, 11))
    late = dynamics_service.late_time_average(trace, 5.0)
    np.testing.assert_allclose(late, trace.densities[5:].mean(axis=0))
    with pytest.raises(InsufficientStatisticsError):
        dynamics_service.late_time_average(trace, 20.0)


def test_profile_slope(dynamics_service):
    Np = 5
    sites = np.arange(1, 14)
    profile = 0.8 - 0.15 * (sites - 2) / Np
    fit = dynamics_service.profile_slope(profile, Np)
    assert fit.slope == pytest.approx(-0.15)
    assert fit.intercept == pytest.approx(0.8)
    assert fit.n_points == 12


def test_last_site_growth(dynamics_service, eigensystem13):
    dw = dynamics_service.initial_state(eigensystem13.basis, "dw")
    trace = dynamics_service.evolve_exact(eigensystem13, dw, DynamicsService.log_schedule(1.0, 100.0, 16))
    fit = dynamics_service.last_site_growth(trace)
    assert fit.kind == "log"
    assert fit.n_points == 17


def test_plateau_extent():
    times = np.arange(10.0)
    values = np.array([0.2, 0.7, 0.75, 0.8, 0.3, 0.72, 0.74, 0.76, 0.78, 0.1])
    plateau = DynamicsService.plateau_extent(times, values, 0.74, 0.05)
    assert (plateau.start, plateau.end, plateau.samples) == (5.0, 8.0, 4)
    assert DynamicsService.plateau_extent(times, values, 5.0, 0.01) is None


def test_plateau_scaling(dynamics_service):
    Ls = [13, 16, 19]
    assert dynamics_service.plateau_scaling(Ls, [2.0 * L**3 for L in Ls]).slope == pytest.approx(3.0)


def test_krylov_matches_exact(dynamics_service, sector13, eigensystem13, psi0):
    basis, H = sector13
    times = np.array([0.0, 0.37, 1.0, 2.5, 5.0, 60.0, 400.0])
    for start in (dynamics_service.initial_state(basis, "dw"), psi0):
        exact = dynamics_service.evolve_exact(eigensystem13, start, times, cuts=[6])
        krylov = dynamics_service.evolve_krylov(H, basis, start, times, cuts=[6])
        assert krylov.method == "krylov"
        np.testing.assert_allclose(krylov.fidelity, exact.fidelity, atol=1e-8)
        np.testing.assert_allclose(krylov.densities, exact.densities, atol=1e-8)
        np.testing.assert_allclose(krylov.entropies[6], exact.entropies[6], atol=1e-7)
        np.testing.assert_allclose(krylov.norms, 1.0, atol=1e-10)
        np.testing.assert_allclose(krylov.energies, exact.energies, atol=1e-10)


@pytest.mark.parametrize("L, c", [(13, 0.1418), (16, 0.1388), (19, 0.1352)])
def test_infinite_temperature_profile_slope(dynamics_service, fragmentation_service, spec, L, c):
    basis = fragmentation_service.largest_sector(L, (L + 2) // 3, spec)
    fit = dynamics_service.profile_slope(dynamics_service.infinite_temperature_profile(basis), basis.Np)
    assert -fit.slope == pytest.approx(c, abs=2e-4)
    assert -fit.slope == pytest.approx(0.15, abs=0.05)


def test_diagonal_ensemble_profile_slope(dynamics_service, eigensystem13):
    dw = dynamics_service.initial_state(eigensystem13.basis, "dw")
    profile = dynamics_service.diagonal_ensemble(eigensystem13, dw)
    c = -dynamics_service.profile_slope(profile, 5).slope
    assert c == pytest.approx(0.174, abs=2e-3)
    assert c == pytest.approx(0.15, abs=0.05)


@pytest.mark.slow
def test_domain_wall_transport_at_l22(dynamics_service, fragmentation_service, hamiltonian_service, spec):
    basis = fragmentation_service.largest_sector(22, 8, spec)
    H = hamiltonian_service.build_hamiltonian(basis, spec)
    infinite = dynamics_service.infinite_temperature_profile(basis)
    assert -dynamics_service.profile_slope(infinite, 8).slope == pytest.approx(0.1316, abs=2e-4)

    times = dynamics_service.log_schedule(0.1, 30.0, 32)
    trace = dynamics_service.evolve_krylov(H, basis, dynamics_service.initial_state(basis, "dw"), times)
    np.testing.assert_allclose(trace.norms, 1.0, atol=1e-8)
    # 1/z sits near 0.74 for t ~ 6-8 only; it keeps falling rather than holding there
    for window in (7, 9, 11):
        exponent = dynamics_service.dynamical_exponent(trace.times, trace.displacement, window)
        early = exponent.values[(exponent.times >= 0.2) & (exponent.times <= 1.0)]
        np.testing.assert_allclose(early, 1.0, atol=0.1)
        plateau = dynamics_service.plateau_extent(exponent.times, exponent.values, 0.74, 0.1)
        assert plateau is not None
        assert 5.0 <= plateau.start <= 8.0
        late = exponent.values[(exponent.times >= 12.0) & (exponent.times <= 20.0)]
        assert late.max() < 0.35
