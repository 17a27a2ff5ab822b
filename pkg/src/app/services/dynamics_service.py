"""
Dynamics service: quench evolution, ensemble predictions and transport exponents
"""

import logging
from itertools import combinations
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, signal
from scipy.sparse import linalg as sparse_linalg
from tqdm import tqdm

import src.config.env as env
from src.app.exceptions import NumericalContractError
from src.app.models.dynamics_model import (
    CollapseFit,
    ExponentSeries,
    FrontSeries,
    ObservableTrace,
    Plateau,
    RevivalReport,
)
from src.app.models.fit_model import FitResult
from src.app.models.lattice_model import FockState, SectorBasis, SparseOperator
from src.app.models.spectrum_model import EigenSystem
from src.app.services.basis_service import BasisService, DimensionMismatchError, DomainError
from src.app.services.entanglement_service import EntanglementService
from src.app.services.fitting_service import FittingService, InsufficientStatisticsError
from src.app.services.hamiltonian_service import BasisMismatchError, HamiltonianService

logger = logging.getLogger(__name__)

# Samples evaluated per batch in exact evolution
EXACT_BATCH = 256

# Named initial states on L = 13 (r = 2)
PRESET_STATES: Dict[str, Dict[str, float]] = {
    "psi0": {"1100100010100": 1.0, "1011000010100": -1.0},
    "psi_plus": {"1100100010100": 1.0},
    "psi_minus": {"1011000010100": 1.0},
}


class NormDriftError(NumericalContractError):
    """RK4 norm drifted beyond the abort threshold with renormalization off."""


class DynamicsService:
    """Unitary evolution from product states and analysis of the traces"""

    def __init__(
        self,
        hamiltonian_service: Optional[HamiltonianService] = None,
        entanglement_service: Optional[EntanglementService] = None,
    ):
        self.hamiltonian = hamiltonian_service or HamiltonianService()
        self.entanglement = entanglement_service or EntanglementService()
        self.fitting = FittingService()

    @staticmethod
    def log_schedule(
        t_min: float = 0.1, t_max: float = 1e4, points_per_decade: Optional[int] = None
    ) -> np.ndarray:
        """Log-spaced sample times from t_min to t_max inclusive."""
        ppd = points_per_decade or env.POINTS_PER_DECADE
        if not 0 < t_min < t_max:
            raise DomainError(f"log schedule needs 0 < t_min < t_max, got {t_min}, {t_max}")
        n = int(round(ppd * np.log10(t_max / t_min))) + 1
        return np.logspace(np.log10(t_min), np.log10(t_max), n)

    @staticmethod
    def product_state(basis: SectorBasis, bits: Union[str, FockState]) -> np.ndarray:
        """Unit vector on one basis configuration."""
        state = FockState.from_string(bits) if isinstance(bits, str) else bits
        k = BasisService.state_index(basis, state)
        if k is None:
            raise BasisMismatchError(f"{state} is not in the basis")
        v = np.zeros(len(basis), dtype=np.complex128)
        v[k] = 1.0
        return v

    def superposition(self, basis: SectorBasis, terms: Mapping[str, float]) -> np.ndarray:
        """Normalised sum of weighted configurations."""
        v = sum(c * self.product_state(basis, bits) for bits, c in terms.items())
        return v / np.linalg.norm(v)

    def initial_state(self, basis: SectorBasis, name: str) -> np.ndarray:
        """``dw``, a preset name, or a literal bitstring."""
        if name == "dw":
            return self.product_state(basis, "1" * basis.Np + "0" * (basis.L - basis.Np))
        if name in PRESET_STATES:
            return self.superposition(basis, PRESET_STATES[name])
        return self.product_state(basis, name)

    def _observe(
        self,
        psi: np.ndarray,
        psi0: np.ndarray,
        occupations: np.ndarray,
        basis: SectorBasis,
        cuts: Sequence[int],
    ) -> Tuple[np.ndarray, float, float, List[float]]:
        weights = np.abs(psi) ** 2
        density = weights @ occupations
        fidelity = float(np.abs(np.vdot(psi0, psi)) ** 2)
        norm = float(np.sqrt(weights.sum()))
        entropies = [self.entanglement.schmidt_cut(psi, basis, c).entropy for c in cuts]
        return density, fidelity, norm, entropies

    def evolve_exact(
        self,
        es: EigenSystem,
        psi0: np.ndarray,
        times: Iterable[float],
        cuts: Sequence[int] = (),
    ) -> ObservableTrace:
        """
        Evolve through the eigenbasis: psi(t) = sum_a exp(-i E_a t) <a|psi0> |a>

        Args:
            es: Complete eigensystem with its basis
            psi0: Normalised initial state
            times: Sample times
            cuts: Cuts whose entropy is recorded

        Returns:
            ObservableTrace: Densities, fidelity, norm, energy and entropies per sample
        """
        basis = es.basis
        psi0 = np.asarray(psi0, dtype=np.complex128)
        if psi0.shape != (es.dim,):
            raise DimensionMismatchError(f"initial state of shape {psi0.shape} for dim {es.dim}")
        times = np.asarray(list(times), dtype=np.float64)
        occupations = BasisService.occupations(basis).astype(np.float64)
        overlaps = es.vectors.T @ psi0
        energy = float(np.sum(np.abs(overlaps) ** 2 * es.energies))

        densities, fidelity, norms, entropies = [], [], [], []
        for start in range(0, times.size, EXACT_BATCH):
            block = times[start : start + EXACT_BATCH]
            phases = np.exp(-1j * np.outer(es.energies, block)) * overlaps[:, None]
            states = es.vectors @ phases
            for k in range(block.size):
                d, f, n, s = self._observe(states[:, k], psi0, occupations, basis, cuts)
                densities.append(d)
                fidelity.append(f)
                norms.append(n)
                entropies.append(s)

        return self._trace(basis, "exact", times, densities, fidelity, norms, np.full(times.size, energy), entropies, cuts, 0)

    def _trace(self, basis, method, times, densities, fidelity, norms, energies, entropies, cuts, renormalizations) -> ObservableTrace:
        densities = np.asarray(densities).reshape(len(times), basis.L)
        table = np.asarray(entropies).reshape(len(times), len(cuts))
        trace = ObservableTrace(
            L=basis.L,
            Np=basis.Np,
            method=method,
            times=np.asarray(times, dtype=np.float64),
            densities=densities,
            fidelity=np.asarray(fidelity),
            norms=np.asarray(norms),
            energies=np.asarray(energies, dtype=np.float64),
            entropies={c: table[:, k] for k, c in enumerate(cuts)},
            renormalizations=renormalizations,
        )
        trace.displacement = self.rms_displacement(trace, basis.Np)
        return trace

    def evolve_rk4(
        self,
        H: SparseOperator,
        basis: SectorBasis,
        psi0: np.ndarray,
        times: Iterable[float],
        dt: Optional[float] = None,
        renormalize: Optional[bool] = None,
        cuts: Sequence[int] = (),
    ) -> ObservableTrace:
        """
        Classic fourth-order Runge-Kutta for i dpsi/dt = H psi

        Steps of ``dt`` are shortened to land exactly on every sample time.
        The state is renormalised when its norm drifts beyond NORM_TOL and
        renormalization is on; with it off a drift beyond NORM_ABORT_TOL aborts.

        Args:
            H: Sparse Hamiltonian
            basis: Basis of H
            psi0: Normalised initial state
            times: Ascending sample times
            dt: Step size
            renormalize: Default on when the last sample exceeds t = 1e3
            cuts: Cuts whose entropy is recorded

        Returns:
            ObservableTrace: Samples on ``times``
        """
        dt = dt if dt is not None else env.DEFAULT_DT
        psi = np.array(psi0, dtype=np.complex128)
        if psi.shape != (H.dim,):
            raise DimensionMismatchError(f"initial state of shape {psi.shape} for dim {H.dim}")
        times = np.asarray(list(times), dtype=np.float64)
        if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
            raise DomainError("sample times must be non-negative and ascending")
        if renormalize is None:
            renormalize = bool(times.size and times[-1] > 1e3)

        A = self.hamiltonian.to_csr(H).astype(np.complex128) * -1j
        occupations = BasisService.occupations(basis).astype(np.float64)
        psi_initial = psi.copy()

        def step(psi: np.ndarray, h: float) -> np.ndarray:
            k1 = A @ psi
            k2 = A @ (psi + 0.5 * h * k1)
            k3 = A @ (psi + 0.5 * h * k2)
            k4 = A @ (psi + h * k3)
            return psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        densities, fidelity, norms, energies, entropies = [], [], [], [], []
        renormalizations = 0
        t = 0.0
        total = int(np.ceil(times[-1] / dt)) if times.size else 0
        with tqdm(total=total, desc="rk4", disable=not env.SHOW_PROGRESS) as bar:
            for target in times:
                while target - t > 1e-12:
                    h = min(dt, target - t)
                    psi = step(psi, h)
                    t = target if h < dt else t + h
                    bar.update(1)
                    drift = abs(np.linalg.norm(psi) - 1.0)
                    if drift > env.NORM_TOL:
                        if renormalize:
                            psi /= np.linalg.norm(psi)
                            renormalizations += 1
                            logger.warning("Renormalized at t=%.6g (drift %.3e)", t, drift)
                        elif drift > env.NORM_ABORT_TOL:
                            raise NormDriftError(f"norm drift {drift:.3e} at t={t:.6g} with renormalization off")
                d, f, n, s = self._observe(psi, psi_initial, occupations, basis, cuts)
                densities.append(d)
                fidelity.append(f)
                norms.append(n)
                energies.append(self.hamiltonian.expectation(H, psi))
                entropies.append(s)

        return self._trace(basis, "rk4", times, densities, fidelity, norms, energies, entropies, cuts, renormalizations)

    def evolve_krylov(
        self,
        H: SparseOperator,
        basis: SectorBasis,
        psi0: np.ndarray,
        times: Iterable[float],
        cuts: Sequence[int] = (),
    ) -> ObservableTrace:
        """
        Propagate between consecutive samples with the action of exp(-i H dt)

        For sectors above the dense cap. Each sampling interval is one
        expm_multiply call.
        """
        psi = np.array(psi0, dtype=np.complex128)
        if psi.shape != (H.dim,):
            raise DimensionMismatchError(f"initial state of shape {psi.shape} for dim {H.dim}")
        times = np.asarray(list(times), dtype=np.float64)
        if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
            raise DomainError("sample times must be non-negative and ascending")

        A = self.hamiltonian.to_csr(H).astype(np.complex128) * -1j
        occupations = BasisService.occupations(basis).astype(np.float64)
        psi_initial = psi.copy()

        densities, fidelity, norms, energies, entropies = [], [], [], [], []
        t = 0.0
        for target in tqdm(times, desc="krylov", disable=not env.SHOW_PROGRESS):
            if target > t:
                # H has an empty diagonal
                psi = sparse_linalg.expm_multiply(A * (target - t), psi, traceA=0.0)
                t = target
            d, f, n, s = self._observe(psi, psi_initial, occupations, basis, cuts)
            densities.append(d)
            fidelity.append(f)
            norms.append(n)
            energies.append(self.hamiltonian.expectation(H, psi))
            entropies.append(s)

        logger.info("Krylov evolution of dim %d to t=%.6g", H.dim, t)
        return self._trace(basis, "krylov", times, densities, fidelity, norms, energies, entropies, cuts, 0)

    @staticmethod
    def diagonal_ensemble(
        es: EigenSystem, psi0: np.ndarray, site: Optional[int] = None
    ) -> Union[float, np.ndarray]:
        """
        Infinite-time average sum_a |<psi0|a>|^2 <a|n_i|a>

        Returns the value for one site, or the whole profile when site is None.
        """
        weights = np.abs(es.vectors.T @ np.asarray(psi0)) ** 2
        eigen_profiles = (es.vectors**2).T @ BasisService.occupations(es.basis).astype(np.float64)
        profile = weights @ eigen_profiles
        if site is None:
            return profile
        return float(profile[site - 1])

    @staticmethod
    def infinite_temperature_profile(basis: SectorBasis) -> np.ndarray:
        """Equal-weight mean occupation per site."""
        return BasisService.occupations(basis).mean(axis=0)

    @staticmethod
    def rms_displacement(trace: Union[ObservableTrace, np.ndarray], Np: int) -> np.ndarray:
        """R(t) = sqrt(sum_{i > Np} <n_i(t)> (i - Np)^2)"""
        densities = trace.densities if isinstance(trace, ObservableTrace) else np.asarray(trace)
        distance = np.arange(1, densities.shape[-1] + 1) - Np
        weights = np.where(distance > 0, distance.astype(np.float64) ** 2, 0.0)
        return np.sqrt(densities @ weights)

    @staticmethod
    def dynamical_exponent(
        times: np.ndarray, R: np.ndarray, window: Optional[int] = None, polyorder: int = 2
    ) -> ExponentSeries:
        """
        Smoothed d ln R / d ln t, i.e. 1/z

        Samples with non-positive R or t are dropped. Non-uniform ln t grids
        are resampled onto a uniform one before the Savitzky-Golay derivative.
        """
        window = window or env.SMOOTHING_WINDOW
        if window % 2 == 0 or window <= polyorder:
            raise DomainError(f"smoothing window must be odd and above {polyorder}, got {window}")
        times = np.asarray(times, dtype=np.float64)
        R = np.asarray(R, dtype=np.float64)
        keep = (times > 0) & (R > 0)
        if np.count_nonzero(keep) < window:
            raise InsufficientStatisticsError(
                f"{np.count_nonzero(keep)} positive samples for a window of {window}"
            )
        x, y = np.log(times[keep]), np.log(R[keep])
        spacing = np.diff(x)
        if not np.allclose(spacing, spacing[0], rtol=1e-6, atol=0.0):
            grid = np.linspace(x[0], x[-1], x.size)
            y = np.interp(grid, x, y)
            x = grid
        values = signal.savgol_filter(y, window, polyorder, deriv=1, delta=x[1] - x[0])
        return ExponentSeries(times=np.exp(x), values=values, window=window)

    def threshold_front(
        self, trace: ObservableTrace, epsilon: float, window: Optional[int] = None
    ) -> FrontSeries:
        """
        Spreading distance delta_r(t) = max{i - Np : <n_i(t)> > epsilon} and its exponent

        Returns an empty series when no site right of Np ever exceeds epsilon.
        """
        if not 1e-10 <= epsilon <= 0.1:
            raise DomainError(f"epsilon {epsilon} outside [1e-10, 0.1]")
        sites = np.arange(1, trace.L + 1)
        above = trace.densities > epsilon
        delta = np.where(above.any(axis=1), np.max(np.where(above, sites, 0), axis=1) - trace.Np, 0)
        moving = delta > 0
        if not moving.any():
            logger.warning("Front never passes epsilon=%.1e", epsilon)
            return FrontSeries(epsilon=epsilon, times=np.zeros(0), delta_r=np.zeros(0))

        times, delta = trace.times[moving], delta[moving].astype(np.float64)
        exponent = None
        try:
            exponent = self.dynamical_exponent(times, delta, window)
        except InsufficientStatisticsError as e:
            logger.warning("No exponent for epsilon=%.1e: %s", epsilon, e)
        return FrontSeries(epsilon=epsilon, times=times, delta_r=delta, exponent=exponent)

    @staticmethod
    def _late_average(curve: np.ndarray, fraction: float) -> float:
        tail = max(1, int(round(fraction * curve.size)))
        return float(np.mean(curve[-tail:]))

    def leg_rescaled_collapse(
        self,
        times: np.ndarray,
        curves: Mapping[int, np.ndarray],
        populations: Mapping[int, int],
        alpha: float,
        late_fraction: float = 0.1,
        grid_points: int = 200,
    ) -> float:
        """
        Mean pairwise squared distance after rescaling t -> t / N_i^alpha

        Each curve is divided by its late-time average. Lower is better; pairs
        without overlap in ln t are skipped.
        """
        log_t = np.log(np.asarray(times, dtype=np.float64))
        rescaled = []
        for site, curve in curves.items():
            curve = np.asarray(curve, dtype=np.float64)
            scale = self._late_average(curve, late_fraction)
            if scale <= 0:
                continue
            rescaled.append((log_t - alpha * np.log(populations[site]), curve / scale))

        scores = []
        for (xa, ya), (xb, yb) in combinations(rescaled, 2):
            lo, hi = max(xa[0], xb[0]), min(xa[-1], xb[-1])
            if hi <= lo:
                continue
            grid = np.linspace(lo, hi, grid_points)
            scores.append(np.mean((np.interp(grid, xa, ya) - np.interp(grid, xb, yb)) ** 2))
        return float(np.mean(scores)) if scores else float("inf")

    def fit_collapse_exponent(
        self,
        times: np.ndarray,
        curves: Mapping[int, np.ndarray],
        populations: Mapping[int, int],
        alpha_range: Tuple[float, float] = (0.8, 1.5),
        grid: int = 29,
    ) -> CollapseFit:
        """Coarse scan of alpha followed by a bounded scalar minimisation."""
        alphas = np.linspace(alpha_range[0], alpha_range[1], grid)
        scores = np.array([self.leg_rescaled_collapse(times, curves, populations, a) for a in alphas])
        best = int(np.argmin(scores))
        lo = alphas[max(best - 1, 0)]
        hi = alphas[min(best + 1, grid - 1)]
        result = optimize.minimize_scalar(
            lambda a: self.leg_rescaled_collapse(times, curves, populations, a),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-5},
        )
        alpha, score = float(result.x), float(result.fun)
        if scores[best] < score:
            alpha, score = float(alphas[best]), float(scores[best])
        return CollapseFit(alpha=alpha, score=score, alphas=alphas, scores=scores)

    @staticmethod
    def dominant_frequency(times: np.ndarray, series: np.ndarray) -> float:
        """Angular frequency of the largest Fourier peak on a uniform grid."""
        times = np.asarray(times, dtype=np.float64)
        dt = np.diff(times)
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise DomainError("dominant_frequency needs uniformly spaced samples")
        values = np.asarray(series, dtype=np.float64)
        spectrum = np.abs(np.fft.rfft(values - values.mean()))
        k = int(np.argmax(spectrum[1:])) + 1
        offset = 0.0
        if 1 <= k < spectrum.size - 1:
            a, b, c = np.log(spectrum[k - 1 : k + 2] + 1e-300)
            denom = a - 2 * b + c
            if denom != 0:
                offset = 0.5 * (a - c) / denom
        return float(2 * np.pi * (k + offset) / (values.size * dt[0]))

    @staticmethod
    def late_time_average(trace: ObservableTrace, t_from: float, t_to: Optional[float] = None) -> np.ndarray:
        """Mean density profile over samples with t_from <= t <= t_to."""
        t_to = t_to if t_to is not None else float(trace.times[-1])
        inside = (trace.times >= t_from) & (trace.times <= t_to)
        if not inside.any():
            raise InsufficientStatisticsError(f"no samples in [{t_from}, {t_to}]")
        return trace.densities[inside].mean(axis=0)

    def profile_slope(self, profile: np.ndarray, Np: int, last: Optional[int] = None) -> FitResult:
        """
        Linear fit of a density profile against (i - 2) / Np over sites 2..last

        The constant c of <n_i> ~ <n_2> - c (i - 2) / Np is minus the slope.
        """
        profile = np.asarray(profile, dtype=np.float64)
        last = last if last is not None else profile.size
        sites = np.arange(2, last + 1)
        return self.fitting.linear_fit((sites - 2) / Np, profile[sites - 1])

    @staticmethod
    def revivals(times: np.ndarray, fidelity: np.ndarray, height: float = 0.5) -> RevivalReport:
        """Fidelity maxima above ``height`` and their mean spacing."""
        times = np.asarray(times, dtype=np.float64)
        peaks, _ = signal.find_peaks(np.asarray(fidelity, dtype=np.float64), height=height)
        peak_times = times[peaks]
        period = float(np.mean(np.diff(peak_times))) if peak_times.size > 1 else float("nan")
        return RevivalReport(period=period, peaks=peak_times.tolist())

    def last_site_growth(self, trace: ObservableTrace, t_from: Optional[float] = None) -> FitResult:
        """<n_L(t)> = a + b ln t over the late window, by default the last decade."""
        t_from = t_from if t_from is not None else float(trace.times[-1]) / 10.0
        inside = trace.times >= t_from
        return self.fitting.log_fit(trace.times[inside], trace.density(trace.L)[inside])

    @staticmethod
    def plateau_extent(
        times: np.ndarray, values: np.ndarray, level: float, tol: float
    ) -> Optional[Plateau]:
        """Longest run of samples with |value - level| <= tol."""
        inside = np.abs(np.asarray(values) - level) <= tol
        best: Optional[Tuple[int, int]] = None
        start = None
        for k, flag in enumerate(np.append(inside, False)):
            if flag and start is None:
                start = k
            elif not flag and start is not None:
                if best is None or k - start > best[1] - best[0]:
                    best = (start, k)
                start = None
        if best is None:
            return None
        return Plateau(
            start=float(times[best[0]]), end=float(times[best[1] - 1]), level=level, tol=tol, samples=best[1] - best[0]
        )

    def plateau_scaling(self, Ls: Sequence[int], ends: Sequence[float]) -> FitResult:
        """Plateau end time ~ L^slope; reported, never asserted."""
        return self.fitting.power_fit(Ls, ends)
