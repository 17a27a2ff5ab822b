"""
Spectral service: dense diagonalization, unfolded level statistics, density of states, ground state
"""

import logging
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np
from scipy import linalg, stats
from scipy.sparse import linalg as sparse_linalg

import src.config.env as env
from src.app.exceptions import NumericalContractError, ResourceCapError
from src.app.models.fit_model import FitResult
from src.app.models.lattice_model import SectorBasis, SparseOperator
from src.app.models.spectrum_model import (
    DensityOfStates,
    EigenSystem,
    GroundStateReport,
    SpacingHistogram,
)
from src.app.services.basis_service import BasisService
from src.app.services.fitting_service import FittingService, InsufficientStatisticsError
from src.app.services.hamiltonian_service import HamiltonianService

logger = logging.getLogger(__name__)

Spectrum = Union[EigenSystem, np.ndarray]

# Default window for the level statistics: [E_GS, -0.1]
DEFAULT_WINDOW_TOP = -0.1


class DiagonalizationCapError(ResourceCapError):
    """Dense solve requested above the configured dimension cap."""


class SolverFailureError(NumericalContractError):
    """LAPACK did not converge."""


class ResidualError(NumericalContractError):
    """An eigen-equation residual exceeds its tolerance."""


def goe_pdf(s: np.ndarray) -> np.ndarray:
    """Wigner surmise for the orthogonal ensemble."""
    return 0.5 * np.pi * s * np.exp(-0.25 * np.pi * s**2)


def goe_cdf(s: np.ndarray) -> np.ndarray:
    return 1.0 - np.exp(-0.25 * np.pi * np.asarray(s) ** 2)


class SpectralService:
    """Exact diagonalization and post-processing of spectra"""

    def __init__(
        self,
        hamiltonian_service: Optional[HamiltonianService] = None,
        dense_cap: Optional[int] = None,
    ):
        self.hamiltonian_service = hamiltonian_service or HamiltonianService()
        self.dense_cap = dense_cap if dense_cap is not None else env.DENSE_DIAGONALIZATION_CAP
        self.fitting = FittingService()

    def diagonalize(
        self,
        H: SparseOperator,
        basis: Optional[SectorBasis] = None,
        check_samples: int = 8,
    ) -> EigenSystem:
        """
        Full dense eigendecomposition

        Args:
            H: Real symmetric operator
            basis: Basis the operator acts on, kept for downstream analysis
            check_samples: Eigenpairs whose residual is verified

        Returns:
            EigenSystem: Ascending energies and orthonormal eigenvectors
        """
        if H.dim > self.dense_cap:
            raise DiagonalizationCapError(
                f"dense diagonalization of dim {H.dim} exceeds the cap of {self.dense_cap}"
            )
        dense = self.hamiltonian_service.to_dense(H)
        try:
            energies, vectors = linalg.eigh(dense)
        except linalg.LinAlgError as e:
            raise SolverFailureError(f"eigh failed on dim {H.dim}: {e}") from e

        if H.dim and check_samples:
            scale = max(float(np.abs(energies).max()), 1.0)
            picks = np.unique(np.linspace(0, H.dim - 1, min(check_samples, H.dim)).astype(int))
            residual = np.linalg.norm(
                dense @ vectors[:, picks] - vectors[:, picks] * energies[picks], axis=0
            ).max()
            if residual > 1e-10 * scale:
                raise ResidualError(f"eigenpair residual {residual:.3e} above tolerance")
        logger.info("Diagonalized dim %d, E in [%.6f, %.6f]", H.dim, energies[0], energies[-1])
        return EigenSystem(energies=energies, vectors=vectors, basis=basis)

    def lowest_eigenpairs(
        self, H: SparseOperator, basis: Optional[SectorBasis] = None, k: int = 2
    ) -> EigenSystem:
        """
        Lowest ``k`` eigenpairs by Lanczos, for sectors above the dense cap

        Args:
            H: Real symmetric operator
            basis: Basis the operator acts on
            k: Number of levels, 1 <= k < dim

        Returns:
            EigenSystem: Partial spectrum, ascending
        """
        if not 1 <= k < H.dim:
            raise ValueError(f"need 1 <= k < dim, got k={k} for dim {H.dim}")
        matrix = self.hamiltonian_service.to_csr(H)
        try:
            energies, vectors = sparse_linalg.eigsh(matrix, k=k, which="SA", tol=1e-12)
        except sparse_linalg.ArpackNoConvergence as e:
            raise SolverFailureError(f"eigsh did not converge on dim {H.dim}: {e}") from e
        order = np.argsort(energies)
        energies, vectors = energies[order], vectors[:, order]

        scale = max(float(np.abs(energies).max()), 1.0)
        residual = np.linalg.norm(matrix @ vectors - vectors * energies, axis=0).max()
        if residual > 1e-8 * scale:
            raise ResidualError(f"Lanczos residual {residual:.3e} above tolerance")
        logger.info("Lowest %d levels of dim %d from E=%.6f", k, H.dim, energies[0])
        return EigenSystem(energies=energies, vectors=vectors, basis=basis)

    @staticmethod
    def _energies(es: Spectrum) -> np.ndarray:
        energies = es.energies if isinstance(es, EigenSystem) else np.asarray(es, dtype=np.float64)
        return np.sort(energies)

    @staticmethod
    def tol_zero(es: Spectrum) -> float:
        energies = SpectralService._energies(es)
        if energies.size == 0:
            return 0.0
        return env.ZERO_ENERGY_RTOL * float(np.abs(energies).max())

    @staticmethod
    def unfold(energies: np.ndarray, degree: int) -> np.ndarray:
        """Smoothed staircase N(E) from a degree-``degree`` polynomial fit."""
        energies = np.sort(np.asarray(energies, dtype=np.float64))
        staircase = np.arange(1, energies.size + 1, dtype=np.float64)
        smooth = np.polynomial.Polynomial.fit(energies, staircase, degree)
        return smooth(energies)

    def level_spacings(
        self,
        es: Spectrum,
        window: Optional[Tuple[float, float]] = None,
        unfold_degree: Optional[int] = None,
        bins: int = 40,
        min_levels: Optional[int] = None,
    ) -> SpacingHistogram:
        """
        Unfolded nearest-neighbour spacing distribution

        Args:
            es: Eigensystem or plain array of levels
            window: Closed energy interval; None selects [E_GS, -0.1]
            unfold_degree: Staircase polynomial degree
            bins: Histogram bins on [0, max(4, max s)]
            min_levels: Fewest levels accepted in the window

        Returns:
            SpacingHistogram: P(s) masses, spacings and KS distance to the GOE surmise
        """
        energies = self._energies(es)
        degree = unfold_degree if unfold_degree is not None else env.UNFOLD_DEGREE
        min_levels = min_levels if min_levels is not None else env.MIN_LEVELS
        if window is None:
            window = (float(energies[0]), DEFAULT_WINDOW_TOP)
        lo, hi = window
        if not lo <= hi:
            raise ValueError(f"empty energy window [{lo}, {hi}]")

        selected = energies[(energies >= lo) & (energies <= hi)]
        if selected.size < min_levels:
            raise InsufficientStatisticsError(
                f"{selected.size} levels in [{lo:.4f}, {hi:.4f}], need {min_levels}"
            )
        unfolded = self.unfold(selected, degree)
        spacings = np.diff(unfolded)
        spacings = spacings / spacings.mean()

        upper = max(4.0, float(spacings.max()))
        counts, edges = np.histogram(spacings, bins=bins, range=(0.0, upper))
        masses = counts / counts.sum()
        ks = stats.kstest(spacings, goe_cdf).statistic
        logger.debug("KS distance %.4f over %d levels (degree %d)", ks, selected.size, degree)
        return SpacingHistogram(
            edges=edges,
            masses=masses,
            spacings=spacings,
            ks_distance=float(ks),
            n_levels=int(selected.size),
            unfold_degree=degree,
            window=(float(lo), float(hi)),
        )

    def unfolding_stability(
        self,
        es: Spectrum,
        window: Optional[Tuple[float, float]] = None,
        degrees: Iterable[int] = (5, 6, 7, 8, 9),
    ) -> Dict[int, float]:
        """KS distance per unfolding degree."""
        return {
            d: self.level_spacings(es, window=window, unfold_degree=d).ks_distance for d in degrees
        }

    def compare_windows(
        self, es: Spectrum, window: Optional[Tuple[float, float]] = None, unfold_degree: Optional[int] = None
    ) -> Dict[str, float]:
        """
        KS distance of the negative-energy window against the full spectrum

        The zero-mode block is removed from the full spectrum before unfolding.
        """
        energies = self._energies(es)
        tol = self.tol_zero(energies)
        nonzero = energies[np.abs(energies) > tol]
        windowed = self.level_spacings(energies, window=window, unfold_degree=unfold_degree)
        full = self.level_spacings(
            nonzero, window=(float(nonzero[0]), float(nonzero[-1])), unfold_degree=unfold_degree
        )
        return {
            "window": windowed.ks_distance,
            "full": full.ks_distance,
            "difference": abs(windowed.ks_distance - full.ks_distance),
        }

    def density_of_states(self, es: Spectrum, bins: int = 51) -> DensityOfStates:
        """Normalised histogram of levels plus the count of |E| < tol_zero."""
        energies = self._energies(es)
        tol = self.tol_zero(energies)
        bound = float(np.abs(energies).max()) if energies.size else 1.0
        # symmetric range so that bin(E) and bin(-E) mirror each other
        counts, edges = np.histogram(energies, bins=bins, range=(-bound, bound))
        widths = np.diff(edges)
        density = counts / (counts.sum() * widths)
        zero_modes = int(np.count_nonzero(np.abs(energies) < tol))
        return DensityOfStates(
            edges=edges, density=density, counts=counts, zero_modes=zero_modes, tol_zero=tol
        )

    def ground_state_report(self, es: EigenSystem) -> GroundStateReport:
        """
        Gap, density profile and half-chain entropy of the lowest eigenstate

        Args:
            es: Eigensystem holding at least the two lowest levels, with its basis

        Returns:
            GroundStateReport: Degenerate ground states are flagged, not raised
        """
        from src.app.services.entanglement_service import EntanglementService

        if es.basis is None or es.dim < 2:
            raise ValueError("ground_state_report needs an eigensystem with a basis and dim >= 2")
        basis = es.basis
        gap = float(es.energies[1] - es.energies[0])
        degenerate = gap < 1e-12
        if degenerate:
            logger.warning("Ground state is degenerate (gap %.3e)", gap)

        v0 = es.vectors[:, 0]
        density = (np.abs(v0) ** 2) @ BasisService.occupations(basis).astype(np.float64)
        half = basis.L // 2
        entropy = EntanglementService().schmidt_cut(v0, basis, half).entropy
        return GroundStateReport(
            L=basis.L,
            Np=basis.Np,
            energy=float(es.energies[0]),
            gap=gap,
            degenerate=degenerate,
            density=density,
            half_cut=half,
            half_cut_entropy=entropy,
        )

    def gap_scaling(self, Ls, gaps) -> FitResult:
        """Power law gap ~ L^slope; the decay exponent is -slope."""
        return self.fitting.power_fit(Ls, gaps)

    def entropy_log_fit(self, Ls, entropies) -> FitResult:
        """S = a + b ln L"""
        return self.fitting.log_fit(Ls, entropies)

    def density_decay_fit(self, profile: np.ndarray, start: int) -> FitResult:
        """Exponential decay of <n_i> for sites i >= start (1-based)."""
        sites = np.arange(1, len(profile) + 1)
        keep = sites >= start
        return self.fitting.exp_fit(sites[keep], np.asarray(profile)[keep])
