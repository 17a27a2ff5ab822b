"""
Spectral and entanglement domain types
"""

from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.app.models.lattice_model import SectorBasis


class EigenSystem(BaseModel):
    """Ascending energies with eigenvectors as columns, the full spectrum or its lowest levels."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    energies: np.ndarray
    vectors: np.ndarray
    basis: Optional[SectorBasis] = None

    @property
    def dim(self) -> int:
        return int(self.energies.size)

    def multiplets(self, tol: float) -> List[np.ndarray]:
        """Runs of eigenvalue indices whose consecutive gaps are below ``tol``."""
        if self.dim == 0:
            return []
        breaks = np.nonzero(np.diff(self.energies) >= tol)[0] + 1
        return np.split(np.arange(self.dim), breaks)


class SpacingHistogram(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    edges: np.ndarray
    masses: np.ndarray = Field(..., description="Probability per bin, sums to 1")
    spacings: np.ndarray = Field(..., description="Unfolded spacings, unit mean")
    ks_distance: float
    n_levels: int
    unfold_degree: int
    window: Tuple[float, float]

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def density(self) -> np.ndarray:
        return self.masses / np.diff(self.edges)


class DensityOfStates(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    edges: np.ndarray
    density: np.ndarray
    counts: np.ndarray
    zero_modes: int
    tol_zero: float


class GroundStateReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    L: int
    Np: int
    energy: float
    gap: float
    degenerate: bool
    density: np.ndarray
    half_cut: int
    half_cut_entropy: float


class CutSpectrum(BaseModel):
    """Schmidt decomposition across the bond between sites ``cut`` and ``cut`` + 1."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    cut: int
    schmidt_values: np.ndarray
    entropy: float


class LeftState(BaseModel):
    """Zero mode of m particles on ell sites whose last site is empty."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    m: int
    ell: int
    basis: SectorBasis
    vector: np.ndarray
    last_site_density: float
    residual: float

    def terms(self, atol: float = 1e-12) -> Dict[str, float]:
        keep = np.abs(self.vector) > atol
        return dict(zip(np.asarray(self.basis.bitstrings())[keep].tolist(), self.vector[keep].tolist()))


class SeparableEigenstate(BaseModel):
    """Left zero mode, q empty sites, and a right eigenstate, assembled on L sites."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    m: int
    ell: int
    q: int
    L: int
    basis: SectorBasis
    vector: np.ndarray
    energy: float
    residual: float
    support: List[str] = Field(default_factory=list)


class ZeroEntropyCensus(BaseModel):
    """Zero-entropy eigenstates per cut, raw and after multiplet rotation."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    L: int
    Np: int
    tol: float
    cuts: List[int]
    trivial_cuts: List[int] = Field(default_factory=list, description="Cuts where every vector is a product")
    raw_counts: Dict[int, int]
    counts: Dict[int, int] = Field(..., description="Dimension of the zero-entropy span per cut, summed over multiplets")
    raw_total: int
    total: int = Field(..., description="Independent zero-entropy representatives")
    eigenstate_ids: List[int]
    representatives: List[np.ndarray] = Field(default_factory=list)
    representative_energies: List[float] = Field(default_factory=list)
    supports: List[int] = Field(default_factory=list, description="Distinct support bitmasks of the representatives")
    raw_support_size: int = 0
    support_size: int = 0
