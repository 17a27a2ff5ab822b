"""
Pydantic models for the JSON summaries written by each command
"""

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from src.app.models.automaton_model import Crossover, FrontVelocities
from src.app.models.dynamics_model import Plateau, RevivalReport
from src.app.models.fit_model import FitResult
from src.app.models.graph_model import ComponentGrowth, SectorCount


class ModelSummary(BaseModel):
    """Model parameters shared by every summary"""

    r: int = Field(..., description="Constraint range")
    t: List[float] = Field(..., description="Hopping amplitudes t_1..t_r")
    L: int = Field(..., description="Number of sites")
    Np: int = Field(..., description="Particle number")
    dim: int = Field(..., description="Dimension of the domain-wall sector")


class GroundStateSummary(BaseModel):
    energy: float
    gap: float
    degenerate: bool
    half_cut: int
    half_cut_entropy: float
    decay: Optional[FitResult] = Field(None, description="ln <n_i> vs i beyond 2Np")


class SpectrumSummary(BaseModel):
    """Level statistics, zero modes and ground state of one sector"""

    model: ModelSummary
    window: Tuple[float, float] = Field(..., description="Energy window of the spacing statistics")
    n_levels: int
    unfold_degree: int
    ks_distance: float = Field(..., description="KS distance of unfolded spacings to the GOE surmise")
    unfolding_stability: Dict[int, float] = Field(default_factory=dict)
    window_comparison: Dict[str, float] = Field(default_factory=dict)
    zero_modes: int
    parity_bound: int = Field(..., description="|#even - #odd| parity imbalance")
    tol_zero: float
    ground_state: GroundStateSummary


class SeparableRecord(BaseModel):
    """One zero-entropy eigenstate read as left zero mode x empty gap x right eigenstate"""

    m: Optional[int] = None
    ell: Optional[int] = None
    q: Optional[int] = None
    energy: float = Field(..., description="Eigenvalue, carried by the right factor")
    residual: Optional[float] = None
    zero_cuts: List[int] = Field(default_factory=list)
    support_mask: str = Field(..., description="Hex bitmask over basis ordinals")
    support: List[str] = Field(default_factory=list, description="Bitstrings with nonzero weight")


class EntanglementSummary(BaseModel):
    """Zero-entropy census, raw solver vectors and rotated multiplets"""

    model: ModelSummary
    tol: float
    cuts: List[int]
    trivial_cuts: List[int]
    raw_counts: Dict[int, int]
    counts: Dict[int, int]
    raw_total: int
    total: int
    raw_support_size: int
    support_size: int
    separable: List[SeparableRecord] = Field(default_factory=list)


class QuenchSummary(BaseModel):
    model: ModelSummary
    initial: str
    method: str
    t_max: float
    step: float
    revivals: RevivalReport
    dominant_frequency: float
    fidelity_error: Optional[float] = Field(
        None, description="max |F(t) - cos^2(sqrt(2) t)|, preset psi0 only"
    )
    max_norm_drift: float
    site: int
    late_density: Dict[str, float] = Field(
        default_factory=dict, description="Late-time mean <n_site> per initial state"
    )


class DwRecord(BaseModel):
    """Domain-wall quench on one system size"""

    model: ModelSummary
    method: str
    t_max: float
    samples: int
    renormalizations: int
    ensemble_deviation: Optional[float] = Field(
        None, description="max_i |diagonal - infinite-temperature|, exact runs only"
    )
    profile_slope: FitResult
    c: float = Field(..., description="Slope constant of the rescaled saturation profile")
    last_site: FitResult
    early_inverse_z: Optional[float] = None
    plateau: Optional[Plateau] = None
    saturation: float = Field(..., description="Late-time R(t)")


class CollapseSummary(BaseModel):
    """Leg-rescaled collapse of the last-site density curves"""

    alpha: float
    score: float
    alphas: List[float]
    scores: List[float]
    populations: Dict[int, int]


class DwSummary(BaseModel):
    runs: List[DwRecord]
    plateau_scaling: Optional[FitResult] = None
    collapse: Optional[CollapseSummary] = None


class AutomatonSummary(BaseModel):
    L: int
    Np: int
    layers: int
    layout: str
    final_displacement: float
    crossover: Optional[Crossover] = None
    velocities: FrontVelocities
    bitmap_bytes: int


class FragmentationSummary(BaseModel):
    model: ModelSummary
    full_sector_dim: int = Field(..., description="Site-1-occupied sector enumerated exhaustively")
    components: int
    dw_component_size: int
    component_sizes: List[int]
    backbone_size: int
    legs: int
    leg_populations: Dict[int, int]
    parity_bound: int
    constraint_mismatches: int
    frozen_sectors: SectorCount
    growth: Optional[ComponentGrowth] = None
