"""
Time-series types produced by quench evolution
"""

from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class ObservableTrace(BaseModel):
    """Observables sampled along one evolution, one row per sample time."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    L: int
    Np: int
    method: str = Field(..., description="exact, rk4 or krylov")
    times: np.ndarray
    densities: np.ndarray = Field(..., description="(n_times, L) profile <n_i(t)>")
    fidelity: np.ndarray
    norms: np.ndarray
    energies: np.ndarray
    entropies: Dict[int, np.ndarray] = Field(default_factory=dict)
    displacement: Optional[np.ndarray] = None
    renormalizations: int = 0

    def density(self, site: int) -> np.ndarray:
        return self.densities[:, site - 1]


class ExponentSeries(BaseModel):
    """Smoothed logarithmic derivative d ln X / d ln t."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray
    window: int


class FrontSeries(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    epsilon: float
    times: np.ndarray
    delta_r: np.ndarray
    exponent: Optional[ExponentSeries] = None


class CollapseFit(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    alpha: float
    score: float
    alphas: np.ndarray
    scores: np.ndarray


class Plateau(BaseModel):
    start: float
    end: float
    level: float
    tol: float
    samples: int


class RevivalReport(BaseModel):
    """Fidelity peaks at multiples of a period."""

    period: float
    peaks: List[float]
