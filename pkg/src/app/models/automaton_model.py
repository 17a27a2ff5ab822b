"""
Classical automaton types
"""

from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class GateLayout(str, Enum):
    """Where the gates of layer k sit.

    cell: seven-layer cell U1 U2 U1 U2 U1 U2 U1 with p = k mod 7; every layer
        moves its gate type one site on, U1 at j = 1 + p // 2 (mod 4), U2 at
        j = 1 + p // 2 (mod 3).
    paired: U1/U2 layers come in pairs sharing the offset m = k // 2, U1 at
        j = 1 + m (mod 4), U2 at j = 1 + m (mod 3).
    staggered: offset 1 + (k mod 7), U1 at j = offset (mod 4), U2 at j = offset (mod 3).
    """

    CELL = "cell"
    PAIRED = "paired"
    STAGGERED = "staggered"


class AutomatonState(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    bits: np.ndarray = Field(..., description="uint8 occupations, index 0 is site 1")
    layer: int = Field(0, ge=0, description="Layers applied so far")
    layout: GateLayout = GateLayout.CELL

    @property
    def L(self) -> int:
        return int(self.bits.size)

    def to_string(self) -> str:
        return "".join(str(int(b)) for b in self.bits)


class AutomatonRun(BaseModel):
    """Bit map with one row per layer boundary (row 0 is the initial state)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    L: int
    Np: int
    layers: int
    layout: GateLayout
    bitmap: np.ndarray
    displacement: np.ndarray
    particle_front: np.ndarray
    hole_front: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.layers + 1, dtype=np.float64)


class Crossover(BaseModel):
    """Breakpoint between a linear and a logarithmic regime of R(t)."""

    index: int
    time: float
    front: int
    linear_r_squared: float
    log_r_squared: float
    velocity: float = Field(..., description="Slope of the ballistic fit, sites per layer")
    log_slope: float = Field(..., description="d R / d ln t on the tail")


class FrontVelocities(BaseModel):
    particle: float
    hole: float
    particle_r_squared: float
    hole_r_squared: float

    @property
    def ratio(self) -> float:
        return abs(self.particle / self.hole) if self.hole else float("inf")
