"""
Lattice-level domain types: Fock states, model parameters, sector bases, sparse operators
"""

from typing import Iterator, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator
from scipy import sparse


def site_mask(i: int, L: int) -> int:
    """Bit mask of 1-based site ``i``; site 1 is the most significant bit."""
    return 1 << (L - i)


class FockState(BaseModel):
    """Occupation configuration of L hard-core-boson sites stored as an integer."""

    model_config = ConfigDict(frozen=True)

    value: int = Field(..., ge=0, description="Bit pattern, site 1 most significant")
    L: int = Field(..., ge=1, description="Number of sites")

    @model_validator(mode="after")
    def _fits(self) -> "FockState":
        if self.value >= 1 << self.L:
            raise ValueError(f"value {self.value} does not fit in {self.L} sites")
        return self

    @classmethod
    def from_string(cls, bits: str) -> "FockState":
        """'1100' -> FockState with sites 1,2 occupied."""
        bits = bits.strip()
        if not bits or set(bits) - {"0", "1"}:
            raise ValueError(f"not a bitstring: {bits!r}")
        return cls(value=int(bits, 2), L=len(bits))

    def to_string(self) -> str:
        return format(self.value, f"0{self.L}b")

    def occupation(self, i: int) -> int:
        """n_i for 1-based site i; sites outside [1, L] read as empty."""
        if i < 1 or i > self.L:
            return 0
        return (self.value >> (self.L - i)) & 1

    @property
    def popcount(self) -> int:
        return self.value.bit_count()

    def rightmost(self) -> int:
        """Position of the rightmost occupied site (0 for the empty chain)."""
        if self.value == 0:
            return 0
        lowest = (self.value & -self.value).bit_length() - 1
        return self.L - lowest

    def leftmost(self) -> int:
        """Position of the leftmost occupied site (0 for the empty chain)."""
        if self.value == 0:
            return 0
        return self.L - self.value.bit_length() + 1

    def __str__(self) -> str:
        return self.to_string()


class ModelSpec(BaseModel):
    """Constraint range r and hopping amplitudes t_1..t_r."""

    model_config = ConfigDict(frozen=True)

    r: int = Field(2, ge=1, description="Constraint range")
    t: Optional[Tuple[float, ...]] = Field(None, description="Amplitudes t_1..t_r")

    @model_validator(mode="after")
    def _default_amplitudes(self) -> "ModelSpec":
        if self.t is None:
            object.__setattr__(self, "t", tuple(1.0 for _ in range(self.r)))
        elif len(self.t) != self.r:
            raise ValueError(f"expected {self.r} hopping amplitudes, got {len(self.t)}")
        return self

    def amplitude(self, ell: int) -> float:
        """t_ell for 1 <= ell <= r."""
        return self.t[ell - 1]


class SectorBasis(BaseModel):
    """Canonically ordered set of Fock states (descending integer value)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    states: np.ndarray = Field(..., description="int64 bit patterns, strictly descending")
    L: int = Field(..., ge=1)
    Np: int = Field(..., ge=0)
    r: Optional[int] = Field(None, description="Constraint range of the generating model")

    _ascending: np.ndarray = PrivateAttr()

    @field_validator("states")
    @classmethod
    def _as_int64(cls, value: np.ndarray) -> np.ndarray:
        value = np.asarray(value, dtype=np.int64)
        if value.ndim != 1:
            raise ValueError("states must be one-dimensional")
        if value.size > 1 and not np.all(value[:-1] > value[1:]):
            raise ValueError("states must be strictly descending")
        value.setflags(write=False)
        return value

    @model_validator(mode="after")
    def _check_weights(self) -> "SectorBasis":
        if self.states.size and not np.all(np.bitwise_count(self.states) == self.Np):
            raise ValueError(f"every state must hold exactly {self.Np} particles")
        return self

    def model_post_init(self, __context) -> None:
        self._ascending = self.states[::-1]

    @classmethod
    def from_states(
        cls, states, L: int, r: Optional[int] = None
    ) -> "SectorBasis":
        """Build a canonical basis from any iterable of ints, FockStates or bitstrings."""
        values = []
        for s in states:
            if isinstance(s, FockState):
                values.append(s.value)
            elif isinstance(s, str):
                values.append(FockState.from_string(s).value)
            else:
                values.append(int(s))
        array = np.unique(np.asarray(values, dtype=np.int64))[::-1].copy()
        Np = int(np.bitwise_count(array[0])) if array.size else 0
        return cls(states=array, L=L, Np=Np, r=r)

    def __len__(self) -> int:
        return int(self.states.size)

    def __iter__(self) -> Iterator[FockState]:
        for value in self.states:
            yield FockState(value=int(value), L=self.L)

    def state(self, k: int) -> FockState:
        return FockState(value=int(self.states[k]), L=self.L)

    def lookup(self, values: np.ndarray) -> np.ndarray:
        """Vectorised ordinal lookup; -1 marks values outside the basis."""
        values = np.asarray(values, dtype=np.int64)
        n = self._ascending.size
        if n == 0:
            return np.full(values.shape, -1, dtype=np.int64)
        pos = np.searchsorted(self._ascending, values)
        clipped = np.minimum(pos, n - 1)
        found = self._ascending[clipped] == values
        return np.where(found, n - 1 - clipped, -1).astype(np.int64)

    def bitstrings(self) -> List[str]:
        return [format(int(v), f"0{self.L}b") for v in self.states]


class SparseOperator(BaseModel):
    """Real symmetric operator stored as its strict upper triangle."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dim: int = Field(..., ge=0)
    upper: sparse.csr_matrix = Field(..., description="Strict upper triangle")
    symmetric: bool = True

    @property
    def nnz(self) -> int:
        return int(self.upper.nnz)

    def entries(self) -> Iterator[Tuple[int, int, float]]:
        """Stored (row, col, value) triples, 0-based ordinals, upper triangle only."""
        coo = self.upper.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for k in order:
            yield int(coo.row[k]), int(coo.col[k]), float(coo.data[k])
