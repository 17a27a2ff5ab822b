"""
Basis service for enumerating fixed-particle-number Fock sectors
"""

import logging
from itertools import combinations
from math import comb
from typing import Optional, Union

import numpy as np

import src.config.env as env
from src.app.exceptions import ConfigError, ResourceCapError
from src.app.models.lattice_model import FockState, SectorBasis

logger = logging.getLogger(__name__)

# Bit patterns are stored as int64
MAX_SITES = 62


class BasisOverflowError(ResourceCapError):
    """Requested sector is larger than the configured basis-size limit."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class DimensionMismatchError(ValueError):
    """Vector or state length does not match the operator or basis."""


class SiteIndexError(ValueError, ConfigError):
    """Site index outside the allowed range; exits like a bad configuration."""


class BasisService:
    """Sector enumeration, ordinal lookup and occupation tables"""

    def __init__(self, size_limit: Optional[int] = None):
        self.size_limit = size_limit if size_limit is not None else env.BASIS_SIZE_LIMIT

    @staticmethod
    def max_extent(r: int, Np: int) -> int:
        """
        Largest chain length reachable from the domain-wall state

        Args:
            r: Constraint range
            Np: Particle number

        Returns:
            int: (r + 1) * Np - r
        """
        if r < 1 or Np < 1:
            raise DomainError(f"max_extent needs r >= 1 and Np >= 1, got r={r}, Np={Np}")
        return (r + 1) * Np - r

    def sector_size(self, L: int, Np: int, first_site_occupied: bool = True) -> int:
        if first_site_occupied:
            return comb(L - 1, Np - 1)
        return comb(L, Np)

    def check_size(self, size: int, what: str) -> None:
        if size > self.size_limit:
            raise BasisOverflowError(
                f"{what} needs {size} states, above the limit of {self.size_limit}"
            )

    def enumerate_sector(
        self, L: int, Np: int, first_site_occupied: bool = True
    ) -> SectorBasis:
        """
        Enumerate every configuration of Np particles on L sites

        Args:
            L: Number of sites
            Np: Particle number
            first_site_occupied: Keep only states with site 1 occupied

        Returns:
            SectorBasis: States in descending integer order
        """
        if not 1 <= Np <= L:
            raise DomainError(f"enumerate_sector needs 1 <= Np <= L, got Np={Np}, L={L}")
        if L > MAX_SITES:
            raise DomainError(f"at most {MAX_SITES} sites are supported, got {L}")

        size = self.sector_size(L, Np, first_site_occupied)
        self.check_size(size, f"sector L={L} Np={Np}")

        masks = [1 << (L - i) for i in range(L + 1)]
        if first_site_occupied:
            head, sites, k = masks[1], range(2, L + 1), Np - 1
        else:
            head, sites, k = 0, range(1, L + 1), Np

        # lexicographic position tuples come out in descending integer order
        states = np.fromiter(
            (head + sum(masks[p] for p in combo) for combo in combinations(sites, k)),
            dtype=np.int64,
            count=size,
        )
        logger.debug("Enumerated sector L=%d Np=%d: %d states", L, Np, size)
        return SectorBasis(states=states, L=L, Np=Np)

    @staticmethod
    def state_index(
        basis: SectorBasis, s: Union[FockState, str]
    ) -> Optional[int]:
        """
        Ordinal of a state in the basis

        Args:
            basis: Sector basis
            s: Fock state or bitstring of length basis.L

        Returns:
            Optional[int]: Ordinal, or None if the state is not in the basis
        """
        if isinstance(s, str):
            s = FockState.from_string(s)
        if s.L != basis.L:
            raise DimensionMismatchError(f"state has {s.L} sites, basis has {basis.L}")
        k = int(basis.lookup(np.array([s.value]))[0])
        return k if k >= 0 else None

    @staticmethod
    def occupations(basis: SectorBasis) -> np.ndarray:
        """(len(basis), L) uint8 table of n_i, column i-1 holding site i."""
        shifts = np.arange(basis.L - 1, -1, -1, dtype=np.int64)
        return ((basis.states[:, None] >> shifts) & 1).astype(np.uint8)

    @staticmethod
    def dump_basis(basis: SectorBasis) -> str:
        """One ``ordinal<TAB>bitstring`` line per state, ordinals 1-based."""
        lines = [f"{k + 1}\t{bits}" for k, bits in enumerate(basis.bitstrings())]
        return "\n".join(lines) + "\n"
