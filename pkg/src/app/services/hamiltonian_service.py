"""
Hamiltonian service: constraint kernel, sparse assembly and application of H_r
"""

import logging
from itertools import combinations, product
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import sparse

import src.config.env as env
from src.app.exceptions import NumericalContractError
from src.app.models.lattice_model import FockState, ModelSpec, SectorBasis, SparseOperator
from src.app.services.basis_service import DimensionMismatchError, SiteIndexError

logger = logging.getLogger(__name__)

AssemblyMode = Literal["strict", "restricted"]

# Rows per assembly block when running with several workers
BLOCK_ROWS = 1 << 16


class BasisMismatchError(ValueError):
    """A hop leaves the basis during strict assembly."""


class HermiticityError(NumericalContractError):
    """Matrix handed in as an operator is not symmetric."""


def kinetic_coefficients(
    states: np.ndarray, L: int, i: int, spec: ModelSpec
) -> np.ndarray:
    """
    K_{i,r} evaluated on an array of bit patterns

    The nearest occupied site to the left of i within distance r decides the
    amplitude: distance ell gives t_ell, none gives 0. Sites j <= 0 are empty.
    """
    coef = np.zeros(states.shape, dtype=np.float64)
    blocked = np.zeros(states.shape, dtype=bool)
    for ell in range(1, spec.r + 1):
        j = i - ell
        if j < 1:
            break
        occupied = ((states >> (L - j)) & 1).astype(bool)
        coef[occupied & ~blocked] = spec.amplitude(ell)
        blocked |= occupied
    return coef


class HamiltonianService:
    """Assembly and application of the range-r East Hamiltonian"""

    def __init__(self, n_jobs: Optional[int] = None):
        self.n_jobs = n_jobs if n_jobs is not None else env.DEFAULT_THREADS

    @staticmethod
    def kinetic_coefficient(s: FockState, i: int, spec: ModelSpec) -> float:
        """
        Kinetic constraint for the hop between sites i and i+1

        Args:
            s: Product state
            i: Left site of the bond, 1 <= i <= L-1
            spec: Model parameters

        Returns:
            float: Sum over ell of t_ell <s|P_{i,ell}|s>
        """
        if not 1 <= i <= s.L - 1:
            raise SiteIndexError(f"bond site {i} outside 1..{s.L - 1}")
        for ell in range(1, spec.r + 1):
            j = i - ell
            if j < 1:
                return 0.0
            if s.occupation(j):
                return float(spec.amplitude(ell))
        return 0.0

    def _assemble_block(
        self,
        basis: SectorBasis,
        spec: ModelSpec,
        start: int,
        stop: int,
        mode: AssemblyMode,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        L = basis.L
        src = basis.states[start:stop]
        rows, cols, vals = [], [], []
        for i in range(1, L):
            ni = (src >> (L - i)) & 1
            nj = (src >> (L - i - 1)) & 1
            coef = kinetic_coefficients(src, L, i, spec)
            hop = (ni != nj) & (coef != 0.0)
            if not hop.any():
                continue
            origin = np.nonzero(hop)[0]
            targets = src[origin] ^ ((1 << (L - i)) | (1 << (L - i - 1)))
            found = basis.lookup(targets)
            missing = found < 0
            if missing.any():
                if mode == "strict":
                    bad = FockState(value=int(targets[missing][0]), L=L)
                    raise BasisMismatchError(
                        f"hop at bond {i} reaches {bad} outside the basis"
                    )
                origin, found = origin[~missing], found[~missing]
            row = origin + start
            # each bond pair is seen from both ends; keep the upper triangle
            upper = row < found
            rows.append(row[upper])
            cols.append(found[upper])
            vals.append(coef[origin][upper])
        if not rows:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, np.zeros(0)
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)

    def build_hamiltonian(
        self, basis: SectorBasis, spec: ModelSpec, mode: AssemblyMode = "strict"
    ) -> SparseOperator:
        """
        Assemble H_r over a basis

        Args:
            basis: Nonempty sector basis
            spec: Model parameters
            mode: "strict" raises on hops leaving the basis, "restricted" drops them

        Returns:
            SparseOperator: Upper triangle of H_r
        """
        if len(basis) == 0:
            raise DimensionMismatchError("cannot assemble over an empty basis")
        n = len(basis)
        bounds = [(a, min(a + BLOCK_ROWS, n)) for a in range(0, n, BLOCK_ROWS)]
        if self.n_jobs == 1 or len(bounds) == 1:
            blocks = [self._assemble_block(basis, spec, a, b, mode) for a, b in bounds]
        else:
            blocks = Parallel(n_jobs=self.n_jobs)(
                delayed(self._assemble_block)(basis, spec, a, b, mode) for a, b in bounds
            )
        rows = np.concatenate([blk[0] for blk in blocks])
        cols = np.concatenate([blk[1] for blk in blocks])
        vals = np.concatenate([blk[2] for blk in blocks])
        upper = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        upper.sort_indices()
        logger.debug("Assembled H_r (r=%d) of dim %d with %d bonds", spec.r, n, upper.nnz)
        return SparseOperator(dim=n, upper=upper)

    @staticmethod
    def from_dense(matrix) -> SparseOperator:
        """Wrap a dense symmetric hopping matrix (zero diagonal)."""
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"expected a square matrix, got {matrix.shape}")
        if not np.array_equal(matrix, matrix.T):
            raise HermiticityError("matrix is not symmetric")
        if np.any(np.diag(matrix) != 0.0):
            raise ValueError("hopping operators carry no diagonal")
        upper = sparse.csr_matrix(np.triu(matrix, k=1))
        return SparseOperator(dim=matrix.shape[0], upper=upper)

    @staticmethod
    def apply(H: SparseOperator, v: np.ndarray) -> np.ndarray:
        """H v for vectors or column stacks; the lower triangle comes from U^T."""
        v = np.asarray(v)
        if v.shape[0] != H.dim:
            raise DimensionMismatchError(f"vector of length {v.shape[0]} for dim {H.dim}")
        return H.upper @ v + H.upper.T @ v

    @staticmethod
    def to_csr(H: SparseOperator) -> sparse.csr_matrix:
        full = (H.upper + H.upper.T).tocsr()
        full.sort_indices()
        return full

    def to_dense(self, H: SparseOperator) -> np.ndarray:
        return self.to_csr(H).toarray()

    def expectation(self, H: SparseOperator, v: np.ndarray) -> float:
        """<v|H|v> (real for symmetric H)."""
        return float(np.vdot(v, self.apply(H, v)).real)

    @staticmethod
    def dump_matrix(H: SparseOperator) -> str:
        """``dim nnz`` header, then ``row col value`` lines, 1-based, upper triangle."""
        lines = [f"{H.dim} {H.nnz}"]
        lines.extend(f"{a + 1} {b + 1} {v:.12e}" for a, b, v in H.entries())
        return "\n".join(lines) + "\n"

    @staticmethod
    def constraint_polynomial(spec: ModelSpec) -> Dict[Tuple[int, ...], float]:
        """
        Monomial expansion of K_{i,r} in the occupations n_{i-1}..n_{i-r}

        Keys are tuples of left offsets (1 for n_{i-1}); the empty product of the
        projector string is expanded by inclusion-exclusion.
        """
        terms: Dict[Tuple[int, ...], float] = {}
        for ell in range(1, spec.r + 1):
            between = range(1, ell)
            for size in range(ell):
                for subset in combinations(between, size):
                    key = tuple(sorted(subset + (ell,)))
                    terms[key] = terms.get(key, 0.0) + (-1) ** size * spec.amplitude(ell)
        return {key: value for key, value in terms.items() if value != 0.0}

    def constraint_expansion_mismatch(self, spec: ModelSpec) -> List[Dict[str, object]]:
        """
        Compare the projector form of K_{i,r} with its polynomial expansions

        For r <= 2 the closed forms t1 n_{i-1} and
        t1 n_{i-1} + t2 n_{i-2} - t2 n_{i-1} n_{i-2} are checked as well.

        Returns:
            List of mismatching left neighbourhoods (empty when all forms agree)
        """
        polynomial = self.constraint_polynomial(spec)
        r = spec.r
        L, i = r + 2, r + 1
        mismatches = []
        for left in product((0, 1), repeat=r):
            # left[k] is n_{i-1-k}
            n = {k + 1: left[k] for k in range(r)}
            bits = "".join(str(n[i - site]) for site in range(1, i)) + "00"
            exact = self.kinetic_coefficient(FockState.from_string(bits), i, spec)
            forms = {
                "polynomial": sum(
                    c * np.prod([n[o] for o in key]) for key, c in polynomial.items()
                )
            }
            if r == 1:
                forms["closed"] = spec.t[0] * n[1]
            elif r == 2:
                t1, t2 = spec.t
                forms["closed"] = t1 * n[1] + t2 * n[2] - t2 * n[1] * n[2]
            for name, value in forms.items():
                if not np.isclose(value, exact, rtol=0.0, atol=1e-14):
                    mismatches.append(
                        {"neighbourhood": bits[:r], "form": name, "projector": exact, "expansion": float(value)}
                    )
        if mismatches:
            logger.warning("Constraint expansions disagree on %d neighbourhoods", len(mismatches))
        return mismatches
