"""
Entanglement service: Schmidt cuts, zero-entropy census, left zero modes and separable eigenstates
"""

import logging
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from tqdm import tqdm

import src.config.env as env
from src.app.exceptions import NumericalContractError
from src.app.models.lattice_model import ModelSpec, SectorBasis
from src.app.models.spectrum_model import (
    CutSpectrum,
    EigenSystem,
    LeftState,
    SeparableEigenstate,
    ZeroEntropyCensus,
)
from src.app.services.basis_service import BasisService, DimensionMismatchError, DomainError
from src.app.services.fragmentation_service import FragmentationService, hop_targets
from src.app.services.hamiltonian_service import HamiltonianService
from src.app.services.spectral_service import ResidualError, SpectralService

logger = logging.getLogger(__name__)

# Alternating sweeps when picking product vectors out of a product span
MAX_ITERATIONS = 500

# 1 - sum(sigma^4) below this marks a null direction of the rank-one system
RANK_ONE_ATOL = 1e-11

# Relative singular value below which a direction is dropped from a span
SPAN_RTOL = 1e-8

# Singular value of the off-block rows below which a direction lies inside a charge block
BLOCK_ATOL = 1e-8

# |coefficient| below this is outside a vector's support
SUPPORT_ATOL = 1e-10


class SectorMembershipError(NumericalContractError):
    """An assembled configuration lies outside the domain-wall sector."""


class CutLayout(NamedTuple):
    """Row/column of every basis state in the left x right coefficient matrix."""

    cut: int
    rows: np.ndarray
    cols: np.ndarray
    shape: Tuple[int, int]
    left_charge: np.ndarray

    def matrix(self, v: np.ndarray) -> np.ndarray:
        m = np.zeros(self.shape, dtype=v.dtype)
        m[self.rows, self.cols] = v
        return m

    @property
    def trivial(self) -> bool:
        return min(self.shape) == 1


def cut_layout(basis: SectorBasis, cut: int) -> CutLayout:
    if not 1 <= cut < basis.L:
        raise DomainError(f"cut {cut} outside 1..{basis.L - 1}")
    shift = basis.L - cut
    left_values, rows = np.unique(basis.states >> shift, return_inverse=True)
    right_values, cols = np.unique(basis.states & ((1 << shift) - 1), return_inverse=True)
    left_charge = np.bitwise_count(basis.states >> shift).astype(np.int64)
    return CutLayout(cut, rows, cols, (left_values.size, right_values.size), left_charge)


def von_neumann(schmidt_values: np.ndarray) -> float:
    """-sum p ln p over p = lambda^2, with 0 ln 0 = 0."""
    p = schmidt_values**2
    p = p[p > 0.0]
    return float(max(-np.sum(p * np.log(p)), 0.0))


def _symmetric_basis(s: int) -> np.ndarray:
    """Orthonormal basis of symmetric s x s matrices, flattened row-major into columns."""
    columns = []
    for k in range(s):
        for l in range(k, s):
            e = np.zeros((s, s))
            if k == l:
                e[k, k] = 1.0
            else:
                e[k, l] = e[l, k] = np.sqrt(0.5)
            columns.append(e.ravel())
    return np.column_stack(columns)


def support_mask(v: np.ndarray) -> int:
    """Bit k set when basis ordinal k carries weight."""
    return sum(1 << int(k) for k in np.nonzero(np.abs(v) > SUPPORT_ATOL)[0])


class EntanglementService:
    """Bipartite entanglement over constrained sector bases"""

    def __init__(
        self,
        fragmentation_service: Optional[FragmentationService] = None,
        spectral_service: Optional[SpectralService] = None,
        n_jobs: Optional[int] = None,
    ):
        self.fragmentation = fragmentation_service or FragmentationService()
        self.hamiltonian = self.fragmentation.hamiltonian_service
        self.spectral = spectral_service or SpectralService(self.hamiltonian)
        self.n_jobs = n_jobs if n_jobs is not None else env.DEFAULT_THREADS

    def schmidt_cut(self, v: np.ndarray, basis: SectorBasis, cut: int) -> CutSpectrum:
        """
        Schmidt decomposition between sites 1..cut and cut+1..L

        Args:
            v: Coefficients over the basis
            basis: Sector basis
            cut: Last site of the left region

        Returns:
            CutSpectrum: Descending Schmidt values and entropy in nats
        """
        v = np.asarray(v)
        if v.shape != (len(basis),):
            raise DimensionMismatchError(f"vector of shape {v.shape} for basis of {len(basis)}")
        layout = cut_layout(basis, cut)
        values = linalg.svdvals(layout.matrix(v))
        return CutSpectrum(cut=cut, schmidt_values=values, entropy=von_neumann(values))

    def entropy_profile(self, v: np.ndarray, basis: SectorBasis) -> np.ndarray:
        """S_i for every cut i = 1..L-1."""
        return np.array([self.schmidt_cut(v, basis, i).entropy for i in range(1, basis.L)])

    @staticmethod
    def _entropy_block(vectors: np.ndarray, layouts: Sequence[CutLayout]) -> np.ndarray:
        out = np.empty((vectors.shape[1], len(layouts)))
        for a in range(vectors.shape[1]):
            for c, layout in enumerate(layouts):
                out[a, c] = von_neumann(linalg.svdvals(layout.matrix(vectors[:, a])))
        return out

    def entropy_table(
        self, vectors: np.ndarray, basis: SectorBasis, cuts: Sequence[int]
    ) -> np.ndarray:
        """(n_vectors, n_cuts) entropies, columns parallel over joblib workers."""
        layouts = [cut_layout(basis, i) for i in cuts]
        chunks = np.array_split(np.arange(vectors.shape[1]), max(1, min(self.n_jobs * 4, vectors.shape[1])))
        if self.n_jobs == 1:
            parts = [
                self._entropy_block(vectors[:, idx], layouts)
                for idx in tqdm(chunks, desc="entropies", disable=not env.SHOW_PROGRESS)
            ]
        else:
            parts = Parallel(n_jobs=self.n_jobs)(
                delayed(self._entropy_block)(vectors[:, idx], layouts) for idx in chunks
            )
        return np.vstack(parts)

    @staticmethod
    def _rank_one_candidate(W: np.ndarray, layout: CutLayout, start: np.ndarray) -> np.ndarray:
        """Alternate between the best product a(x)b for x and the best x in span(W) for a(x)b."""
        x = start
        previous = -1.0
        for _ in range(MAX_ITERATIONS):
            u, _, vt = linalg.svd(layout.matrix(x), full_matrices=False)
            w = u[layout.rows, 0] * vt[0, layout.cols]
            c = W.T @ w
            overlap = float(np.linalg.norm(c))
            if overlap == 0.0:
                break
            x = W @ (c / overlap)
            if overlap - previous < 1e-15:
                break
            previous = overlap
        return x / np.linalg.norm(x)

    @staticmethod
    def _is_product(x: np.ndarray, layout: CutLayout, tol: float) -> bool:
        return von_neumann(linalg.svdvals(layout.matrix(x))) < tol

    def _product_vectors(
        self, W: np.ndarray, layout: CutLayout, tol: float
    ) -> List[np.ndarray]:
        """
        Independent zero-entropy vectors spanning every product inside span(W) at one cut

        A product vector carries a definite particle number left of the cut, so
        the search runs over span(W) intersected with each charge block.
        """
        found: List[np.ndarray] = []
        for charge in np.unique(layout.left_charge):
            outside = layout.left_charge != charge
            if outside.any():
                _, sv, vt = linalg.svd(W[outside])
                kernel = vt[int(np.sum(sv > BLOCK_ATOL)) :].T
            else:
                kernel = np.eye(W.shape[1])
            if kernel.shape[1]:
                found.extend(self._block_products(W @ kernel, layout, tol))
        return found

    def _block_products(
        self, S: np.ndarray, layout: CutLayout, tol: float
    ) -> List[np.ndarray]:
        """
        Product vectors in span(S), S orthonormal inside one charge block

        x = S c is a product exactly when every 2x2 minor of its coefficient
        matrix X vanishes, i.e. when 1 - sum(sigma^4) = 0 for |c| = 1. That
        quartic is a quadratic form in Z = c c^T; the ranges of its null space
        over symmetric Z span every product direction.
        """
        s = S.shape[1]
        if s == 1:
            return [S[:, 0]] if self._is_product(S[:, 0], layout, tol) else []

        T = np.stack([layout.matrix(S[:, k]) for k in range(s)])
        T = T[:, np.any(T != 0.0, axis=(0, 2))][:, :, np.any(T != 0.0, axis=(0, 1))]
        p, q = T.shape[1:]
        if q <= p:
            K = np.einsum("kri,mrj->kmij", T, T, optimize=True)
            quartic = np.einsum("kmij,lnji->klmn", K, K, optimize=True)
        else:
            K = np.einsum("kai,lbi->klab", T, T, optimize=True)
            quartic = np.einsum("mlab,nkba->klmn", K, K, optimize=True)

        E = _symmetric_basis(s)
        G = E.T @ (np.eye(s * s) - quartic.reshape(s * s, s * s)) @ E
        weights, vectors = linalg.eigh((G + G.T) / 2.0)
        null = vectors[:, weights < RANK_ONE_ATOL]
        if null.shape[1] == 0:
            return []

        Zs = [(E @ z).reshape(s, s) for z in null.T]
        U, sv, _ = linalg.svd(np.hstack(Zs), full_matrices=False)
        C = U[:, : int(np.sum(sv > SPAN_RTOL * sv[0]))]
        return self._span_products(S @ C, [C.T @ Z @ C for Z in Zs], layout, tol)

    def _span_products(
        self, P: np.ndarray, Zs: List[np.ndarray], layout: CutLayout, tol: float
    ) -> List[np.ndarray]:
        """Basis of products for a span of products P, given the null Z in P's coordinates."""
        d = P.shape[1]
        found: List[np.ndarray] = []

        def frame() -> np.ndarray:
            return linalg.orth(np.column_stack(found)) if found else np.zeros((P.shape[0], 0))

        def accepts(x: np.ndarray, F: np.ndarray) -> bool:
            fresh = np.linalg.norm(x - F @ (F.T @ x)) > 1e-6
            return fresh and self._is_product(x, layout, tol)

        if len(Zs) == d:
            # finitely many product lines: Z_a Z_b^-1 = Gamma D Gamma^-1
            if d == 1:
                gammas = np.ones((1, 1))
            else:
                g, h = np.random.default_rng(0).normal(size=(2, d))
                Za, Zb = np.tensordot(g, Zs, axes=1), np.tensordot(h, Zs, axes=1)
                _, gammas = linalg.eig(linalg.solve(Zb.T, Za.T).T)
                gammas = gammas.real
            for gamma in gammas.T:
                x = P @ gamma
                x = x / np.linalg.norm(x)
                if accepts(x, frame()):
                    found.append(x)

        while len(found) < d:
            F = frame()
            seeds = P @ linalg.null_space(F.T @ P) if found else P
            hit = None
            for seed in seeds.T:
                x = self._rank_one_candidate(P, layout, seed)
                if accepts(x, F):
                    hit = x
                    break
            if hit is None:
                logger.warning("cut %d: %d of %d product directions resolved", layout.cut, len(found), d)
                break
            found.append(hit)
        return found

    def _multiplet_search(
        self, V: np.ndarray, layouts: Sequence[CutLayout], tol: float
    ) -> Dict[int, List[np.ndarray]]:
        return {layout.cut: self._product_vectors(V, layout, tol) for layout in layouts}

    def zero_entropy_scan(
        self,
        es: EigenSystem,
        tol: Optional[float] = None,
        cuts: Optional[Iterable[int]] = None,
        degeneracy_tol: Optional[float] = None,
    ) -> ZeroEntropyCensus:
        """
        Count eigenstates with vanishing entanglement at each cut

        Raw counts use the solver's eigenvectors. Rotated counts give, per
        degenerate multiplet and cut, the dimension of the span of its
        zero-entropy vectors, which does not depend on the solver basis. The
        representatives are independent zero-entropy vectors covering every
        cut; ``total`` counts them. Cuts at which every vector is a product are
        listed separately.

        Args:
            es: Eigensystem over the domain-wall sector
            tol: Zero-entropy threshold in nats
            cuts: Cuts to scan, default all non-trivial ones
            degeneracy_tol: Gap below which levels form a multiplet

        Returns:
            ZeroEntropyCensus: Per-cut and distinct counts, raw and optimised
        """
        basis = es.basis
        if basis is None:
            raise ValueError("zero_entropy_scan needs an eigensystem with its basis")
        tol = tol if tol is not None else env.ZERO_ENTROPY_TOL
        degeneracy_tol = degeneracy_tol if degeneracy_tol is not None else env.DEGENERACY_TOL
        requested = list(cuts) if cuts is not None else list(range(1, basis.L))
        layouts = [cut_layout(basis, i) for i in requested]
        trivial = [lay.cut for lay in layouts if lay.trivial]
        layouts = [lay for lay in layouts if not lay.trivial]
        scanned = [lay.cut for lay in layouts]

        table = self.entropy_table(es.vectors, basis, scanned)
        zero = table < tol
        raw_counts = {c: int(zero[:, k].sum()) for k, c in enumerate(scanned)}
        raw_ids = [int(a) for a in np.nonzero(zero.any(axis=1))[0]]
        raw_support = np.zeros(len(basis), dtype=bool)
        for a in raw_ids:
            raw_support |= np.abs(es.vectors[:, a]) > SUPPORT_ATOL

        multiplets = [m for m in es.multiplets(degeneracy_tol) if m.size > 1]
        if self.n_jobs == 1:
            searched = [
                self._multiplet_search(es.vectors[:, m], layouts, tol)
                for m in tqdm(multiplets, desc="multiplets", disable=not env.SHOW_PROGRESS)
            ]
        else:
            searched = Parallel(n_jobs=self.n_jobs)(
                delayed(self._multiplet_search)(es.vectors[:, m], layouts, tol) for m in multiplets
            )

        counts = dict.fromkeys(scanned, 0)
        groups: List[Tuple[float, List[np.ndarray]]] = []
        in_multiplet = np.zeros(es.dim, dtype=bool)
        for members, found in zip(multiplets, searched):
            in_multiplet[members] = True
            candidates = []
            for cut, vectors in found.items():
                counts[cut] += len(vectors)
                candidates.extend(vectors)
            groups.append((float(es.energies[members].mean()), candidates))
        for a in np.nonzero(~in_multiplet)[0]:
            for k, cut in enumerate(scanned):
                counts[cut] += int(zero[a, k])
            if zero[a].any():
                groups.append((float(es.energies[a]), [es.vectors[:, a]]))

        representatives, energies = [], []
        for energy, candidates in groups:
            for x in self._independent_representatives(candidates, layouts, tol):
                representatives.append(x)
                energies.append(energy)
        supports = list(dict.fromkeys(support_mask(x) for x in representatives))
        support = np.zeros(len(basis), dtype=bool)
        for x in representatives:
            support |= np.abs(x) > SUPPORT_ATOL

        for cut in scanned:
            logger.debug("cut %d: raw %d, rotated %d", cut, raw_counts[cut], counts[cut])
        if counts != raw_counts:
            logger.warning(
                "Raw zero-entropy counts depend on the solver basis inside degenerate multiplets; "
                "rotated counts differ at %d cuts",
                sum(counts[c] != raw_counts[c] for c in scanned),
            )
        return ZeroEntropyCensus(
            L=basis.L,
            Np=basis.Np,
            tol=tol,
            cuts=scanned,
            trivial_cuts=trivial,
            raw_counts=raw_counts,
            counts=counts,
            raw_total=len(raw_ids),
            total=len(representatives),
            eigenstate_ids=raw_ids,
            representatives=representatives,
            representative_energies=energies,
            supports=supports,
            raw_support_size=int(raw_support.sum()),
            support_size=int(support.sum()),
        )

    @staticmethod
    def _independent_representatives(
        candidates: List[np.ndarray], layouts: Sequence[CutLayout], tol: float
    ) -> List[np.ndarray]:
        """Linearly independent subset, preferring vectors separable at the most cuts."""

        def rank(x: np.ndarray) -> Tuple[int, int]:
            zero_cuts = sum(
                von_neumann(linalg.svdvals(lay.matrix(x))) < tol for lay in layouts
            )
            return (-zero_cuts, int(np.count_nonzero(np.abs(x) > SUPPORT_ATOL)))

        accepted: List[np.ndarray] = []
        frame = np.zeros((candidates[0].size, 0)) if candidates else None
        for x in sorted(candidates, key=rank):
            residual = x - frame @ (frame.T @ x)
            norm = np.linalg.norm(residual)
            if norm > 1e-6:
                accepted.append(x)
                frame = np.column_stack([frame, residual / norm])
        return accepted

    def _zero_modes(self, H, basis: SectorBasis) -> Tuple[EigenSystem, np.ndarray]:
        es = self.spectral.diagonalize(H, basis)
        tol = env.ZERO_ENERGY_RTOL * max(float(np.abs(es.energies).max()), 1.0)
        return es, es.vectors[:, np.abs(es.energies) < tol]

    def find_left_states(self, m: int, ell: int, spec: ModelSpec) -> List[LeftState]:
        """
        Zero modes of m particles on ell sites with an empty last site

        Diagonalizes H over the domain-wall sector of (m, ell), projects n_ell
        onto the zero-energy subspace and keeps the kernel of that matrix.

        Args:
            m: Particles in the left region
            ell: Sites in the left region
            spec: Model parameters

        Returns:
            List[LeftState]: Possibly empty
        """
        r = spec.r
        if not (ell > m + r and (r + 1) * m - r >= ell):
            raise DomainError(f"(m={m}, ell={ell}) violates ell > m + r and (r+1)m - r >= ell")
        basis = self.fragmentation.largest_sector(ell, m, spec)
        H = self.hamiltonian.build_hamiltonian(basis, spec)
        _, Z = self._zero_modes(H, basis)
        if Z.shape[1] == 0:
            logger.info("No zero modes for (m=%d, ell=%d)", m, ell)
            return []

        last = (basis.states & 1).astype(np.float64)
        N = Z.T @ (last[:, None] * Z)
        weights, U = linalg.eigh(N)
        kernel = Z @ U[:, weights < env.ZERO_ENERGY_RTOL]

        states = []
        for k in range(kernel.shape[1]):
            x = kernel[:, k] / np.linalg.norm(kernel[:, k])
            states.append(
                LeftState(
                    m=m,
                    ell=ell,
                    basis=basis,
                    vector=x,
                    last_site_density=float(np.sum(last * x**2)),
                    residual=float(np.linalg.norm(self.hamiltonian.apply(H, x))),
                )
            )
        logger.info("(m=%d, ell=%d): %d left states out of %d zero modes", m, ell, len(states), Z.shape[1])
        return states

    def _open_residual(
        self, x: np.ndarray, basis: SectorBasis, spec: ModelSpec, energy: float
    ) -> float:
        """||H x - E x|| in the full Fock space, including hops leaving ``basis``."""
        support = basis.states[np.abs(x) > SUPPORT_ATOL]
        grown = SectorBasis.from_states(
            np.union1d(basis.states, hop_targets(support, basis.L, spec)), L=basis.L
        )
        embedded = np.zeros(len(grown))
        embedded[grown.lookup(basis.states)] = x
        H = self.hamiltonian.build_hamiltonian(grown, spec, mode="restricted")
        return float(np.linalg.norm(self.hamiltonian.apply(H, embedded) - energy * embedded))

    def stack_left_states(
        self, a: LeftState, gap: int, b: LeftState, spec: ModelSpec
    ) -> LeftState:
        """Two left states separated by ``gap`` >= r empty sites, checked as a new left state."""
        if gap < spec.r:
            raise DomainError(f"stacking gap {gap} below the constraint range {spec.r}")
        ell = a.ell + gap + b.ell
        shift = gap + b.ell
        keep_a = np.abs(a.vector) > SUPPORT_ATOL
        keep_b = np.abs(b.vector) > SUPPORT_ATOL
        values = (a.basis.states[keep_a][:, None] << shift) | b.basis.states[keep_b][None, :]
        coefficients = a.vector[keep_a][:, None] * b.vector[keep_b][None, :]
        order = np.argsort(values.ravel())[::-1]
        basis = SectorBasis(states=values.ravel()[order], L=ell, Np=a.m + b.m, r=spec.r)
        x = coefficients.ravel()[order]
        residual = self._open_residual(x, basis, spec, 0.0)
        if residual > 1e-10:
            raise ResidualError(f"stacked state is not a zero mode (residual {residual:.3e})")
        return LeftState(
            m=a.m + b.m,
            ell=ell,
            basis=basis,
            vector=x,
            last_site_density=float(np.sum((basis.states & 1) * x**2)),
            residual=residual,
        )

    def assemble_separable(
        self,
        left: LeftState,
        q: int,
        right_basis: SectorBasis,
        right_vector: np.ndarray,
        spec: ModelSpec,
        L: Optional[int] = None,
    ) -> SeparableEigenstate:
        """
        Left zero mode, q empty sites and a right eigenstate on one chain

        Args:
            left: Left state
            q: Empty sites between the blocks, at least r
            right_basis: Basis of the right block
            right_vector: Eigenvector of H over ``right_basis``
            spec: Model parameters
            L: Total sites; must equal ell + q + right_basis.L when given

        Returns:
            SeparableEigenstate: Expressed in the domain-wall sector basis
        """
        if q < spec.r:
            raise DomainError(f"gap q={q} below the constraint range {spec.r}")
        total = left.ell + q + right_basis.L
        if L is not None and L != total:
            raise DimensionMismatchError(f"ell + q + right sites = {total}, not L={L}")
        right_vector = np.asarray(right_vector, dtype=np.float64)
        right_vector = right_vector / np.linalg.norm(right_vector)

        H_right = self.hamiltonian.build_hamiltonian(right_basis, spec, mode="restricted")
        energy = self.hamiltonian.expectation(H_right, right_vector)

        shift = q + right_basis.L
        values = (left.basis.states[:, None] << shift) | right_basis.states[None, :]
        coefficients = (left.vector[:, None] * right_vector[None, :]).ravel()
        values = values.ravel()
        keep = np.abs(coefficients) > SUPPORT_ATOL
        values, coefficients = values[keep], coefficients[keep]

        Np = left.m + right_basis.Np
        sector = self.fragmentation.largest_sector(total, Np, spec)
        ordinals = sector.lookup(values)
        if np.any(ordinals < 0):
            outside = format(int(values[ordinals < 0][0]), f"0{total}b")
            raise SectorMembershipError(f"configuration {outside} is outside the domain-wall sector")

        x = np.zeros(len(sector))
        x[ordinals] = coefficients
        H = self.hamiltonian.build_hamiltonian(sector, spec)
        residual = float(np.linalg.norm(self.hamiltonian.apply(H, x) - energy * x))
        if residual > 1e-10:
            raise ResidualError(f"assembled state residual {residual:.3e} above 1e-10")
        return SeparableEigenstate(
            m=left.m,
            ell=left.ell,
            q=q,
            L=total,
            basis=sector,
            vector=x,
            energy=energy,
            residual=residual,
            support=[format(int(s), f"0{total}b") for s in sorted(values.tolist(), reverse=True)],
        )

    def describe_separable(
        self, v: np.ndarray, basis: SectorBasis, spec: ModelSpec
    ) -> Optional[SeparableEigenstate]:
        """
        Read (m, ell, q) off a zero-entropy vector

        ell is the first site of the leftmost always-empty run of at least
        r + 1 sites and q the rest of that run. Returns None without such a run.
        """
        density = (np.abs(v) ** 2) @ BasisService.occupations(basis).astype(np.float64)
        empty = density < 1e-12
        site = 1
        while site <= basis.L:
            if not empty[site - 1]:
                site += 1
                continue
            end = site
            while end < basis.L and empty[end]:
                end += 1
            run = end - site + 1
            if run >= spec.r + 1 and end < basis.L:
                H = self.hamiltonian.build_hamiltonian(basis, spec, mode="restricted")
                energy = self.hamiltonian.expectation(H, v)
                residual = float(np.linalg.norm(self.hamiltonian.apply(H, v) - energy * v))
                keep = np.abs(v) > SUPPORT_ATOL
                return SeparableEigenstate(
                    m=int(round(density[:site].sum())),
                    ell=site,
                    q=run - 1,
                    L=basis.L,
                    basis=basis,
                    vector=np.asarray(v),
                    energy=energy,
                    residual=residual,
                    support=np.asarray(basis.bitstrings())[keep].tolist(),
                )
            site = end + 1
        return None
