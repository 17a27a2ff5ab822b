"""
Fragmentation service: adjacency graphs, Krylov sectors, conserved charges, backbone and legs
"""

import logging
from typing import Dict, Iterable, List, Optional, Tuple

import networkx as nx
import numpy as np

from src.app.models.graph_model import (
    AdjacencyGraph,
    ComponentGrowth,
    FragmentDecomposition,
    LegStructure,
    SectorCount,
)
from src.app.models.lattice_model import FockState, ModelSpec, SectorBasis
from src.app.services.basis_service import BasisService, DomainError, SiteIndexError
from src.app.services.fitting_service import FittingService
from src.app.services.hamiltonian_service import (
    AssemblyMode,
    HamiltonianService,
    kinetic_coefficients,
)

logger = logging.getLogger(__name__)


def domain_wall(L: int, Np: int) -> int:
    """Bit pattern with sites 1..Np occupied."""
    return ((1 << Np) - 1) << (L - Np)


def rightmost_sites(states: np.ndarray, L: int) -> np.ndarray:
    """Position of the rightmost particle per state (0 for the empty chain)."""
    states = np.asarray(states, dtype=np.int64)
    lowest = states & -states
    positions = np.zeros(states.shape, dtype=np.int64)
    nonzero = lowest > 0
    positions[nonzero] = L - np.log2(lowest[nonzero]).astype(np.int64)
    return positions


def hop_targets(states: np.ndarray, L: int, spec: ModelSpec) -> np.ndarray:
    """Every state reachable from ``states`` by one allowed hop."""
    found = []
    for i in range(1, L):
        ni = (states >> (L - i)) & 1
        nj = (states >> (L - i - 1)) & 1
        allowed = (ni != nj) & (kinetic_coefficients(states, L, i, spec) != 0.0)
        if allowed.any():
            found.append(states[allowed] ^ ((1 << (L - i)) | (1 << (L - i - 1))))
    if not found:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(found)


def frozen_rightmost_mask(states: np.ndarray, L: int, spec: ModelSpec) -> np.ndarray:
    """True where no allowed hop moves the rightmost particle."""
    states = np.asarray(states, dtype=np.int64)
    i_max = rightmost_sites(states, L)
    frozen = np.ones(states.shape, dtype=bool)
    for i in np.unique(i_max):
        sel = i_max == i
        if i == 0:
            continue
        sub = states[sel]
        movable = np.zeros(sub.shape, dtype=bool)
        if i < L:
            movable |= kinetic_coefficients(sub, L, int(i), spec) != 0.0
        if i > 1:
            left_empty = ((sub >> (L - i + 1)) & 1) == 0
            movable |= left_empty & (kinetic_coefficients(sub, L, int(i) - 1, spec) != 0.0)
        frozen[sel] = ~movable
    return frozen


class FragmentationService:
    """Graph construction and fragment analysis over product states"""

    def __init__(
        self,
        basis_service: Optional[BasisService] = None,
        hamiltonian_service: Optional[HamiltonianService] = None,
    ):
        self.basis_service = basis_service or BasisService()
        self.hamiltonian_service = hamiltonian_service or HamiltonianService()
        self.fitting = FittingService()

    def build_graph(
        self, basis: SectorBasis, spec: ModelSpec, mode: AssemblyMode = "strict"
    ) -> AdjacencyGraph:
        """
        Adjacency graph of H_r over a basis

        Args:
            basis: Sector basis
            spec: Model parameters
            mode: Assembly mode forwarded to the Hamiltonian builder

        Returns:
            AdjacencyGraph: Vertices are basis ordinals, labelled with i_max
        """
        H = self.hamiltonian_service.build_hamiltonian(basis, spec, mode=mode)
        coo = H.upper.tocoo()
        i_max = rightmost_sites(basis.states, basis.L)

        graph = nx.Graph()
        graph.add_nodes_from(
            (k, {"i_max": int(i_max[k])}) for k in range(len(basis))
        )
        graph.add_edges_from(zip(coo.row.tolist(), coo.col.tolist()))
        return AdjacencyGraph(basis=basis, spec=spec, graph=graph, i_max=i_max)

    @staticmethod
    def connected_components(g: AdjacencyGraph) -> FragmentDecomposition:
        """Component labels ordered by the smallest ordinal each contains."""
        components = sorted(
            (sorted(c) for c in nx.connected_components(g.graph)), key=lambda c: c[0]
        )
        labels = np.full(g.n_vertices, -1, dtype=np.int64)
        for cid, members in enumerate(components):
            labels[members] = cid

        dw_component = None
        basis = g.basis
        if basis.Np >= 1:
            k = int(basis.lookup(np.array([domain_wall(basis.L, basis.Np)]))[0])
            if k >= 0:
                dw_component = int(labels[k])
        return FragmentDecomposition(
            labels=labels, sizes=[len(c) for c in components], dw_component=dw_component
        )

    def largest_sector(
        self, L: Optional[int], Np: int, spec: ModelSpec
    ) -> SectorBasis:
        """
        Krylov sector of the domain-wall state

        Args:
            L: Number of sites; None selects L*_r(Np)
            Np: Particle number
            spec: Model parameters

        Returns:
            SectorBasis: Closure of the domain wall under allowed hops
        """
        if L is None:
            L = self.basis_service.max_extent(spec.r, Np)
        if not 1 <= Np <= L:
            raise DomainError(f"largest_sector needs 1 <= Np <= L, got Np={Np}, L={L}")

        visited = np.array([domain_wall(L, Np)], dtype=np.int64)
        frontier = visited
        while frontier.size:
            reached = np.unique(hop_targets(frontier, L, spec))
            frontier = np.setdiff1d(reached, visited, assume_unique=True)
            visited = np.union1d(visited, frontier)
            self.basis_service.check_size(visited.size, f"DW sector L={L} Np={Np}")

        logger.info("DW sector L=%d Np=%d r=%d: %d states", L, Np, spec.r, visited.size)
        return SectorBasis(states=visited[::-1].copy(), L=L, Np=Np, r=spec.r)

    @staticmethod
    def frozen_site_charge(s: FockState, site: int) -> int:
        """``site`` if the leftmost particle sits exactly there, else 0."""
        if not 1 <= site <= s.L:
            raise SiteIndexError(f"site {site} outside 1..{s.L}")
        return site if s.leftmost() == site else 0

    def _left_block_masks(
        self, L: int, N_left: int, L_left: int, spec: ModelSpec
    ) -> Tuple[int, int, int]:
        block = self.basis_service.max_extent(spec.r, N_left)
        if L_left < block + spec.r + 1:
            raise DomainError(
                f"L_left={L_left} below the isolation length {block + spec.r + 1} for N_left={N_left}"
            )
        if L_left + 1 > L:
            raise DomainError(f"L_left={L_left} leaves no site to the right in L={L}")
        head = sum(1 << (L - j) for j in range(1, block + 1))
        gap = sum(1 << (L - j) for j in range(block + 1, L_left + 1))
        edge = 1 << (L - L_left - 1)
        return head, gap, edge

    def left_block_charge(
        self, s: FockState, N_left: int, L_left: int, spec: ModelSpec
    ) -> int:
        """
        Indicator of an isolated left block of N_left particles

        Returns 1 iff the first L*_r(N_left) sites hold N_left particles, the
        sites after them up to L_left are empty and site L_left + 1 is occupied.
        """
        head, gap, edge = self._left_block_masks(s.L, N_left, L_left, spec)
        value = s.value
        return int(
            (value & head).bit_count() == N_left and value & gap == 0 and value & edge != 0
        )

    def left_block_charges(
        self, basis: SectorBasis, N_left: int, L_left: int, spec: ModelSpec
    ) -> np.ndarray:
        head, gap, edge = self._left_block_masks(basis.L, N_left, L_left, spec)
        states = basis.states
        return (
            (np.bitwise_count(states & head) == N_left)
            & ((states & gap) == 0)
            & ((states & edge) != 0)
        ).astype(np.int8)

    def frozen_region_labels(self, L: int, Np: int, spec: ModelSpec) -> List[Tuple[int, int]]:
        """Every (N_left, L_left) admissible on L sites."""
        labels = []
        for N_left in range(1, Np):
            start = self.basis_service.max_extent(spec.r, N_left) + spec.r + 1
            labels.extend((N_left, L_left) for L_left in range(start, L))
        return labels

    def count_frozen_region_sectors(self, Np: int, spec: ModelSpec) -> SectorCount:
        """
        Exhaustive count of first-level frozen-region sectors at L = L*_r(Np)

        A label (N_left, L_left) counts when some state of the site-1-occupied
        sector carries charge 1.
        """
        L = self.basis_service.max_extent(spec.r, Np)
        basis = self.basis_service.enumerate_sector(L, Np, first_site_occupied=True)
        realised = [
            label
            for label in self.frozen_region_labels(L, Np, spec)
            if self.left_block_charges(basis, *label, spec).any()
        ]
        return SectorCount(
            Np=Np,
            r=spec.r,
            enumerated=len(realised),
            closed_form=spec.r * (Np - 1) * (Np - 2) // 2,
            per_range_form=0.5 * (Np**2 - 3 * Np) + 1,
            labels=realised,
        )

    def component_count_growth(
        self, Np_values: Iterable[int], spec: ModelSpec
    ) -> ComponentGrowth:
        """Number of fragments at L = L*(Np) and the slope of ln(count) vs Np."""
        Np_values = list(Np_values)
        counts = []
        for Np in Np_values:
            L = self.basis_service.max_extent(spec.r, Np)
            basis = self.basis_service.enumerate_sector(L, Np, first_site_occupied=True)
            counts.append(self.connected_components(self.build_graph(basis, spec)).count)
            logger.info("Np=%d L=%d: %d fragments", Np, L, counts[-1])
        fit = self.fitting.linear_fit(Np_values, np.log(counts))
        return ComponentGrowth(
            Np=Np_values, counts=counts, slope=fit.slope, intercept=fit.intercept, r_squared=fit.r_squared
        )

    @staticmethod
    def rightmost_is_frozen(s: FockState, spec: ModelSpec) -> bool:
        return bool(frozen_rightmost_mask(np.array([s.value]), s.L, spec)[0])

    def backbone_legs(self, g: AdjacencyGraph) -> LegStructure:
        """
        Split a DW-rooted graph into backbone and legs

        Edges that change i_max are removed. A remaining plateau at fixed
        i_max > 2 Np that contains a vertex with a frozen rightmost particle is
        a leg; everything else is backbone.
        """
        basis = g.basis
        plateau_graph = nx.Graph()
        plateau_graph.add_nodes_from(g.graph.nodes)
        plateau_graph.add_edges_from(
            (u, v) for u, v in g.graph.edges if g.i_max[u] == g.i_max[v]
        )
        frozen = frozen_rightmost_mask(basis.states, basis.L, g.spec)

        leg_id = np.full(g.n_vertices, -1, dtype=np.int64)
        leg_i_max: List[int] = []
        populations: Dict[int, int] = {}
        plateaus = sorted(
            (sorted(c) for c in nx.connected_components(plateau_graph)), key=lambda c: c[0]
        )
        for members in plateaus:
            level = int(g.i_max[members[0]])
            if level <= 2 * basis.Np or not frozen[members].any():
                continue
            leg_id[members] = len(leg_i_max)
            leg_i_max.append(level)
            populations[level] = populations.get(level, 0) + len(members)

        backbone = int(np.count_nonzero(leg_id < 0))
        logger.debug("Found %d legs, backbone of %d vertices", len(leg_i_max), backbone)
        return LegStructure(
            leg_id=leg_id, leg_i_max=leg_i_max, populations=dict(sorted(populations.items())), backbone_size=backbone
        )

    @staticmethod
    def parity(s: FockState) -> int:
        """(-1)^(sum_j j n_j)"""
        total = sum(j for j in range(1, s.L + 1) if s.occupation(j))
        return -1 if total % 2 else 1

    @staticmethod
    def parities(basis: SectorBasis) -> np.ndarray:
        weights = np.arange(1, basis.L + 1, dtype=np.int64)
        total = BasisService.occupations(basis).astype(np.int64) @ weights
        return np.where(total % 2 == 1, -1, 1).astype(np.int8)

    def zero_mode_lower_bound(self, basis: SectorBasis) -> int:
        """|#even - #odd| parity states: the bipartite zero-mode bound."""
        p = self.parities(basis)
        return abs(int(np.count_nonzero(p == 1)) - int(np.count_nonzero(p == -1)))

    @staticmethod
    def export_graph(
        g: AdjacencyGraph,
        decomposition: FragmentDecomposition,
        legs: Optional[LegStructure] = None,
    ) -> Tuple[str, str]:
        """
        Edge list and vertex labels, 1-based ordinals

        Returns:
            Tuple[str, str]: ``u v`` lines and ``ordinal i_max component_id leg_id`` lines
        """
        pairs = sorted((min(u, v), max(u, v)) for u, v in g.graph.edges)
        edges = "".join(f"{u + 1} {v + 1}\n" for u, v in pairs)
        leg_id = legs.leg_id if legs is not None else np.full(g.n_vertices, -1)
        labels = "".join(
            f"{k + 1} {int(g.i_max[k])} {int(decomposition.labels[k])} {int(leg_id[k])}\n"
            for k in range(g.n_vertices)
        )
        return edges, labels
