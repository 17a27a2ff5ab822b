"""
Adjacency-graph types for classical fragmentation
"""

from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.app.models.lattice_model import ModelSpec, SectorBasis


class AdjacencyGraph(BaseModel):
    """Product states joined by allowed hops; node k is basis ordinal k."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    basis: SectorBasis
    spec: ModelSpec
    graph: nx.Graph
    i_max: np.ndarray = Field(..., description="Rightmost occupied site per vertex")

    @property
    def n_vertices(self) -> int:
        return self.graph.number_of_nodes()

    @property
    def n_edges(self) -> int:
        return self.graph.number_of_edges()


class FragmentDecomposition(BaseModel):
    """Connected components, ids ordered by smallest contained ordinal."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    labels: np.ndarray
    sizes: List[int]
    dw_component: Optional[int] = None

    @property
    def count(self) -> int:
        return len(self.sizes)


class LegStructure(BaseModel):
    """Backbone/leg split of a DW-rooted graph."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    leg_id: np.ndarray = Field(..., description="Leg index per vertex, -1 on the backbone")
    leg_i_max: List[int] = Field(default_factory=list)
    populations: Dict[int, int] = Field(default_factory=dict)
    backbone_size: int = 0

    @property
    def leg_count(self) -> int:
        return len(self.leg_i_max)


class SectorCount(BaseModel):
    """First-level frozen-region sectors for one particle number."""

    Np: int
    r: int
    enumerated: int
    closed_form: int
    per_range_form: float
    labels: List[Tuple[int, int]] = Field(default_factory=list)


class ComponentGrowth(BaseModel):
    """Component counts of the site-1-occupied sector at L = L*(Np)."""

    Np: List[int]
    counts: List[int]
    slope: float
    intercept: float
    r_squared: float
