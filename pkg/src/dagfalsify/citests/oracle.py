"""Population CI oracle: answers queries by d-separation in a known graph."""

from __future__ import annotations

from ..graph import Dag, d_separated
from .base import CiTest


class DSeparationOracle(CiTest):
    """p-value 1 for d-separated pairs, 0 otherwise; the data is ignored."""

    name = "oracle"

    def __init__(self, graph: Dag):
        self.graph = graph

    def config(self):
        return {"test": self.name, "graph_edges": sorted(map(list, self.graph.edges))}

    def compute(self, data, i, j, z):
        sep = d_separated(self.graph, i, j, z)
        return (0.0, 1.0) if sep else (1.0, 0.0)
