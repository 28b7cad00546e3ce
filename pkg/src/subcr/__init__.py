"""Self-supervised anomaly scoring on attributed graphs.

Contrastive node-versus-subgraph discrimination on two structural views
(a sampled local neighborhood and a diffusion-smoothed global one) plus
masked attribute reconstruction, combined into a per-node anomaly score.
"""

__version__ = "0.1.0"

from .graph import AttributedGraph, build_graph, load_graph, sym_norm_adjacency

__all__ = [
    "AttributedGraph",
    "build_graph",
    "load_graph",
    "sym_norm_adjacency",
    "__version__",
]
