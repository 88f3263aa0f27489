"""Resource-constrained multiple-behavior diffusion: simulation, seeding heuristics and experiments."""

from .behavior import PAPER_BEHAVIORS, BehaviorSet, ModelParams, NodeStates
from .diffuse import SeedAssignment, run_diffusion
from .netgen import Graph, generate, load_edge_list

__all__ = [
    "PAPER_BEHAVIORS",
    "BehaviorSet",
    "Graph",
    "ModelParams",
    "NodeStates",
    "SeedAssignment",
    "generate",
    "load_edge_list",
    "run_diffusion",
]
__version__ = "0.1.0"
