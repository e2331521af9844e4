"""feedsim: deterministic agent-based comparison of feed ranking algorithms."""

__version__ = "0.1.0"

from .engine import SimConfig, run_simulation
from .graph import Network, TraitAssignment, assign_traits, generate_synthetic, load_edge_list

__all__ = [
    "SimConfig",
    "run_simulation",
    "Network",
    "TraitAssignment",
    "assign_traits",
    "generate_synthetic",
    "load_edge_list",
]
