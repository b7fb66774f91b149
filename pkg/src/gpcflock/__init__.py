"""Stochastic Galerkin (gPC) solver for Cucker-Smale flocking with random interaction rates and MPC control."""
from .config import ConfigError, ScenarioConfig, load_config
from .harness import RunRecord, compare_mc, convergence_study, error_metrics, oracle_series, run
from .polychaos import gauss_nodes, make_basis, triple_tensor

__all__ = [
    "ConfigError",
    "RunRecord",
    "ScenarioConfig",
    "compare_mc",
    "convergence_study",
    "error_metrics",
    "gauss_nodes",
    "load_config",
    "make_basis",
    "oracle_series",
    "run",
    "triple_tensor",
]
__version__ = "0.1.0"
