"""Design-based total-treatment-effect estimation under neighborhood interference."""
from .graph import Graph, gen_erdos_renyi, gen_soft_rgg, max_degrees, neighbor_subsets
from .moments import Design
from .outcome_model import InteractionModel, evaluate_potential, true_tte
from .estimators import (ESTIMATORS, Dataset, EstimateReport, estimate_tte_theta,
                         snipe_weights, theta_reg, theta_vim)

__all__ = [
    "Graph", "gen_erdos_renyi", "gen_soft_rgg", "max_degrees", "neighbor_subsets",
    "Design", "InteractionModel", "evaluate_potential", "true_tte",
    "ESTIMATORS", "Dataset", "EstimateReport", "estimate_tte_theta", "snipe_weights",
    "theta_reg", "theta_vim",
]
__version__ = "0.1.0"
