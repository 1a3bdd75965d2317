"""Linear programming, branch and bound, and tour optimisation."""
from .lp import RevisedSimplex, dual_objective, solve_lp
from .mip import BranchAndBound, solve_mip
from .model import (FEAS_TOL, INT_TOL, OPT_TOL, LinearModel, ModelBuilder, SolveResult,
                    to_lp_text)
from .tour import (SubsetTours, TourTooLarge, best_tour, cheapest_insertion,
                   nearest_neighbour_two_opt, optimal_tour, tour_length)

__all__ = [
    "RevisedSimplex", "solve_lp", "dual_objective", "BranchAndBound", "solve_mip",
    "LinearModel", "ModelBuilder", "SolveResult", "to_lp_text", "FEAS_TOL", "OPT_TOL",
    "INT_TOL", "SubsetTours", "TourTooLarge", "best_tour", "cheapest_insertion",
    "nearest_neighbour_two_opt", "optimal_tour", "tour_length",
]
