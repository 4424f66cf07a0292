"""Step-wise cost continuous-resource scheduling: hybrid annealing/LP solver."""
from .estimators import (BoundCaches, PenaltyEstimate, flow_estimate,
                         instance_feasibility_flow, simple_bounds,
                         update_caches)
from .instancegen import GenConfig, generate_instance
from .lp import LpModel, LpSolution, build_lp, lp_penalty, solve_lp, update_lp
from .model import (EventOrder, Instance, Job, Move, Schedule, base_cost,
                    derive_precedences, load_instance, save_instance,
                    validate_schedule)
from .search import RunResult, SaConfig, Variant, initial_solution, run_search

__version__ = "0.1.0"
