"""Weak martingale optimal transport: exact LPs, Frank–Wolfe, financial applications."""

from .applications import (PathEnsemble, SbmModel, VixResult, sbm_process_bound, sbm_simulate,
                           sbm_solve, vix_superreplication)
from .costs import (CostFunctional, GaussAnchorCost, LinearCost, VixCost, VixParams,
                    gauss_anchor_cost, linear_cost, parse_cost, vix_cost)
from .couplings import (DiscreteCoupling, adapted_wasserstein, from_matrix, identity_coupling,
                        is_martingale, read_coupling_json, second_marginal, write_coupling_json)
from .errors import DomainError, InfeasibleError, NumericError, ValidationError, WmotError
from .harness import ExperimentConfig, ExperimentTable, load_config, preset, run_stability
from .measures import (DiscreteMeasure, ParametricLaw, check_convex_order, mean, quantile,
                       quantize, read_measure_csv, w2_to_gaussian, wasserstein_1d,
                       write_measure_csv)
from .monotonicity import SupportSet, check_finite_optimality, check_martingale_c_monotone
from .solver import SolveOptions, SolverReport, evaluate, solve_wmot
from .transport_lp import (LPResult, TransportLP, feasible_martingale_coupling, solve_linear_mot,
                           solve_linear_ot)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
