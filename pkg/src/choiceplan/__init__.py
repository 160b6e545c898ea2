"""Scenario-sampling solver toolkit for stochastic choice-based discrete
planning: instance generators, a two-stage Benders branch-and-cut engine,
an extensive-form baseline, and statistical solution-quality validation."""

from .apps import (CaopExponomialParams, CaopKappaParams, CaopMmnlParams,
                   CaopProbitParams, FlopParams, MsmflpParams, evaluate_true,
                   generate, mmnl_closed_objective, mmnl_segments, round_to_feasible)
from .benders import (BendersCut, Stage1Result, StabilizerConfig, beta_weights,
                      fractional_cut, integer_cut, integer_dual, knapsack_dual, stage1)
from .engine import (SolveConfig, SolveStats, Solution, branch_select, solve,
                     solve_enum, solve_extensive, solve_sbbd)
from .instfile import load_instance, save_instance
from .model import (DecisionSpace, Instance, ScenarioSet, choose, cooperative_fraction,
                    enumerate_feasible, enumerate_optimal, make_instance, sample_objective)
from .saa import GapReport, estimate_gap, replicate_solve, run_validation, z_score
from .sampling import DistributionSpec, SampleMatrix, inverse_cdf, sample_lhs, sample_mcs
from .simplex import LpProblem, LpSolution, solve_lp, verify_kkt

__version__ = "0.1.0"
