"""Exploratory (entropy-regularised) temperature control for simulated annealing.

Stationary HJB solvers for the exploratory and classical problems on a
truncated grid, the optimal truncated-exponential temperature policy,
Euler-Maruyama simulation of the controlled dynamics, and the experiments
that compare them.
"""
from .analysis import (SweepAborted, SweepResult, dt_bias_allowance, fingerprint,
                       gibbs_noise_floor, lambda_sweep, mc_value_oracle, seed_noise_floor,
                       stationary_stability)
from .grid import (Grid, GridMismatchError, ScalarField, fd_gradient, fd_laplacian,
                   sup_norm_on_ball)
from .landscape import (InvalidLandscapeError, Landscape, UnknownLandscapeError,
                        builtin_landscape, check_assumption_41, with_gaussian_bumps)
from .operators import (GeneralProblem, ProblemSpec, QuadratureConfigError,
                        classical_operator_general, classical_operator_tc,
                        exploratory_operator_general, exploratory_operator_tc, gap_bound,
                        log_partition_interval, operator_gap, softmax_integral_general,
                        truncated_exp_mean)
from .policy import (FeedbackPolicy, InvalidPolicyInput, bangbang_diffusion, build_policy,
                     g_lambda, policy_density, sample_policy, uniform_policy)
from .sde import (GibbsFit, SdeConfig, SimulationBlowupError, StationaryEstimate,
                  UnsupportedDimensionError, adjoint_residual, check_lyapunov,
                  estimate_stationary, fit_gibbs, generator_apply, gibbs_density,
                  simulate_bangbang, simulate_exploratory, simulate_langevin, tv_distance)
from .solver import (DivergenceError, NumericalBlowupError, SolveReport, SolverConfig,
                     SolverError, residual_field, solve_classical_hjb, solve_exploratory_hjb)

__version__ = "0.1.0"
