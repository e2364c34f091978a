"""Core numerical library: expansions, problems, flow, networks and oracles."""
from .barron_space import BoundaryCondition, TrigExpansion, barron_norm, h1_norm
from .config import ConfigManager, RunConfig
from .elliptic_problem import ConstantLedger, EllipticProblem, constants, validate
from .errors import BarronFlowError
from .net_extract import TwoLayerNet, best_of_draws, build_measure, build_relu_net, h1_net_error
from .oracle_verify import OracleSolution, fd_solve, galerkin_solve, poincare_check, quadrature
from .problems import BUILTIN_PROBLEMS, ProblemInfo, builtin_problem, random_problem
from .sobolev_flow import FlowTrace, solve

__all__ = [
    "BoundaryCondition",
    "TrigExpansion",
    "barron_norm",
    "h1_norm",
    "ConfigManager",
    "RunConfig",
    "ConstantLedger",
    "EllipticProblem",
    "constants",
    "validate",
    "BarronFlowError",
    "TwoLayerNet",
    "best_of_draws",
    "build_measure",
    "build_relu_net",
    "h1_net_error",
    "OracleSolution",
    "fd_solve",
    "galerkin_solve",
    "poincare_check",
    "quadrature",
    "BUILTIN_PROBLEMS",
    "ProblemInfo",
    "builtin_problem",
    "random_problem",
    "FlowTrace",
    "solve",
]
