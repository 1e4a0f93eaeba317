"""Coupled forward-backward Volterra integral equation solver.

Solves systems of the form

    X(t) = x0(t) + int_0^t f(t, s, X(s), Y(s), Z(s), X(T)) ds
    Y(t) = h(t, X(t), X(T)) + int_t^T g(t, s, X(s), Y(s)) ds
    Z(s) = int_s^T K(s, r) Y(r) dr

by homotopy continuation from an exactly solvable linear base system, with
sampling-based monotonicity checking and an independent direct-transcription
oracle for the control-derived instances.
"""

from .continuation import (ContinuationParams, SolveReport, assemble_para,
                           cold_start_guess, continuation_solve,
                           extend_to_fields, picard_solve)
from .base_linear import (LinearDrivers, reconstruct_base_fields,
                          solve_base_diagonal, solve_base_fbde_crosscheck)
from .errors import (ContinuationFailure, EstimationFailure, NoConvergence,
                     NumericalError, SolverFailure)
from .grid import (TimeGrid, VectorPath, integrate_lower, integrate_upper,
                   kernel_convolve, make_grid, trap_weights)
from .monotonicity import (Mc3Report, MonotonicityReport, SamplerConfig,
                           check_mc1, check_mc3, estimate_gamma, mc1_lhs)
from .oracle_lq import (DiscreteLq, assemble_discrete_lq, compare_with_fbvie,
                        fbvie_control, simulate_cost, solve_direct)
from .problem import (FbvieProblem, LqSpec, NonlinearSpec, build_lq_problem,
                      build_nonlinear_problem, const_matrix, const_path,
                      mc2_differences, reduce_to_fbde)
from .solution import DiagonalSolution, FieldSolution, TriangularField
from .verify import (CheckResult, VerificationReport, bridge_monotonicity_check,
                     bridge_value, fbvie_residual, hu_peng_transform_check,
                     lq_value_identity, uniqueness_probe)

__version__ = "0.1.0"
