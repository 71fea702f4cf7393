__version__ = "0.1.0"
from .errors import (PathDiffError, SingularMatrix, NotSymmetric, NonFiniteError, DomainError,
                     NoConvergence, InvertibilityFailure, InvalidSelection, DivergenceDetected,
                     NotMonotone, ConfigError)
from .linalg import lu_solve, rcond_estimate, symmetric_eig_min, affine_dimension, affine_hull_distance

from .tape import (Tape, Var, SelectionPolicy, DEFAULT_POLICY, JacobianSelection,
                   forward, jacobian_selection, finite_difference_jacobian, residual_line_check)
from .implicit import (FixedPointConfig, FixedPointSolver, ImplicitProblem, solve_fixed_point,
                       implicit_jacobian_selection, implicit_vjp, all_branches_invertible,
                       inverse_jacobian_selection)
from .deq import MonotoneLayer, deq_forward, deq_conservative_gradient, DEQSquareLoss
from .conic import (Cone, Zero, Free, NonnegativeOrthant, SecondOrder, ConicProblem,
                    project_cone, project_dual, project_polar, residual_map, solve_residual,
                    sol_jacobian_selection)
from .lasso import (LassoProblem, QSelection, solve_lasso, lasso_jacobian_selection,
                    hypergradient, tune_lambda)
from .sgd import SGDConfig, SumProblem, sgd_run, stationarity_measure

from .trajectory import Trajectory
from .experiments import ExperimentConfig, EXPERIMENTS, run_experiment
