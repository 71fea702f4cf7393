# coding=utf-8
"""Lasso hyperparameter differentiation.

The penalty is parametrized as ``exp(lam)``. The inner problem

    min_beta 1/2 |y - X beta|^2 + exp(lam) |beta|_1

is solved with FISTA and its solutions are characterized by
``F(lam, beta) = beta - prox(beta - X^T (X beta - y)) = 0`` with the
soft-thresholding prox at level ``exp(lam)``. The derivative of the solution
with respect to ``lam`` is selected through a vector ``q`` which is 1 on the
support, 0 off the equicorrelation set and free in [0, 1] in between.
"""
from __future__ import absolute_import, division, print_function

import logging

import numpy as np

from .errors import DomainError, InvalidSelection, InvertibilityFailure, NoConvergence
from .file_utils import read_csv_matrix
from .linalg import RCOND_TOL, LuFactorization, as_matrix, as_vector
from .sgd import ConstantStep, _StepSchedule
from .tape import Tape
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

EQUICORRELATION_TOL = 1e-8


def soft_threshold(u, t):
    """``sign(u) * max(|u| - t, 0)`` componentwise."""
    if np.any(np.asarray(t) < 0.0):
        raise DomainError("Soft-threshold level should be >= 0, got {}".format(t))
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)


class LassoProblem(object):
    """Design ``X`` (n x p) and observations ``y`` (n)."""

    def __init__(self, X, y):
        self.X = as_matrix(X, "X").copy()
        self.y = as_vector(y, "y").copy()
        if self.y.size != self.X.shape[0]:
            raise ValueError("X has {} rows but y has size {}".format(self.X.shape[0], self.y.size))
        zero_columns = np.flatnonzero(~np.any(self.X, axis=0))
        if zero_columns.size:
            raise ValueError("Design has all-zero columns: {}".format(zero_columns.tolist()))
        self.gram = self.X.T.dot(self.X)
        self.lipschitz = float(np.linalg.norm(self.gram, 2))

    @property
    def num_features(self):
        return self.X.shape[1]

    @classmethod
    def from_csv(cls, input_file, target_column=-1):
        """Loads a CSV whose ``target_column`` holds ``y`` and the other columns ``X``.

        A header row is optional.
        """
        _, data = read_csv_matrix(input_file)
        target = data[:, target_column]
        return cls(np.delete(data, target_column % data.shape[1], axis=1), target)

    def correlations(self, beta):
        return self.X.T.dot(self.y - self.X.dot(beta))

    def fixed_point_residual(self, lam, beta):
        """``F(lam, beta)``."""
        return beta - soft_threshold(beta + self.correlations(beta), np.exp(lam))

    def lambda_max(self):
        """Smallest ``lam`` whose solution is 0."""
        top = float(np.max(np.abs(self.X.T.dot(self.y))))
        if not top > 0.0:
            raise DomainError("X^T y = 0: the solution is 0 for every lam")
        return float(np.log(top))

    def objective(self, lam, beta):
        r = self.y - self.X.dot(beta)
        return 0.5 * r.dot(r) + np.exp(lam) * np.sum(np.abs(beta))


class LassoSolution(object):
    def __init__(self, beta_hat, lam, support, equicorrelation, kkt_residual, correlations, iterations=0):
        self.beta_hat = beta_hat
        self.lam = lam
        self.support = support
        self.equicorrelation = equicorrelation
        self.kkt_residual = kkt_residual
        self.correlations = correlations
        self.iterations = iterations

    @property
    def penalty(self):
        return float(np.exp(self.lam))

    def __repr__(self):
        return "LassoSolution(lam={:.4g}, support={}, E={}, kkt={:.2e})".format(
            self.lam, self.support.tolist(), self.equicorrelation.tolist(), self.kkt_residual)


def solve_lasso(problem, lam, tol=1e-10, max_iterations=200000, beta0=None, tau=EQUICORRELATION_TOL):
    """FISTA with adaptive restart, stopped when ``|F(lam, beta)|_inf <= tol``."""
    if not tol > 0.0:
        raise ValueError("Invalid tol: {} - should be > 0".format(tol))
    penalty = float(np.exp(lam))
    step = 1.0 / problem.lipschitz
    beta = np.zeros(problem.num_features) if beta0 is None else as_vector(beta0, "beta0").copy()
    extrapolated, t = beta.copy(), 1.0
    for k in range(max_iterations + 1):
        residual = float(np.max(np.abs(problem.fixed_point_residual(lam, beta))))
        if residual <= tol:
            break
        if k == max_iterations:
            raise NoConvergence("Lasso solver stopped at |F| = {:.3e} after {} iterations".format(
                residual, max_iterations), iterations=k, residual=residual)
        grad = problem.gram.dot(extrapolated) - problem.X.T.dot(problem.y)
        new_beta = soft_threshold(extrapolated - step * grad, step * penalty)
        if (extrapolated - new_beta).dot(new_beta - beta) > 0.0:
            # restart the momentum
            extrapolated, t = new_beta.copy(), 1.0
        else:
            new_t = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            extrapolated = new_beta + ((t - 1.0) / new_t) * (new_beta - beta)
            t = new_t
        beta = new_beta
    corr = problem.correlations(beta)
    support = np.flatnonzero(beta)
    equi = np.union1d(np.flatnonzero(np.abs(corr) >= penalty * (1.0 - tau)), support).astype(int)
    return LassoSolution(beta, float(lam), support, equi, residual, corr, iterations=k)


class QSelection(object):
    """Choice of ``q`` in the selection family: ``lars`` (1 on E), ``weak`` (1 on the support) or ``custom``."""
    MODES = ("lars", "weak", "custom")

    def __init__(self, mode="lars", q=None):
        if mode not in self.MODES:
            raise ValueError("QSelection mode not found: %s" % mode)
        if mode == "custom" and q is None:
            raise ValueError("custom QSelection needs a q vector")
        self.mode = mode
        self.q = None if q is None else as_vector(q, "q")

    def vector(self, solution):
        p = solution.beta_hat.size
        if self.mode == "lars":
            q = np.zeros(p)
            q[solution.equicorrelation] = 1.0
            return q
        if self.mode == "weak":
            q = np.zeros(p)
            q[solution.support] = 1.0
            return q
        q = self.q
        if q.size != p:
            raise InvalidSelection("q has size {}, expected {}".format(q.size, p))
        outside = np.setdiff1d(np.arange(p), solution.equicorrelation)
        if (np.any(q[solution.support] != 1.0) or np.any(q[outside] != 0.0)
                or np.any(q < 0.0) or np.any(q > 1.0)):
            raise InvalidSelection("q should be 1 on the support, 0 off E and in [0, 1] on E")
        return q

    def __repr__(self):
        return "QSelection({})".format(self.mode)


def _check_equicorrelation_gram(problem, solution, rcond_tol):
    equi = solution.equicorrelation
    if equi.size == 0:
        return
    sub = problem.gram[np.ix_(equi, equi)]
    fact = LuFactorization(sub)
    if fact.rcond < rcond_tol:
        raise InvertibilityFailure("X_E^T X_E is not invertible (rcond={:.3e})".format(fact.rcond),
                                   rcond=fact.rcond, witness=sub)


def lasso_jacobian_selection(problem, solution, q=None, rcond_tol=RCOND_TOL):
    """``-e^lam (I - diag(q)(I - X^T X))^-1 diag(q) sign(beta - X^T (X beta - y))``."""
    q = QSelection() if q is None else q
    _check_equicorrelation_gram(problem, solution, rcond_tol)
    qv = q.vector(solution)
    p = qv.size
    beta = solution.beta_hat
    signs = np.sign(beta + problem.correlations(beta))
    matrix = np.eye(p) - qv[:, None] * (np.eye(p) - problem.gram)
    fact = LuFactorization(matrix)
    if fact.rcond < rcond_tol:
        raise InvertibilityFailure("Selection matrix is not invertible (rcond={:.3e})".format(fact.rcond),
                                   rcond=fact.rcond, witness=matrix)
    return -solution.penalty * fact.solve(qv * signs)


def _restricted_selection(problem, solution, indices, signs, rcond_tol):
    out = np.zeros(solution.beta_hat.size)
    if indices.size == 0:
        return out
    sub = problem.gram[np.ix_(indices, indices)]
    fact = LuFactorization(sub)
    if fact.rcond < rcond_tol:
        raise InvertibilityFailure("Restricted Gram matrix is not invertible (rcond={:.3e})".format(fact.rcond),
                                   rcond=fact.rcond, witness=sub)
    out[indices] = -solution.penalty * fact.solve(signs)
    return out


def lars_selection(problem, solution, rcond_tol=RCOND_TOL):
    equi = solution.equicorrelation
    return _restricted_selection(problem, solution, equi, np.sign(solution.correlations[equi]), rcond_tol)


def weak_selection(problem, solution, rcond_tol=RCOND_TOL):
    support = solution.support
    return _restricted_selection(problem, solution, support, np.sign(solution.beta_hat[support]), rcond_tol)


def held_out_criterion(X_test, y_test):
    """Tape of ``beta -> 1/2 |y_test - X_test beta|^2``."""
    X_test = as_matrix(X_test, "X_test")
    tape = Tape(X_test.shape[1])
    residual = tape.affine(tape.input(), -X_test, as_vector(y_test, "y_test"))
    return tape.set_output(tape.scale(tape.squared_norm(residual), 0.5))


def distance_criterion(target):
    """Tape of ``beta -> 1/2 |beta - target|^2``."""
    target = as_vector(target, "target")
    tape = Tape(target.size)
    return tape.set_output(tape.scale(tape.squared_norm(tape.input() - target), 0.5))


def hypergradient(problem, criterion, lam, q=None, tol=1e-10, beta0=None):
    """Returns ``(C(beta_hat), <grad C, d beta_hat / d lam>, solution)``."""
    solution = solve_lasso(problem, lam, tol=tol, beta0=beta0)
    value = float(criterion(solution.beta_hat)[0])
    grad = criterion.jacobian_selection(solution.beta_hat).matrix[0]
    return value, float(grad.dot(lasso_jacobian_selection(problem, solution, q))), solution


def tune_lambda(problem, criterion, lambda0, schedule=0.1, q=None, num_steps=100, tol=1e-10, experiment="lasso-tune"):
    """Outer descent ``lam <- lam - alpha_k * hypergradient``.

    :param schedule: a step-size schedule or a constant step
    :return: a Trajectory with columns ``lambda``, ``criterion``, ``hypergradient``
    """
    if not isinstance(schedule, _StepSchedule):
        schedule = ConstantStep(alpha0=float(schedule))
    trajectory = Trajectory(["lambda", "criterion", "hypergradient", "support_size"], experiment=experiment)
    lam, beta = float(lambda0), None
    for k in range(num_steps + 1):
        value, hyper, solution = hypergradient(problem, criterion, lam, q, tol, beta0=beta)
        trajectory.append(k, **{"lambda": lam, "criterion": value, "hypergradient": hyper,
                                "support_size": solution.support.size})
        if k == num_steps:
            break
        beta = solution.beta_hat
        lam = lam - schedule.get_step(k) * hyper
    logger.info("Tuned lambda: %.6g (criterion %.6g)", lam, trajectory.last("criterion"))
    return trajectory


def grid_search(problem, criterion, lambdas, tol=1e-10):
    """Evaluates the criterion on a grid; returns ``(best_lambda, values)``."""
    values = []
    for lam in lambdas:
        solution = solve_lasso(problem, lam, tol=tol)
        values.append(float(criterion(solution.beta_hat)[0]))
    values = np.array(values)
    return float(lambdas[int(np.argmin(values))]), values


class LassoTuningTerm(object):
    """Training term ``lam -> C(beta_hat(lam))`` for the stochastic descent loop."""
    size = 1

    def __init__(self, problem, criterion, q=None, tol=1e-10):
        self.problem = problem
        self.criterion = criterion
        self.q = q
        self.tol = tol

    def value(self, w):
        solution = solve_lasso(self.problem, as_vector(w)[0], tol=self.tol)
        return float(self.criterion(solution.beta_hat)[0])

    def selection(self, w, policy=None):
        _, hyper, _ = hypergradient(self.problem, self.criterion, as_vector(w)[0], self.q, self.tol)
        return np.array([hyper])
