# coding=utf-8
"""Implicit differentiation of solutions of ``F(x, z) = 0``.

The solution map is differentiated through selections ``[A B]`` of a
conservative Jacobian of ``F``: ``J = -B^-1 A``. The inverse is only formed
after the invertibility gate on ``B`` passes, unless the problem is in force
mode, which exists to reproduce what happens when the gate is ignored.
"""
from __future__ import absolute_import, division, print_function

import logging

import numpy as np

from .configuration_utils import JsonConfig
from .errors import ConfigError, InvertibilityFailure, NoConvergence, SingularMatrix
from .linalg import RCOND_TOL, LuFactorization, as_vector, truncated_pinv_solve
from .tape import DEFAULT_POLICY, JacobianSelection, Tape

logger = logging.getLogger(__name__)

ACCELERATIONS = ("none", "anderson")
FORCE_FALLBACKS = ("none", "pinv")


class FixedPointConfig(JsonConfig):
    """Configuration of the damped Picard / Anderson fixed-point solver.

    ``tolerance`` bounds the sup-norm of ``f(z) - z`` at the returned point.
    """
    defaults = {
        "max_iterations": 10000,
        "tolerance": 1e-10,
        "damping": 1.0,
        "acceleration": "none",
        "anderson_depth": 5,
    }

    def validate(self):
        if not self.tolerance > 0.0:
            raise ConfigError("Invalid tolerance: {} - should be > 0".format(self.tolerance))
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError("Invalid damping: {} - should be in ]0.0, 1.0]".format(self.damping))
        if self.acceleration not in ACCELERATIONS:
            raise ConfigError("Acceleration not found: %s" % self.acceleration)
        if int(self.max_iterations) < 1 or int(self.anderson_depth) < 1:
            raise ConfigError("max_iterations and anderson_depth should be positive")


def _as_update(update_map, x):
    if isinstance(update_map, Tape):
        if x is None or x.size == 0:
            return lambda z: update_map(z)
        return lambda z: update_map(np.concatenate([z, x]))
    return lambda z: np.asarray(update_map(z, x), dtype=float)


class FixedPointSolver(object):
    """Solves ``z = f(z, x)``; ``iterations`` and ``residual`` describe the last solve."""

    def __init__(self, config=None):
        self.config = FixedPointConfig() if config is None else config
        self.iterations = 0
        self.residual = np.inf

    def solve(self, update_map, x, z0):
        """
        :param update_map: a Tape on ``[z; x]`` or a callable ``f(z, x)``
        :param x:          parameters, may be None for a tape on ``z`` only
        :param z0:         starting point
        """
        cfg = self.config
        x = None if x is None else as_vector(x, "x")
        f = _as_update(update_map, x)
        z = as_vector(z0, "z0").copy()
        beta = float(cfg.damping)
        depth = int(cfg.anderson_depth)
        z_hist, g_hist = [], []
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(int(cfg.max_iterations) + 1):
                g = f(z) - z
                self.iterations, self.residual = k, float(np.max(np.abs(g)))
                if not np.isfinite(self.residual):
                    raise NoConvergence("Fixed-point iteration diverged after {} iterations".format(k),
                                        iterations=k, residual=self.residual)
                if self.residual <= cfg.tolerance:
                    return z
                if k == int(cfg.max_iterations):
                    break
                step = beta * g
                if cfg.acceleration == "anderson":
                    z_hist.append(z.copy())
                    g_hist.append(g.copy())
                    if len(z_hist) > depth + 1:
                        z_hist.pop(0)
                        g_hist.pop(0)
                    if len(z_hist) > 1:
                        d_g = np.diff(np.array(g_hist), axis=0).T
                        d_z = np.diff(np.array(z_hist), axis=0).T
                        gamma = np.linalg.lstsq(d_g, g, rcond=None)[0]
                        step = step - (d_z + beta * d_g).dot(gamma)
                z = z + step
        raise NoConvergence("No convergence after {} iterations (residual {:.3e})".format(
            cfg.max_iterations, self.residual), iterations=self.iterations, residual=self.residual)


def solve_fixed_point(update_map, x, z0, cfg=None):
    solver = FixedPointSolver(cfg)
    z = solver.solve(update_map, x, z0)
    logger.debug("Fixed point reached in %d iterations (residual %.3e)", solver.iterations, solver.residual)
    return z


class ImplicitProblem(object):
    """Residual ``F: R^n x R^m -> R^m`` on the tape input ``[x; z]``.

    :param rcond_tol:      invertibility gate on the ``z`` block ``B``
    :param force_mode:     bypass the gate
    :param force_fallback: in force mode, ``"none"`` still solves with LU and
                           fails on exactly singular ``B``; ``"pinv"`` always uses a
                           pseudo-inverse truncated at ``max(rcond_tol * s_max, pinv_atol)``
    :param residual_tol:   how far from ``F = 0`` a differentiation point may be
    """

    def __init__(self, residual, n, m, policy=None, rcond_tol=RCOND_TOL, force_mode=False,
                 force_fallback="none", pinv_atol=0.0, residual_tol=1e-6):
        if n < 1 or m < 1:
            raise ValueError("Invalid split: n={}, m={} - both should be >= 1".format(n, m))
        if residual.input_size != n + m:
            raise ValueError("Residual takes {} inputs, split is {} + {}".format(residual.input_size, n, m))
        if residual.output_size != m:
            raise ValueError("Residual has {} outputs, expected {}".format(residual.output_size, m))
        if force_fallback not in FORCE_FALLBACKS:
            raise ValueError("Force fallback not found: %s" % force_fallback)
        self.residual = residual
        self.n, self.m = int(n), int(m)
        self.policy = DEFAULT_POLICY if policy is None else policy
        self.rcond_tol = float(rcond_tol)
        self.force_mode = bool(force_mode)
        self.force_fallback = force_fallback
        self.pinv_atol = float(pinv_atol)
        self.residual_tol = float(residual_tol)

    def point(self, x, z):
        x, z = as_vector(x, "x"), as_vector(z, "z")
        if x.size != self.n or z.size != self.m:
            raise ValueError("Expected x of size {} and z of size {}".format(self.n, self.m))
        return np.concatenate([x, z])

    def blocks(self, x, z, policy=None):
        """Returns ``(A, B)`` from a selection of the residual at ``(x, z)``."""
        point = self.point(x, z)
        value = self.residual(point, policy or self.policy)
        if np.max(np.abs(value)) > self.residual_tol:
            raise ValueError("Point is not a solution: |F(x, z)|_inf = {:.3e} > {:.3e}".format(
                np.max(np.abs(value)), self.residual_tol))
        matrix = self.residual.jacobian_selection(point, policy or self.policy).matrix
        return matrix[:, :self.n], matrix[:, self.n:]

    def _apply_inverse(self, b_block, rhs, point, trans=0):
        fact = LuFactorization(b_block)
        if not self.force_mode:
            if fact.rcond < self.rcond_tol:
                raise InvertibilityFailure(
                    "Invertibility gate failed: rcond(B) = {:.3e} < {:.3e}".format(fact.rcond, self.rcond_tol),
                    rcond=fact.rcond, witness=b_block, point=point)
            if fact.rcond < 1e-8:
                logger.debug("B is ill-conditioned (rcond=%.3e) but passes the gate", fact.rcond)
            return fact.solve(rhs, trans=trans), fact.rcond
        if self.force_fallback == "pinv":
            matrix = b_block.T if trans else b_block
            return truncated_pinv_solve(matrix, rhs, rcond=self.rcond_tol, atol=self.pinv_atol), fact.rcond
        if fact.rcond == 0.0:
            raise SingularMatrix("B is exactly singular", rcond=0.0)
        if fact.rcond < self.rcond_tol:
            logger.debug("Force mode: solving through B with rcond=%.3e", fact.rcond)
        return fact.solve(rhs, trans=trans), fact.rcond


def implicit_jacobian_selection(problem, x, z, policy=None):
    """``-B^-1 A`` for ``[A B]`` a selection of the residual at ``(x, z)``.

    The returned :class:`JacobianSelection` carries ``rcond`` of ``B``.
    """
    policy = problem.policy if policy is None else policy
    a_block, b_block = problem.blocks(x, z, policy)
    point = problem.point(x, z)
    solved, rcond = problem._apply_inverse(b_block, a_block, point)
    return JacobianSelection(-solved, point, policy.policy_id, rcond=rcond)


def implicit_vjp(problem, x, z, v, policy=None):
    """``v^T J`` for ``J`` the implicit selection, with one transposed solve."""
    policy = problem.policy if policy is None else policy
    a_block, b_block = problem.blocks(x, z, policy)
    v = as_vector(v, "v")
    w, _ = problem._apply_inverse(b_block, v, problem.point(x, z), trans=1)
    return -a_block.T.dot(w)


def all_branches_invertible(problem, x, z, max_kinks=12):
    """Checks the gate for every endpoint selection of the kinks met at ``(x, z)``.

    Only the finitely many branch Jacobians of the kinked primitives are
    enumerated. Returns ``(passed, worst_rcond)``.
    """
    point = problem.point(x, z)
    worst = np.inf
    for policy in problem.residual.branch_policies(point, problem.policy, max_kinks):
        _, b_block = problem.blocks(x, z, policy)
        worst = min(worst, LuFactorization(b_block).rcond)
    return worst >= problem.rcond_tol, float(worst)


def inverse_jacobian_selection(phi, y, psi_y, policy=None, rcond_tol=RCOND_TOL, tol=1e-8):
    """``A^-1`` for ``A`` a selection of ``phi`` at ``psi_y``, where ``phi(psi_y) = y``."""
    policy = DEFAULT_POLICY if policy is None else policy
    y, psi_y = as_vector(y, "y"), as_vector(psi_y, "psi_y")
    gap = float(np.max(np.abs(phi(psi_y, policy) - y)))
    if gap > tol:
        raise ValueError("psi_y is not a preimage of y: |phi(psi_y) - y|_inf = {:.3e}".format(gap))
    selection = phi.jacobian_selection(psi_y, policy)
    if selection.matrix.shape[0] != selection.matrix.shape[1]:
        raise ValueError("phi should map R^d to R^d, got Jacobian of shape {}".format(selection.matrix.shape))
    fact = LuFactorization(selection.matrix)
    if fact.rcond < rcond_tol:
        raise InvertibilityFailure("Selection of phi is not invertible (rcond={:.3e})".format(fact.rcond),
                                   rcond=fact.rcond, witness=selection.matrix, point=psi_y)
    inverse = fact.solve(np.eye(selection.matrix.shape[0]))
    return JacobianSelection(inverse, y, policy.policy_id, rcond=fact.rcond)
