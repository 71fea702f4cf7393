# coding=utf-8
"""Differentiation through conic programs.

The primal-dual pair

    min c^T x  s.t.  A x + s = b, s in K          min b^T y  s.t.  A^T y + c = 0, y in K*

is encoded by the residual map ``N(z) = (A^T y + c, b - A x - s)`` where
``z = (u, v)``, ``x = u``, ``y = P_K*(v)`` and ``s = y - v``. Its zeros are
the primal-dual solutions and the solution map is differentiated through
``-U^-1 V`` with ``[U V]`` a selection of the Jacobian of ``N``.

Second-order cones use the layout ``(t, u)`` with the scalar first.
"""
from __future__ import absolute_import, division, print_function

import itertools
import json
import logging
from io import open

import numpy as np

from .configuration_utils import JsonConfig
from .errors import ConfigError, InvertibilityFailure, NoConvergence, SingularMatrix
from .linalg import RCOND_TOL, LuFactorization, as_matrix, as_vector, lu_solve
from .tape import DEFAULT_POLICY, JacobianSelection

logger = logging.getLogger(__name__)


class ConeFactor(object):
    name = None

    def __init__(self, dim):
        if int(dim) < 1:
            raise ValueError("Invalid cone dimension: {}".format(dim))
        self.dim = int(dim)

    def dual(self):
        return self

    def kinks(self, v):
        return np.zeros(self.dim, dtype=bool)

    def to_dict(self):
        return {"type": self.name, "dim": self.dim}

    def __eq__(self, other):
        return type(self) is type(other) and self.dim == other.dim

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "{}({})".format(self.__class__.__name__, self.dim)


class Zero(ConeFactor):
    name = "zero"

    def project(self, v):
        return np.zeros_like(v)

    def jacobian(self, v, policy, node):
        return np.zeros((self.dim, self.dim))

    def dual(self):
        return Free(self.dim)


class Free(ConeFactor):
    name = "free"

    def project(self, v):
        return v.copy()

    def jacobian(self, v, policy, node):
        return np.eye(self.dim)

    def dual(self):
        return Zero(self.dim)


class NonnegativeOrthant(ConeFactor):
    name = "nonnegative"

    def project(self, v):
        return np.maximum(v, 0.0)

    def kinks(self, v):
        return v == 0.0

    def jacobian(self, v, policy, node):
        d = (v > 0.0).astype(float)
        mask = v == 0.0
        if np.any(mask):
            d[mask] = policy.at_kink("relu_at_zero", node, int(np.sum(mask)))
        return np.diag(d)


class SecondOrder(ConeFactor):
    """``{(t, u) : |u| <= t}``."""
    name = "soc"

    def __init__(self, dim):
        super(SecondOrder, self).__init__(dim)
        if self.dim < 2:
            raise ValueError("Second-order cones need dimension >= 2, got {}".format(dim))

    def project(self, v):
        t, u = v[0], v[1:]
        norm = np.linalg.norm(u)
        if norm <= t:
            return v.copy()
        if norm <= -t:
            return np.zeros_like(v)
        out = np.empty_like(v)
        out[0] = 0.5 * (t + norm)
        out[1:] = 0.5 * (t + norm) * u / norm
        return out

    def kinks(self, v):
        mask = np.zeros(self.dim, dtype=bool)
        mask[:] = np.linalg.norm(v[1:]) == abs(v[0])
        return mask

    def _outer_jacobian(self, t, u, norm):
        ubar = u / norm
        jac = np.empty((self.dim, self.dim))
        jac[0, 0] = 0.5
        jac[0, 1:] = 0.5 * ubar
        jac[1:, 0] = 0.5 * ubar
        ratio = t / norm
        jac[1:, 1:] = 0.5 * ((1.0 + ratio) * np.eye(self.dim - 1) - ratio * np.outer(ubar, ubar))
        return jac

    def jacobian(self, v, policy, node):
        t, u = v[0], v[1:]
        norm = np.linalg.norm(u)
        if norm < t:
            return np.eye(self.dim)
        if norm < -t:
            return np.zeros((self.dim, self.dim))
        if norm > abs(t):
            return self._outer_jacobian(t, u, norm)
        weight = policy.at_kink("soc_boundary_weight", node, 1)[0]
        if norm == 0.0:
            return weight * np.eye(self.dim)
        inner = np.eye(self.dim) if t > 0.0 else np.zeros((self.dim, self.dim))
        return weight * inner + (1.0 - weight) * self._outer_jacobian(t, u, norm)


CONES = {
    "zero": Zero,
    "free": Free,
    "nonnegative": NonnegativeOrthant,
    "soc": SecondOrder,
}


class Cone(object):
    """Cartesian product of cone factors."""

    def __init__(self, factors):
        self.factors = list(factors)
        if not self.factors:
            raise ValueError("A cone needs at least one factor")
        self.dim = sum(f.dim for f in self.factors)
        self.offsets = np.cumsum([0] + [f.dim for f in self.factors])

    def _blocks(self, v):
        v = as_vector(v, "cone vector")
        if v.size != self.dim:
            raise ValueError("Cone has dimension {}, got a vector of size {}".format(self.dim, v.size))
        return [(i, f, v[self.offsets[i]:self.offsets[i + 1]]) for i, f in enumerate(self.factors)]

    def dual(self):
        return Cone([f.dual() for f in self.factors])

    def project(self, v):
        return np.concatenate([f.project(block) for _, f, block in self._blocks(v)])

    def projection_jacobian(self, v, policy=None):
        policy = DEFAULT_POLICY if policy is None else policy
        jac = np.zeros((self.dim, self.dim))
        for i, f, block in self._blocks(v):
            lo, hi = self.offsets[i], self.offsets[i + 1]
            jac[lo:hi, lo:hi] = f.jacobian(block, policy, i)
        return jac

    def kinks(self, v):
        return np.concatenate([f.kinks(block) for _, f, block in self._blocks(v)])

    def to_dict(self):
        return [f.to_dict() for f in self.factors]

    @classmethod
    def from_dict(cls, json_object):
        factors = []
        for entry in json_object:
            if entry["type"] not in CONES:
                raise ConfigError("Cone not found: %s" % entry["type"])
            factors.append(CONES[entry["type"]](entry["dim"]))
        return cls(factors)

    def __eq__(self, other):
        return isinstance(other, Cone) and self.factors == other.factors

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "Cone({})".format(" x ".join(repr(f) for f in self.factors))


def project_cone(cone, v):
    return cone.project(v)


def project_dual(cone, v):
    return cone.dual().project(v)


def project_polar(cone, v):
    """Projection onto the polar cone, ``-P_K*(-v)``."""
    return -project_dual(cone, -as_vector(v))


def cone_projection_jacobian_selection(cone, v, policy=None):
    return cone.projection_jacobian(v, policy)


class MoreauReport(object):
    def __init__(self, residual, inner_product, tol):
        self.residual = residual
        self.inner_product = inner_product
        self.tol = tol

    @property
    def passed(self):
        return self.residual <= self.tol and abs(self.inner_product) <= self.tol

    def __repr__(self):
        return "MoreauReport(residual={:.3e}, inner={:.3e}, passed={})".format(
            self.residual, self.inner_product, self.passed)


def moreau_check(cone, v, tol=1e-10):
    """Checks ``v = P_K(v) + P_K°(v)`` with orthogonal parts."""
    v = as_vector(v)
    on_cone = project_cone(cone, v)
    on_polar = project_polar(cone, v)
    scale = max(1.0, float(np.linalg.norm(v)))
    return MoreauReport(float(np.max(np.abs(on_cone + on_polar - v))) / scale,
                        float(on_cone.dot(on_polar)) / scale ** 2, tol)


class ConicProblem(object):
    """``(A, b, c, K)`` with ``A`` of shape (m, n) and ``K`` of dimension m."""

    def __init__(self, A, b, c, cone):
        self.A = as_matrix(A, "A").copy()
        self.b = as_vector(b, "b").copy()
        self.c = as_vector(c, "c").copy()
        self.cone = cone if isinstance(cone, Cone) else Cone.from_dict(cone)
        m, n = self.A.shape
        if self.b.size != m or self.c.size != n or self.cone.dim != m:
            raise ValueError("Inconsistent shapes: A {}, b {}, c {}, cone dimension {}".format(
                self.A.shape, self.b.size, self.c.size, self.cone.dim))
        self.dual_cone = self.cone.dual()

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def size(self):
        return self.m + self.n

    @property
    def num_params(self):
        return self.m * self.n + self.m + self.n

    @property
    def skew(self):
        """``Q = [[0, A^T], [-A, 0]]``."""
        m, n = self.A.shape
        q = np.zeros((n + m, n + m))
        q[:n, n:] = self.A.T
        q[n:, :n] = -self.A
        return q

    def params(self):
        """``(A, b, c)`` flattened with ``A`` in column-major order, then ``b``, then ``c``."""
        return np.concatenate([self.A.ravel(order="F"), self.b, self.c])

    def with_params(self, theta):
        theta = as_vector(theta, "parameters")
        m, n = self.A.shape
        A = theta[:m * n].reshape((m, n), order="F")
        return ConicProblem(A, theta[m * n:m * n + m], theta[m * n + m:], self.cone)

    def to_dict(self):
        return {"A": self.A.tolist(), "b": self.b.tolist(), "c": self.c.tolist(), "cone": self.cone.to_dict()}

    @classmethod
    def from_dict(cls, json_object):
        return cls(json_object["A"], json_object["b"], json_object["c"], Cone.from_dict(json_object["cone"]))

    @classmethod
    def from_json_file(cls, json_file):
        with open(json_file, "r", encoding="utf-8") as reader:
            return cls.from_dict(json.loads(reader.read()))

    def to_json_string(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _split(z, problem):
    z = as_vector(z, "z")
    if z.size != problem.size:
        raise ValueError("z should have size {}, got {}".format(problem.size, z.size))
    return z[:problem.n], z[problem.n:]


def phi(z, cone, n=None):
    """``(x, y, s) = (u, P_K*(v), P_K*(v) - v)`` for ``z = (u, v)``."""
    z = as_vector(z, "z")
    n = z.size - cone.dim if n is None else n
    u, v = z[:n], z[n:]
    y = project_dual(cone, v)
    return u.copy(), y, y - v


def phi_jacobian_selection(z, cone, policy=None, n=None):
    """Rows ``(x, y, s)``, columns ``z``."""
    z = as_vector(z, "z")
    n = z.size - cone.dim if n is None else n
    m = cone.dim
    d = cone.dual().projection_jacobian(z[n:], policy)
    jac = np.zeros((n + 2 * m, n + m))
    jac[:n, :n] = np.eye(n)
    jac[n:n + m, n:] = d
    jac[n + m:, n:] = d - np.eye(m)
    return jac


def residual_map(z, problem):
    u, v = _split(z, problem)
    y = project_dual(problem.cone, v)
    return np.concatenate([problem.A.T.dot(y) + problem.c, problem.b - problem.A.dot(u) - (y - v)])


def residual_jacobian_selection(z, problem, policy=None):
    """Returns ``(U, V)``: selections with respect to ``z`` and to the flattened ``(A, b, c)``."""
    u, v = _split(z, problem)
    m, n = problem.m, problem.n
    d = problem.dual_cone.projection_jacobian(v, policy)
    y = problem.dual_cone.project(v)
    jac_z = np.zeros((n + m, n + m))
    jac_z[:n, n:] = problem.A.T.dot(d)
    jac_z[n:, :n] = -problem.A
    jac_z[n:, n:] = np.eye(m) - d
    jac_p = np.zeros((n + m, problem.num_params))
    for j in range(n):
        for i in range(m):
            col = j * m + i
            jac_p[j, col] = y[i]
            jac_p[n + i, col] = -u[j]
    jac_p[n:, m * n:m * n + m] = np.eye(m)
    jac_p[:n, m * n + m:] = np.eye(n)
    return jac_z, jac_p


class ConicSolverConfig(JsonConfig):
    """Semismooth Newton on ``N`` with an Armijo search.

    When the Newton system is singular or the search fails, ``z`` takes the
    averaged step ``z - fallback_damping * (I + Q)^{-1} N(z)``. With damping 1
    this is the plain splitting step, which may cycle; damping in ]0, 1[ averages
    it with the identity.
    """
    defaults = {
        "tolerance": 1e-10,
        "max_iterations": 20000,
        "armijo": 1e-4,
        "backtrack": 0.5,
        "min_step": 1e-10,
        "rcond_tol": RCOND_TOL,
        "fallback_damping": 0.5,
    }

    def validate(self):
        if not self.tolerance > 0.0:
            raise ConfigError("Invalid tolerance: {} - should be > 0".format(self.tolerance))
        if not 0.0 < self.backtrack < 1.0:
            raise ConfigError("Invalid backtrack: {} - should be in ]0.0, 1.0[".format(self.backtrack))
        if not 0.0 < self.fallback_damping <= 1.0:
            raise ConfigError("Invalid fallback_damping: {} - should be in ]0.0, 1.0]".format(self.fallback_damping))


def solve_residual(problem, z0=None, cfg=None, policy=None):
    """Returns ``z`` with ``|N(z)|_inf <= cfg.tolerance``."""
    cfg = ConicSolverConfig() if cfg is None else cfg
    z = np.zeros(problem.size) if z0 is None else as_vector(z0, "z0").copy()
    fallback = LuFactorization(np.eye(problem.size) + problem.skew)
    newton_steps = fallback_steps = 0
    for k in range(int(cfg.max_iterations)):
        r = residual_map(z, problem)
        res = float(np.max(np.abs(r)))
        if res <= cfg.tolerance:
            logger.debug("Conic residual %.3e after %d Newton and %d fallback steps", res, newton_steps, fallback_steps)
            return z
        merit = r.dot(r)
        jac_z, _ = residual_jacobian_selection(z, problem, policy)
        try:
            direction = lu_solve(jac_z, -r, rcond_tol=cfg.rcond_tol)
        except SingularMatrix:
            direction = None
        if direction is not None:
            t = 1.0
            while t >= cfg.min_step:
                trial = residual_map(z + t * direction, problem)
                if trial.dot(trial) <= (1.0 - 2.0 * cfg.armijo * t) * merit:
                    break
                t *= cfg.backtrack
            if t >= cfg.min_step:
                z = z + t * direction
                newton_steps += 1
                continue
        z = z - cfg.fallback_damping * fallback.solve(r)
        fallback_steps += 1
    raise NoConvergence("Conic solver did not converge in {} iterations".format(cfg.max_iterations),
                        iterations=cfg.max_iterations, residual=float(np.max(np.abs(residual_map(z, problem)))))


def solve(problem, cfg=None):
    """Solves and returns ``(x, y, s)``."""
    return phi(solve_residual(problem, cfg=cfg), problem.cone, problem.n)


def kkt_report(problem, x, y, s):
    """Residuals of the optimality system at ``(x, y, s)``."""
    return {
        "dual_residual": float(np.max(np.abs(problem.A.T.dot(y) + problem.c))),
        "primal_residual": float(np.max(np.abs(problem.A.dot(x) + s - problem.b))),
        "slack_cone_violation": float(np.max(np.abs(s - project_cone(problem.cone, s)))),
        "dual_cone_violation": float(np.max(np.abs(y - project_dual(problem.cone, y)))),
        "complementarity": float(abs(s.dot(y))),
    }


def sol_jacobian_selection(problem, z, policy=None, rcond_tol=RCOND_TOL, tol=1e-8):
    """Selection of ``d(x, y, s) / d(A, b, c)`` at a zero ``z`` of the residual map.

    Rows are ``(x, y, s)``; columns follow :meth:`ConicProblem.params`.
    """
    policy = DEFAULT_POLICY if policy is None else policy
    z = as_vector(z, "z")
    res = float(np.max(np.abs(residual_map(z, problem))))
    if res > tol:
        raise ValueError("z is not a zero of the residual map (|N(z)|_inf = {:.3e})".format(res))
    jac_z, jac_p = residual_jacobian_selection(z, problem, policy)
    fact = LuFactorization(jac_z)
    if fact.rcond < rcond_tol:
        raise InvertibilityFailure("Residual map selection is not invertible (rcond={:.3e})".format(fact.rcond),
                                   rcond=fact.rcond, witness=jac_z, point=z)
    jac_nu = -fact.solve(jac_p)
    matrix = phi_jacobian_selection(z, problem.cone, policy, problem.n).dot(jac_nu)
    return JacobianSelection(matrix, z, policy.policy_id, rcond=fact.rcond)


def all_orthant_branches_invertible(problem, z, rcond_tol=RCOND_TOL, max_kinks=12):
    """Gate check over every 0/1 choice at the kinks of orthant factors.

    Returns ``(passed, worst_rcond)``.
    """
    for factor in problem.cone.factors:
        if not isinstance(factor, (NonnegativeOrthant, Zero, Free)):
            raise ValueError("Branch enumeration is limited to orthant, zero and free factors")
    _, v = _split(z, problem)
    kinks = np.flatnonzero(problem.dual_cone.kinks(v))
    if kinks.size > max_kinks:
        raise ValueError("{} kinks at this point, more than max_kinks={}".format(kinks.size, max_kinks))
    m, n = problem.m, problem.n
    base, _ = residual_jacobian_selection(z, problem)
    base_d = np.eye(m) - base[n:, n:]
    worst = np.inf
    for choice in itertools.product((0.0, 1.0), repeat=kinks.size):
        d = base_d.copy()
        d[kinks, kinks] = choice
        jac = base.copy()
        jac[:n, n:] = problem.A.T.dot(d)
        jac[n:, n:] = np.eye(m) - d
        worst = min(worst, LuFactorization(jac).rcond)
    return worst >= rcond_tol, float(worst)
