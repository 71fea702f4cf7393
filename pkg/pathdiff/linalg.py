# coding=utf-8
"""Dense linear algebra used by the differentiation modules.

Everything here works on small dense numpy arrays. Solves go through a single
LU factorization with partial pivoting so that the reciprocal condition
estimate used by the invertibility gates comes from the same factors.
"""
from __future__ import absolute_import, division, print_function

import logging
import warnings

import numpy as np
from scipy import linalg as sla
from scipy.linalg import lapack

from .errors import NonFiniteError, NotSymmetric, SingularMatrix

logger = logging.getLogger(__name__)

RCOND_TOL = 1e-12
SYMMETRY_TOL = 1e-10
AFFINE_TOL = 1e-10


def as_matrix(a, name="matrix"):
    """Returns ``a`` as a finite 2-D float array."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError("{} should be 2-dimensional, got shape {}".format(name, a.shape))
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("{} has non-finite entries".format(name))
    return a


def as_vector(v, name="vector"):
    """Returns ``v`` as a finite 1-D float array (scalars become size 1)."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.ndim != 1:
        raise ValueError("{} should be 1-dimensional, got shape {}".format(name, v.shape))
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("{} has non-finite entries".format(name))
    return v


def _check_square(a, name):
    if a.shape[0] != a.shape[1]:
        raise ValueError("{} should be square, got shape {}".format(name, a.shape))


class LuFactorization(object):
    """LU factorization with partial pivoting and a 1-norm reciprocal condition estimate."""

    def __init__(self, a):
        a = as_matrix(a)
        _check_square(a, "LU input")
        self.shape = a.shape
        self.anorm = float(np.linalg.norm(a, 1))
        with warnings.catch_warnings():
            # exactly singular inputs are reported through rcond
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            warnings.simplefilter("ignore", RuntimeWarning)
            self.lu, self.piv = sla.lu_factor(a, check_finite=False)
        self.rcond = self._estimate_rcond()

    def _estimate_rcond(self):
        if self.anorm == 0.0 or np.any(np.diag(self.lu) == 0.0):
            return 0.0
        gecon = lapack.get_lapack_funcs("gecon", (self.lu,))
        rcond, info = gecon(self.lu, self.anorm, norm="1")
        if info != 0 or not np.isfinite(rcond):
            return 0.0
        return float(rcond)

    @property
    def permutation(self):
        """Row order such that ``a[permutation] == L @ U``."""
        perm = np.arange(self.shape[0])
        for i, p in enumerate(self.piv):
            perm[i], perm[p] = perm[p], perm[i]
        return perm

    @property
    def lower(self):
        return np.tril(self.lu, k=-1) + np.eye(self.shape[0])

    @property
    def upper(self):
        return np.triu(self.lu)

    def reassemble(self):
        out = np.empty(self.shape)
        out[self.permutation] = self.lower.dot(self.upper)
        return out

    def solve(self, b, trans=0):
        return sla.lu_solve((self.lu, self.piv), b, trans=trans, check_finite=False)


def lu_solve(a, b, rcond_tol=RCOND_TOL, trans=0):
    """Solves ``a x = b`` (or ``a^T x = b`` with ``trans=1``).

    :param a: square matrix
    :param b: right-hand side, vector or matrix with as many rows as ``a``
    :param rcond_tol: factorizations with a smaller reciprocal condition estimate are rejected
    :raises SingularMatrix: when the estimate is below ``rcond_tol``
    """
    fact = LuFactorization(a)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != fact.shape[0]:
        raise ValueError("Right-hand side has {} rows, expected {}".format(b.shape[0], fact.shape[0]))
    if not np.all(np.isfinite(b)):
        raise NonFiniteError("right-hand side has non-finite entries")
    if fact.rcond < rcond_tol:
        raise SingularMatrix("Matrix is singular to working precision (rcond={:.3e})".format(fact.rcond),
                             rcond=fact.rcond)
    return fact.solve(b, trans=trans)


def rcond_estimate(a):
    """Estimate of 1 / (|a|_1 |a^-1|_1); 0 for exactly singular input."""
    return LuFactorization(a).rcond


def symmetric_eig_min(a, tol=SYMMETRY_TOL):
    a = as_matrix(a)
    _check_square(a, "eigenvalue input")
    asymmetry = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asymmetry > tol:
        raise NotSymmetric("Matrix is not symmetric (max |a - a^T| = {:.3e})".format(asymmetry))
    return float(sla.eigvalsh(0.5 * (a + a.T), check_finite=False)[0])


def _stack_differences(points):
    arrays = [np.asarray(p, dtype=float) for p in points]
    if not arrays:
        raise ValueError("affine_dimension needs at least one point")
    shape = arrays[0].shape
    for p in arrays[1:]:
        if p.shape != shape:
            raise ValueError("All points should share shape {}, got {}".format(shape, p.shape))
    origin = arrays[0].ravel()
    return np.array([p.ravel() - origin for p in arrays[1:]]).reshape(len(arrays) - 1, origin.size)


def affine_dimension(points, tol=AFFINE_TOL):
    """Dimension of the affine hull of ``points`` (matrices or vectors of a common shape)."""
    diffs = _stack_differences(points)
    if diffs.shape[0] == 0:
        return 0
    sv = sla.svdvals(diffs)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def affine_hull_distance(point, points):
    """Euclidean distance from ``point`` to the affine hull of ``points``."""
    origin = np.asarray(points[0], dtype=float).ravel()
    target = np.asarray(point, dtype=float).ravel() - origin
    diffs = _stack_differences(points)
    if diffs.shape[0] == 0:
        return float(np.linalg.norm(target))
    coef = np.linalg.lstsq(diffs.T, target, rcond=None)[0]
    return float(np.linalg.norm(diffs.T.dot(coef) - target))


def truncated_pinv_solve(a, b, rcond=RCOND_TOL, atol=0.0):
    """Applies the pseudo-inverse of ``a`` to ``b``.

    Singular values below ``max(rcond * sigma_max, atol)`` are treated as zero.
    """
    a = as_matrix(a)
    u, s, vt = sla.svd(a, full_matrices=False, check_finite=False)
    cutoff = max(rcond * (s[0] if s.size else 0.0), atol)
    keep = s > cutoff
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    b = np.asarray(b, dtype=float)
    return vt.T.dot(inv_s[:, None] * u.T.dot(b)) if b.ndim == 2 else vt.T.dot(inv_s * u.T.dot(b))


def spectral_norm(a):
    return float(np.linalg.norm(as_matrix(a), 2))
