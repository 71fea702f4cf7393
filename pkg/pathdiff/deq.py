# coding=utf-8
"""Monotone deep-equilibrium layers ``z = sigma(W z + U x + b)``."""
from __future__ import absolute_import, division, print_function

import logging

import numpy as np

from .errors import InvertibilityFailure, NotMonotone
from .implicit import FixedPointConfig, solve_fixed_point
from .linalg import RCOND_TOL, LuFactorization, as_matrix, as_vector, spectral_norm, symmetric_eig_min
from .tape import DEFAULT_POLICY, Tape

logger = logging.getLogger(__name__)


def activation_tape(name, size):
    """Componentwise activation as a tape on R^size."""
    if name not in ACTIVATIONS:
        raise ValueError("Activation not found: %s" % name)
    tape = Tape(size)
    return tape.set_output(ACTIVATIONS[name](tape, tape.input()))


ACTIVATIONS = {
    "relu": lambda tape, u: tape.relu(u),
    "tanh": lambda tape, u: tape.tanh(u),
    "identity": lambda tape, u: tape.scale(u, 1.0),
    "clamp": lambda tape, u: tape.clamp(u, -1.0, 1.0),
}


class MonotoneLayer(object):
    """Equilibrium layer with a monotone weight matrix.

    The layer checks ``W + W^T >= 2 theta I`` at construction and samples
    ``sigma`` to make sure it is 1-Lipschitz componentwise.

    :param sigma: activation tape on R^m or the name of one in ``ACTIVATIONS``
    :param U:     optional input matrix (m x d) for layers fed with samples ``x``
    :param enforce_monotone: when False a failed monotonicity check only logs a warning
    """

    def __init__(self, W, b, sigma="relu", theta=0.1, U=None, enforce_monotone=True,
                 lipschitz_samples=200, seed=0):
        self.W = as_matrix(W, "W").copy()
        self.b = as_vector(b, "b").copy()
        m = self.b.size
        if self.W.shape != (m, m):
            raise ValueError("W should be {0}x{0}, got {1}".format(m, self.W.shape))
        if theta <= 0.0:
            raise ValueError("Invalid theta: {} - should be > 0".format(theta))
        self.sigma_name = sigma if isinstance(sigma, str) else None
        self.sigma = activation_tape(sigma, m) if isinstance(sigma, str) else sigma
        if self.sigma.input_size != m or self.sigma.output_size != m:
            raise ValueError("sigma should map R^{0} to R^{0}".format(m))
        self.theta = float(theta)
        self.U = None if U is None else as_matrix(U, "U").copy()
        if self.U is not None and self.U.shape[0] != m:
            raise ValueError("U should have {} rows, got {}".format(m, self.U.shape[0]))
        self.enforce_monotone = enforce_monotone

        eig_min = symmetric_eig_min(self.W + self.W.T)
        if eig_min < 2.0 * self.theta:
            message = "W + W^T has smallest eigenvalue {:.4g} < 2 theta = {:.4g}".format(eig_min, 2.0 * self.theta)
            if enforce_monotone:
                raise NotMonotone(message)
            logger.warning("Monotonicity check disabled: %s", message)
        self._check_lipschitz(lipschitz_samples, seed)

    @property
    def size(self):
        return self.b.size

    def _check_lipschitz(self, num_samples, seed):
        rng = np.random.RandomState(seed)
        for _ in range(num_samples):
            u, v = rng.normal(scale=2.0, size=(2, self.size))
            if np.any(np.abs(self.sigma(u) - self.sigma(v)) > np.abs(u - v) + 1e-12):
                raise ValueError("sigma is not 1-Lipschitz componentwise")

    def bias(self, x=None):
        if x is None or self.U is None:
            return self.b
        return self.b + self.U.dot(as_vector(x, "x"))

    def pre_activation(self, z, x=None):
        return self.W.dot(z) + self.bias(x)

    def update_tape(self, x=None):
        """Tape of ``z -> sigma(W z + U x + b)``."""
        tape = Tape(self.size)
        u = tape.affine(tape.input(), self.W, self.bias(x))
        return tape.set_output(tape.inline(self.sigma, u))

    def with_params(self, W, b):
        return MonotoneLayer(W, b, sigma=self.sigma, theta=self.theta, U=self.U,
                             enforce_monotone=self.enforce_monotone, lipschitz_samples=0)

    def to_dict(self):
        if self.sigma_name is None:
            raise ValueError("Only layers with a named activation can be serialized")
        output = {"W": self.W.tolist(), "b": self.b.tolist(), "sigma": self.sigma_name, "theta": self.theta}
        if self.U is not None:
            output["U"] = self.U.tolist()
        return output

    @classmethod
    def from_dict(cls, json_object):
        return cls(json_object["W"], json_object["b"], sigma=json_object.get("sigma", "relu"),
                   theta=json_object.get("theta", 0.1), U=json_object.get("U"))


def random_layer(size, sigma="tanh", rng=None, theta=0.1, eig_range=(0.2, 0.6), skew_norm=0.2):
    """Monotone layer with symmetric part spectrum in ``eig_range`` and a bounded skew part."""
    rng = np.random.RandomState(0) if rng is None else rng
    q, _ = np.linalg.qr(rng.normal(size=(size, size)))
    sym = q.dot(np.diag(rng.uniform(eig_range[0], eig_range[1], size))).dot(q.T)
    r = rng.normal(size=(size, size))
    skew = 0.5 * (r - r.T)
    norm = np.linalg.norm(skew, 2)
    if norm > 0.0:
        skew *= skew_norm * rng.uniform(0.0, 1.0) / norm
    return MonotoneLayer(sym + skew, rng.normal(size=size), sigma=sigma, theta=theta)


def deq_forward(layer, cfg=None, x=None, z0=None):
    """Equilibrium ``z`` with ``|z - sigma(W z + b)|_inf <= cfg.tolerance``."""
    cfg = FixedPointConfig() if cfg is None else cfg
    if spectral_norm(layer.W) >= 1.0 and cfg.acceleration == "none":
        logger.warning("|W|_2 >= 1: plain Picard iteration may not contract, switching to Anderson")
        cfg = FixedPointConfig.from_dict(dict(cfg.to_dict(), acceleration="anderson"))
    z0 = np.zeros(layer.size) if z0 is None else z0
    return solve_fixed_point(layer.update_tape(x), None, z0, cfg)


def deq_conservative_gradient(layer, z, v, policy=None, x=None, rcond_tol=RCOND_TOL, residual_tol=1e-6):
    """Selection of the gradient of ``l(z(W, b))`` given ``v`` a selection for ``l`` at ``z``.

    Returns ``(G_W, G_b)`` with ``G_b = J^T (I - J W)^-T v`` and ``G_W = G_b z^T``,
    ``J`` the selection of ``sigma`` at ``W z + b``.
    """
    policy = DEFAULT_POLICY if policy is None else policy
    z, v = as_vector(z, "z"), as_vector(v, "v")
    u = layer.pre_activation(z, x)
    gap = float(np.max(np.abs(layer.sigma(u, policy) - z)))
    if gap > residual_tol:
        raise ValueError("z is not an equilibrium of the layer (gap {:.3e})".format(gap))
    jac = layer.sigma.jacobian_selection(u, policy).matrix
    fact = LuFactorization(np.eye(layer.size) - jac.dot(layer.W))
    if fact.rcond < rcond_tol:
        raise InvertibilityFailure("I - J W is not invertible (rcond={:.3e})".format(fact.rcond),
                                   rcond=fact.rcond, witness=np.eye(layer.size) - jac.dot(layer.W), point=z)
    g_b = jac.T.dot(fact.solve(v, trans=1))
    return np.outer(g_b, z), g_b


class DEQSquareLoss(object):
    """Training term ``1/2 |z(W, b; x) - target|^2`` over the flattened parameters ``(W, b)``."""

    def __init__(self, layer, x, target, cfg=None):
        self.layer = layer
        self.x = None if x is None else as_vector(x, "x")
        self.target = as_vector(target, "target")
        self.cfg = cfg
        self.size = layer.size * layer.size + layer.size

    def unpack(self, w):
        m = self.layer.size
        w = as_vector(w, "w")
        return w[:m * m].reshape(m, m), w[m * m:]

    def _solve(self, w):
        layer = self.layer.with_params(*self.unpack(w))
        return layer, deq_forward(layer, self.cfg, x=self.x)

    def value(self, w):
        _, z = self._solve(w)
        return 0.5 * float(np.sum((z - self.target) ** 2))

    def selection(self, w, policy=None):
        layer, z = self._solve(w)
        g_w, g_b = deq_conservative_gradient(layer, z, z - self.target, policy, x=self.x)
        return np.concatenate([g_w.ravel(), g_b])
