# coding=utf-8
"""Stochastic descent with conservative-Jacobian selections.

Training runs ``w_{k+1} = w_k - s * alpha_k * v_k`` where ``v_k`` is the
selection returned by backpropagation (or implicit differentiation) on a
sampled mini-batch of terms, ``alpha_k`` a vanishing step size and ``s`` a
random scale drawn once per run.
"""
from __future__ import absolute_import, division, print_function

import abc
import logging
import sys

import numpy as np
from scipy.optimize import nnls
from tqdm import trange

from .configuration_utils import JsonConfig
from .errors import ConfigError, DivergenceDetected
from .linalg import as_vector
from .tape import SelectionPolicy
from .trajectory import Trajectory

logger = logging.getLogger(__name__)


if sys.version_info >= (3, 4):
    ABC = abc.ABC
else:
    ABC = abc.ABCMeta('ABC', (), {})


class _StepSchedule(ABC):
    """ Parent of all step-size schedules here. """
    def __init__(self, alpha0=0.1, **kw):
        """
        :param alpha0:  step size at k = 0
        """
        super(_StepSchedule, self).__init__()
        if not alpha0 > 0.0:
            raise ValueError("Invalid alpha0: {} - should be > 0.0".format(alpha0))
        self.alpha0 = float(alpha0)

    def get_step(self, k):
        """
        :param k:   iteration counter, starting at 0
        :return:    step size alpha_k
        """
        return self.alpha0 * self.get_step_(k)

    @abc.abstractmethod
    def get_step_(self, k):
        """
        :param k:   iteration counter
        :return:    multiplier of alpha0
        """
        return 1.


class ConstantStep(_StepSchedule):
    """
    Constant step size. Does not satisfy the vanishing step requirement of the convergence theory.
    """
    def __init__(self, alpha0=0.1, gamma=None, **kw):
        super(ConstantStep, self).__init__(alpha0=alpha0, **kw)

    def get_step_(self, k):
        return 1.


class PolynomialDecay(_StepSchedule):
    """
    ``alpha0 / (1 + k) ** gamma``. For gamma in ]0, 1] the steps sum to infinity and are o(1 / log k).
    """
    def __init__(self, alpha0=0.1, gamma=0.6, **kw):
        super(PolynomialDecay, self).__init__(alpha0=alpha0, **kw)
        if not 0.0 < gamma <= 1.0:
            raise ValueError("Invalid gamma: {} - should be in ]0.0, 1.0]".format(gamma))
        self.gamma = float(gamma)

    def get_step_(self, k):
        return 1. / (1. + k) ** self.gamma


SCHEDULES = {
    None:       ConstantStep,
    "none":     ConstantStep,
    "constant": ConstantStep,
    "polynomial": PolynomialDecay,
}


def get_schedule(name, alpha0, gamma=None):
    if name not in SCHEDULES:
        raise ValueError("Schedule not found: %s" % name)
    return SCHEDULES[name](alpha0=alpha0, gamma=gamma)


class TapeTerm(object):
    """Loss term given by a tape from R^p to R."""

    def __init__(self, tape):
        if tape.output_size != 1:
            raise ValueError("Loss tapes should have a scalar output, got size {}".format(tape.output_size))
        self.tape = tape
        self.size = tape.input_size

    def value(self, w):
        return float(self.tape(w)[0])

    def selection(self, w, policy=None):
        return self.tape.jacobian_selection(w, policy).matrix[0]


class SumProblem(object):
    """``l(w) = 1/N sum_i l_i(w)``; terms expose ``value(w)`` and ``selection(w, policy)``."""

    def __init__(self, terms, size=None):
        self.terms = [TapeTerm(t) if hasattr(t, "jacobian_selection") else t for t in terms]
        if not self.terms:
            raise ValueError("A sum problem needs at least one term")
        self.size = self.terms[0].size if size is None else int(size)
        for term in self.terms:
            if term.size != self.size:
                raise ValueError("All terms should take parameters of size {}, got {}".format(self.size, term.size))

    def __len__(self):
        return len(self.terms)

    def value(self, w):
        return float(np.mean([term.value(w) for term in self.terms]))

    def selection(self, w, policy=None, batch=None):
        indices = range(len(self.terms)) if batch is None else batch
        return np.mean([self.terms[i].selection(w, policy) for i in indices], axis=0)


class SGDConfig(JsonConfig):
    """Configuration of :func:`sgd_run`.

    ``scale`` fixes the step scale ``s`` instead of drawing it in ``(s_min, s_max)``.
    """
    defaults = {
        "alpha0": 0.1,
        "gamma": 0.6,
        "schedule": "polynomial",
        "s_min": 0.5,
        "s_max": 1.5,
        "scale": None,
        "seed": 42,
        "max_steps": 10000,
        "record_stride": 1,
        "batch_size": 1,
        "init_jitter": 0.0,
        "max_norm": 1e6,
        "record_weights": False,
    }

    def validate(self):
        try:
            get_schedule(self.schedule, self.alpha0, self.gamma)
        except ValueError as e:
            raise ConfigError(str(e))
        if not 0.0 < self.s_min < self.s_max:
            raise ConfigError("Invalid scale range: ({}, {})".format(self.s_min, self.s_max))
        if self.scale is not None and not self.scale > 0.0:
            raise ConfigError("Invalid scale: {} - should be > 0".format(self.scale))
        if int(self.batch_size) < 1 or int(self.record_stride) < 1 or int(self.max_steps) < 0:
            raise ConfigError("batch_size and record_stride should be >= 1, max_steps >= 0")


def sgd_run(problem, w0, cfg=None, policy=None, experiment=None, progress=False):
    """Runs stochastic descent and returns the recorded :class:`Trajectory`.

    Columns are ``loss`` (full objective), ``grad_norm`` (norm of the step
    selection), ``batch`` (first sampled term) and ``w_norm``; with
    ``record_weights`` also ``w0 ... w{p-1}``.
    """
    cfg = SGDConfig() if cfg is None else cfg
    rng = np.random.RandomState(cfg.seed)
    if cfg.scale is None:
        scale = rng.uniform(cfg.s_min, cfg.s_max)
    else:
        scale = float(cfg.scale)
        logger.warning("Fixed step scale s=%s: the run is deterministic in s", scale)
    schedule = get_schedule(cfg.schedule, cfg.alpha0, cfg.gamma)
    w = as_vector(w0, "w0").copy()
    if w.size != problem.size:
        raise ValueError("w0 should have size {}, got {}".format(problem.size, w.size))
    if cfg.init_jitter > 0.0:
        w = w + cfg.init_jitter * rng.normal(size=w.size)
    batch_size = min(int(cfg.batch_size), len(problem))

    columns = ["loss", "grad_norm", "batch", "w_norm"]
    if cfg.record_weights:
        columns += ["w{}".format(i) for i in range(w.size)]
    trajectory = Trajectory(columns, experiment=experiment)
    trajectory.meta.update(scale=scale, seed=cfg.seed)

    def record(k, v, batch):
        values = {"loss": problem.value(w), "grad_norm": float(np.linalg.norm(v)),
                  "batch": batch, "w_norm": float(np.linalg.norm(w))}
        if cfg.record_weights:
            values.update(("w{}".format(i), wi) for i, wi in enumerate(w))
        trajectory.append(k, **values)

    max_steps = int(cfg.max_steps)
    for k in trange(max_steps, desc="SGD", disable=not progress):
        batch = rng.choice(len(problem), batch_size, replace=False)
        v = problem.selection(w, policy, batch)
        if k % int(cfg.record_stride) == 0:
            record(k, v, batch[0])
        w = w - scale * schedule.get_step(k) * v
        norm = float(np.linalg.norm(w))
        if not norm <= cfg.max_norm:
            raise DivergenceDetected("|w_k| = {:.3e} exceeds {:.3e} at step {}".format(norm, cfg.max_norm, k + 1),
                                     step=k + 1, norm=norm)
    record(max_steps, problem.selection(w, policy), -1)
    trajectory.meta["final_w"] = w
    return trajectory


def min_norm_hull_point(vectors, weight=1e6):
    """Minimum-norm point of the convex hull of the rows of ``vectors``.

    The simplex constraint is enforced through a heavily weighted extra row of
    a nonnegative least-squares problem.
    """
    g = np.atleast_2d(np.asarray(vectors, dtype=float))
    big = weight * max(1.0, float(np.max(np.abs(g))))
    system = np.vstack([g.T, big * np.ones((1, g.shape[0]))])
    rhs = np.concatenate([np.zeros(g.shape[1]), [big]])
    coef, _ = nnls(system, rhs)
    coef = coef / np.sum(coef)
    return g.T.dot(coef)


def stationarity_measure(problem, w, num_policies=2, seed=0):
    """Distance from 0 to the hull of selections from ``num_policies`` policy variants.

    Only finitely many selections are gathered, so this is an inner
    approximation of the distance to the Clarke subdifferential.
    """
    if isinstance(problem, (list, tuple)):
        problem = SumProblem(problem)
    elif not isinstance(problem, SumProblem):
        problem = SumProblem([problem])
    w = as_vector(w, "w")
    selections = [problem.selection(w, policy) for policy in SelectionPolicy.variants(num_policies, seed)]
    return float(np.linalg.norm(min_norm_hull_point(selections)))


def last_decile_oscillation(trajectory, column="loss"):
    """``max - min`` of ``column`` over the last tenth of the records."""
    values = trajectory.column(column)
    tail = values[-max(1, len(values) // 10):]
    return float(np.max(tail) - np.min(tail))
