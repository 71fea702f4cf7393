# coding=utf-8
"""Gradient dynamics driven through implicit layers whose invertibility fails.

Every experiment reads an :class:`ExperimentConfig` and returns a
:class:`Trajectory` (or a list / dict of them, or a report dict for the
non-dynamical ones). ``EXPERIMENTS`` maps subcommand names to runners.
"""
from __future__ import absolute_import, division, print_function

import logging
import multiprocessing as mp

import numpy as np
from scipy.integrate import solve_ivp
from scipy.spatial import cKDTree
from tqdm import tqdm, trange

from .conic import Cone, ConicProblem, NonnegativeOrthant, kkt_report, phi, sol_jacobian_selection, solve_residual
from .configuration_utils import JsonConfig
from .deq import DEQSquareLoss, MonotoneLayer, deq_forward
from .errors import ConfigError
from .implicit import FixedPointConfig, ImplicitProblem, implicit_jacobian_selection, solve_fixed_point
from .lasso import LassoProblem, LassoTuningTerm, held_out_criterion
from .linalg import affine_dimension, affine_hull_distance, as_vector, lu_solve
from .sgd import SGDConfig, SumProblem, last_decile_oscillation, sgd_run, stationarity_measure
from .tape import Tape
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

BOX_UPPER = (3.0, 5.0)
LORENZ_PARAMS = (10.0, 28.0, 8.0 / 3.0)
LORENZ_INIT = (0.0, 1.0, 1.05)

# per-experiment values of the keys left to None in ExperimentConfig
EXPERIMENT_DEFAULTS = {
    "cycle": {"init": [1.0, 1.0], "step_size": 0.05, "num_iterations": 5000, "force_implicit": True},
    "cycle-perturbed": {"init": [1.0, 1.0], "step_size": 0.05, "num_iterations": 5000, "force_implicit": True},
    "billiard4d": {"init": [1.0, 1.0, 1.0, 1.0], "step_size": 0.01, "num_iterations": 5000,
                   "force_implicit": True},
    "lorenz": {"init": list(LORENZ_INIT), "step_size": 0.005, "num_iterations": 10000, "force_implicit": True},
    "counterexample": {},
    "deq-train": {"init": [0.4, 0.0], "step_size": 0.5, "num_iterations": 3000},
    "lasso-tune": {"step_size": 0.01, "num_iterations": 500},
    "conic-diff": {},
}


class ExperimentConfig(JsonConfig):
    """Configuration shared by all experiments.

    ``init``, ``step_size``, ``num_iterations`` and ``force_implicit`` default
    to the values in ``EXPERIMENT_DEFAULTS`` for the selected experiment.
    """
    defaults = {
        "experiment": "cycle",
        "init": None,
        "step_size": None,
        "num_iterations": None,
        "force_implicit": None,
        "seed": 42,
        "output": None,
        # cycle family
        "inner_step": 10.0,
        "sigma2": 0.05,
        "num_draws": 20,
        "num_workers": None,
        "eta": float(np.sqrt(2.0)),
        "burn_in": None,
        "delta": 1e-2,
        "min_step": 1e-3,
        "grid_bins": 50,
        "checkpoints": [500, 1000, 5000],
        # lorenz
        "lorenz_params": list(LORENZ_PARAMS),
        "pinv_atol": 1e-5,
        "inner_tol": 1e-4,
        "plain_max_norm": 1e6,
        "reference_time": 40.0,
        # training experiments
        "alpha0": None,
        "gamma": 0.6,
        "num_samples": 5,
        "lambda0": None,
        "data_csv": None,
        # conic-diff
        "problem": None,
        "c": [-1.0, -1.0],
    }

    def validate(self):
        if self.experiment not in EXPERIMENT_DEFAULTS:
            raise ConfigError("Experiment not found: %s" % self.experiment)
        for key, value in EXPERIMENT_DEFAULTS[self.experiment].items():
            if self.__dict__.get(key) is None:
                self.__dict__[key] = value
        if self.step_size is not None and not self.step_size > 0.0:
            raise ConfigError("Invalid step_size: {} - should be > 0".format(self.step_size))
        if self.num_iterations is not None and int(self.num_iterations) < 0:
            raise ConfigError("Invalid num_iterations: {} - should be >= 0".format(self.num_iterations))
        if self.sigma2 < 0.0:
            raise ConfigError("Invalid sigma2: {} - should be >= 0".format(self.sigma2))
        if not self.eta > 0.0:
            raise ConfigError("Invalid eta: {} - should be > 0".format(self.eta))
        if self.num_workers is not None and int(self.num_workers) < 1:
            raise ConfigError("Invalid num_workers: {} - should be >= 1".format(self.num_workers))


class CycleProblem(object):
    """Descent on ``l(x, y, s(x, y))`` where ``s`` maximizes ``(a + b)(-3x + y + 2)`` over a box.

    The inner solution is the fixed point ``s = P_box(s + tau * g(x, y) * 1)``
    with ``g(x, y) = -3x + y + 2`` and the box projection written as a
    difference of relus. ``perturbation`` holds the six offsets of the
    perturbed family; the loss is ``(1 + 4 e1)(x - s1)^2 + 4 (1 + e2)(y - s2)^2``.
    """

    def __init__(self, perturbation=None, inner_step=10.0, force_mode=True):
        eps = np.zeros(6) if perturbation is None else as_vector(perturbation, "perturbation")
        self.slope = 3.0 + eps[2]
        self.offset = 2.0 + eps[3]
        self.upper = np.array([BOX_UPPER[0] - eps[4], BOX_UPPER[1] - eps[5]])
        self.weights = np.array([1.0 + 4.0 * eps[0], 4.0 * (1.0 + eps[1])])
        if np.any(self.upper <= 0.0) or np.any(self.weights <= 0.0):
            raise ValueError("Perturbation {} leaves an empty box or a nonconvex loss".format(eps.tolist()))
        self.inner_step = float(inner_step)
        self.residual = self._residual_tape()
        self.loss = self._loss_tape()
        self.implicit = ImplicitProblem(self.residual, 2, 2, force_mode=force_mode, force_fallback="pinv")

    def _residual_tape(self):
        # input (x, y, s1, s2)
        tape = Tape(4)
        inp = tape.input()
        g = tape.affine(inp, [[-self.slope, 1.0, 0.0, 0.0]], [self.offset])
        s = inp[2:4]
        v = s + tape.scale(g, self.inner_step)
        projected = tape.relu(v) - tape.relu(v - self.upper)
        return tape.set_output(s - projected)

    def _loss_tape(self):
        tape = Tape(4)
        d = tape.affine(tape.input(), [[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]])
        return tape.set_output(tape.sum(tape.const(self.weights) * (d * d)))

    def switch(self, xy):
        return -self.slope * xy[0] + xy[1] + self.offset

    def inner_solution(self, xy, s0):
        """Fixed point of ``s -> P_box(s + tau g 1)``.

        It is the upper corner when ``g > 0`` and the origin when ``g < 0``. On
        the switching line every point of the box is fixed and ``s0``, clipped
        to the box, is kept.
        """
        g = self.switch(as_vector(xy, "xy"))
        if g > 0.0:
            return self.upper.copy()
        if g < 0.0:
            return np.zeros(2)
        return np.clip(as_vector(s0, "s0"), 0.0, self.upper)

    def gradient(self, xy, s0, policy=None):
        """Returns ``(selection, s, loss, rcond)`` at ``xy``."""
        xy = as_vector(xy, "xy")
        s = self.inner_solution(xy, s0)
        jac = implicit_jacobian_selection(self.implicit, xy, s, policy)
        point = np.concatenate([xy, s])
        g_loss = self.loss.jacobian_selection(point, policy).matrix[0]
        selection = g_loss[:2] + jac.matrix.T.dot(g_loss[2:])
        return selection, s, float(self.loss(point)[0]), jac.rcond

    def singular_witness(self, xy):
        """Evaluates the gated selection on the switching line with ``s`` inside the box."""
        point = np.array(xy, dtype=float)
        gated = ImplicitProblem(self.residual, 2, 2)
        return implicit_jacobian_selection(gated, point, 0.5 * self.upper)

    def line_crossing(self, xy_old, xy_new):
        g_old, g_new = self.switch(xy_old), self.switch(xy_new)
        if g_old == 0.0:
            return xy_old
        if g_old * g_new > 0.0:
            return None
        t = g_old / (g_old - g_new)
        crossing = xy_old + t * (xy_new - xy_old)
        # land exactly on the line
        crossing[1] = self.slope * crossing[0] - self.offset
        return crossing


class CycleTerm(object):
    """The cycle loss as a training term, for stationarity checks."""
    size = 2

    def __init__(self, problem):
        self.problem = problem

    def value(self, w):
        s = self.problem.inner_solution(as_vector(w), np.zeros(2))
        return float(self.problem.loss(np.concatenate([w, s]))[0])

    def selection(self, w, policy=None):
        return self.problem.gradient(w, np.zeros(2), policy)[0]


def _descend(problems, weights, init, step_size, num_iterations, gated, columns, experiment, progress=True):
    """Joint descent on a block-separable sum of cycle losses, one 2-D block per problem."""
    w = as_vector(init, "init").copy()
    inner = [np.zeros(2) for _ in problems]
    trajectory = Trajectory(columns, experiment=experiment)
    for k in trange(int(num_iterations) + 1, desc=experiment, disable=not progress):
        step, values, loss, rcond = np.zeros_like(w), {}, 0.0, np.inf
        for i, (problem, weight) in enumerate(zip(problems, weights)):
            block = w[2 * i:2 * i + 2]
            if gated and problem.switch(block) == 0.0:
                problem.singular_witness(block)
            selection, inner[i], block_loss, block_rcond = problem.gradient(block, inner[i])
            step[2 * i:2 * i + 2] = weight * selection
            loss += weight * block_loss
            rcond = min(rcond, block_rcond)
            values["s1" if i == 0 else "t1"], values["s2" if i == 0 else "t2"] = inner[i]
        for name, value in zip(columns, w):
            values[name] = value
        values.update(loss=loss, rcond=rcond)
        trajectory.append(k, **dict((c, values[c]) for c in columns if c in values))
        if k == int(num_iterations):
            break
        new_w = w - step_size * step
        if gated:
            for i, problem in enumerate(problems):
                crossing = problem.line_crossing(w[2 * i:2 * i + 2], new_w[2 * i:2 * i + 2])
                if crossing is not None:
                    problem.singular_witness(crossing)
        w = new_w
    return trajectory


def run_cycle(cfg, perturbation=None, init=None, progress=True):
    """Descent on the cycle problem; columns ``x, y, s1, s2, loss, rcond``.

    With ``force_implicit`` off, crossing the switching line raises
    :class:`InvertibilityFailure` with the singular selection as witness.
    """
    problem = CycleProblem(perturbation, cfg.inner_step, force_mode=cfg.force_implicit)
    init = cfg.init if init is None else init
    return _descend([problem], [1.0], init, cfg.step_size, cfg.num_iterations, not cfg.force_implicit,
                    ["x", "y", "s1", "s2", "loss", "rcond"], "cycle", progress)


def draw_perturbation(rng, sigma):
    """Six Gaussian offsets; draws leaving an empty box or a nonconvex loss are redrawn."""
    while True:
        eps = sigma * rng.normal(size=6)
        if 1.0 + 4.0 * eps[0] > 0.0 and 1.0 + eps[1] > 0.0 and eps[4] < BOX_UPPER[0] and eps[5] < BOX_UPPER[1]:
            return eps


def _perturbed_draw(job):
    values, draw, eps, init = job
    cfg = ExperimentConfig.from_dict(values)
    trajectory = run_cycle(cfg, perturbation=eps, init=init, progress=False)
    trajectory.experiment = "cycle-perturbed"
    trajectory.meta.update(draw=draw, perturbation=eps.tolist())
    trajectory.meta["recurrence"] = recurrence_statistic(
        trajectory.points(["x", "y"]), cfg.delta, cfg.min_step, cfg.burn_in)
    return trajectory


def run_cycle_perturbed(cfg):
    """``num_draws`` runs on independently perturbed problems with jittered initializations.

    Draws are sampled up front from ``seed`` and run in a pool of
    ``num_workers`` processes (all cores by default).
    """
    rng = np.random.RandomState(cfg.seed)
    sigma = float(np.sqrt(cfg.sigma2))
    jobs = []
    for draw in range(int(cfg.num_draws)):
        eps = draw_perturbation(rng, sigma)
        init = np.asarray(cfg.init, dtype=float) + sigma * rng.normal(size=2)
        jobs.append((cfg.to_dict(), draw, eps, init))
    workers = min(len(jobs), int(cfg.num_workers or mp.cpu_count()))
    if workers > 1:
        logger.info("Running %d perturbed draws on %d workers", len(jobs), workers)
        with mp.Pool(workers) as pool:
            trajectories = list(tqdm(pool.imap(_perturbed_draw, jobs), total=len(jobs), desc="cycle-perturbed"))
    else:
        trajectories = [_perturbed_draw(job) for job in tqdm(jobs, desc="cycle-perturbed")]
    persistent = sum(t.meta["recurrence"].recurrent for t in trajectories)
    logger.info("Recurrence persists in %d of %d perturbed draws", persistent, len(trajectories))
    return trajectories


def run_billiard4d(cfg):
    """Descent on ``f(x, y) + eta f(z, w)``; the (y, z) projection fills the plane over time."""
    problem = CycleProblem(None, cfg.inner_step, force_mode=cfg.force_implicit)
    twin = CycleProblem(None, cfg.inner_step, force_mode=cfg.force_implicit)
    init = list(cfg.init) * 2 if len(cfg.init) == 2 else cfg.init
    trajectory = _descend([problem, twin], [1.0, cfg.eta], init, cfg.step_size, cfg.num_iterations,
                          not cfg.force_implicit, ["x", "y", "z", "w", "loss", "rcond"], "billiard4d")
    points = trajectory.points(["y", "z"])
    bounds = (points.min(axis=0), points.max(axis=0))
    trajectory.meta["coverage"] = dict(
        (int(c), covered_cells(points[:int(c) + 1], bounds, cfg.grid_bins)) for c in cfg.checkpoints)
    logger.info("Covered cells of the (y, z) projection: %s", trajectory.meta["coverage"])
    return trajectory


class LorenzProblem(object):
    """``max_u u^T s`` with ``s`` minimizing ``|s - F(u)|^4``, ``F`` the Lorenz vector field.

    Stationarity of the inner problem, ``4 |s - F(u)|^2 (s - F(u)) = 0``, is
    degenerate at its solution. Differentiating it in force mode with an
    absolute pseudo-inverse cutoff discards the tiny variable block entirely.

    ``pinv_atol`` goes beyond the relative cutoff ``rcond_tol * s_max`` of the
    pseudo-inverse fallback. At the inexact inner solution ``B`` is of order
    ``|s - F(u)|^2`` and survives the relative cutoff alone, so with
    ``pinv_atol = 0`` the selection is ``-B^+ A = DF(u)`` and the ascent
    becomes plain gradient ascent on ``u^T F(u)``.
    The absolute cutoff zeroes ``B^+``, ``J`` vanishes and the ascent direction
    is ``F(u)`` itself.
    """

    def __init__(self, sigma=10.0, rho=28.0, beta=8.0 / 3.0, pinv_atol=1e-5, inner_tol=1e-4):
        self.sigma, self.rho, self.beta = float(sigma), float(rho), float(beta)
        self.residual = self._residual_tape()
        self.implicit = ImplicitProblem(self.residual, 3, 3, force_mode=True, force_fallback="pinv",
                                        pinv_atol=pinv_atol)
        self.inner_cfg = FixedPointConfig(tolerance=inner_tol, max_iterations=100000)

    def vector_field(self, u):
        x, y, z = u
        return np.array([self.sigma * (y - x), x * (self.rho - z) - y, x * y - self.beta * z])

    def quadratic_form(self):
        """``H`` with ``u^T F(u) = 1/2 u^T H u``."""
        return np.array([[-2.0 * self.sigma, self.sigma + self.rho, 0.0],
                         [self.sigma + self.rho, -2.0, 0.0],
                         [0.0, 0.0, -2.0 * self.beta]])

    def _residual_tape(self):
        # input (u, s)
        tape = Tape(6)
        inp = tape.input()
        x, y, z, s = inp[0], inp[1], inp[2], inp[3:6]
        field = tape.concat(self.sigma * (y - x), x * (self.rho - z) - y, x * y - self.beta * z)
        r = s - field
        return tape.set_output(4.0 * tape.mul(tape.squared_norm(r), r))

    def inner_solution(self, u, s0):
        # Newton's map for the quartic
        update = lambda s, v: (2.0 * s + self.vector_field(v)) / 3.0
        return solve_fixed_point(update, u, s0, self.inner_cfg)

    def ascent_direction(self, u, s0):
        s = self.inner_solution(u, s0)
        jac = implicit_jacobian_selection(self.implicit, u, s)
        return s + jac.matrix.T.dot(u), s, jac


def run_lorenz(cfg):
    """Returns trajectories ``implicit``, ``plain`` and ``reference`` (columns ``x, y, z, objective``)."""
    problem = LorenzProblem(*cfg.lorenz_params, pinv_atol=cfg.pinv_atol, inner_tol=cfg.inner_tol)
    if not cfg.force_implicit:
        problem.implicit = ImplicitProblem(problem.residual, 3, 3)
    if len(cfg.init) != 3:
        raise ConfigError("Invalid init: {} - should have 3 entries".format(cfg.init))
    columns = ["x", "y", "z", "objective", "jacobian_norm"]

    implicit = Trajectory(columns, experiment="lorenz-implicit")
    u = as_vector(cfg.init, "init").copy()
    s = problem.vector_field(u)
    for k in trange(int(cfg.num_iterations) + 1, desc="lorenz"):
        direction, s, jac = problem.ascent_direction(u, s)
        implicit.append(k, x=u[0], y=u[1], z=u[2], objective=u.dot(problem.vector_field(u)),
                        jacobian_norm=np.linalg.norm(jac.matrix))
        if not np.linalg.norm(u) <= cfg.plain_max_norm:
            logger.warning("Implicit ascent left the ball of radius %g at step %d", cfg.plain_max_norm, k)
            break
        u = u + cfg.step_size * direction

    plain = Trajectory(columns, experiment="lorenz-plain")
    hessian = problem.quadratic_form()
    u = as_vector(cfg.init, "init").copy()
    for k in range(int(cfg.num_iterations) + 1):
        plain.append(k, x=u[0], y=u[1], z=u[2], objective=0.5 * u.dot(hessian).dot(u),
                     jacobian_norm=np.linalg.norm(hessian))
        if not np.linalg.norm(u) <= cfg.plain_max_norm:
            logger.info("Plain ascent escaped the saddle: |u| > %g after %d steps", cfg.plain_max_norm, k)
            break
        u = u + cfg.step_size * hessian.dot(u)

    reference = Trajectory(columns, experiment="lorenz-reference")
    times = np.linspace(0.0, cfg.reference_time, int(cfg.num_iterations) + 1)
    ode = solve_ivp(lambda t, v: problem.vector_field(v), (0.0, cfg.reference_time), list(LORENZ_INIT),
                    t_eval=times, rtol=1e-9, atol=1e-9)
    for k, v in enumerate(ode.y.T):
        reference.append(k, x=v[0], y=v[1], z=v[2], objective=v.dot(problem.vector_field(v)))
    return {"implicit": implicit, "plain": plain, "reference": reference}


# selections of (x, y) -> (|x| + y, 2x + |y|) at the origin, and the listed inverses
PHI_GENERATORS = [
    np.array([[1.0, 1.0], [2.0, 1.0]]),
    np.array([[1.0, 1.0], [2.0, -1.0]]),
    np.array([[-1.0, 1.0], [2.0, -1.0]]),
    np.array([[-1.0, 1.0], [2.0, 1.0]]),
]
PSI_GENERATORS = [
    np.array([[-1.0, 1.0], [2.0, -1.0]]),
    np.array([[1.0, 1.0], [2.0, -1.0]]) / 3.0,
    np.array([[1.0, 1.0], [2.0, 1.0]]),
    np.array([[-1.0, 1.0], [2.0, 1.0]]) / 3.0,
]


def counterexample_tape():
    tape = Tape(2)
    inp = tape.input()
    x, y = inp[0], inp[1]
    return tape.set_output(tape.concat(tape.abs(x) + y, 2.0 * x + tape.abs(y)))


def run_counterexample(cfg=None):
    """Inverting Clarke generators of a piecewise-linear homeomorphism does not give a Clarke set.

    Returns a report with the affine dimensions (2 and 3), the inversion
    error against the listed inverses and the distances of the inverted
    generators to the affine hull of the original ones.
    """
    tape = counterexample_tape()
    origin = np.zeros(2)
    branches = [tape.jacobian_selection(origin, policy).matrix for policy in tape.branch_policies(origin)]
    branches_match = all(any(np.array_equal(b, g) for b in branches) for g in PHI_GENERATORS)
    inverses = [lu_solve(g, np.eye(2)) for g in PHI_GENERATORS]
    inversion_error = max(float(np.max(np.abs(a - b))) for a, b in zip(inverses, PSI_GENERATORS))
    distances = [affine_hull_distance(inv, PHI_GENERATORS) for inv in inverses]
    report = {
        "phi_affine_dimension": affine_dimension(PHI_GENERATORS),
        "psi_affine_dimension": affine_dimension(PSI_GENERATORS),
        "inverted_affine_dimension": affine_dimension(inverses),
        "inversion_error": inversion_error,
        "branches_match_generators": bool(branches_match),
        "hull_distances": distances,
        "not_contained": bool(max(distances) > 1e-8),
    }
    logger.info("Counterexample report: %s", report)
    return report


def run_deq_train(cfg):
    """Fits a scalar tanh equilibrium layer to targets produced by ``(W, b) = (0.5, 0.3)``."""
    xs = np.linspace(-1.0, 1.0, int(cfg.num_samples))
    truth = MonotoneLayer([[0.5]], [0.3], sigma="tanh", theta=0.05, U=[[1.0]])
    base = MonotoneLayer([[cfg.init[0]]], [cfg.init[1]], sigma="tanh", theta=0.05, U=[[1.0]])
    problem = SumProblem([DEQSquareLoss(base, [x], deq_forward(truth, x=[x])) for x in xs])
    sgd_cfg = SGDConfig(alpha0=cfg.alpha0 or cfg.step_size, gamma=cfg.gamma, seed=cfg.seed,
                        max_steps=int(cfg.num_iterations), record_weights=True,
                        record_stride=max(1, int(cfg.num_iterations) // 1000))
    trajectory = sgd_run(problem, cfg.init, sgd_cfg, experiment="deq-train")
    trajectory.meta["stationarity"] = stationarity_measure(problem, trajectory.meta["final_w"])
    trajectory.meta["oscillation"] = last_decile_oscillation(trajectory)
    logger.info("DEQ training: final w=%s, stationarity=%.3e", trajectory.meta["final_w"],
                trajectory.meta["stationarity"])
    return trajectory


def synthetic_lasso_split(rng, n_train=50, n_test=50, p=10, sparsity=3, noise=0.5):
    beta = np.zeros(p)
    beta[:sparsity] = rng.uniform(1.0, 2.0, sparsity) * rng.choice([-1.0, 1.0], sparsity)
    X = rng.normal(size=(n_train + n_test, p))
    y = X.dot(beta) + noise * rng.normal(size=n_train + n_test)
    return LassoProblem(X[:n_train], y[:n_train]), X[n_train:], y[n_train:]


def run_lasso_tune(cfg, problem=None, criterion=None):
    """Tunes ``lam`` by stochastic descent with steps ``s * alpha0 / (1 + k)^gamma``.

    Without ``problem`` the data is split in halves (``data_csv`` or a
    synthetic sparse regression) and the criterion is the held-out squared
    error. Column ``w0`` holds ``lam`` and ``loss`` the criterion.
    """
    if problem is None:
        rng = np.random.RandomState(cfg.seed)
        if cfg.data_csv is not None:
            data = LassoProblem.from_csv(cfg.data_csv)
            order = rng.permutation(data.X.shape[0])
            half = order.size // 2
            problem = LassoProblem(data.X[order[:half]], data.y[order[:half]])
            X_test, y_test = data.X[order[half:]], data.y[order[half:]]
        else:
            problem, X_test, y_test = synthetic_lasso_split(rng)
        criterion = held_out_criterion(X_test, y_test)
    elif criterion is None:
        raise ValueError("A criterion tape is needed along with a custom problem")
    lambda0 = problem.lambda_max() - 1.0 if cfg.lambda0 is None else cfg.lambda0
    tuning = SumProblem([LassoTuningTerm(problem, criterion)])
    sgd_cfg = SGDConfig(alpha0=cfg.alpha0 or cfg.step_size, gamma=cfg.gamma, seed=cfg.seed,
                        max_steps=int(cfg.num_iterations), record_weights=True)
    trajectory = sgd_run(tuning, [lambda0], sgd_cfg, experiment="lasso-tune")
    trajectory.meta["stationarity"] = stationarity_measure(tuning, trajectory.meta["final_w"])
    trajectory.meta["oscillation"] = last_decile_oscillation(trajectory)
    logger.info("Lasso tuning: lam=%.6g, criterion=%.6g, stationarity=%.3e", trajectory.meta["final_w"][0],
                trajectory.last("loss"), trajectory.meta["stationarity"])
    return trajectory


def box_problem(c):
    """Minimizes ``c^T x`` over the box [0, 3] x [0, 5], written as a cone program."""
    A = np.vstack([np.eye(2), -np.eye(2)])
    b = np.array([BOX_UPPER[0], BOX_UPPER[1], 0.0, 0.0])
    return ConicProblem(A, b, c, Cone([NonnegativeOrthant(4)]))


def run_conic_diff(cfg):
    """Solves a cone program and differentiates its solution map."""
    if cfg.problem is None:
        problem = box_problem(cfg.c)
    elif isinstance(cfg.problem, dict):
        problem = ConicProblem.from_dict(cfg.problem)
    else:
        problem = ConicProblem.from_json_file(cfg.problem)
    z = solve_residual(problem)
    x, y, s = phi(z, problem.cone, problem.n)
    report = {"x": x.tolist(), "y": y.tolist(), "s": s.tolist(), "kkt": kkt_report(problem, x, y, s)}
    selection = sol_jacobian_selection(problem, z)
    report["jacobian"] = selection.matrix.tolist()
    report["rcond"] = selection.rcond
    return report


def recurrence_statistic(points, delta=1e-2, min_step=1e-3, burn_in=None):
    """Looks for a return of the path near an earlier point after burn-in.

    A return is a pair ``i < j`` with ``|p_j - p_i| <= delta`` such that the
    path went farther than ``10 * delta`` from ``p_i`` in between.
    """
    points = np.asarray(points, dtype=float)
    burn_in = len(points) // 2 if burn_in is None else int(burn_in)
    tail = points[burn_in:]
    report = RecurrenceReport()
    if len(tail) < 3:
        return report
    report.min_step = float(np.min(np.linalg.norm(np.diff(tail, axis=0), axis=1)))
    for i, j in sorted(cKDTree(tail).query_pairs(delta)):
        if j - i < 2:
            continue
        if np.max(np.linalg.norm(tail[i + 1:j] - tail[i], axis=1)) > 10.0 * delta:
            report.return_pair = (burn_in + i, burn_in + j)
            break
    report.recurrent = report.return_pair is not None and report.min_step >= min_step
    return report


class RecurrenceReport(object):
    def __init__(self):
        self.recurrent = False
        self.min_step = 0.0
        self.return_pair = None

    def __repr__(self):
        return "RecurrenceReport(recurrent={}, min_step={:.3e}, return_pair={})".format(
            self.recurrent, self.min_step, self.return_pair)


def covered_cells(points, bounds, bins=50):
    """Number of cells of a ``bins x bins`` grid over ``bounds`` visited by ``points``."""
    points = np.asarray(points, dtype=float)
    low, high = (np.asarray(b, dtype=float) for b in bounds)
    width = np.where(high > low, high - low, 1.0)
    cells = np.clip(np.floor((points - low) / width * bins), 0, bins - 1).astype(int)
    return int(len(set(map(tuple, cells))))


EXPERIMENTS = {
    "cycle": run_cycle,
    "cycle-perturbed": run_cycle_perturbed,
    "billiard4d": run_billiard4d,
    "lorenz": run_lorenz,
    "counterexample": run_counterexample,
    "deq-train": run_deq_train,
    "lasso-tune": run_lasso_tune,
    "conic-diff": run_conic_diff,
}


def run_experiment(cfg):
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError("Experiment not found: %s" % cfg.experiment)
    return EXPERIMENTS[cfg.experiment](cfg)
