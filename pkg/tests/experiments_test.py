# coding=utf-8
from __future__ import absolute_import
from __future__ import division
from __future__ import print_function

import json
import os
import shutil
import tempfile
import unittest

import numpy as np
import pytest

from pathdiff.__main__ import main
from pathdiff.errors import ConfigError, InvertibilityFailure
from pathdiff.experiments import (CycleProblem, CycleTerm, ExperimentConfig, LorenzProblem, covered_cells,
                                  recurrence_statistic, run_billiard4d, run_conic_diff, run_counterexample, run_cycle,
                                  run_cycle_perturbed, run_deq_train, run_lasso_tune, run_lorenz)
from pathdiff.file_utils import read_json, read_trajectory_csv
from pathdiff.lasso import LassoProblem, distance_criterion
from pathdiff.sgd import stationarity_measure


def closed_form_cycle(init, step_size, num_records):
    """The cycle descent with the inner maximizer written out by hand."""
    w = np.array(init, dtype=float)
    s = np.zeros(2)
    rows = []
    for _ in range(num_records):
        g = -3.0 * w[0] + w[1] + 2.0
        if g > 0.0:
            s = np.array([3.0, 5.0])
        elif g < 0.0:
            s = np.zeros(2)
        rows.append([w[0], w[1], s[0], s[1]])
        w = w - step_size * np.array([2.0 * (w[0] - s[0]), 8.0 * (w[1] - s[1])])
    return np.array(rows)


class ExperimentConfigTest(unittest.TestCase):
    def test_per_experiment_defaults(self):
        cfg = ExperimentConfig(experiment="lorenz")
        self.assertEqual(cfg.step_size, 0.005)
        self.assertEqual(cfg.num_iterations, 10000)
        self.assertEqual(cfg.init, [0.0, 1.0, 1.05])
        self.assertTrue(cfg.force_implicit)
        cfg = ExperimentConfig(experiment="cycle", init=[0.2, 1.0], force_implicit=False)
        self.assertEqual(cfg.init, [0.2, 1.0])
        self.assertFalse(cfg.force_implicit)
        self.assertEqual(cfg.step_size, 0.05)

    def test_invalid_values(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig(experiment="mnist")
        with self.assertRaises(ConfigError):
            ExperimentConfig(step_size=-1.0)
        with self.assertRaises(ConfigError):
            ExperimentConfig(sigma2=-0.1)
        with self.assertRaises(ConfigError):
            ExperimentConfig(learning_rate=0.1)


class CycleTest(unittest.TestCase):
    def test_gradient_on_each_side_of_the_line(self):
        problem = CycleProblem()
        selection, s, loss, rcond = problem.gradient([0.2, 1.0], np.zeros(2))
        self.assertTrue(np.allclose(s, [3.0, 5.0]))
        self.assertTrue(np.allclose(selection, [-5.6, -32.0]))
        self.assertAlmostEqual(loss, 71.84)
        self.assertAlmostEqual(rcond, 1.0)
        selection, s, _, _ = problem.gradient([2.0, 1.0], np.zeros(2))
        self.assertTrue(np.allclose(s, 0.0))
        self.assertTrue(np.allclose(selection, [4.0, 8.0]))

    def test_gate_fails_on_the_switching_line(self):
        cfg = ExperimentConfig(experiment="cycle", force_implicit=False, num_iterations=100)
        with self.assertRaises(InvertibilityFailure) as ctx:
            run_cycle(cfg, progress=False)
        self.assertEqual(ctx.exception.rcond, 0.0)
        self.assertTrue(np.allclose(ctx.exception.witness, 0.0))

    def test_gate_fails_when_the_path_crosses_the_line(self):
        cfg = ExperimentConfig(experiment="cycle", init=[0.2, 1.0], force_implicit=False, num_iterations=1000)
        with self.assertRaises(InvertibilityFailure):
            run_cycle(cfg, progress=False)

    def test_matches_closed_form(self):
        cfg = ExperimentConfig(experiment="cycle", num_iterations=299)
        trajectory = run_cycle(cfg, progress=False)
        self.assertEqual(len(trajectory), 300)
        expected = closed_form_cycle(cfg.init, cfg.step_size, 300)
        self.assertTrue(np.allclose(trajectory.points(["x", "y", "s1", "s2"]), expected, atol=1e-8))
        self.assertTrue(np.all(np.isfinite(trajectory.column("loss"))))

    def test_unperturbed_draws_repeat_the_cycle(self):
        cfg = ExperimentConfig(experiment="cycle-perturbed", sigma2=0.0, num_draws=2, num_iterations=50)
        draws = run_cycle_perturbed(cfg)
        reference = run_cycle(ExperimentConfig(experiment="cycle", num_iterations=50), progress=False)
        self.assertEqual(len(draws), 2)
        for i, trajectory in enumerate(draws):
            self.assertEqual(trajectory.meta["draw"], i)
            self.assertEqual(trajectory.meta["perturbation"], [0.0] * 6)
            self.assertTrue(np.array_equal(trajectory.points(["x", "y"]), reference.points(["x", "y"])))

    def test_inner_solution_is_a_fixed_point(self):
        problem = CycleProblem()
        cases = [([0.2, 1.0], [0.0, 0.0], [3.0, 5.0]), ([2.0, 1.0], [1.0, 1.0], [0.0, 0.0]),
                 ([1.0, 1.0], [4.0, -1.0], [3.0, 0.0]), ([1.0, 1.0], [1.0, 2.0], [1.0, 2.0])]
        for xy, s0, expected in cases:
            s = problem.inner_solution(xy, s0)
            self.assertTrue(np.array_equal(s, expected))
            residual = problem.residual(np.concatenate([xy, s]))
            self.assertTrue(np.allclose(residual, 0.0, atol=1e-12))

    def test_parallel_draws_match_serial_draws(self):
        serial = run_cycle_perturbed(ExperimentConfig(experiment="cycle-perturbed", num_draws=3, num_iterations=50,
                                                      num_workers=1))
        parallel = run_cycle_perturbed(ExperimentConfig(experiment="cycle-perturbed", num_draws=3,
                                                        num_iterations=50, num_workers=3))
        self.assertEqual([t.meta["draw"] for t in parallel], [0, 1, 2])
        for a, b in zip(serial, parallel):
            self.assertEqual(a.meta["perturbation"], b.meta["perturbation"])
            self.assertTrue(np.array_equal(a.points(["x", "y", "s1", "s2"]), b.points(["x", "y", "s1", "s2"])))

    def test_num_workers_is_checked(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig(experiment="cycle-perturbed", num_workers=0)

    def test_perturbations_are_checked(self):
        with self.assertRaises(ValueError):
            CycleProblem(perturbation=[-0.5, 0.0, 0.0, 0.0, 0.0, 0.0])

    def test_billiard_with_unit_weight_copies_the_cycle(self):
        cfg = ExperimentConfig(experiment="billiard4d", eta=1.0, num_iterations=200, checkpoints=[50, 200])
        trajectory = run_billiard4d(cfg)
        self.assertTrue(np.array_equal(trajectory.column("x"), trajectory.column("z")))
        self.assertTrue(np.array_equal(trajectory.column("y"), trajectory.column("w")))
        coverage = trajectory.meta["coverage"]
        self.assertLessEqual(coverage[50], coverage[200])


class StatisticsTest(unittest.TestCase):
    def test_covered_cells(self):
        points = [[0.0, 0.0], [1.0, 1.0], [0.9, 0.6]]
        self.assertEqual(covered_cells(points, ([0.0, 0.0], [1.0, 1.0]), bins=2), 2)
        self.assertEqual(covered_cells(points, ([0.0, 0.0], [1.0, 1.0]), bins=10), 3)

    def test_recurrence_on_a_circle(self):
        angles = np.linspace(0.0, 6.0 * np.pi, 301)
        circle = np.column_stack([np.cos(angles), np.sin(angles)])
        report = recurrence_statistic(circle)
        self.assertTrue(report.recurrent)
        i, j = report.return_pair
        self.assertGreaterEqual(i, 150)
        self.assertLessEqual(np.linalg.norm(circle[i] - circle[j]), 1e-2)

    def test_no_recurrence_on_a_converging_path(self):
        points = np.column_stack([0.9 ** np.arange(300), np.zeros(300)])
        self.assertFalse(recurrence_statistic(points).recurrent)
        self.assertFalse(recurrence_statistic(points[:2]).recurrent)


class LorenzTest(unittest.TestCase):
    def test_quadratic_form(self):
        problem = LorenzProblem()
        rng = np.random.RandomState(0)
        hessian = problem.quadratic_form()
        for _ in range(5):
            u = rng.normal(size=3)
            self.assertAlmostEqual(u.dot(problem.vector_field(u)), 0.5 * u.dot(hessian).dot(u))

    def test_quadratic_form_entries(self):
        expected = [[-20.0, 38.0, 0.0], [38.0, -2.0, 0.0], [0.0, 0.0, -16.0 / 3.0]]
        self.assertTrue(np.allclose(LorenzProblem().quadratic_form(), expected))

    def test_absolute_cutoff_turns_gradient_ascent_into_the_vector_field(self):
        u = np.array([1.0, 2.0, 3.0])
        s0 = LorenzProblem().vector_field(u) + np.array([0.01, 0.0, 0.0])
        plain = LorenzProblem(pinv_atol=0.0)
        direction, s, jac = plain.ascent_direction(u, s0)
        self.assertGreater(np.linalg.norm(s - plain.vector_field(u)), 0.0)
        self.assertTrue(np.allclose(direction, plain.quadratic_form().dot(u), atol=1e-3))
        truncated = LorenzProblem()
        direction, s, jac = truncated.ascent_direction(u, s0)
        self.assertTrue(np.all(jac.matrix == 0.0))
        self.assertTrue(np.allclose(direction, truncated.vector_field(u), atol=1e-3))

    def test_implicit_ascent_follows_the_vector_field(self):
        cfg = ExperimentConfig(experiment="lorenz", num_iterations=200, reference_time=1.0)
        result = run_lorenz(cfg)
        implicit, plain = result["implicit"], result["plain"]
        self.assertEqual(len(implicit), 201)
        self.assertEqual(len(result["reference"]), 201)
        self.assertTrue(np.all(implicit.column("jacobian_norm") == 0.0))

        problem = LorenzProblem()
        u = np.array(cfg.init)
        euler = [u]
        for _ in range(20):
            u = u + cfg.step_size * problem.vector_field(u)
            euler.append(u)
        self.assertTrue(np.allclose(implicit.points(["x", "y", "z"])[:21], euler, atol=1e-3))

        # plain ascent on u^T F(u) leaves along the unstable direction of the saddle
        self.assertLess(len(plain), 201)
        self.assertGreater(np.linalg.norm(plain.points(["x", "y", "z"])[-1]), cfg.plain_max_norm)


class ReportExperimentTest(unittest.TestCase):
    def test_counterexample(self):
        report = run_counterexample()
        self.assertEqual(report["phi_affine_dimension"], 2)
        self.assertEqual(report["psi_affine_dimension"], 3)
        self.assertEqual(report["inverted_affine_dimension"], 3)
        self.assertLess(report["inversion_error"], 1e-12)
        self.assertTrue(report["branches_match_generators"])
        self.assertTrue(report["not_contained"])

    def test_conic_diff(self):
        report = run_conic_diff(ExperimentConfig(experiment="conic-diff"))
        self.assertTrue(np.allclose(report["x"], [3.0, 5.0], atol=1e-8))
        self.assertEqual(np.array(report["jacobian"]).shape, (2 + 2 * 4, 4 * 2 + 4 + 2))
        self.assertGreater(report["rcond"], 0.0)
        self.assertLess(max(report["kkt"].values()), 1e-8)


class TrainingExperimentTest(unittest.TestCase):
    def test_deq_train_decreases_the_loss(self):
        cfg = ExperimentConfig(experiment="deq-train", num_iterations=200, num_samples=3)
        trajectory = run_deq_train(cfg)
        loss = trajectory.column("loss")
        self.assertLess(loss[-1], loss[0])
        self.assertIn("w1", trajectory.columns)
        self.assertGreaterEqual(trajectory.meta["stationarity"], 0.0)

    def test_lasso_tune(self):
        cfg = ExperimentConfig(experiment="lasso-tune", num_iterations=20)
        trajectory = run_lasso_tune(cfg)
        self.assertEqual(len(trajectory), 21)
        self.assertEqual(trajectory.columns[1:3], ["loss", "grad_norm"])
        self.assertTrue(np.all(np.isfinite(trajectory.column("loss"))))
        self.assertTrue(np.all(np.isfinite(trajectory.column("w0"))))
        self.assertTrue(np.isfinite(trajectory.meta["stationarity"]))
        self.assertIn("scale", trajectory.meta)

    def test_lasso_tune_settles_at_the_best_lambda(self):
        # X = I, y = (3, 2): beta_hat = y - e^lam for e^lam < 2, so C(lam) = (1 - e^lam)^2 is least at lam = 0
        problem = LassoProblem(np.eye(2), [3.0, 2.0])
        cfg = ExperimentConfig(experiment="lasso-tune", alpha0=0.5, num_iterations=500, lambda0=-1.0)
        trajectory = run_lasso_tune(cfg, problem, distance_criterion([2.0, 1.0]))
        self.assertEqual(len(trajectory), 501)
        self.assertAlmostEqual(trajectory.meta["final_w"][0], 0.0, places=3)
        self.assertLess(trajectory.last("loss"), trajectory.column("loss")[0])
        self.assertLessEqual(trajectory.meta["oscillation"], 1e-3)
        self.assertLessEqual(trajectory.meta["stationarity"], 1e-2)

    def test_lasso_tune_needs_a_criterion_with_a_problem(self):
        with self.assertRaises(ValueError):
            run_lasso_tune(ExperimentConfig(experiment="lasso-tune"), LassoProblem(np.eye(2), [3.0, 2.0]))


class CommandLineTest(unittest.TestCase):
    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir)

    def test_report_experiment(self):
        out = os.path.join(self.tmp_dir, "report.json")
        self.assertEqual(main(["counterexample", "--out", out]), 0)
        self.assertEqual(read_json(out)["psi_affine_dimension"], 3)

    def test_trajectory_experiment(self):
        config = os.path.join(self.tmp_dir, "cycle.json")
        with open(config, "w") as f:
            json.dump({"num_iterations": 20}, f)
        out = os.path.join(self.tmp_dir, "cycle.csv")
        self.assertEqual(main(["cycle", "--config", config, "--out", out]), 0)
        trajectory = read_trajectory_csv(out)
        self.assertEqual(trajectory.experiment, "cycle")
        self.assertEqual(len(trajectory), 21)

    def test_gate_exit_code(self):
        out = os.path.join(self.tmp_dir, "cycle.csv")
        self.assertEqual(main(["cycle", "--gate", "--out", out]), 2)
        self.assertFalse(os.path.exists(out))

    def test_config_exit_code(self):
        config = os.path.join(self.tmp_dir, "bad.json")
        with open(config, "w") as f:
            json.dump({"learning_rate": 0.1}, f)
        self.assertEqual(main(["cycle", "--config", config]), 1)
        self.assertEqual(main(["cycle", "--config", os.path.join(self.tmp_dir, "missing.json")]), 1)

    def test_bad_input_exit_code(self):
        config = os.path.join(self.tmp_dir, "lorenz.json")
        with open(config, "w") as f:
            json.dump({"init": [1.0, 2.0], "num_iterations": 5}, f)
        out = os.path.join(self.tmp_dir, "lorenz.csv")
        self.assertEqual(main(["lorenz", "--config", config, "--out", out]), 1)
        self.assertFalse(os.path.exists(out))


class FullRunTest(unittest.TestCase):
    @pytest.mark.slow
    def test_forced_cycle_is_recurrent(self):
        trajectory = run_cycle(ExperimentConfig(experiment="cycle"), progress=False)
        self.assertEqual(len(trajectory), 5001)
        self.assertTrue(recurrence_statistic(trajectory.points(["x", "y"])).recurrent)
        # the path keeps away from critical points
        term = CycleTerm(CycleProblem())
        for point in trajectory.points(["x", "y"])[2500::100]:
            self.assertGreater(stationarity_measure(term, point), 1e-3)

    @pytest.mark.slow
    def test_recurrence_persists_under_perturbation(self):
        draws = run_cycle_perturbed(ExperimentConfig(experiment="cycle-perturbed"))
        self.assertEqual(len(draws), 20)
        self.assertGreaterEqual(sum(t.meta["recurrence"].recurrent for t in draws), 18)

    @pytest.mark.slow
    def test_billiard_coverage_grows(self):
        trajectory = run_billiard4d(ExperimentConfig(experiment="billiard4d"))
        coverage = trajectory.meta["coverage"]
        self.assertLess(coverage[500], coverage[1000])
        self.assertLess(coverage[1000], coverage[5000])

    @pytest.mark.slow
    def test_lorenz_implicit_ascent_stays_bounded(self):
        result = run_lorenz(ExperimentConfig(experiment="lorenz"))
        points = result["implicit"].points(["x", "y", "z"])
        self.assertEqual(len(points), 10001)
        self.assertLess(np.max(np.linalg.norm(points, axis=1)), 100.0)
        self.assertLess(len(result["plain"]), 200)

    @pytest.mark.slow
    def test_deq_train_reaches_a_stationary_point(self):
        trajectory = run_deq_train(ExperimentConfig(experiment="deq-train"))
        self.assertLessEqual(trajectory.meta["stationarity"], 1e-2)
        self.assertLessEqual(trajectory.meta["oscillation"], 1e-3)


if __name__ == '__main__':
    unittest.main()
