# coding=utf-8
from __future__ import absolute_import
from __future__ import division
from __future__ import print_function

import unittest

import numpy as np

from pathdiff.errors import NonFiniteError, NotSymmetric, SingularMatrix
from pathdiff.linalg import (LuFactorization, affine_dimension, affine_hull_distance, lu_solve, rcond_estimate,
                             symmetric_eig_min, truncated_pinv_solve)


class LuSolveTest(unittest.TestCase):
    def test_solves_small_system(self):
        x = lu_solve([[2.0, 1.0], [1.0, 3.0]], [3.0, 5.0])
        self.assertTrue(np.allclose(x, [0.8, 1.4]))

    def test_transposed_solve(self):
        a = np.array([[1.0, 2.0], [0.5, 4.0]])
        b = np.array([1.0, -1.0])
        self.assertTrue(np.allclose(lu_solve(a, b, trans=1), np.linalg.solve(a.T, b)))

    def test_matrix_right_hand_side(self):
        a = np.array([[4.0, 1.0], [2.0, 3.0]])
        self.assertTrue(np.allclose(lu_solve(a, np.eye(2)).dot(a), np.eye(2)))

    def test_singular_matrix_raises(self):
        with self.assertRaises(SingularMatrix) as ctx:
            lu_solve([[1.0, 2.0], [2.0, 4.0]], [1.0, 2.0])
        self.assertEqual(ctx.exception.rcond, 0.0)

    def test_nearly_singular_matrix_is_rejected_by_tolerance(self):
        a = np.array([[1.0, 0.0], [0.0, 1e-14]])
        self.assertLess(rcond_estimate(a), 1e-12)
        with self.assertRaises(SingularMatrix):
            lu_solve(a, [1.0, 1.0])
        self.assertTrue(np.allclose(lu_solve(a, [1.0, 1e-14], rcond_tol=0.0), [1.0, 1.0]))

    def test_non_finite_input(self):
        with self.assertRaises(NonFiniteError):
            lu_solve([[1.0, np.nan], [0.0, 1.0]], [1.0, 1.0])
        with self.assertRaises(NonFiniteError):
            lu_solve(np.eye(2), [np.inf, 1.0])

    def test_factorization_reassembles(self):
        a = np.random.RandomState(0).normal(size=(5, 5))
        fact = LuFactorization(a)
        self.assertTrue(np.allclose(fact.reassemble(), a))
        self.assertTrue(np.allclose(np.diag(fact.lower), 1.0))
        self.assertGreater(fact.rcond, 0.0)

    def test_identity_is_perfectly_conditioned(self):
        self.assertAlmostEqual(rcond_estimate(np.eye(4)), 1.0)
        self.assertEqual(rcond_estimate(np.zeros((3, 3))), 0.0)

    def test_random_well_conditioned_systems(self):
        rng = np.random.RandomState(0)
        for _ in range(100):
            n = rng.randint(1, 11)
            a = rng.normal(size=(n, n)) + 5.0 * np.eye(n)
            b = rng.normal(size=n)
            for trans in (0, 1):
                x = lu_solve(a, b, trans=trans)
                op = a.T if trans else a
                self.assertLessEqual(np.max(np.abs(op.dot(x) - b)), 1e-8 * max(1.0, np.max(np.abs(b))))


class SpectralTest(unittest.TestCase):
    def test_symmetric_eig_min(self):
        self.assertAlmostEqual(symmetric_eig_min([[2.0, 0.0], [0.0, 3.0]]), 2.0)
        self.assertAlmostEqual(symmetric_eig_min([[2.0, 1.0], [1.0, 2.0]]), 1.0)

    def test_not_symmetric(self):
        with self.assertRaises(NotSymmetric):
            symmetric_eig_min([[1.0, 1.0], [0.0, 1.0]])

    def test_truncated_pinv(self):
        a = np.diag([1.0, 1e-20])
        self.assertTrue(np.allclose(truncated_pinv_solve(a, [1.0, 1.0], atol=1e-10), [1.0, 0.0]))
        self.assertTrue(np.allclose(truncated_pinv_solve(np.zeros((2, 2)), [1.0, 1.0], atol=1e-10), 0.0))

    def test_rayleigh_quotients_bound_the_smallest_eigenvalue(self):
        rng = np.random.RandomState(1)
        for _ in range(20):
            n = rng.randint(1, 8)
            r = rng.normal(size=(n, n))
            a = r + r.T
            eig_min = symmetric_eig_min(a)
            for _ in range(20):
                x = rng.normal(size=n)
                self.assertGreaterEqual(x.dot(a).dot(x) / x.dot(x), eig_min - 1e-10)
            _, vectors = np.linalg.eigh(a)
            v = vectors[:, 0]
            self.assertAlmostEqual(v.dot(a).dot(v) / v.dot(v), eig_min, places=10)


class AffineHullTest(unittest.TestCase):
    def test_dimension(self):
        self.assertEqual(affine_dimension([[0.0, 0.0]]), 0)
        self.assertEqual(affine_dimension([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]), 1)
        self.assertEqual(affine_dimension([np.eye(2), np.zeros((2, 2)), np.ones((2, 2))]), 2)

    def test_distance(self):
        self.assertAlmostEqual(affine_hull_distance([0.0, 1.0], [[0.0, 0.0], [1.0, 0.0]]), 1.0)
        self.assertAlmostEqual(affine_hull_distance([5.0, 0.0], [[0.0, 0.0], [1.0, 0.0]]), 0.0)

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            affine_dimension([[0.0, 0.0], [1.0, 0.0, 0.0]])
    def test_dimension_ignores_order_and_repeats(self):
        rng = np.random.RandomState(2)
        for _ in range(20):
            d = rng.randint(1, 6)
            k = rng.randint(1, d + 2)
            points = list(rng.normal(size=(k, d)))
            self.assertEqual(affine_dimension(points), k - 1)
            shuffled = [points[i] for i in rng.permutation(k)]
            repeated = shuffled + [points[i] for i in rng.randint(k, size=3)]
            self.assertEqual(affine_dimension(shuffled), k - 1)
            self.assertEqual(affine_dimension(repeated), k - 1)
            self.assertAlmostEqual(affine_hull_distance(points[-1], repeated), 0.0)



if __name__ == '__main__':
    unittest.main()
