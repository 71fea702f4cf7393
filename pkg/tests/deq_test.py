# coding=utf-8
from __future__ import absolute_import
from __future__ import division
from __future__ import print_function

import unittest

import numpy as np
import pytest

from pathdiff.deq import (DEQSquareLoss, MonotoneLayer, activation_tape, deq_conservative_gradient, deq_forward,
                          random_layer)
from pathdiff.errors import InvertibilityFailure, NotMonotone
from pathdiff.implicit import FixedPointConfig
from pathdiff.tape import SelectionPolicy

TIGHT = FixedPointConfig(tolerance=1e-13)


class MonotoneLayerTest(unittest.TestCase):
    def test_rejects_non_monotone_weights(self):
        with self.assertRaises(NotMonotone):
            MonotoneLayer(-np.eye(2), np.zeros(2))
        layer = MonotoneLayer(-np.eye(2), np.zeros(2), enforce_monotone=False)
        self.assertEqual(layer.size, 2)

    def test_shapes(self):
        with self.assertRaises(ValueError):
            MonotoneLayer(np.eye(3), np.zeros(2))
        with self.assertRaises(ValueError):
            MonotoneLayer(np.eye(2), np.zeros(2), U=np.ones((3, 1)))
        with self.assertRaises(ValueError):
            activation_tape("softplus", 2)

    def test_forward_reaches_equilibrium(self):
        layer = random_layer(4, "tanh", np.random.RandomState(0))
        z = deq_forward(layer, TIGHT)
        self.assertLess(np.max(np.abs(np.tanh(layer.W.dot(z) + layer.b) - z)), 1e-12)

    def test_forward_with_inputs(self):
        layer = MonotoneLayer([[0.5]], [0.3], sigma="tanh", U=[[1.0]])
        z = deq_forward(layer, TIGHT, x=[0.7])
        self.assertAlmostEqual(z[0], np.tanh(0.5 * z[0] + 1.0), places=12)

    def test_serialization(self):
        layer = MonotoneLayer([[0.5, 0.1], [-0.1, 0.5]], [0.2, -0.3], sigma="relu", U=[[1.0], [2.0]])
        loaded = MonotoneLayer.from_dict(layer.to_dict())
        self.assertTrue(np.array_equal(loaded.W, layer.W))
        self.assertTrue(np.array_equal(loaded.U, layer.U))
        self.assertEqual(loaded.sigma_name, "relu")

    def test_equilibrium_does_not_depend_on_the_start(self):
        rng = np.random.RandomState(5)
        layer = random_layer(5, "tanh", rng, eig_range=(0.2, 0.4), skew_norm=0.1)
        reference = deq_forward(layer, TIGHT)
        loose = FixedPointConfig(tolerance=1e-10)
        for _ in range(10):
            z = deq_forward(layer, loose, z0=rng.normal(scale=3.0, size=5))
            self.assertLess(np.max(np.abs(z - reference)), 1e-9)


class ConservativeGradientTest(unittest.TestCase):
    def test_matches_finite_differences(self):
        layer = random_layer(3, "tanh", np.random.RandomState(2))
        target = np.array([0.1, -0.2, 0.3])
        loss = lambda W, b: 0.5 * np.sum((deq_forward(layer.with_params(W, b), TIGHT) - target) ** 2)
        z = deq_forward(layer, TIGHT)
        g_w, g_b = deq_conservative_gradient(layer, z, z - target)
        h = 1e-5
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd = (loss(layer.W, layer.b + e) - loss(layer.W, layer.b - e)) / (2.0 * h)
            self.assertAlmostEqual(g_b[i], fd, delta=1e-6)
        e = np.zeros((3, 3))
        e[0, 2] = h
        fd = (loss(layer.W + e, layer.b) - loss(layer.W - e, layer.b)) / (2.0 * h)
        self.assertAlmostEqual(g_w[0, 2], fd, delta=1e-6)
        self.assertTrue(np.allclose(g_w, np.outer(g_b, z)))

    @pytest.mark.slow
    def test_random_layers_match_finite_differences(self):
        rng = np.random.RandomState(0)
        h = 1e-5
        for trial in range(50):
            size = rng.randint(1, 11)
            layer = random_layer(size, "tanh", rng)
            target = rng.normal(scale=0.5, size=size)
            loss = lambda W, b: 0.5 * np.sum((deq_forward(layer.with_params(W, b), TIGHT) - target) ** 2)
            z = deq_forward(layer, TIGHT)
            g_w, g_b = deq_conservative_gradient(layer, z, z - target)
            fd_b = np.array([(loss(layer.W, layer.b + h * e) - loss(layer.W, layer.b - h * e)) / (2.0 * h)
                             for e in np.eye(size)])
            i, j = rng.randint(size, size=2)
            e = np.zeros((size, size))
            e[i, j] = h
            fd_w = (loss(layer.W + e, layer.b) - loss(layer.W - e, layer.b)) / (2.0 * h)
            self.assertTrue(np.allclose(g_b, fd_b, rtol=1e-4, atol=1e-7), "trial {}".format(trial))
            self.assertAlmostEqual(g_w[i, j], fd_w, delta=1e-4 * abs(fd_w) + 1e-7)

    @pytest.mark.slow
    def test_full_weight_gradient_matches_finite_differences(self):
        rng = np.random.RandomState(1)
        h = 1e-5
        for trial in range(50):
            sigma = "tanh" if trial < 25 else "relu"
            size = rng.randint(1, 7)
            while True:
                layer = random_layer(size, sigma, rng)
                z = deq_forward(layer, TIGHT)
                if sigma == "tanh" or np.min(np.abs(layer.pre_activation(z))) > 1e-3:
                    break
            target = rng.normal(scale=0.5, size=size)
            loss = lambda W, b: 0.5 * np.sum((deq_forward(layer.with_params(W, b), TIGHT) - target) ** 2)
            g_w, g_b = deq_conservative_gradient(layer, z, z - target)
            fd_w = np.zeros((size, size))
            for i in range(size):
                for j in range(size):
                    e = np.zeros((size, size))
                    e[i, j] = h
                    fd_w[i, j] = (loss(layer.W + e, layer.b) - loss(layer.W - e, layer.b)) / (2.0 * h)
            self.assertTrue(np.allclose(g_w, fd_w, rtol=1e-4, atol=1e-6), "{} trial {}".format(sigma, trial))

    def test_scalar_relu_layer(self):
        layer = MonotoneLayer([[0.5]], [1.0])
        z = deq_forward(layer, TIGHT)
        self.assertAlmostEqual(z[0], 2.0, places=12)
        g_w, g_b = deq_conservative_gradient(layer, z, [1.0])
        self.assertAlmostEqual(g_b[0], 2.0)
        self.assertAlmostEqual(g_w[0, 0], 4.0, places=10)
        # inactive relu: the equilibrium is 0 and nothing flows back
        layer = MonotoneLayer([[0.5]], [-1.0])
        z = deq_forward(layer, TIGHT)
        self.assertEqual(z[0], 0.0)
        g_w, g_b = deq_conservative_gradient(layer, z, [1.0])
        self.assertEqual(g_b[0], 0.0)
        self.assertEqual(g_w[0, 0], 0.0)

    def test_relu_kink_follows_policy(self):
        # W z + b = 0 at z = 0: the relu is evaluated at its kink
        layer = MonotoneLayer([[0.5]], [0.0])
        z = deq_forward(layer)
        self.assertEqual(z[0], 0.0)
        _, g_low = deq_conservative_gradient(layer, z, [1.0])
        _, g_high = deq_conservative_gradient(layer, z, [1.0], SelectionPolicy(relu_at_zero=1.0))
        self.assertEqual(g_low[0], 0.0)
        self.assertAlmostEqual(g_high[0], 2.0)

    def test_singular_system(self):
        layer = MonotoneLayer([[1.0]], [0.0], sigma="identity")
        with self.assertRaises(InvertibilityFailure):
            deq_conservative_gradient(layer, [0.0], [1.0])

    def test_requires_equilibrium(self):
        layer = MonotoneLayer([[0.5]], [0.3], sigma="tanh")
        with self.assertRaises(ValueError):
            deq_conservative_gradient(layer, [5.0], [1.0])

    def test_square_loss_term(self):
        layer = MonotoneLayer([[0.4]], [0.0], sigma="tanh", theta=0.05, U=[[1.0]])
        term = DEQSquareLoss(layer, [0.5], [0.6], TIGHT)
        w = np.array([0.4, 0.0])
        h = 1e-5
        fd = [(term.value(w + e) - term.value(w - e)) / (2.0 * h) for e in (np.array([h, 0.0]), np.array([0.0, h]))]
        self.assertEqual(term.size, 2)
        self.assertTrue(np.allclose(term.selection(w), fd, atol=1e-6))


if __name__ == '__main__':
    unittest.main()
