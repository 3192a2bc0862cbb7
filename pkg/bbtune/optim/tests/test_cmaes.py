import math

import numpy as np
from django.test import SimpleTestCase

from bbtune.exceptions import InvalidParameterError
from bbtune.optim.benchmarks import SUITES, rastrigin, rosenbrock, sphere
from bbtune.optim.cmaes import CmaEsParameters, cma_ask, cma_best, cma_init, cma_tell, minimize

SEEDS = (42, 50, 66)


def evaluate(candidates, fn):
    for candidate in candidates:
        candidate.fitness = fn(candidate.point)
    return candidates


class ParametersTest(SimpleTestCase):
    def test_default_population(self):
        self.assertEqual(CmaEsParameters.default(10).popsize, 4 + math.floor(3 * math.log(10)))
        self.assertEqual(CmaEsParameters.default(500).popsize, 22)
        self.assertEqual(CmaEsParameters.default(10, popsize=20).mu, 10)

    def test_weights_are_positive_and_normalized(self):
        params = CmaEsParameters.default(20)
        self.assertAlmostEqual(float(params.weights.sum()), 1.0)
        self.assertTrue(np.all(np.diff(params.weights) < 0))


class AskTellTest(SimpleTestCase):
    def test_init_validation(self):
        with self.assertRaises(InvalidParameterError):
            cma_init(3, np.zeros(3), 0.0)
        with self.assertRaises(InvalidParameterError):
            cma_init(3, np.zeros(2), 1.0)
        with self.assertRaises(InvalidParameterError):
            cma_init(3, np.zeros(3), 1.0, popsize=1)

    def test_ask_draws_popsize_points(self):
        state = cma_init(4, np.ones(4), 0.3, popsize=7, seed=0)
        candidates = cma_ask(state)
        self.assertEqual(len(candidates), 7)
        self.assertEqual(candidates[0].point.shape, (4,))

    def test_same_seed_same_samples(self):
        first = cma_ask(cma_init(5, np.zeros(5), 1.0, seed=3))
        second = cma_ask(cma_init(5, np.zeros(5), 1.0, seed=3))
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.point, b.point)

    def test_first_generation_covariance_is_identity(self):
        state = cma_init(3, np.zeros(3), 2.0, seed=0)
        np.testing.assert_array_equal(state.covariance, np.eye(3))

    def test_tell_needs_full_evaluated_generation(self):
        state = cma_init(3, np.zeros(3), 1.0, seed=0)
        candidates = cma_ask(state)
        with self.assertRaises(InvalidParameterError):
            cma_tell(state, candidates)
        evaluate(candidates, sphere)
        with self.assertRaises(InvalidParameterError):
            cma_tell(state, candidates[:-1])

    def test_tell_rejects_nan(self):
        state = cma_init(3, np.zeros(3), 1.0, seed=0)
        candidates = evaluate(cma_ask(state), sphere)
        candidates[0].fitness = float("nan")
        with self.assertRaises(InvalidParameterError):
            cma_tell(state, candidates)

    def test_best_before_tell(self):
        with self.assertRaises(InvalidParameterError):
            cma_best(cma_init(2, np.zeros(2), 1.0))

    def test_best_tie_goes_to_earliest(self):
        state = cma_init(2, np.zeros(2), 1.0, popsize=4, seed=0)
        candidates = cma_ask(state)
        for candidate in candidates:
            candidate.fitness = 1.0
        cma_tell(state, candidates)
        self.assertEqual(cma_best(state).index, 0)
        np.testing.assert_array_equal(cma_best(state).point, candidates[0].point)

    def test_covariance_stays_symmetric_positive_definite(self):
        state = cma_init(6, np.full(6, 2.0), 0.5, seed=1)
        for _ in range(30):
            cma_tell(state, evaluate(cma_ask(state), rosenbrock))
        np.testing.assert_array_equal(state.covariance, state.covariance.T)
        self.assertGreater(float(np.linalg.eigvalsh(state.covariance).min()), 0.0)
        self.assertGreater(state.step_size, 0.0)

    def test_history_best_is_monotone(self):
        state = cma_init(4, np.full(4, 3.0), 1.0, seed=2)
        for _ in range(20):
            cma_tell(state, evaluate(cma_ask(state), sphere))
        best = [row["best_f"] for row in state.history]
        self.assertTrue(all(b <= a for a, b in zip(best, best[1:])))
        self.assertEqual(state.history[-1]["evals"], 20 * state.popsize)


class MinimizeTest(SimpleTestCase):
    def test_sphere_converges(self):
        suite = SUITES["sphere"]
        for seed in SEEDS:
            state = minimize(sphere, np.full(suite.dim, suite.m0), suite.sigma0, suite.budget, seed=seed)
            self.assertLess(state.best.fitness, 1e-10, f"seed {seed}")
            self.assertLessEqual(state.evaluations, suite.budget)

    def test_rosenbrock_converges(self):
        suite = SUITES["rosenbrock"]
        self.assertEqual(suite.dim, 5)
        for seed in SEEDS:
            state = minimize(rosenbrock, np.zeros(suite.dim), suite.sigma0, suite.budget, suite.popsize, seed=seed)
            self.assertLess(state.best.fitness, 1e-10, f"seed {seed}")
            self.assertLessEqual(state.evaluations, suite.budget)
            np.testing.assert_allclose(state.best.point, np.ones(suite.dim), atol=1e-3)

    def test_rastrigin_bound(self):
        suite = SUITES["rastrigin"]
        self.assertEqual((suite.dim, suite.popsize), (10, 40))
        for seed in SEEDS:
            state = minimize(rastrigin, np.full(suite.dim, suite.m0), suite.sigma0, suite.budget, suite.popsize,
                             seed=seed)
            self.assertLess(state.best.fitness, 5.0, f"seed {seed}")

    def test_budget_is_never_exceeded(self):
        state = minimize(sphere, np.ones(3), 1.0, budget=23, popsize=5, seed=0)
        self.assertEqual(state.evaluations, 20)

    def test_target_stops_early(self):
        state = minimize(sphere, np.full(5, 2.0), 1.0, budget=100000, seed=0, target=1e-3)
        self.assertLess(state.best.fitness, 1e-3)
        self.assertLess(state.evaluations, 100000)


class InvarianceTest(SimpleTestCase):
    def test_constant_shift_of_fitness_changes_nothing(self):
        plain = cma_init(4, np.full(4, 3.0), 1.0, seed=7)
        shifted = cma_init(4, np.full(4, 3.0), 1.0, seed=7)
        for _ in range(15):
            cma_tell(plain, evaluate(cma_ask(plain), sphere))
            cma_tell(shifted, evaluate(cma_ask(shifted), lambda x: sphere(x) + 7.0))
            np.testing.assert_array_equal(plain.mean, shifted.mean)
            np.testing.assert_array_equal(plain.covariance, shifted.covariance)
            self.assertEqual(plain.step_size, shifted.step_size)
        self.assertEqual(plain.best.index, shifted.best.index)

    def test_vanishing_step_size_samples_the_mean(self):
        mean = np.array([1.0, -2.0, 0.5])
        state = cma_init(3, mean, 1e-300, seed=0)
        for candidate in cma_ask(state):
            np.testing.assert_array_equal(candidate.point, mean)


class CovarianceRepairTest(SimpleTestCase):
    def test_repair_warns_once_per_run(self):
        state = cma_init(2, np.zeros(2), 1.0, popsize=6, seed=4)
        with self.assertLogs("bbtune.optim.cmaes", "DEBUG") as logs:
            for _ in range(3):
                # one direction collapsed far below the eigenvalue floor
                state.covariance = np.diag([1.0, 1e-30])
                state.eigenbasis = np.eye(2)
                state.eigenscale = np.array([1.0, 1e-15])
                cma_tell(state, evaluate(cma_ask(state), sphere))
        repairs = [line for line in logs.output if "Repairing covariance" in line]
        self.assertEqual(len(repairs), 3)
        self.assertEqual(sum(line.startswith("WARNING") for line in repairs), 1)
        self.assertEqual(state.covariance_repairs, 3)
