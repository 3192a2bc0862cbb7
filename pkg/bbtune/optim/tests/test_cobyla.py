import numpy as np
from django.test import SimpleTestCase

from bbtune.exceptions import InvalidParameterError
from bbtune.optim.benchmarks import shifted_quadratic, sphere
from bbtune.optim.cobyla import DirectionSet, cobyla_init, cobyla_run, cobyla_step, line_search_run


class Counted:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return self.fn(x)


class CobylaTest(SimpleTestCase):
    def test_shifted_quadratic_optimum(self):
        center = np.array([1.0, -2.0])
        result = cobyla_run(np.zeros(2), 0.5, 1e-8, 200, shifted_quadratic(center))
        self.assertLess(float(np.linalg.norm(result.point - center)), 1e-4)
        self.assertLessEqual(result.evals_used, 200)

    def test_init_spends_d_plus_one_evaluations(self):
        objective = Counted(sphere)
        state = cobyla_init(np.ones(3), 0.5, 1e-6, objective)
        self.assertEqual(objective.calls, 4)
        self.assertEqual(state.eval_count, 4)
        self.assertEqual(state.simplex.shape, (4, 3))

    def test_each_step_is_one_evaluation(self):
        objective = Counted(sphere)
        state = cobyla_init(np.ones(3), 0.5, 1e-6, objective)
        for expected in range(5, 15):
            cobyla_step(state)
            self.assertEqual(objective.calls, expected)

    def test_budget_is_respected(self):
        objective = Counted(sphere)
        result = cobyla_run(np.full(4, 3.0), 1.0, 1e-12, 17, objective)
        self.assertEqual(objective.calls, 17)
        self.assertEqual(result.evals_used, 17)
        self.assertFalse(result.converged)

    def test_best_so_far_is_monotone_on_random_quadratics(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            d = int(rng.integers(2, 6))
            a = rng.normal(size=(d, d))
            hessian = a @ a.T + 0.1 * np.eye(d)
            center = rng.normal(size=d)

            def quadratic(x, hessian=hessian, center=center):
                delta = x - center
                return float(delta @ hessian @ delta)

            result = cobyla_run(rng.normal(size=d), 0.5, 1e-6, 60, quadratic)
            best = [row["best_f"] for row in result.trace]
            self.assertTrue(all(b <= a for a, b in zip(best, best[1:])))
            self.assertAlmostEqual(best[-1], result.fitness)

    def test_converges_before_budget_on_easy_problem(self):
        result = cobyla_run(np.array([0.3]), 0.1, 1e-3, 1000, sphere)
        self.assertTrue(result.converged)
        self.assertLess(result.evals_used, 1000)

    def test_invalid_arguments(self):
        with self.assertRaises(InvalidParameterError):
            cobyla_init(np.zeros(2), 1e-6, 1e-3, sphere)
        with self.assertRaises(InvalidParameterError):
            cobyla_init(np.zeros(2), 0.5, 0.0, sphere)
        with self.assertRaises(InvalidParameterError):
            cobyla_run(np.zeros(3), 0.5, 1e-6, 3, sphere)

    def test_step_after_convergence_is_an_error(self):
        result_state = cobyla_init(np.array([0.0]), 1e-3, 1e-3, sphere)
        while not result_state.converged:
            cobyla_step(result_state)
        with self.assertRaises(InvalidParameterError):
            cobyla_step(result_state)


class LineSearchTest(SimpleTestCase):
    def test_any_positive_budget(self):
        for budget in (1, 2, 5):
            objective = Counted(sphere)
            result = line_search_run(np.ones(4), 0.5, 1e-6, budget, objective)
            self.assertEqual(objective.calls, budget)
            self.assertEqual(result.evals_used, budget)

    def test_known_start_value_saves_an_evaluation(self):
        objective = Counted(sphere)
        x0 = np.ones(3)
        result = line_search_run(x0, 0.5, 1e-6, 4, objective, f0=sphere(x0))
        self.assertEqual(objective.calls, 4)
        self.assertLess(result.fitness, sphere(x0))

    def test_improves_shifted_quadratic(self):
        center = np.array([0.4, -0.7, 1.1])
        fn = shifted_quadratic(center)
        result = line_search_run(np.zeros(3), 0.5, 1e-8, 400, fn)
        self.assertLess(result.fitness, 1e-4)

    def test_rejects_empty_budget(self):
        with self.assertRaises(InvalidParameterError):
            line_search_run(np.zeros(2), 0.5, 1e-6, 0, sphere)


class DirectionSetTest(SimpleTestCase):
    def test_renew_keeps_displacement_first_and_orthonormal(self):
        renewed = DirectionSet.coordinate(3).renew(np.array([1.0, 1.0, 0.0]))
        np.testing.assert_allclose(renewed.directions[0], np.array([1.0, 1.0, 0.0]) / np.sqrt(2), atol=1e-12)
        np.testing.assert_allclose(renewed.directions @ renewed.directions.T, np.eye(3), atol=1e-12)

    def test_zero_displacement_keeps_set(self):
        directions = DirectionSet.coordinate(2)
        self.assertIs(directions.renew(np.zeros(2)), directions)


class TranslationTest(SimpleTestCase):
    def test_shifting_the_problem_shifts_the_answer(self):
        hessian = np.array([[3.0, 0.5], [0.5, 1.0]])
        shift = np.array([1.0, 2.0])

        def quadratic(x):
            delta = np.asarray(x) - np.array([0.25, -0.5])
            return float(delta @ hessian @ delta)

        plain = cobyla_run(np.zeros(2), 0.5, 1e-4, 60, quadratic)
        moved = cobyla_run(shift, 0.5, 1e-4, 60, lambda x: quadratic(np.asarray(x) - shift))
        np.testing.assert_allclose(moved.point - shift, plain.point, atol=1e-6)
        self.assertAlmostEqual(moved.fitness, plain.fitness, delta=1e-9)
        self.assertEqual(moved.evals_used, plain.evals_used)
