import numpy as np
from django.test import SimpleTestCase

from bbtune.exceptions import InvalidParameterError
from bbtune.optim.subspace import (IntrinsicVector, PromptVector, ScalingParams, build_subspaces, compose_prompt,
                                   compute_sigma_a, make_projection, measure_sigma_hat, project)


class SigmaATest(SimpleTestCase):
    def test_direct_substitution(self):
        self.assertAlmostEqual(compute_sigma_a(ScalingParams(alpha=1, sigma_hat=2, sigma_z=1, d=4)), 1.0)
        self.assertAlmostEqual(compute_sigma_a(ScalingParams(alpha=0.5, sigma_hat=1, sigma_z=1, d=1)), 0.5)
        self.assertAlmostEqual(compute_sigma_a(ScalingParams(alpha=0.5, sigma_hat=0.1134, sigma_z=1, d=500)),
                               0.5 * 0.1134 / np.sqrt(500))

    def test_rejects_non_positive_parameters(self):
        for kwargs in ({"alpha": 0}, {"sigma_hat": -1.0}, {"sigma_z": 0.0}, {"d": 0}, {"alpha": float("inf")}):
            values = {"alpha": 0.5, "sigma_hat": 1.0, "sigma_z": 1.0, "d": 10, **kwargs}
            with self.assertRaises(InvalidParameterError):
                ScalingParams(**values)


class ProjectionTest(SimpleTestCase):
    def test_shape_and_determinism(self):
        first = make_projection(5, 20, 0.1, seed=7)
        self.assertEqual(first.shape, (20, 5))
        np.testing.assert_array_equal(first.entries, make_projection(5, 20, 0.1, seed=7).entries)
        self.assertFalse(np.array_equal(first.entries, make_projection(5, 20, 0.1, seed=8).entries))

    def test_entry_std_matches_sigma_a(self):
        projection = make_projection(500, 1024, 0.01, seed=0)
        self.assertAlmostEqual(float(np.std(projection.entries)) / 0.01, 1.0, delta=0.01)

    def test_projection_is_frozen(self):
        projection = make_projection(3, 4, 1.0, seed=0)
        with self.assertRaises(ValueError):
            projection.entries[0, 0] = 1.0

    def test_width_below_intrinsic_dim(self):
        with self.assertRaises(InvalidParameterError):
            make_projection(10, 5, 1.0, seed=0)

    def test_prompt_scale_follows_alpha(self):
        rng = np.random.default_rng(1)
        for alpha in (0.1, 0.5, 0.9):
            scaling = ScalingParams(alpha=alpha, sigma_hat=0.4, sigma_z=1.0, d=500)
            projection = make_projection(500, 1024, compute_sigma_a(scaling), seed=3)
            draws = np.stack([project(projection, IntrinsicVector(rng.normal(0.0, 1.0, 500))).values
                              for _ in range(100)])
            self.assertAlmostEqual(float(np.std(draws)) / (alpha * 0.4), 1.0, delta=0.05)

    def test_project_is_linear(self):
        projection = make_projection(6, 32, 0.3, seed=2)
        rng = np.random.default_rng(5)
        z1, z2 = rng.normal(size=6), rng.normal(size=6)
        combined = project(projection, IntrinsicVector(2.0 * z1 + z2)).values
        separate = (2.0 * project(projection, IntrinsicVector(z1)).values
                    + project(projection, IntrinsicVector(z2)).values)
        np.testing.assert_allclose(combined, separate, atol=1e-12)
        np.testing.assert_array_equal(project(projection, IntrinsicVector(np.zeros(6))).values, np.zeros(32))

    def test_project_rejects_wrong_length(self):
        projection = make_projection(4, 8, 1.0, seed=0)
        with self.assertRaises(InvalidParameterError):
            project(projection, IntrinsicVector(np.zeros(3)))


class ComposeTest(SimpleTestCase):
    def test_adds_offset(self):
        p = compose_prompt(PromptVector([1.0, 2.0]), PromptVector([0.5, -2.0]))
        np.testing.assert_allclose(p.values, [1.5, 0.0])

    def test_layer_and_width_mismatch(self):
        with self.assertRaises(InvalidParameterError):
            compose_prompt(PromptVector([1.0, 2.0], 0), PromptVector([1.0, 2.0], 1))
        with self.assertRaises(InvalidParameterError):
            compose_prompt(PromptVector([1.0, 2.0]), PromptVector([1.0]))


class SigmaHatTest(SimpleTestCase):
    def test_population_std(self):
        self.assertAlmostEqual(measure_sigma_hat([[1.0, -1.0], [1.0, -1.0]]), 1.0)

    def test_degenerate_tables(self):
        with self.assertRaises(InvalidParameterError):
            measure_sigma_hat(np.ones((3, 3)))
        with self.assertRaises(InvalidParameterError):
            measure_sigma_hat([1.0])


class BuildSubspacesTest(SimpleTestCase):
    def setUp(self):
        self.scaling = ScalingParams(alpha=0.5, sigma_hat=1.0, sigma_z=1.0, d=4)

    def test_one_seeded_projection_per_layer(self):
        subspaces = build_subspaces(3, 16, self.scaling, base_seed=10)
        self.assertEqual(len(subspaces), 3)
        self.assertEqual([layer.projection.seed for layer in subspaces.layers], [10, 11, 12])
        np.testing.assert_array_equal(subspaces[1].projection.entries,
                                      make_projection(4, 16, subspaces.sigma_a, seed=11).entries)

    def test_zero_vectors_give_initial_prompts(self):
        p0 = [PromptVector(np.full(16, float(layer)), layer) for layer in range(2)]
        subspaces = build_subspaces(2, 16, self.scaling, base_seed=0, p0=p0)
        prompts = subspaces.prompts(subspaces.initial_vectors())
        self.assertEqual(prompts.shape, (2, 16))
        np.testing.assert_array_equal(prompts[1], np.ones(16))

    def test_prompts_need_one_vector_per_layer(self):
        subspaces = build_subspaces(2, 16, self.scaling, base_seed=0)
        with self.assertRaises(InvalidParameterError):
            subspaces.prompts([np.zeros(4)])

    def test_initial_prompt_width_checked(self):
        with self.assertRaises(InvalidParameterError):
            build_subspaces(1, 16, self.scaling, base_seed=0, p0=[PromptVector(np.zeros(8), 0)])

    def test_manifest_lists_layers(self):
        manifest = build_subspaces(2, 16, self.scaling, base_seed=5).manifest()
        self.assertEqual([layer["seed"] for layer in manifest["layers"]], [5, 6])
        self.assertEqual(manifest["d"], 4)
