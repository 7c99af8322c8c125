#!/usr/bin/python3

#     Copyright 2021. FastyBird s.r.o.
#
#     Licensed under the Apache License, Version 2.0 (the "License");
#     you may not use this file except in compliance with the License.
#     You may obtain a copy of the License at
#
#         http://www.apache.org/licenses/LICENSE-2.0
#
#     Unless required by applicable law or agreed to in writing, software
#     distributed under the License is distributed on an "AS IS" BASIS,
#     WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#     See the License for the specific language governing permissions and
#     limitations under the License.

# Python base dependencies
import tempfile
import unittest
from pathlib import Path

# Library dependencies
import pytest
import torch

# Library libs
from fastybird_diffusion_editor.backends.storage import BackendsLoader, BackendsWriter
from fastybird_diffusion_editor.backends.toy import (
    PaletteSegmenter,
    make_gaussian_analytic_denoiser,
    make_toy_autoencoder,
    make_toy_embedders,
)
from fastybird_diffusion_editor.diffusion.schedule import Schedule
from fastybird_diffusion_editor.diffusion.solver import DdimSolver
from fastybird_diffusion_editor.exceptions import (
    DomainException,
    InvalidConfigurationException,
    ShapeMismatchException,
)
from fastybird_diffusion_editor.types import MANIFEST_FILE, EncoderRole
from tests.helpers import block_image, random_image, toy_backends


class TestToyAutoencoder(unittest.TestCase):
    def test_identity_factor(self) -> None:
        autoencoder = make_toy_autoencoder(factor=1, dtype=torch.float64)
        image = random_image(8, seed=1)

        latent = autoencoder.encode(image)

        self.assertEqual(tuple(latent.shape), (3, 8, 8))
        self.assertTrue(torch.allclose(autoencoder.decode(latent), image, atol=1e-12))

    # -----------------------------------------------------------------------------

    def test_block_constant_round_trip(self) -> None:
        autoencoder = make_toy_autoencoder(factor=2, dtype=torch.float64)
        image = block_image(16, 2, seed=2)

        restored = autoencoder.decode(autoencoder.encode(image))

        self.assertLessEqual(float((restored - image).abs().max()), autoencoder.reconstruction_tolerance)

    # -----------------------------------------------------------------------------

    def test_pooling_residual(self) -> None:
        autoencoder = make_toy_autoencoder(factor=2, dtype=torch.float64)
        image = random_image(8, seed=3)

        pooled = image.view(3, 4, 2, 4, 2).mean(dim=(2, 4))
        expected = pooled.repeat_interleave(2, dim=1).repeat_interleave(2, dim=2)

        restored = autoencoder.decode(autoencoder.encode(image))

        self.assertTrue(torch.allclose(restored, expected, atol=1e-12))
        self.assertTrue(torch.allclose(restored - image, expected - image, atol=1e-12))

    # -----------------------------------------------------------------------------

    def test_batched_images(self) -> None:
        autoencoder = make_toy_autoencoder(factor=2, dtype=torch.float64)
        images = torch.stack([block_image(8, 2, seed=seed) for seed in range(3)])

        restored = autoencoder.decode(autoencoder.encode(images))

        self.assertEqual(tuple(restored.shape), (3, 3, 8, 8))
        self.assertTrue(torch.allclose(restored, images, atol=1e-12))

    # -----------------------------------------------------------------------------

    def test_latent_round_trip(self) -> None:
        generator = torch.Generator().manual_seed(5)

        for factor in (1, 2, 8):
            autoencoder = make_toy_autoencoder(factor=factor, dtype=torch.float64)

            latent = torch.randn((autoencoder.latent_channels, 3, 3), generator=generator, dtype=torch.float64)
            batched = torch.randn((2, autoencoder.latent_channels, 2, 2), generator=generator, dtype=torch.float64)

            self.assertLess(float((autoencoder.encode(autoencoder.decode(latent)) - latent).abs().max()), 1e-12)
            self.assertLess(float((autoencoder.encode(autoencoder.decode(batched)) - batched).abs().max()), 1e-12)

    # -----------------------------------------------------------------------------

    def test_invalid_geometry(self) -> None:
        with self.assertRaises(InvalidConfigurationException):
            make_toy_autoencoder(factor=3)

        with self.assertRaises(ShapeMismatchException):
            make_toy_autoencoder(factor=4).encode(torch.zeros((3, 6, 8)))


class TestGaussianAnalyticDenoiser(unittest.TestCase):
    def setUp(self) -> None:
        self.schedule = Schedule.cosine()
        self.generator = torch.Generator().manual_seed(5)

    # -----------------------------------------------------------------------------

    def test_noiseless_mean_predicts_zero(self) -> None:
        mu = torch.randn((1, 2, 2), generator=self.generator, dtype=torch.float64)
        denoiser = make_gaussian_analytic_denoiser(mu, 0.8, self.schedule)

        t = torch.tensor(0.4, dtype=torch.float64)
        latent = torch.sqrt(self.schedule.alpha(t)) * mu

        predicted = denoiser.predict(latent, t, torch.zeros(8, dtype=torch.float64))

        self.assertTrue(torch.allclose(predicted, torch.zeros_like(mu), atol=1e-12))

    # -----------------------------------------------------------------------------

    def test_degenerate_prior(self) -> None:
        mu = torch.randn((1, 2, 2), generator=self.generator, dtype=torch.float64)
        denoiser = make_gaussian_analytic_denoiser(mu, 1e-9, self.schedule)

        t = torch.tensor(0.6, dtype=torch.float64)
        alpha = self.schedule.alpha(t)
        latent = torch.randn((1, 2, 2), generator=self.generator, dtype=torch.float64)

        predicted = denoiser.predict(latent, t, torch.zeros(8, dtype=torch.float64))
        expected = (latent - torch.sqrt(alpha) * mu) / torch.sqrt(1 - alpha)

        self.assertTrue(torch.allclose(predicted, expected, atol=1e-8))

    # -----------------------------------------------------------------------------

    def test_invalid_prior(self) -> None:
        with self.assertRaises(DomainException):
            make_gaussian_analytic_denoiser(torch.zeros((1, 2, 2)), 0.0)

        with self.assertRaises(ShapeMismatchException):
            make_gaussian_analytic_denoiser(torch.zeros((2, 2)), 1.0)

    # -----------------------------------------------------------------------------

    def test_gradients_match_finite_differences(self) -> None:
        mu = torch.randn((2, 3, 3), generator=self.generator, dtype=torch.float64)
        denoiser = make_gaussian_analytic_denoiser(mu, 0.7, self.schedule)
        condition = torch.zeros(8, dtype=torch.float64)

        latent = torch.randn((2, 3, 3), generator=self.generator, dtype=torch.float64, requires_grad=True)

        for value in (0.15, 0.45, 0.8):
            t = torch.tensor(value, dtype=torch.float64, requires_grad=True)

            self.assertTrue(
                torch.autograd.gradcheck(
                    lambda latent_values, t_value: denoiser.predict(latent_values, t_value, condition),
                    (latent, t),
                    eps=1e-6,
                    atol=1e-8,
                    rtol=1e-4,
                )
            )

    # -----------------------------------------------------------------------------

    @pytest.mark.slow
    def test_monte_carlo_posterior_mean(self) -> None:
        samples_count = 1_000_000

        for _ in range(10):
            mu = torch.randn((1, 2, 2), generator=self.generator, dtype=torch.float64)
            sigma = 0.5 + 1.5 * float(torch.rand(1, generator=self.generator))
            t = torch.tensor(0.2 + 0.6 * float(torch.rand(1, generator=self.generator)), dtype=torch.float64)

            alpha = self.schedule.alpha(t)
            spread = torch.sqrt(alpha * sigma**2 + 1 - alpha)
            latent = torch.sqrt(alpha) * mu + spread * torch.randn((1, 2, 2), generator=self.generator, dtype=torch.float64)

            denoiser = make_gaussian_analytic_denoiser(mu, sigma, self.schedule)
            predicted = denoiser.predict(latent, t, torch.zeros(8, dtype=torch.float64))

            # Importance sampling of eps ~ N(0, 1) weighted by prior density of the implied clean latent
            noise = torch.randn((samples_count, 1, 2, 2), generator=self.generator, dtype=torch.float64)
            clean = (latent - torch.sqrt(1 - alpha) * noise) / torch.sqrt(alpha)

            log_weights = -((clean - mu) ** 2) / (2 * sigma**2)
            weights = torch.exp(log_weights - log_weights.max(dim=0).values)
            normalizer = weights.sum(dim=0)

            estimate = (weights * noise).sum(dim=0) / normalizer
            standard_error = torch.sqrt((weights**2 * (noise - estimate) ** 2).sum(dim=0)) / normalizer

            # Bonferroni widened bound over the 40 compared entries
            self.assertTrue(bool(((predicted - estimate).abs() <= 5 * standard_error).all()))


class TestToyEmbedders(unittest.TestCase):
    def test_determinism_and_normalization(self) -> None:
        text_embedder, visual_embedder = make_toy_embedders(dim=16, seed=3, patch=4)

        first = text_embedder.pooled_embed("a photo of a dog")
        second = text_embedder.pooled_embed("a photo of a dog")

        self.assertTrue(torch.equal(first, second))
        self.assertAlmostEqual(float(first.norm()), 1.0, places=6)

        image = random_image(16, seed=4, dtype=torch.float32)

        embedded = visual_embedder.embed_pixel(image)

        self.assertTrue(torch.equal(embedded, visual_embedder.embed_pixel(image)))
        self.assertAlmostEqual(float(embedded.norm()), 1.0, places=6)
        self.assertEqual(embedded.shape[0], text_embedder.feature_dim)

    # -----------------------------------------------------------------------------

    def test_condition_embedding(self) -> None:
        text_embedder, _ = make_toy_embedders(dim=16, seed=0, condition_dim=6)

        self.assertEqual(tuple(text_embedder.embed("a cat").shape), (6,))

    # -----------------------------------------------------------------------------

    def test_concept_token(self) -> None:
        text_embedder, _ = make_toy_embedders(dim=16, seed=0)

        vector = torch.zeros(16)
        vector[0] = 2.0

        text_embedder.add_concept("<sks>", vector)

        self.assertTrue(torch.allclose(text_embedder.pooled_embed("<sks>"), torch.eye(16)[0]))

    # -----------------------------------------------------------------------------

    def test_too_small_dimension(self) -> None:
        with self.assertRaises(InvalidConfigurationException):
            make_toy_embedders(dim=4, seed=0)


class TestPaletteSegmenter(unittest.TestCase):
    def test_colour_region(self) -> None:
        image = torch.full((3, 8, 8), 0.5)
        image[:, 2:4, 2:6] = torch.tensor([1.0, 0.0, 0.0]).view(3, 1, 1)

        mask = PaletteSegmenter().segment(image, "red")

        self.assertTrue(bool((mask[2:4, 2:6] > 0.99).all()))
        self.assertLess(float(mask[0, 0]), 1e-3)
        self.assertTrue(torch.equal(PaletteSegmenter().segment(image, "cat"), torch.zeros((8, 8))))


class TestBackendsStorage(unittest.TestCase):
    def setUp(self) -> None:
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

        self.bundle = toy_backends(size=16, factor=2, dtype=torch.float32)

        BackendsWriter().write(self.bundle, self.root)

    # -----------------------------------------------------------------------------

    def tearDown(self) -> None:
        self.directory.cleanup()

    # -----------------------------------------------------------------------------

    def test_round_trip_one_denoise_step(self) -> None:
        loaded = BackendsLoader().load(self.root)

        self.assertEqual(loaded.autoencoder.spatial_factor, 2)
        self.assertEqual(loaded.denoiser.latent_shape, self.bundle.denoiser.latent_shape)

        latent = torch.randn(self.bundle.denoiser.latent_shape, generator=torch.Generator().manual_seed(0))
        condition = self.bundle.text_embedder.embed("a dog")
        timesteps = torch.tensor([0.3, 0.5])

        expected = DdimSolver.reverse_step(
            latent,
            self.bundle.denoiser.predict(latent, timesteps[1], condition),
            timesteps[1],
            timesteps[0],
            self.bundle.schedule,
        )
        restored = DdimSolver.reverse_step(
            latent,
            loaded.denoiser.predict(latent, timesteps[1], loaded.text_embedder.embed("a dog")),
            timesteps[1],
            timesteps[0],
            loaded.schedule,
        )

        self.assertTrue(torch.allclose(restored, expected, atol=1e-4))

    # -----------------------------------------------------------------------------

    def test_embedders_restored(self) -> None:
        loaded = BackendsLoader().load(self.root)

        image = random_image(16, seed=9, dtype=torch.float32)

        self.assertTrue(
            torch.equal(loaded.text_embedder.pooled_embed("a cat"), self.bundle.text_embedder.pooled_embed("a cat"))
        )
        self.assertTrue(
            torch.allclose(
                loaded.visual_embedder.embed_pixel(image),
                self.bundle.visual_embedder.embed_pixel(image),
                atol=1e-6,
            )
        )
        self.assertIsNotNone(loaded.segmenter)
        self.assertIsNotNone(loaded.dino)
        self.assertIsNone(loaded.visual_embedder.latent_encoder(EncoderRole.SEMANTIC))

    # -----------------------------------------------------------------------------

    def test_missing_schedule_table(self) -> None:
        self.__rewrite_denoiser_manifest(lambda line: not line.startswith("schedule_table="))

        with self.assertRaises(InvalidConfigurationException) as context:
            BackendsLoader().load(self.root)

        self.assertIn("schedule_table", str(context.exception))

    # -----------------------------------------------------------------------------

    def test_mismatched_latent_shape(self) -> None:
        self.__rewrite_denoiser_manifest(
            lambda line: True,
            replace=("latent_shape=", "latent_shape=4,8,8"),
        )

        with self.assertRaises(ShapeMismatchException):
            BackendsLoader().load(self.root)

    # -----------------------------------------------------------------------------

    def test_missing_directory(self) -> None:
        with self.assertRaises(InvalidConfigurationException):
            BackendsLoader().load(self.root / "missing")

    # -----------------------------------------------------------------------------

    def __rewrite_denoiser_manifest(self, keep, replace=None) -> None:  # type: ignore[no-untyped-def]
        path = self.root / "denoiser" / MANIFEST_FILE

        lines = []

        for line in path.read_text(encoding="utf-8").splitlines():
            if not keep(line):
                continue

            if replace is not None and line.startswith(replace[0]):
                line = replace[1]

            lines.append(line)

        path.write_text("\n".join(lines) + "\n", encoding="utf-8")


if __name__ == "__main__":
    unittest.main()
