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
import logging
import unittest

# Library dependencies
import torch

# Library libs
from fastybird_diffusion_editor.backends.toy import PaletteSegmenter
from fastybird_diffusion_editor.entities import AuxiliaryInputs, EditRequest
from fastybird_diffusion_editor.exceptions import DomainException, MaskException
from fastybird_diffusion_editor.masking.masks import Mask, MaskBuilder
from fastybird_diffusion_editor.types import EditTaskKind, MaskResolution
from tests.helpers import TESTS_LOGGER, random_image


class TestTokenDiff(unittest.TestCase):
    def setUp(self) -> None:
        self.builder = MaskBuilder()

    # -----------------------------------------------------------------------------

    def test_replaced_word(self) -> None:
        self.assertEqual(self.builder.token_diff("sandwich", "cake"), ["sandwich"])
        self.assertEqual(self.builder.token_diff("a photo of a cat", "a photo of a dog"), ["cat"])

    # -----------------------------------------------------------------------------

    def test_identical_prompts(self) -> None:
        self.assertEqual(self.builder.token_diff("a red car", "a red car"), [])

    # -----------------------------------------------------------------------------

    def test_case_and_punctuation(self) -> None:
        self.assertEqual(self.builder.token_diff("The Red, car!", "the blue car"), ["red"])

    # -----------------------------------------------------------------------------

    def test_custom_stopwords(self) -> None:
        builder = MaskBuilder(stopwords=["cat"])

        self.assertEqual(builder.token_diff("the cat", "a dog"), ["the"])


class TestMask(unittest.TestCase):
    def test_values_validated(self) -> None:
        with self.assertRaises(DomainException):
            Mask(torch.tensor([[0.0, 1.5]]))

    # -----------------------------------------------------------------------------

    def test_binarize_and_coverage(self) -> None:
        mask = Mask(torch.tensor([[0.2, 0.5], [0.7, 0.0]]))

        binary = mask.binarize(0.5)

        self.assertTrue(torch.equal(binary.data, torch.tensor([[0.0, 1.0], [1.0, 0.0]])))
        self.assertAlmostEqual(binary.coverage, 0.5)
        self.assertFalse(binary.is_empty)
        self.assertTrue(Mask(torch.zeros(2, 2)).is_empty)


class TestLatentResolution(unittest.TestCase):
    def test_single_pixel_marks_cell(self) -> None:
        data = torch.zeros(16, 16)
        data[9, 3] = 1.0

        latent = MaskBuilder.to_latent_resolution(Mask(data), 8)

        expected = torch.zeros(2, 2)
        expected[1, 0] = 1.0

        self.assertEqual(latent.resolution, MaskResolution.LATENT)
        self.assertTrue(torch.equal(latent.data, expected))

    # -----------------------------------------------------------------------------

    def test_checkerboard(self) -> None:
        data = ((torch.arange(4).view(4, 1) + torch.arange(4).view(1, 4)) % 2).float()

        latent = MaskBuilder.to_latent_resolution(Mask(data), 2)

        self.assertTrue(torch.equal(latent.data, torch.ones(2, 2)))

    # -----------------------------------------------------------------------------

    def test_already_latent(self) -> None:
        with self.assertRaises(MaskException):
            MaskBuilder.to_latent_resolution(Mask.ones(2, 2, MaskResolution.LATENT), 2)


class TestComputeMask(unittest.TestCase):
    def setUp(self) -> None:
        self.builder = MaskBuilder(logger=logging.getLogger(TESTS_LOGGER))
        self.image = random_image(8, seed=11)

    # -----------------------------------------------------------------------------

    def test_style_transfer_selects_everything(self) -> None:
        request = EditRequest(self.image, "a photo", "a painting", EditTaskKind.STYLE_TRANSFER)

        self.assertTrue(torch.equal(self.builder.compute_mask(request).data, torch.ones(8, 8)))

    # -----------------------------------------------------------------------------

    def test_add_object_uses_region(self) -> None:
        region = torch.zeros(8, 8, dtype=self.image.dtype)
        region[2:5, 1:3] = 1.0

        request = EditRequest(
            self.image,
            "a field",
            "a field with a dog",
            EditTaskKind.ADD_OBJECT,
            aux=AuxiliaryInputs(region_mask=region),
        )

        self.assertTrue(torch.equal(self.builder.compute_mask(request).data, region))

    # -----------------------------------------------------------------------------

    def test_stroke_difference(self) -> None:
        stroke = self.image.clone()
        stroke[1, 4, 6] = stroke[1, 4, 6] + 0.5 if float(stroke[1, 4, 6]) < 0.5 else stroke[1, 4, 6] - 0.5
        stroke[0, 0, 0] = stroke[0, 0, 0] + 1.0 / 1024.0

        request = EditRequest(
            self.image,
            "a photo",
            "a photo with a stroke",
            EditTaskKind.STROKE,
            aux=AuxiliaryInputs(stroke_image=stroke),
        )

        expected = torch.zeros(8, 8, dtype=self.image.dtype)
        expected[4, 6] = 1.0

        self.assertTrue(torch.equal(self.builder.compute_mask(request).data, expected))

    # -----------------------------------------------------------------------------

    def test_exact_difference(self) -> None:
        other = self.image.clone()
        other[2, 3, 3] = other[2, 3, 3] + 1e-6

        mask = self.builder.difference_mask(self.image, other, exact=True)

        self.assertEqual(float(mask.data.sum()), 1.0)
        self.assertEqual(float(mask.data[3, 3]), 1.0)

    # -----------------------------------------------------------------------------

    def test_unchanged_stroke_warns(self) -> None:
        request = EditRequest(
            self.image,
            "a photo",
            "a photo",
            EditTaskKind.STROKE,
            aux=AuxiliaryInputs(stroke_image=self.image.clone()),
        )

        with self.assertLogs(TESTS_LOGGER, "WARNING") as logs:
            mask = self.builder.compute_mask(request)

        self.assertTrue(mask.is_empty)
        self.assertTrue(any("empty edit region" in line for line in logs.output))

    # -----------------------------------------------------------------------------

    def test_compose_difference(self) -> None:
        composed = self.image.clone()
        composed[:, 0:2, 0:2] = 1.0 - composed[:, 0:2, 0:2]

        request = EditRequest(
            self.image,
            "a photo",
            "a photo",
            EditTaskKind.COMPOSE,
            aux=AuxiliaryInputs(composed_image=composed),
        )

        mask = self.builder.compute_mask(request)

        self.assertEqual(float(mask.data[2:, :].sum() + mask.data[:, 2:].sum()), 0.0)
        self.assertGreater(float(mask.data[0:2, 0:2].sum()), 0.0)

    # -----------------------------------------------------------------------------

    def test_replace_segments_removed_object(self) -> None:
        image = torch.full((3, 8, 8), 0.5, dtype=torch.float64)
        image[:, 4:8, 0:4] = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64).view(3, 1, 1)

        request = EditRequest(image, "a red ball", "a blue ball", EditTaskKind.REPLACE_OBJECT)

        mask = self.builder.compute_mask(request, PaletteSegmenter())

        expected = torch.zeros(8, 8, dtype=torch.float64)
        expected[4:8, 0:4] = 1.0

        self.assertTrue(torch.equal(mask.data, expected))

    # -----------------------------------------------------------------------------

    def test_replace_explicit_objects(self) -> None:
        image = torch.full((3, 8, 8), 0.5, dtype=torch.float64)
        image[:, 0:2, :] = torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64).view(3, 1, 1)

        request = EditRequest(
            image,
            "a photo",
            "a photo",
            EditTaskKind.REPLACE_OBJECT,
            edit_objects=["green"],
        )

        mask = self.builder.compute_mask(request, PaletteSegmenter())

        self.assertEqual(float(mask.data[0:2, :].sum()), 16.0)
        self.assertEqual(float(mask.data[2:, :].sum()), 0.0)

    # -----------------------------------------------------------------------------

    def test_replace_without_target(self) -> None:
        request = EditRequest(self.image, "a cat", "a cat", EditTaskKind.REPLACE_OBJECT)

        with self.assertRaises(MaskException) as context:
            self.builder.compute_mask(request, PaletteSegmenter())

        self.assertIn("--edit-object", str(context.exception))

    # -----------------------------------------------------------------------------

    def test_missing_auxiliary_input(self) -> None:
        with self.assertRaises(MaskException):
            EditRequest(self.image, "a photo", "a photo", EditTaskKind.STROKE)


if __name__ == "__main__":
    unittest.main()
