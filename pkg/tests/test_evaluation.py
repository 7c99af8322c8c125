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
import json
import logging
import math
import tempfile
import unittest
from pathlib import Path

# Library dependencies
import pytest
import torch
from whistle import EventDispatcher

# Library libs
from fastybird_diffusion_editor.entities import RunConfig
from fastybird_diffusion_editor.evaluation.benchmark import LossCostBenchmark
from fastybird_diffusion_editor.evaluation.metrics import (
    METRIC_NAMES,
    MetricReport,
    MetricsCalculator,
)
from fastybird_diffusion_editor.evaluation.testset import (
    TestSample,
    TestsetEvaluator,
    load_manifest,
    synthesize_testset,
    write_manifest,
)
from fastybird_diffusion_editor.events.events import SampleEvaluatedEvent
from fastybird_diffusion_editor.exceptions import EvaluationException
from fastybird_diffusion_editor.helpers import ImageHelpers, TextHelpers
from fastybird_diffusion_editor.types import EditTaskKind
from tests.helpers import TESTS_LOGGER, block_image, collect_events, toy_backends, toy_optimizer


class TestMetrics(unittest.TestCase):
    def setUp(self) -> None:
        self.backends = toy_backends(size=16, factor=2, dtype=torch.float32)
        self.metrics = MetricsCalculator(
            self.backends.text_embedder,
            self.backends.visual_embedder,
            self.backends.dino,
        )

    # -----------------------------------------------------------------------------

    def test_identical_images(self) -> None:
        image = block_image(16, 2, seed=1, dtype=torch.float32)

        self.assertAlmostEqual(self.metrics.clip_i(image, image), 1.0, places=6)
        self.assertAlmostEqual(self.metrics.dino_i(image, image), 1.0, places=6)

    # -----------------------------------------------------------------------------

    def test_compute_keys(self) -> None:
        image = block_image(16, 2, seed=1, dtype=torch.float32)
        other = block_image(16, 2, seed=2, dtype=torch.float32)

        values = self.metrics.compute(image, other, "a dog", {"r": other})

        self.assertEqual(set(values.keys()), set(METRIC_NAMES))
        self.assertIsNone(values["clip_i_s"])
        self.assertAlmostEqual(float(values["clip_i_r"]), float(values["clip_i"]), places=6)  # type: ignore[arg-type]
        self.assertLessEqual(abs(float(values["clip_t"])), 1.0)  # type: ignore[arg-type]

    # -----------------------------------------------------------------------------

    def test_report_means(self) -> None:
        report = MetricReport()

        report.add_sample("a", {"clip_t": 0.1, "clip_i": 0.5, "dino_i": None})
        report.add_sample("b", {"clip_t": 0.3, "clip_i": 0.7, "dino_i": 0.9})
        report.add_failure("c", "broken")

        means = report.means()

        self.assertEqual(report.count, 2)
        self.assertAlmostEqual(float(means["clip_t"]), 0.2)  # type: ignore[arg-type]
        self.assertAlmostEqual(float(means["clip_i"]), 0.6)  # type: ignore[arg-type]
        self.assertAlmostEqual(float(means["dino_i"]), 0.9)  # type: ignore[arg-type]
        self.assertIsNone(means["clip_i_r"])
        self.assertEqual(report.to_dict()["failed"], 1)


class TestTestsetEvaluation(unittest.TestCase):
    def setUp(self) -> None:
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

        self.backends = toy_backends(size=32, factor=2, dtype=torch.float32)
        self.dispatcher = EventDispatcher()

        self.evaluator = TestsetEvaluator(
            editor=toy_optimizer(self.backends, self.dispatcher),
            metrics=MetricsCalculator(
                self.backends.text_embedder,
                self.backends.visual_embedder,
                self.backends.dino,
            ),
            event_dispatcher=self.dispatcher,
            logger=logging.getLogger(TESTS_LOGGER),
        )

        self.config = RunConfig(steps_count=2, optimization_steps=2)

    # -----------------------------------------------------------------------------

    def tearDown(self) -> None:
        self.directory.cleanup()

    # -----------------------------------------------------------------------------

    def test_unchanged_region_sample(self) -> None:
        image_path = self.root / "image.png"
        mask_path = self.root / "mask.png"

        ImageHelpers.save_image(block_image(32, 2, seed=3, dtype=torch.float32), image_path)
        ImageHelpers.save_mask(torch.zeros((32, 32)), mask_path)

        manifest = write_manifest(
            [
                TestSample(
                    sample_id="still",
                    task=EditTaskKind.ADD_OBJECT,
                    image=image_path,
                    source_prompt="a photo",
                    prompt="a photo with a ball",
                    mask=mask_path,
                )
            ],
            self.root / "manifest.jsonl",
        )

        report = self.evaluator.evaluate_testset(manifest, self.config, self.root / "out")

        self.assertEqual(report.count, 1)
        self.assertAlmostEqual(float(report.means()["clip_i"]), 1.0, places=5)  # type: ignore[arg-type]

    # -----------------------------------------------------------------------------

    def test_empty_manifest(self) -> None:
        manifest = self.root / "manifest.jsonl"
        manifest.write_text("\n", encoding="utf-8")

        with self.assertRaises(EvaluationException) as context:
            load_manifest(manifest)

        self.assertIn("no samples", str(context.exception))

        with self.assertRaises(EvaluationException):
            self.evaluator.evaluate_testset([], self.config, self.root / "out")

    # -----------------------------------------------------------------------------

    def test_synthetic_testset_means(self) -> None:
        evaluated = collect_events(self.dispatcher, SampleEvaluatedEvent.EVENT_NAME)

        manifest = synthesize_testset(self.root / "set", count=5, size=32, seed=1)

        samples = load_manifest(manifest)

        self.assertEqual(
            [sample.task for sample in samples],
            [
                EditTaskKind.STYLE_TRANSFER,
                EditTaskKind.ADD_OBJECT,
                EditTaskKind.STROKE,
                EditTaskKind.COMPOSE,
                EditTaskKind.REPLACE_OBJECT,
            ],
        )

        report = self.evaluator.evaluate_testset(manifest, self.config, self.root / "out")

        self.assertEqual(report.count, 5)
        self.assertEqual(len(evaluated), 5)

        means = report.means()

        for name in ("clip_t", "clip_i", "dino_i"):
            values = [float(metrics[name]) for _, metrics in report.samples]  # type: ignore[arg-type]

            self.assertAlmostEqual(float(means[name]), sum(values) / len(values), places=12)  # type: ignore[arg-type]

        # Only style transfer sample has reference image
        self.assertAlmostEqual(
            float(means["clip_i_r"]),  # type: ignore[arg-type]
            float(report.samples[0][1]["clip_i_r"]),  # type: ignore[arg-type]
            places=12,
        )

        self.assertTrue((self.root / "out" / "metrics.csv").is_file())

        stored = json.loads((self.root / "out" / "report.json").read_text(encoding="utf-8"))

        self.assertEqual(stored["count"], 5)
        self.assertTrue(math.isclose(stored["means"]["clip_i"], float(means["clip_i"])))  # type: ignore[arg-type]

        averaged = json.loads((self.root / "out" / "plot_data_average.json").read_text(encoding="utf-8"))

        self.assertEqual(averaged["timesteps"]["w"], [0, 1])
        self.assertEqual(set(averaged["timesteps"].keys()), {"w", "t_0", "t_1", "t_2"})
        self.assertEqual(set(averaged["noise"].keys()), {"w", "min", "max", "mean", "std"})

        for sample in samples:
            self.assertTrue((self.root / "out" / TextHelpers.slug(sample.sample_id) / "plot_data.json").is_file())

    # -----------------------------------------------------------------------------

    def test_failed_sample_excluded(self) -> None:
        manifest = synthesize_testset(self.root / "set", count=2, size=32, seed=2)

        samples = load_manifest(manifest)
        samples.append(
            TestSample(
                sample_id="missing",
                task=EditTaskKind.STYLE_TRANSFER,
                image=self.root / "missing.png",
                source_prompt="a photo",
                prompt="a painting",
            )
        )

        report = self.evaluator.evaluate_testset(samples, self.config, self.root / "out", workers=2)

        self.assertEqual(report.count, 2)
        self.assertEqual([sample_id for sample_id, _ in report.failures], ["missing"])
        self.assertEqual([sample_id for sample_id, _ in report.samples], [sample.sample_id for sample in samples[:2]])

    # -----------------------------------------------------------------------------

    def test_duplicate_sample_ids(self) -> None:
        samples = load_manifest(synthesize_testset(self.root / "set", count=2, size=32, seed=3))

        duplicated = TestSample(
            sample_id=samples[0].sample_id,
            task=EditTaskKind.REPLACE_OBJECT,
            image=samples[1].image,
            source_prompt="a photo",
            prompt=samples[1].prompt,
        )

        with self.assertRaises(EvaluationException) as context:
            self.evaluator.evaluate_testset([samples[0], duplicated], self.config, self.root / "out")

        self.assertIn("share output directory", str(context.exception))
        self.assertFalse((self.root / "out").exists())


class TestLossCostBenchmark(unittest.TestCase):
    def test_repetitions_required(self) -> None:
        with self.assertRaises(EvaluationException) as context:
            LossCostBenchmark().benchmark_latent_vs_pixel([64], repetitions=0)

        self.assertIn("repetition", str(context.exception))

    # -----------------------------------------------------------------------------

    def test_latent_mode_saves_less(self) -> None:
        report = LossCostBenchmark().benchmark_latent_vs_pixel([64], repetitions=1, factor=8)

        self.assertLess(report.memory_ratio(64), 1.0)
        self.assertEqual(report.to_dict()["sizes"][0]["size"], 64)
        self.assertGreater(report.time_ratio(64), 0.0)

    # -----------------------------------------------------------------------------

    @pytest.mark.slow
    def test_latent_mode_is_faster(self) -> None:
        report = LossCostBenchmark().benchmark_latent_vs_pixel([512], repetitions=5, factor=8)

        self.assertLessEqual(report.time_ratio(512), 0.7)


if __name__ == "__main__":
    unittest.main()
