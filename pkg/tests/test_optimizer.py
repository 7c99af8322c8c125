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
import csv
import json
import tempfile
import unittest
from pathlib import Path

# Library dependencies
import pytest
import torch
from whistle import EventDispatcher

# Library libs
from fastybird_diffusion_editor.entities import (
    AblationFlags,
    AuxiliaryInputs,
    EditRequest,
    RunConfig,
)
from fastybird_diffusion_editor.events.events import (
    OptimizationStepEvent,
    RunAbortedEvent,
    RunFinishedEvent,
    RunStartedEvent,
)
from fastybird_diffusion_editor.evaluation.metrics import MetricsCalculator
from fastybird_diffusion_editor.exceptions import (
    InvalidConfigurationException,
    NonFiniteException,
)
from fastybird_diffusion_editor.optimizer.editor import NoiseTimestepOptimizer
from fastybird_diffusion_editor.optimizer.records import TrajectoryLog
from fastybird_diffusion_editor.types import T_MIN, AblationMode, EditTaskKind
from tests.helpers import (
    FailingDenoiser,
    block_image,
    collect_events,
    toy_backends,
    toy_optimizer,
    with_denoiser,
)


def style_request(seed: int = 0, size: int = 16) -> EditRequest:
    return EditRequest(
        image=block_image(size, 2, seed=seed),
        source_prompt="a photo of a house",
        target_prompt="a painting of a house",
        task=EditTaskKind.STYLE_TRANSFER,
        sample_id=f"style-{seed}",
    )


class TestRunConfig(unittest.TestCase):
    def test_defaults(self) -> None:
        values = RunConfig().to_dict()

        self.assertEqual(values["K"], 10)
        self.assertEqual(values["T"], 0.75)
        self.assertEqual(values["W"], 50)
        self.assertEqual(values["lr_t"], 1.0)
        self.assertEqual(values["lr_noise"], 0.005)
        self.assertEqual(values["weights"], {"lambda_sem": 1.0, "lambda_perc": 0.5, "lambda_ref": 1.0})
        self.assertEqual(values["optimizer_betas"], [0.9, 0.999])
        self.assertEqual(values["weight_decay"], 0.0)
        self.assertEqual(values["sem_mode"], "absolute_difference")
        self.assertEqual(values["loss_domain"], "latent")

    # -----------------------------------------------------------------------------

    def test_invalid_values(self) -> None:
        with self.assertRaises(InvalidConfigurationException):
            RunConfig(steps_count=0)

        with self.assertRaises(InvalidConfigurationException):
            RunConfig(optimization_steps=-1)

        with self.assertRaises(InvalidConfigurationException):
            RunConfig(start_timestep=0.0)

        with self.assertRaises(InvalidConfigurationException):
            RunConfig().replace(unknown=1)

    # -----------------------------------------------------------------------------

    def test_ablation_modes(self) -> None:
        self.assertTrue(AblationFlags.from_mode(AblationMode.CONST_T).freeze_timesteps)
        self.assertFalse(AblationFlags.from_mode(AblationMode.CONST_T).freeze_noise)
        self.assertTrue(AblationFlags.from_mode(AblationMode.CONST_N).freeze_noise)
        self.assertTrue(AblationFlags.from_mode(AblationMode.FULL_MASK).full_mask)
        self.assertEqual(AblationFlags.from_mode(AblationMode.NONE).to_dict(), AblationFlags().to_dict())


class TestOptimizerState(unittest.TestCase):
    def test_initial_state(self) -> None:
        config = RunConfig(steps_count=10, start_timestep=0.75, seed=4)

        state = NoiseTimestepOptimizer.init_state(config, (4, 8, 8), dtype=torch.float64)

        self.assertTrue(state.free_timesteps.is_leaf)
        self.assertTrue(state.noise.is_leaf)
        self.assertEqual(state.steps_count, 10)
        self.assertEqual(float(state.timesteps[0]), 0.0)
        self.assertAlmostEqual(float(state.timesteps[5]), 0.375)
        self.assertAlmostEqual(float(state.timesteps[10]), 0.75)

        repeated = NoiseTimestepOptimizer.init_state(config, (4, 8, 8), dtype=torch.float64)

        self.assertTrue(torch.equal(state.noise, repeated.noise))

    # -----------------------------------------------------------------------------

    def test_zero_gradients_keep_values(self) -> None:
        config = RunConfig(steps_count=4, start_timestep=0.8)

        state = NoiseTimestepOptimizer.init_state(config, (4, 4, 4), dtype=torch.float64)
        timesteps, noise = state.snapshot()

        NoiseTimestepOptimizer.apply_update(
            state,
            (torch.zeros_like(state.free_timesteps), torch.zeros_like(state.noise)),
            config,
        )

        self.assertEqual(state.step, 1)
        self.assertTrue(torch.equal(state.timesteps.detach(), timesteps))
        self.assertTrue(torch.equal(state.noise.detach(), noise))
        self.assertIsNotNone(state.timesteps_moments)

    # -----------------------------------------------------------------------------

    def test_timesteps_clamped(self) -> None:
        config = RunConfig(steps_count=2, start_timestep=0.5, lr_timesteps=1.0)

        state = NoiseTimestepOptimizer.init_state(config, (4, 4, 4), dtype=torch.float64)

        # Adam first step moves every timestep by lr against the gradient sign
        NoiseTimestepOptimizer.apply_update(
            state,
            (torch.ones_like(state.free_timesteps), torch.zeros_like(state.noise)),
            config,
        )

        self.assertTrue(torch.allclose(state.free_timesteps.detach(), torch.full((2,), T_MIN, dtype=torch.float64)))

    # -----------------------------------------------------------------------------

    def test_monotonic_sorting(self) -> None:
        config = RunConfig(steps_count=2, start_timestep=0.5, lr_timesteps=0.4, enforce_monotonic_t=True)

        state = NoiseTimestepOptimizer.init_state(config, (4, 4, 4), dtype=torch.float64)

        NoiseTimestepOptimizer.apply_update(
            state,
            (torch.tensor([-1.0, 1.0], dtype=torch.float64), torch.zeros_like(state.noise)),
            config,
        )

        values = state.free_timesteps.detach()

        self.assertLessEqual(float(values[0]), float(values[1]))
        self.assertAlmostEqual(float(values[0]), 0.1, places=6)
        self.assertAlmostEqual(float(values[1]), 0.65, places=6)

    # -----------------------------------------------------------------------------

    def test_non_finite_gradients(self) -> None:
        config = RunConfig(steps_count=2)

        state = NoiseTimestepOptimizer.init_state(config, (4, 4, 4), dtype=torch.float64)
        gradient = torch.zeros_like(state.noise)
        gradient[0, 0, 0] = float("nan")

        with self.assertRaises(NonFiniteException):
            NoiseTimestepOptimizer.apply_update(state, (torch.zeros_like(state.free_timesteps), gradient), config)


class TestEditingRun(unittest.TestCase):
    def setUp(self) -> None:
        self.backends = toy_backends(size=16, factor=2, dtype=torch.float64)
        self.dispatcher = EventDispatcher()
        self.optimizer = toy_optimizer(self.backends, self.dispatcher)

    # -----------------------------------------------------------------------------

    def test_trajectory_shape_and_events(self) -> None:
        started = collect_events(self.dispatcher, RunStartedEvent.EVENT_NAME)
        steps = collect_events(self.dispatcher, OptimizationStepEvent.EVENT_NAME)
        finished = collect_events(self.dispatcher, RunFinishedEvent.EVENT_NAME)

        result = self.optimizer.run(style_request(), RunConfig(steps_count=3, optimization_steps=4))

        self.assertEqual(len(result.trajectory.records), 4)
        self.assertEqual([record.w for record in result.trajectory.records], [0, 1, 2, 3])

        for record in result.trajectory.records:
            self.assertEqual(len(record.timesteps), 4)
            self.assertEqual(record.timesteps[0], 0.0)
            self.assertEqual(set(record.noise.keys()), {"min", "max", "mean", "std"})

        self.assertEqual(len(started), 1)
        self.assertEqual(len(steps), 4)
        self.assertEqual(len(finished), 1)
        self.assertIs(finished[0].result, result)
        self.assertEqual(tuple(result.output_image.shape), (3, 16, 16))
        self.assertEqual(result.best_step, 3)
        self.assertFalse(result.aborted)

    # -----------------------------------------------------------------------------

    def test_empty_region_keeps_original(self) -> None:
        image = block_image(16, 2, seed=5)

        request = EditRequest(
            image=image,
            source_prompt="a field",
            target_prompt="a field with a dog",
            task=EditTaskKind.ADD_OBJECT,
            aux=AuxiliaryInputs(region_mask=torch.zeros((16, 16), dtype=torch.float64)),
        )

        result = self.optimizer.run(request, RunConfig(steps_count=3, optimization_steps=3))

        latent = self.backends.autoencoder.encode(image)

        self.assertTrue(torch.equal(result.final_latent, latent))
        self.assertTrue(torch.equal(result.output_image, self.backends.autoencoder.decode(latent)))
        self.assertTrue(result.latent_mask.is_empty)

    # -----------------------------------------------------------------------------

    def test_unmasked_cells_keep_original_for_every_task(self) -> None:
        image = torch.full((3, 16, 16), 0.5, dtype=torch.float64)
        image[:, 0:4, 0:6] = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64).view(3, 1, 1)

        changed = image.clone()
        changed[:, 8:12, 10:14] = 0.1

        region = torch.zeros((16, 16), dtype=torch.float64)
        region[2:6, 8:12] = 1.0

        requests = [
            EditRequest(image, "a red ball", "a blue ball", EditTaskKind.REPLACE_OBJECT),
            EditRequest(image, "a photo", "a painting", EditTaskKind.STYLE_TRANSFER),
            EditRequest(
                image,
                "a wall",
                "a wall with a dog",
                EditTaskKind.ADD_OBJECT,
                aux=AuxiliaryInputs(region_mask=region),
            ),
            EditRequest(image, "a wall", "a wall", EditTaskKind.STROKE, aux=AuxiliaryInputs(stroke_image=changed)),
            EditRequest(image, "a wall", "a wall", EditTaskKind.COMPOSE, aux=AuxiliaryInputs(composed_image=changed)),
        ]

        latent = self.backends.autoencoder.encode(image)
        restored = self.backends.autoencoder.decode(latent)

        for request in requests:
            result = self.optimizer.run(request, RunConfig(steps_count=2, optimization_steps=2, lr_noise=1e-2))

            kept = result.latent_mask.data == 0
            pixels = kept.repeat_interleave(2, dim=0).repeat_interleave(2, dim=1)

            if request.task == EditTaskKind.STYLE_TRANSFER:
                self.assertFalse(bool(kept.any()))

            else:
                self.assertTrue(bool(kept.any()))
                self.assertFalse(bool(kept.all()))

            self.assertTrue(torch.equal(result.final_latent[:, kept], latent[:, kept]))
            self.assertTrue(torch.allclose(result.output_image[:, pixels], restored[:, pixels], atol=1e-12))

    # -----------------------------------------------------------------------------

    def test_frozen_variables_match_single_pass(self) -> None:
        config = RunConfig(steps_count=3, seed=2)

        single = self.optimizer.run(style_request(), config.replace(optimization_steps=0))
        frozen = self.optimizer.run(
            style_request(),
            config.replace(
                optimization_steps=3,
                ablation=AblationFlags(freeze_timesteps=True, freeze_noise=True),
            ),
        )

        self.assertTrue(torch.equal(single.final_latent, frozen.final_latent))
        self.assertTrue(torch.equal(single.output_image, frozen.output_image))
        self.assertEqual(len(single.trajectory.records), 0)

        timesteps = [record.timesteps for record in frozen.trajectory.records]

        self.assertTrue(all(item == timesteps[0] for item in timesteps))

    # -----------------------------------------------------------------------------

    def test_constant_timesteps_ablation(self) -> None:
        result = self.optimizer.run(
            style_request(),
            RunConfig(
                steps_count=3,
                optimization_steps=4,
                lr_noise=1e-2,
                ablation=AblationFlags.from_mode(AblationMode.CONST_T),
            ),
        )

        records = result.trajectory.records

        self.assertTrue(all(record.timesteps == records[0].timesteps for record in records))
        self.assertNotEqual(records[0].noise, records[-1].noise)

    # -----------------------------------------------------------------------------

    def test_determinism(self) -> None:
        config = RunConfig(steps_count=2, optimization_steps=3, seed=7)

        first = self.optimizer.run(style_request(), config)
        second = self.optimizer.run(style_request(), config)

        self.assertEqual(first.trajectory.to_dict(), second.trajectory.to_dict())
        self.assertTrue(torch.equal(first.output_image, second.output_image))

    # -----------------------------------------------------------------------------

    def test_descent_over_seeds(self) -> None:
        descended = 0

        for seed in range(20):
            result = self.optimizer.run(
                style_request(seed=seed),
                RunConfig(steps_count=3, optimization_steps=20, lr_timesteps=1e-3, lr_noise=1e-3, seed=seed),
            )

            totals = result.trajectory.totals()

            if totals[-1] <= totals[0]:
                descended += 1

        self.assertGreaterEqual(descended, 19)

    # -----------------------------------------------------------------------------

    def test_snapshots(self) -> None:
        result = self.optimizer.run(style_request(), RunConfig(steps_count=2, optimization_steps=5, snapshot_every=2))

        self.assertEqual(sorted(result.snapshots.keys()), [0, 2, 4])
        self.assertEqual(tuple(result.snapshots[0].shape), (3, 16, 16))

    # -----------------------------------------------------------------------------

    def test_non_finite_denoiser_aborts_with_best_iterate(self) -> None:
        denoiser = FailingDenoiser(self.backends.denoiser)
        dispatcher = EventDispatcher()
        optimizer = toy_optimizer(with_denoiser(self.backends, denoiser), dispatcher)

        steps = collect_events(dispatcher, OptimizationStepEvent.EVENT_NAME)
        aborted = collect_events(dispatcher, RunAbortedEvent.EVENT_NAME)

        def fail_after_three_steps(event: OptimizationStepEvent) -> None:
            if event.record.w == 2:
                denoiser.failing = True

        dispatcher.add_listener(event_id=OptimizationStepEvent.EVENT_NAME, listener=fail_after_three_steps)

        result = optimizer.run(style_request(), RunConfig(steps_count=3, optimization_steps=6))

        totals = result.trajectory.totals()

        self.assertTrue(result.aborted)
        self.assertEqual(len(result.trajectory.records), 3)
        self.assertEqual(len(steps), 3)
        self.assertEqual(len(aborted), 1)
        self.assertEqual(aborted[0].step, 3)
        self.assertEqual(result.best_step, min(range(3), key=lambda index: totals[index]))
        self.assertTrue(bool(torch.isfinite(result.output_image).all()))
        self.assertTrue(bool(torch.isfinite(result.final_latent).all()))

    # -----------------------------------------------------------------------------

    def test_result_files(self) -> None:
        result = self.optimizer.run(style_request(), RunConfig(steps_count=2, optimization_steps=2))

        with tempfile.TemporaryDirectory() as directory:
            result.save(directory)

            self.assertTrue((Path(directory) / "result.png").is_file())
            self.assertTrue((Path(directory) / "mask.png").is_file())

            restored = TrajectoryLog.load(Path(directory) / "trajectory.json")
            plot_data = json.loads((Path(directory) / "plot_data.json").read_text(encoding="utf-8"))

        self.assertEqual(restored.totals(), result.trajectory.totals())
        self.assertEqual(restored.config["K"], 2)
        self.assertEqual(plot_data, result.trajectory.plot_series())

    # -----------------------------------------------------------------------------

    def test_plot_series_average(self) -> None:
        config = RunConfig(steps_count=2, optimization_steps=3)

        logs = [self.optimizer.run(style_request(), config.replace(seed=seed)).trajectory for seed in range(2)]

        averaged = TrajectoryLog.average(logs)
        series = [log.plot_series() for log in logs]

        self.assertEqual(averaged["timesteps"]["w"], [0, 1, 2])
        self.assertEqual(set(averaged["timesteps"].keys()), {"w", "t_0", "t_1", "t_2"})

        for index in range(3):
            self.assertAlmostEqual(
                averaged["noise"]["std"][index],
                (series[0]["noise"]["std"][index] + series[1]["noise"]["std"][index]) / 2,
                places=12,
            )

    # -----------------------------------------------------------------------------

    def test_chain_feeds_outputs(self) -> None:
        requests = [style_request(seed=0), style_request(seed=1)]

        config = RunConfig(steps_count=2, optimization_steps=0)

        results = self.optimizer.run_chain(requests, config)

        self.assertEqual(len(results), 2)

        expected = self.optimizer.run(requests[1].with_image(results[0].output_image), config)

        self.assertTrue(torch.equal(results[1].output_image, expected.output_image))

        with self.assertRaises(InvalidConfigurationException):
            self.optimizer.run_chain([], RunConfig())

    # -----------------------------------------------------------------------------

    @pytest.mark.slow
    def test_default_configuration_run(self) -> None:
        result = self.optimizer.run(style_request(), RunConfig())

        self.assertEqual(len(result.trajectory.records), 50)
        self.assertTrue(all(len(record.timesteps) == 11 for record in result.trajectory.records))
        self.assertTrue(bool(torch.isfinite(result.output_image).all()))


class TestSweep(unittest.TestCase):
    def test_grid(self) -> None:
        backends = toy_backends(size=16, factor=2, dtype=torch.float64)
        optimizer = toy_optimizer(backends)
        metrics = MetricsCalculator(backends.text_embedder, backends.visual_embedder, backends.dino)

        request = style_request()

        grid = optimizer.sweep(request, [0.3, 0.6, 0.9], [0, 1], RunConfig(steps_count=2))

        self.assertEqual(grid.shape, (2, 3))

        cell = grid.cell(1, 2)

        self.assertEqual(cell.seed, 1)
        self.assertEqual(cell.start_timestep, 0.9)
        self.assertIsNone(cell.error)
        self.assertIsNotNone(cell.result)
        self.assertAlmostEqual(
            float(cell.metrics["clip_i"]),  # type: ignore[arg-type]
            metrics.clip_i(cell.result.output_image, request.image),  # type: ignore[union-attr]
            places=6,
        )

        with tempfile.TemporaryDirectory() as directory:
            grid.write(directory)

            with open(Path(directory) / "index.csv", encoding="utf-8") as index_file:
                rows = list(csv.reader(index_file))

            cells_dirs = sorted(path.name for path in Path(directory).iterdir() if path.is_dir())

        self.assertEqual(rows[0][:4], ["row", "column", "seed", "T"])
        self.assertEqual(len(rows), 7)
        self.assertEqual(len(cells_dirs), 6)
        self.assertIn("cell_1_2_seed_1_T_0.9", cells_dirs)

    # -----------------------------------------------------------------------------

    def test_empty_grid(self) -> None:
        optimizer = toy_optimizer(toy_backends())

        with self.assertRaises(InvalidConfigurationException):
            optimizer.sweep(style_request(), [], [0])

    # -----------------------------------------------------------------------------

    def test_repeated_axis_values(self) -> None:
        optimizer = toy_optimizer(toy_backends())

        with self.assertRaises(InvalidConfigurationException):
            optimizer.sweep(style_request(), [0.5, 0.5], [0])

        with self.assertRaises(InvalidConfigurationException):
            optimizer.sweep(style_request(), [0.5], [3, 3])


if __name__ == "__main__":
    unittest.main()
