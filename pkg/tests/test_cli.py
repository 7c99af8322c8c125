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
import hashlib
import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

# Library dependencies
import torch

# Library libs
from fastybird_diffusion_editor.backends.storage import BackendsLoader
from fastybird_diffusion_editor.cli import EXIT_FAILURE, EXIT_SUCCESS, EXIT_USAGE, main
from fastybird_diffusion_editor.helpers import ImageHelpers
from fastybird_diffusion_editor.optimizer.records import TrajectoryLog
from fastybird_diffusion_editor.types import BACKEND_DIR_ENV, MANIFEST_FILE, BackendComponent
from tests.helpers import block_image


@mock.patch.dict(os.environ, {BACKEND_DIR_ENV: ""})
class TestCommandLine(unittest.TestCase):
    def setUp(self) -> None:
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

        self.image = self.root / "photo.png"

        ImageHelpers.save_image(block_image(16, 2, seed=4, dtype=torch.float32), self.image)

    # -----------------------------------------------------------------------------

    def tearDown(self) -> None:
        self.directory.cleanup()

    # -----------------------------------------------------------------------------

    def test_edit_text(self) -> None:
        out = self.root / "out"

        code = main(
            [
                "edit-text",
                "--image", str(self.image),
                "--prompt", "a painting",
                "--task", "style_transfer",
                "--K", "2",
                "--W", "2",
                "--out", str(out),
            ]
        )  # fmt: skip

        self.assertEqual(code, EXIT_SUCCESS)

        results = list(out.rglob("result.png"))

        self.assertEqual(len(results), 1)
        self.assertTrue((results[0].parent / "trajectory.json").is_file())

        trajectory = TrajectoryLog.load(results[0].parent / "trajectory.json")

        self.assertEqual(len(trajectory.records), 2)
        self.assertEqual(len(trajectory.records[0].timesteps), 3)

    # -----------------------------------------------------------------------------

    def test_missing_prompt(self) -> None:
        self.assertEqual(main(["edit-text", "--image", str(self.image), "--out", str(self.root / "out")]), EXIT_USAGE)

    # -----------------------------------------------------------------------------

    def test_invalid_run_config(self) -> None:
        code = main(
            [
                "edit-text",
                "--image", str(self.image),
                "--prompt", "a painting",
                "--K", "0",
                "--out", str(self.root / "out"),
            ]
        )  # fmt: skip

        self.assertEqual(code, EXIT_USAGE)

    # -----------------------------------------------------------------------------

    def test_ablation(self) -> None:
        out = self.root / "ablate"

        code = main(
            [
                "ablate",
                "--mode", "const-t",
                "--image", str(self.image),
                "--prompt", "a painting",
                "--task", "style_transfer",
                "--K", "2",
                "--W", "2",
                "--out", str(out),
            ]
        )  # fmt: skip

        self.assertEqual(code, EXIT_SUCCESS)
        self.assertEqual(len(list(out.rglob("result.png"))), 1)

    # -----------------------------------------------------------------------------

    def run_edit(self, command: str, out: Path, *arguments: str) -> int:
        return main(
            [
                command,
                "--image", str(self.image),
                "--prompt", "a painting",
                "--K", "2",
                "--W", "1",
                "--out", str(out),
                *arguments,
            ]
        )  # fmt: skip

    # -----------------------------------------------------------------------------

    def test_edit_with_auxiliary_images(self) -> None:
        auxiliary = self.root / "auxiliary.png"

        ImageHelpers.save_image(block_image(16, 2, seed=5, dtype=torch.float32), auxiliary)

        for command, flag in (
            ("edit-ref", "--reference"),
            ("edit-stroke", "--stroke-image"),
            ("edit-compose", "--composed-image"),
        ):
            out = self.root / command

            self.assertEqual(self.run_edit(command, out, flag, str(auxiliary)), EXIT_SUCCESS)
            self.assertTrue((out / "result.png").is_file())
            self.assertTrue((out / "plot_data.json").is_file())

            # Task specific image is mandatory
            self.assertEqual(self.run_edit(command, self.root / f"{command}-missing"), EXIT_USAGE)

    # -----------------------------------------------------------------------------

    def test_edit_is_reproducible(self) -> None:
        digests = []

        for name in ("first", "second"):
            out = self.root / name

            self.assertEqual(self.run_edit("edit-text", out, "--task", "style_transfer", "--seed", "3"), EXIT_SUCCESS)

            digests.append(hashlib.sha256((out / "result.png").read_bytes()).hexdigest())

        self.assertEqual(digests[0], digests[1])

    # -----------------------------------------------------------------------------

    def test_edit_non_square_image(self) -> None:
        generator = torch.Generator().manual_seed(6)

        ImageHelpers.save_image(torch.rand((3, 16, 24), generator=generator), self.image)

        out = self.root / "wide"

        self.assertEqual(self.run_edit("edit-text", out, "--task", "style_transfer"), EXIT_SUCCESS)
        self.assertEqual(tuple(ImageHelpers.load_image(out / "result.png").shape), (3, 16, 24))

    # -----------------------------------------------------------------------------

    def test_sweep(self) -> None:
        out = self.root / "sweep"

        code = self.run_edit(
            "sweep",
            out,
            "--task", "style_transfer",
            "--T-values", "0.3", "0.6",
            "--seeds", "0", "1",
        )  # fmt: skip

        self.assertEqual(code, EXIT_SUCCESS)

        with open(out / "index.csv", encoding="utf-8") as index_file:
            rows = list(csv.reader(index_file))

        self.assertEqual(len(rows), 5)
        self.assertEqual(len(list(out.rglob("result.png"))), 4)

        # Repeated seeds would share cell directories
        self.assertEqual(
            self.run_edit("sweep", self.root / "repeated", "--T-values", "0.3", "--seeds", "1", "1"),
            EXIT_FAILURE,
        )

    # -----------------------------------------------------------------------------

    def test_chain(self) -> None:
        plan = self.root / "plan.jsonl"
        plan.write_text(
            "\n".join(
                json.dumps({"task": "style_transfer", "prompt": prompt})
                for prompt in ("a painting", "a watercolor painting")
            ),
            encoding="utf-8",
        )

        out = self.root / "chain"

        code = main(
            [
                "chain",
                "--image", str(self.image),
                "--plan", str(plan),
                "--K", "2",
                "--W", "1",
                "--out", str(out),
            ]
        )  # fmt: skip

        self.assertEqual(code, EXIT_SUCCESS)
        self.assertTrue((out / "step_00" / "result.png").is_file())
        self.assertTrue((out / "step_01" / "result.png").is_file())

        self.assertEqual(
            main(["chain", "--image", str(self.image), "--plan", str(self.root / "none.jsonl"), "--out", str(out)]),
            EXIT_USAGE,
        )

    # -----------------------------------------------------------------------------

    def test_distill(self) -> None:
        out = self.root / "distill"

        code = main(
            [
                "distill",
                "--role", "semantic",
                "--iterations", "4",
                "--batch-size", "2",
                "--synthetic", "8",
                "--held-out", "2",
                "--checkpoints", "2",
                "--size", "16",
                "--factor", "2",
                "--out", str(out),
            ]
        )  # fmt: skip

        self.assertEqual(code, EXIT_SUCCESS)

        with open(out / "curve.csv", encoding="utf-8") as curve_file:
            rows = list(csv.reader(curve_file))

        self.assertEqual(rows[0], ["iteration", "loss", "held_out_metric"])
        self.assertEqual(len(rows), 5)

        summary = json.loads((out / "distillation.json").read_text(encoding="utf-8"))

        self.assertIn("provenance", summary)
        self.assertIn("held_out", summary)

        self.assertEqual(main(["distill", "--iterations", "0", "--out", str(out)]), EXIT_USAGE)

    # -----------------------------------------------------------------------------

    def test_eval(self) -> None:
        out = self.root / "eval"

        code = main(
            [
                "eval",
                "--synthesize", "2",
                "--size", "32",
                "--K", "2",
                "--W", "1",
                "--out", str(out),
            ]
        )  # fmt: skip

        self.assertEqual(code, EXIT_SUCCESS)
        self.assertTrue((out / "testset" / "manifest.jsonl").is_file())
        self.assertTrue((out / "results" / "metrics.csv").is_file())
        self.assertTrue((out / "results" / "plot_data_average.json").is_file())

        report = json.loads((out / "results" / "report.json").read_text(encoding="utf-8"))

        self.assertEqual(report["count"], 2)

        self.assertEqual(main(["eval", "--out", str(out)]), EXIT_USAGE)

    # -----------------------------------------------------------------------------

    def test_bench(self) -> None:
        out = self.root / "bench"

        code = main(["bench", "--sizes", "16", "--repetitions", "1", "--factor", "2", "--out", str(out)])

        self.assertEqual(code, EXIT_SUCCESS)

        report = json.loads((out / "benchmark.json").read_text(encoding="utf-8"))

        self.assertEqual([row["size"] for row in report["sizes"]], [16])

    # -----------------------------------------------------------------------------

    def test_bench_without_repetitions(self) -> None:
        out = self.root / "bench"

        code = main(["bench", "--sizes", "16", "--repetitions", "0", "--factor", "2", "--out", str(out)])

        self.assertEqual(code, EXIT_FAILURE)
        self.assertFalse((out / "benchmark.json").exists())

    # -----------------------------------------------------------------------------

    def test_init_backend(self) -> None:
        out = self.root / "model"

        code = main(["init-backend", "--size", "16", "--factor", "2", "--dim", "16", "--out", str(out)])

        self.assertEqual(code, EXIT_SUCCESS)
        self.assertTrue((out / BackendComponent.DENOISER.value / MANIFEST_FILE).is_file())

        bundle = BackendsLoader().load(out)

        self.assertEqual(bundle.autoencoder.spatial_factor, 2)


if __name__ == "__main__":
    unittest.main()
