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

"""
FastyBird diffusion editor evaluation module latent versus pixel losses benchmark
"""

# Python base dependencies
import json
import logging
import statistics
import time
from pathlib import Path
from typing import Dict, List, Union

# Library dependencies
import torch
from kink import inject

# Library libs
from fastybird_diffusion_editor.backends.toy import make_toy_backends
from fastybird_diffusion_editor.entities import LossWeights
from fastybird_diffusion_editor.exceptions import EvaluationException
from fastybird_diffusion_editor.logger import Logger
from fastybird_diffusion_editor.losses.losses import EditLoss
from fastybird_diffusion_editor.perception.distiller import LatentDistiller
from fastybird_diffusion_editor.perception.datasets import SyntheticImageDataset
from fastybird_diffusion_editor.types import EncoderRole, LossDomain

BENCHMARK_SOURCE_PROMPT: str = "a photo of a cat"
BENCHMARK_TARGET_PROMPT: str = "a photo of a dog"


class ModeMeasurement:
    """
    Cost of one loss evaluation with gradient in one domain

    @package        FastyBird:DiffusionEditor!
    @module         evaluation/benchmark
    """

    __wall_times: List[float]
    __saved_bytes: int

    # -----------------------------------------------------------------------------

    def __init__(self, wall_times: List[float], saved_bytes: int) -> None:
        self.__wall_times = wall_times
        self.__saved_bytes = saved_bytes

    # -----------------------------------------------------------------------------

    @property
    def wall_time(self) -> float:
        """Median seconds over repetitions"""
        return statistics.median(self.__wall_times)

    # -----------------------------------------------------------------------------

    @property
    def saved_bytes(self) -> int:
        """Bytes of tensors saved for backward pass"""
        return self.__saved_bytes

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict:
        """Transform measurement to dictionary"""
        return {
            "wall_time": self.wall_time,
            "wall_times": self.__wall_times,
            "saved_bytes": self.__saved_bytes,
        }


class BenchmarkReport:
    """
    Latent and pixel loss costs per image size

    @package        FastyBird:DiffusionEditor!
    @module         evaluation/benchmark
    """

    __rows: List[Dict]
    __factor: int
    __repetitions: int

    # -----------------------------------------------------------------------------

    def __init__(self, factor: int, repetitions: int) -> None:
        self.__rows = []
        self.__factor = factor
        self.__repetitions = repetitions

    # -----------------------------------------------------------------------------

    @property
    def rows(self) -> List[Dict]:
        """Measured image sizes"""
        return self.__rows

    # -----------------------------------------------------------------------------

    def add(self, size: int, latent: ModeMeasurement, pixel: ModeMeasurement) -> None:
        """Append measurement of one image size"""
        self.__rows.append(
            {
                "size": size,
                "latent": latent,
                "pixel": pixel,
            }
        )

    # -----------------------------------------------------------------------------

    def time_ratio(self, size: int) -> float:
        """Latent to pixel wall time ratio"""
        row = self.__row(size)

        return row["latent"].wall_time / row["pixel"].wall_time

    # -----------------------------------------------------------------------------

    def memory_ratio(self, size: int) -> float:
        """Latent to pixel saved tensors ratio"""
        row = self.__row(size)

        return row["latent"].saved_bytes / max(1, row["pixel"].saved_bytes)

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict:
        """Transform report to dictionary"""
        return {
            "factor": self.__factor,
            "repetitions": self.__repetitions,
            "sizes": [
                {
                    "size": row["size"],
                    "latent": row["latent"].to_dict(),
                    "pixel": row["pixel"].to_dict(),
                    "time_ratio": self.time_ratio(row["size"]),
                    "memory_ratio": self.memory_ratio(row["size"]),
                }
                for row in self.__rows
            ],
        }

    # -----------------------------------------------------------------------------

    def write_json(self, path: Union[str, Path]) -> None:
        """Write report"""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    # -----------------------------------------------------------------------------

    def __row(self, size: int) -> Dict:
        for row in self.__rows:
            if row["size"] == size:
                return row

        raise KeyError(f"Size {size} was not measured")


@inject
class LossCostBenchmark:
    """
    Compares latent domain losses with decode-then-embed pixel losses

    Both modes start from the same latent and compute editing loss with gradient w.r.t. that latent.

    @package        FastyBird:DiffusionEditor!
    @module         evaluation/benchmark
    """

    __logger: Union[Logger, logging.Logger]

    # -----------------------------------------------------------------------------

    def __init__(self, logger: Union[Logger, logging.Logger] = logging.getLogger("dummy")) -> None:
        self.__logger = logger

    # -----------------------------------------------------------------------------

    def benchmark_latent_vs_pixel(  # pylint: disable=too-many-locals
        self,
        sizes: List[int],
        repetitions: int,
        factor: int = 8,
        seed: int = 0,
    ) -> BenchmarkReport:
        """Median wall time and saved memory of loss with gradient in both domains on toy backends"""
        if repetitions < 1:
            raise EvaluationException("need ≥ 1 repetition")

        if len(sizes) == 0:
            raise EvaluationException("Benchmark requires at least one image size")

        report = BenchmarkReport(factor=factor, repetitions=repetitions)

        for size in sizes:
            backends = make_toy_backends(image_size=size, factor=factor, seed=seed)

            visual_embedder = backends.visual_embedder

            for role in (EncoderRole.SEMANTIC, EncoderRole.PERCEPTUAL):
                visual_embedder.install_latent_encoder(
                    role,
                    LatentDistiller.create_student(visual_embedder.encoder(role), backends.autoencoder, seed=seed),
                )

            edit_loss = EditLoss(
                text_embedder=backends.text_embedder,
                visual_embedder=visual_embedder,
                autoencoder=backends.autoencoder,
                logger=self.__logger,
            )

            image = SyntheticImageDataset(count=1, size=size, seed=seed)[0]
            original = backends.autoencoder.encode(image)

            generator = torch.Generator().manual_seed(seed)
            output = original + 0.1 * torch.randn(original.shape, generator=generator)

            latent = self.__measure(edit_loss, original, output, LossDomain.LATENT, repetitions)
            pixel = self.__measure(edit_loss, original, output, LossDomain.PIXEL, repetitions)

            report.add(size, latent, pixel)

            self.__logger.info(
                "Losses benchmarked",
                extra={
                    "benchmark": {
                        "size": size,
                        "factor": factor,
                        "latent_time": latent.wall_time,
                        "pixel_time": pixel.wall_time,
                        "time_ratio": report.time_ratio(size),
                        "memory_ratio": report.memory_ratio(size),
                    },
                },
            )

        return report

    # -----------------------------------------------------------------------------

    @staticmethod
    def __measure(  # pylint: disable=too-many-arguments
        edit_loss: EditLoss,
        original: torch.Tensor,
        output: torch.Tensor,
        domain: LossDomain,
        repetitions: int,
    ) -> ModeMeasurement:
        saved = [0]

        def pack(tensor: torch.Tensor) -> torch.Tensor:
            saved[0] += tensor.numel() * tensor.element_size()

            return tensor

        def evaluate() -> None:
            variable = output.detach().clone().requires_grad_(True)

            total, _ = edit_loss.loss_total(
                original,
                variable,
                BENCHMARK_SOURCE_PROMPT,
                BENCHMARK_TARGET_PROMPT,
                weights=LossWeights(),
                domain=domain,
            )
            total.backward()

        # Warm up
        evaluate()

        wall_times: List[float] = []

        for _ in range(repetitions):
            started = time.perf_counter()

            evaluate()

            wall_times.append(time.perf_counter() - started)

        with torch.autograd.graph.saved_tensors_hooks(pack, lambda tensor: tensor):
            evaluate()

        return ModeMeasurement(
            wall_times=wall_times,
            saved_bytes=saved[0],
        )
