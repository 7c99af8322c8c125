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
FastyBird diffusion editor module
"""

# Python base dependencies
import logging
from pathlib import Path
from typing import List, Optional, Union

# Library dependencies
from kink import inject
from torch.utils.data import Dataset

# Library libs
from fastybird_diffusion_editor.backends.backend import BackendsBundle
from fastybird_diffusion_editor.backends.storage import BackendsWriter
from fastybird_diffusion_editor.entities import DistillConfig, EditRequest, RunConfig
from fastybird_diffusion_editor.evaluation.benchmark import (
    BenchmarkReport,
    LossCostBenchmark,
)
from fastybird_diffusion_editor.evaluation.metrics import MetricReport, MetricsCalculator
from fastybird_diffusion_editor.evaluation.testset import TestSample, TestsetEvaluator
from fastybird_diffusion_editor.events.listeners import (
    EventsListener,
    TrajectorySnapshotListener,
)
from fastybird_diffusion_editor.logger import Logger
from fastybird_diffusion_editor.optimizer.editor import NoiseTimestepOptimizer
from fastybird_diffusion_editor.optimizer.records import EditResult, SweepGrid
from fastybird_diffusion_editor.perception.distiller import (
    DistilledEncoder,
    LatentDistiller,
)


@inject
class DiffusionEditor:  # pylint: disable=too-many-instance-attributes
    """
    Diffusion editor service

    @package        FastyBird:DiffusionEditor!
    @module         editor
    """

    __started: bool = False

    __optimizer: NoiseTimestepOptimizer
    __distiller: LatentDistiller
    __evaluator: TestsetEvaluator
    __benchmark: LossCostBenchmark
    __metrics: MetricsCalculator

    __events_listener: EventsListener
    __snapshot_listener: TrajectorySnapshotListener

    __logger: Union[Logger, logging.Logger]

    # -----------------------------------------------------------------------------

    def __init__(  # pylint: disable=too-many-arguments
        self,
        optimizer: NoiseTimestepOptimizer,
        distiller: LatentDistiller,
        evaluator: TestsetEvaluator,
        benchmark: LossCostBenchmark,
        metrics: MetricsCalculator,
        events_listener: EventsListener,
        snapshot_listener: TrajectorySnapshotListener,
        logger: Union[Logger, logging.Logger] = logging.getLogger("dummy"),
    ) -> None:
        self.__optimizer = optimizer
        self.__distiller = distiller
        self.__evaluator = evaluator
        self.__benchmark = benchmark
        self.__metrics = metrics

        self.__events_listener = events_listener
        self.__snapshot_listener = snapshot_listener

        self.__logger = logger

    # -----------------------------------------------------------------------------

    @property
    def backends(self) -> BackendsBundle:
        """Backends the editor works with"""
        return self.__optimizer.backends

    # -----------------------------------------------------------------------------

    @property
    def metrics(self) -> MetricsCalculator:
        """Pixel domain metrics"""
        return self.__metrics

    # -----------------------------------------------------------------------------

    @property
    def snapshot_listener(self) -> TrajectorySnapshotListener:
        """Intermediate outputs writer"""
        return self.__snapshot_listener

    # -----------------------------------------------------------------------------

    def start(self, snapshots_directory: Optional[Path] = None) -> None:
        """Register events listeners"""
        if self.__started:
            return

        self.__snapshot_listener.set_directory(snapshots_directory)

        self.__events_listener.open()
        self.__snapshot_listener.open()

        self.__started = True

        self.__logger.debug("Diffusion editor started")

    # -----------------------------------------------------------------------------

    def stop(self) -> None:
        """Unregister events listeners"""
        if not self.__started:
            return

        self.__events_listener.close()
        self.__snapshot_listener.close()

        self.__started = False

        self.__logger.debug("Diffusion editor stopped")

    # -----------------------------------------------------------------------------

    def edit(self, request: EditRequest, config: RunConfig) -> EditResult:
        """Optimize noise and timesteps for one request"""
        return self.__optimizer.run(request, config)

    # -----------------------------------------------------------------------------

    def sweep(
        self,
        request: EditRequest,
        start_timesteps: List[float],
        seeds: List[int],
        config: Optional[RunConfig] = None,
    ) -> SweepGrid:
        """Non-optimized grid over starting timesteps and seeds"""
        return self.__optimizer.sweep(request, start_timesteps, seeds, config)

    # -----------------------------------------------------------------------------

    def chain(self, requests: List[EditRequest], config: RunConfig) -> List[EditResult]:
        """Compounded editing"""
        return self.__optimizer.run_chain(requests, config)

    # -----------------------------------------------------------------------------

    def distill(  # pylint: disable=too-many-arguments
        self,
        config: DistillConfig,
        dataset: Dataset,
        held_out: Optional[Dataset] = None,
        backend_dir: Optional[Path] = None,
        progress: bool = False,
    ) -> DistilledEncoder:
        """Train latent twin, install it and optionally persist it into backend directory"""
        distilled = self.__distiller.distill(
            teacher=self.backends.visual_embedder,
            autoencoder=self.backends.autoencoder,
            config=config,
            dataset=dataset,
            held_out=held_out,
            progress=progress,
        )

        distilled.install(self.backends.visual_embedder)

        if backend_dir is not None:
            BackendsWriter(logger=self.__logger).write_latent_encoder(
                backend_dir,
                distilled.role,
                distilled.encoder,
                distilled.provenance,
            )

        return distilled

    # -----------------------------------------------------------------------------

    def evaluate(
        self,
        manifest: Union[str, Path, List[TestSample]],
        config: RunConfig,
        output_dir: Path,
        workers: int = 1,
    ) -> MetricReport:
        """Run test set and write metric reports"""
        return self.__evaluator.evaluate_testset(manifest, config, output_dir, workers)

    # -----------------------------------------------------------------------------

    def benchmark(self, sizes: List[int], repetitions: int, factor: int = 8, seed: int = 0) -> BenchmarkReport:
        """Latent versus pixel losses cost"""
        return self.__benchmark.benchmark_latent_vs_pixel(sizes, repetitions, factor=factor, seed=seed)
