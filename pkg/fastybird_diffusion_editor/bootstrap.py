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
FastyBird diffusion editor DI container
"""

# pylint: disable=no-value-for-parameter

# Python base dependencies
import logging
from typing import Union

# Library dependencies
from kink import di
from whistle import EventDispatcher

# Library libs
from fastybird_diffusion_editor.backends.backend import BackendsBundle
from fastybird_diffusion_editor.backends.storage import BackendsLoader, BackendsWriter
from fastybird_diffusion_editor.editor import DiffusionEditor
from fastybird_diffusion_editor.evaluation.benchmark import LossCostBenchmark
from fastybird_diffusion_editor.evaluation.metrics import MetricsCalculator
from fastybird_diffusion_editor.evaluation.testset import TestsetEvaluator
from fastybird_diffusion_editor.events.listeners import (
    EventsListener,
    TrajectorySnapshotListener,
)
from fastybird_diffusion_editor.logger import Logger
from fastybird_diffusion_editor.losses.losses import EditLoss
from fastybird_diffusion_editor.masking.masks import MaskBuilder
from fastybird_diffusion_editor.optimizer.editor import NoiseTimestepOptimizer
from fastybird_diffusion_editor.perception.distiller import LatentDistiller


def create_editor(
    backends: BackendsBundle,
    logger: Union[Logger, logging.Logger] = logging.getLogger("dummy"),
) -> DiffusionEditor:
    """Create diffusion editor services"""
    if isinstance(logger, logging.Logger):
        editor_logger = Logger(logger=logger)

        di[Logger] = editor_logger
        di["diffusion-editor_logger"] = di[Logger]

    else:
        editor_logger = logger

    di[EventDispatcher] = EventDispatcher()
    di["diffusion-editor_events-dispatcher"] = di[EventDispatcher]

    di[BackendsBundle] = backends
    di["diffusion-editor_backends"] = di[BackendsBundle]

    # Backends storage
    di[BackendsLoader] = BackendsLoader(logger=editor_logger)
    di["diffusion-editor_backends-loader"] = di[BackendsLoader]

    di[BackendsWriter] = BackendsWriter(logger=editor_logger)
    di["diffusion-editor_backends-writer"] = di[BackendsWriter]

    # Editing building blocks
    di[MaskBuilder] = MaskBuilder(logger=editor_logger)
    di["diffusion-editor_mask-builder"] = di[MaskBuilder]

    di[EditLoss] = EditLoss(
        text_embedder=backends.text_embedder,
        visual_embedder=backends.visual_embedder,
        autoencoder=backends.autoencoder,
        logger=editor_logger,
    )
    di["diffusion-editor_edit-loss"] = di[EditLoss]

    di[MetricsCalculator] = MetricsCalculator(
        text_embedder=backends.text_embedder,
        visual_embedder=backends.visual_embedder,
        dino=backends.dino,
        logger=editor_logger,
    )
    di["diffusion-editor_metrics"] = di[MetricsCalculator]

    # Main optimizer
    di[NoiseTimestepOptimizer] = NoiseTimestepOptimizer(
        backends=backends,
        mask_builder=di[MaskBuilder],
        edit_loss=di[EditLoss],
        metrics=di[MetricsCalculator],
        event_dispatcher=di[EventDispatcher],
        logger=editor_logger,
    )
    di["diffusion-editor_optimizer"] = di[NoiseTimestepOptimizer]

    # Perception
    di[LatentDistiller] = LatentDistiller(event_dispatcher=di[EventDispatcher], logger=editor_logger)
    di["diffusion-editor_distiller"] = di[LatentDistiller]

    # Evaluation
    di[TestsetEvaluator] = TestsetEvaluator(
        editor=di[NoiseTimestepOptimizer],
        metrics=di[MetricsCalculator],
        event_dispatcher=di[EventDispatcher],
        logger=editor_logger,
    )
    di["diffusion-editor_testset-evaluator"] = di[TestsetEvaluator]

    di[LossCostBenchmark] = LossCostBenchmark(logger=editor_logger)
    di["diffusion-editor_benchmark"] = di[LossCostBenchmark]

    # Inner events system
    di[EventsListener] = EventsListener(event_dispatcher=di[EventDispatcher], logger=editor_logger)
    di["diffusion-editor_events-listener"] = di[EventsListener]

    di[TrajectorySnapshotListener] = TrajectorySnapshotListener(
        event_dispatcher=di[EventDispatcher],
        logger=editor_logger,
    )
    di["diffusion-editor_snapshot-listener"] = di[TrajectorySnapshotListener]

    # Main editor service
    editor_service = DiffusionEditor(
        optimizer=di[NoiseTimestepOptimizer],
        distiller=di[LatentDistiller],
        evaluator=di[TestsetEvaluator],
        benchmark=di[LossCostBenchmark],
        metrics=di[MetricsCalculator],
        events_listener=di[EventsListener],
        snapshot_listener=di[TrajectorySnapshotListener],
        logger=editor_logger,
    )
    di[DiffusionEditor] = editor_service
    di["diffusion-editor_editor"] = editor_service

    return editor_service
