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
FastyBird diffusion editor events module listeners
"""

# Python base dependencies
import logging
from pathlib import Path
from typing import Optional, Union

# Library dependencies
from kink import inject
from whistle import Event, EventDispatcher

# Library libs
from fastybird_diffusion_editor.events.events import (
    DistillationCheckpointEvent,
    OptimizationStepEvent,
    RunAbortedEvent,
    RunFinishedEvent,
    RunStartedEvent,
    SampleEvaluatedEvent,
)
from fastybird_diffusion_editor.helpers import ImageHelpers, TextHelpers
from fastybird_diffusion_editor.logger import Logger


@inject
class EventsListener:
    """
    Events listener transforming editor events into log records

    @package        FastyBird:DiffusionEditor!
    @module         events/listeners
    """

    __event_dispatcher: EventDispatcher

    __logger: Union[Logger, logging.Logger]

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        event_dispatcher: EventDispatcher,
        logger: Union[Logger, logging.Logger] = logging.getLogger("dummy"),
    ) -> None:
        self.__event_dispatcher = event_dispatcher

        self.__logger = logger

    # -----------------------------------------------------------------------------

    def open(self) -> None:
        """Open all listeners callbacks"""
        self.__event_dispatcher.add_listener(
            event_id=RunStartedEvent.EVENT_NAME,
            listener=self.__handle_run_started,
        )

        self.__event_dispatcher.add_listener(
            event_id=OptimizationStepEvent.EVENT_NAME,
            listener=self.__handle_optimization_step,
        )

        self.__event_dispatcher.add_listener(
            event_id=RunFinishedEvent.EVENT_NAME,
            listener=self.__handle_run_finished,
        )

        self.__event_dispatcher.add_listener(
            event_id=RunAbortedEvent.EVENT_NAME,
            listener=self.__handle_run_aborted,
        )

        self.__event_dispatcher.add_listener(
            event_id=DistillationCheckpointEvent.EVENT_NAME,
            listener=self.__handle_distillation_checkpoint,
        )

        self.__event_dispatcher.add_listener(
            event_id=SampleEvaluatedEvent.EVENT_NAME,
            listener=self.__handle_sample_evaluated,
        )

    # -----------------------------------------------------------------------------

    def close(self) -> None:
        """Close all listeners registrations"""
        self.__event_dispatcher.remove_listener(
            event_id=RunStartedEvent.EVENT_NAME,
            listener=self.__handle_run_started,
        )

        self.__event_dispatcher.remove_listener(
            event_id=OptimizationStepEvent.EVENT_NAME,
            listener=self.__handle_optimization_step,
        )

        self.__event_dispatcher.remove_listener(
            event_id=RunFinishedEvent.EVENT_NAME,
            listener=self.__handle_run_finished,
        )

        self.__event_dispatcher.remove_listener(
            event_id=RunAbortedEvent.EVENT_NAME,
            listener=self.__handle_run_aborted,
        )

        self.__event_dispatcher.remove_listener(
            event_id=DistillationCheckpointEvent.EVENT_NAME,
            listener=self.__handle_distillation_checkpoint,
        )

        self.__event_dispatcher.remove_listener(
            event_id=SampleEvaluatedEvent.EVENT_NAME,
            listener=self.__handle_sample_evaluated,
        )

    # -----------------------------------------------------------------------------

    def __handle_run_started(self, event: Event) -> None:
        if not isinstance(event, RunStartedEvent):
            return

        self.__logger.info(
            "Editing run started",
            extra={
                "run": {
                    "sample": event.sample_id,
                    "config": event.config,
                    "mask_coverage": event.mask_coverage,
                },
            },
        )

    # -----------------------------------------------------------------------------

    def __handle_optimization_step(self, event: Event) -> None:
        if not isinstance(event, OptimizationStepEvent):
            return

        self.__logger.debug(
            "Optimization step evaluated",
            extra={
                "run": {
                    "sample": event.sample_id,
                },
                "step": event.record.to_dict(),
            },
        )

    # -----------------------------------------------------------------------------

    def __handle_run_finished(self, event: Event) -> None:
        if not isinstance(event, RunFinishedEvent):
            return

        self.__logger.info(
            "Editing run finished",
            extra={
                "run": {
                    "sample": event.sample_id,
                    **event.result.to_dict(),
                },
            },
        )

    # -----------------------------------------------------------------------------

    def __handle_run_aborted(self, event: Event) -> None:
        if not isinstance(event, RunAbortedEvent):
            return

        self.__logger.warning(
            "Editing run aborted, returning best finite iterate",
            extra={
                "run": {
                    "sample": event.sample_id,
                    "step": event.step,
                    "reason": event.reason,
                },
            },
        )

    # -----------------------------------------------------------------------------

    def __handle_distillation_checkpoint(self, event: Event) -> None:
        if not isinstance(event, DistillationCheckpointEvent):
            return

        self.__logger.info(
            "Distillation checkpoint evaluated",
            extra={
                "distillation": {
                    "role": event.role.value,
                    "iteration": event.iteration,
                    "loss": event.loss,
                    "held_out": event.held_out_metric,
                    "improved": event.improved,
                },
            },
        )

    # -----------------------------------------------------------------------------

    def __handle_sample_evaluated(self, event: Event) -> None:
        if not isinstance(event, SampleEvaluatedEvent):
            return

        if event.error is not None:
            self.__logger.warning(
                "Test set sample failed",
                extra={
                    "evaluation": {
                        "sample": event.sample_id,
                        "error": event.error,
                    },
                },
            )

            return

        self.__logger.info(
            "Test set sample evaluated",
            extra={
                "evaluation": {
                    "sample": event.sample_id,
                    "metrics": event.metrics,
                },
            },
        )


@inject
class TrajectorySnapshotListener:
    """
    Writer of decoded intermediate outputs published with optimization steps

    @package        FastyBird:DiffusionEditor!
    @module         events/listeners
    """

    __event_dispatcher: EventDispatcher
    __directory: Optional[Path]

    __written: int = 0

    __logger: Union[Logger, logging.Logger]

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        event_dispatcher: EventDispatcher,
        directory: Optional[Path] = None,
        logger: Union[Logger, logging.Logger] = logging.getLogger("dummy"),
    ) -> None:
        self.__event_dispatcher = event_dispatcher
        self.__directory = directory

        self.__written = 0

        self.__logger = logger

    # -----------------------------------------------------------------------------

    @property
    def written(self) -> int:
        """Number of written snapshot images"""
        return self.__written

    # -----------------------------------------------------------------------------

    def set_directory(self, directory: Optional[Path]) -> None:
        """Configure snapshots output directory, None disables writing"""
        self.__directory = directory

    # -----------------------------------------------------------------------------

    def open(self) -> None:
        """Open listener callback"""
        self.__event_dispatcher.add_listener(
            event_id=OptimizationStepEvent.EVENT_NAME,
            listener=self.__handle_optimization_step,
        )

    # -----------------------------------------------------------------------------

    def close(self) -> None:
        """Close listener registration"""
        self.__event_dispatcher.remove_listener(
            event_id=OptimizationStepEvent.EVENT_NAME,
            listener=self.__handle_optimization_step,
        )

    # -----------------------------------------------------------------------------

    def __handle_optimization_step(self, event: Event) -> None:
        if not isinstance(event, OptimizationStepEvent):
            return

        if event.snapshot is None or self.__directory is None:
            return

        path = self.__directory / TextHelpers.slug(event.sample_id) / f"w_{event.record.w:04d}.png"

        ImageHelpers.save_image(event.snapshot, path)

        self.__written += 1

        self.__logger.debug(
            "Intermediate output written",
            extra={
                "snapshot": {
                    "sample": event.sample_id,
                    "w": event.record.w,
                    "path": str(path),
                },
            },
        )
