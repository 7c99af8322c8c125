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
FastyBird diffusion editor events module events
"""

# Python base dependencies
from typing import Dict, Optional

# Library dependencies
import torch
from whistle import Event

# Library libs
from fastybird_diffusion_editor.optimizer.records import EditResult, TrajectoryRecord
from fastybird_diffusion_editor.types import EncoderRole


class RunStartedEvent(Event):  # pylint: disable=too-few-public-methods
    """
    Editing run was started

    @package        FastyBird:DiffusionEditor!
    @module         events/events
    """

    __sample_id: str
    __config: Dict
    __mask_coverage: float

    EVENT_NAME: str = "editor.runStarted"

    # -----------------------------------------------------------------------------

    def __init__(self, sample_id: str, config: Dict, mask_coverage: float) -> None:
        self.__sample_id = sample_id
        self.__config = config
        self.__mask_coverage = mask_coverage

    # -----------------------------------------------------------------------------

    @property
    def sample_id(self) -> str:
        """Edited sample identifier"""
        return self.__sample_id

    # -----------------------------------------------------------------------------

    @property
    def config(self) -> Dict:
        """Run configuration echo"""
        return self.__config

    # -----------------------------------------------------------------------------

    @property
    def mask_coverage(self) -> float:
        """Share of latent cells which may change"""
        return self.__mask_coverage


class OptimizationStepEvent(Event):
    """
    Optimization step was evaluated

    @package        FastyBird:DiffusionEditor!
    @module         events/events
    """

    __sample_id: str
    __record: TrajectoryRecord
    __snapshot: Optional[torch.Tensor]

    EVENT_NAME: str = "editor.optimizationStep"

    # -----------------------------------------------------------------------------

    def __init__(self, sample_id: str, record: TrajectoryRecord, snapshot: Optional[torch.Tensor] = None) -> None:
        self.__sample_id = sample_id
        self.__record = record
        self.__snapshot = snapshot

    # -----------------------------------------------------------------------------

    @property
    def sample_id(self) -> str:
        """Edited sample identifier"""
        return self.__sample_id

    # -----------------------------------------------------------------------------

    @property
    def record(self) -> TrajectoryRecord:
        """Logged step"""
        return self.__record

    # -----------------------------------------------------------------------------

    @property
    def snapshot(self) -> Optional[torch.Tensor]:
        """Decoded output of the step when snapshots are enabled"""
        return self.__snapshot


class RunFinishedEvent(Event):  # pylint: disable=too-few-public-methods
    """
    Editing run was finished

    @package        FastyBird:DiffusionEditor!
    @module         events/events
    """

    __sample_id: str
    __result: EditResult

    EVENT_NAME: str = "editor.runFinished"

    # -----------------------------------------------------------------------------

    def __init__(self, sample_id: str, result: EditResult) -> None:
        self.__sample_id = sample_id
        self.__result = result

    # -----------------------------------------------------------------------------

    @property
    def sample_id(self) -> str:
        """Edited sample identifier"""
        return self.__sample_id

    # -----------------------------------------------------------------------------

    @property
    def result(self) -> EditResult:
        """Run outcome"""
        return self.__result


class RunAbortedEvent(Event):
    """
    Editing run was stopped on non-finite value

    @package        FastyBird:DiffusionEditor!
    @module         events/events
    """

    __sample_id: str
    __step: int
    __reason: str

    EVENT_NAME: str = "editor.runAborted"

    # -----------------------------------------------------------------------------

    def __init__(self, sample_id: str, step: int, reason: str) -> None:
        self.__sample_id = sample_id
        self.__step = step
        self.__reason = reason

    # -----------------------------------------------------------------------------

    @property
    def sample_id(self) -> str:
        """Edited sample identifier"""
        return self.__sample_id

    # -----------------------------------------------------------------------------

    @property
    def step(self) -> int:
        """Optimization step which failed"""
        return self.__step

    # -----------------------------------------------------------------------------

    @property
    def reason(self) -> str:
        """Abort reason"""
        return self.__reason


class DistillationCheckpointEvent(Event):
    """
    Latent encoder training reached checkpoint

    @package        FastyBird:DiffusionEditor!
    @module         events/events
    """

    __role: EncoderRole
    __iteration: int
    __loss: float
    __held_out_metric: float
    __improved: bool

    EVENT_NAME: str = "distiller.checkpoint"

    # -----------------------------------------------------------------------------

    def __init__(  # pylint: disable=too-many-arguments
        self,
        role: EncoderRole,
        iteration: int,
        loss: float,
        held_out_metric: float,
        improved: bool,
    ) -> None:
        self.__role = role
        self.__iteration = iteration
        self.__loss = loss
        self.__held_out_metric = held_out_metric
        self.__improved = improved

    # -----------------------------------------------------------------------------

    @property
    def role(self) -> EncoderRole:
        """Role of trained encoder"""
        return self.__role

    # -----------------------------------------------------------------------------

    @property
    def iteration(self) -> int:
        """Training iteration"""
        return self.__iteration

    # -----------------------------------------------------------------------------

    @property
    def loss(self) -> float:
        """Training batch loss"""
        return self.__loss

    # -----------------------------------------------------------------------------

    @property
    def held_out_metric(self) -> float:
        """Held-out mean cosine or mean L1"""
        return self.__held_out_metric

    # -----------------------------------------------------------------------------

    @property
    def improved(self) -> bool:
        """Checkpoint became the best one"""
        return self.__improved


class SampleEvaluatedEvent(Event):
    """
    Test set sample was processed

    @package        FastyBird:DiffusionEditor!
    @module         events/events
    """

    __sample_id: str
    __metrics: Dict[str, Optional[float]]
    __error: Optional[str]

    EVENT_NAME: str = "evaluation.sampleEvaluated"

    # -----------------------------------------------------------------------------

    def __init__(self, sample_id: str, metrics: Dict[str, Optional[float]], error: Optional[str] = None) -> None:
        self.__sample_id = sample_id
        self.__metrics = metrics
        self.__error = error

    # -----------------------------------------------------------------------------

    @property
    def sample_id(self) -> str:
        """Evaluated sample identifier"""
        return self.__sample_id

    # -----------------------------------------------------------------------------

    @property
    def metrics(self) -> Dict[str, Optional[float]]:
        """Computed metrics"""
        return self.__metrics

    # -----------------------------------------------------------------------------

    @property
    def error(self) -> Optional[str]:
        """Failure message of failed sample"""
        return self.__error
