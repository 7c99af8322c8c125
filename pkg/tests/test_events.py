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
import tempfile
import unittest
from pathlib import Path

# Library dependencies
import torch
from whistle import EventDispatcher

# Library libs
from fastybird_diffusion_editor.events.events import (
    OptimizationStepEvent,
    RunAbortedEvent,
    SampleEvaluatedEvent,
)
from fastybird_diffusion_editor.events.listeners import (
    EventsListener,
    TrajectorySnapshotListener,
)
from fastybird_diffusion_editor.helpers import ImageHelpers
from fastybird_diffusion_editor.losses.losses import LossComponents
from fastybird_diffusion_editor.optimizer.records import TrajectoryRecord
from tests.helpers import TESTS_LOGGER, block_image


def step_record(w: int) -> TrajectoryRecord:
    """Logged step with fixed values"""
    return TrajectoryRecord(
        w=w,
        timesteps=[0.0, 0.25, 0.5],
        noise={"min": -1.0, "max": 1.0, "mean": 0.0, "std": 0.5},
        loss=LossComponents(sem=0.1, ref=None, perc=0.2, total=0.2),
    )


class TestEventsListener(unittest.TestCase):
    def setUp(self) -> None:
        self.dispatcher = EventDispatcher()
        self.listener = EventsListener(event_dispatcher=self.dispatcher, logger=logging.getLogger(TESTS_LOGGER))
        self.listener.open()

    # -----------------------------------------------------------------------------

    def tearDown(self) -> None:
        self.listener.close()

    # -----------------------------------------------------------------------------

    def test_aborted_run_warning(self) -> None:
        with self.assertLogs(TESTS_LOGGER, "WARNING") as logs:
            self.dispatcher.dispatch(
                event_id=RunAbortedEvent.EVENT_NAME,
                event=RunAbortedEvent(sample_id="cat", step=3, reason="non-finite loss"),
            )

        self.assertEqual(len(logs.records), 1)
        self.assertIn("aborted", logs.records[0].getMessage())

    # -----------------------------------------------------------------------------

    def test_sample_evaluated(self) -> None:
        with self.assertLogs(TESTS_LOGGER, "INFO") as logs:
            self.dispatcher.dispatch(
                event_id=SampleEvaluatedEvent.EVENT_NAME,
                event=SampleEvaluatedEvent(sample_id="a", metrics={"clip_i": 0.9}),
            )
            self.dispatcher.dispatch(
                event_id=SampleEvaluatedEvent.EVENT_NAME,
                event=SampleEvaluatedEvent(sample_id="b", metrics={}, error="missing image"),
            )

        self.assertEqual([record.levelname for record in logs.records], ["INFO", "WARNING"])

    # -----------------------------------------------------------------------------

    def test_closed_listener_is_silent(self) -> None:
        self.listener.close()

        with self.assertRaises(AssertionError):
            with self.assertLogs(TESTS_LOGGER, "DEBUG"):
                self.dispatcher.dispatch(
                    event_id=RunAbortedEvent.EVENT_NAME,
                    event=RunAbortedEvent(sample_id="cat", step=0, reason="nan"),
                )

        self.listener.open()


class TestTrajectorySnapshotListener(unittest.TestCase):
    def setUp(self) -> None:
        self.dispatcher = EventDispatcher()

    # -----------------------------------------------------------------------------

    def test_snapshot_written(self) -> None:
        image = block_image(8, 2, seed=1, dtype=torch.float32)

        with tempfile.TemporaryDirectory() as directory:
            listener = TrajectorySnapshotListener(event_dispatcher=self.dispatcher, directory=Path(directory))
            listener.open()

            self.dispatcher.dispatch(
                event_id=OptimizationStepEvent.EVENT_NAME,
                event=OptimizationStepEvent(sample_id="Red Car", record=step_record(2), snapshot=image),
            )
            self.dispatcher.dispatch(
                event_id=OptimizationStepEvent.EVENT_NAME,
                event=OptimizationStepEvent(sample_id="Red Car", record=step_record(3)),
            )

            listener.close()

            path = Path(directory) / "red-car" / "w_0002.png"

            self.assertTrue(path.is_file())
            self.assertEqual(listener.written, 1)
            self.assertEqual(tuple(ImageHelpers.load_image(path).shape), (3, 8, 8))

    # -----------------------------------------------------------------------------

    def test_disabled_without_directory(self) -> None:
        listener = TrajectorySnapshotListener(event_dispatcher=self.dispatcher)
        listener.open()

        self.dispatcher.dispatch(
            event_id=OptimizationStepEvent.EVENT_NAME,
            event=OptimizationStepEvent(
                sample_id="cat",
                record=step_record(0),
                snapshot=block_image(8, 2, seed=1, dtype=torch.float32),
            ),
        )

        listener.close()

        self.assertEqual(listener.written, 0)


if __name__ == "__main__":
    unittest.main()
