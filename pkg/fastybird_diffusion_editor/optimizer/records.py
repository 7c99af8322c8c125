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
FastyBird diffusion editor optimizer module records
"""

# pylint: disable=too-many-lines

# Python base dependencies
import csv
import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

# Library dependencies
import torch

# Library libs
from fastybird_diffusion_editor.exceptions import (
    InvalidConfigurationException,
    ShapeMismatchException,
)
from fastybird_diffusion_editor.helpers import ImageHelpers
from fastybird_diffusion_editor.losses.losses import LossComponents
from fastybird_diffusion_editor.masking.masks import Mask

RESULT_IMAGE_FILE: str = "result.png"
TRAJECTORY_FILE: str = "trajectory.json"
MASK_FILE: str = "mask.png"
PLOT_DATA_FILE: str = "plot_data.json"
AVERAGE_PLOT_DATA_FILE: str = "plot_data_average.json"
SWEEP_INDEX_FILE: str = "index.csv"

NOISE_STATS: Tuple[str, ...] = ("min", "max", "mean", "std")


class OptimizerState:
    """
    Optimized variables with their optimizers

    Only t_1..t_K are optimized, t_0 stays pinned to 0

    @package        FastyBird:DiffusionEditor!
    @module         optimizer/records
    """

    __free_timesteps: torch.Tensor
    __noise: torch.Tensor

    __timesteps_optimizer: torch.optim.AdamW
    __noise_optimizer: torch.optim.AdamW

    __step: int = 0

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        free_timesteps: torch.Tensor,
        noise: torch.Tensor,
        timesteps_optimizer: torch.optim.AdamW,
        noise_optimizer: torch.optim.AdamW,
    ) -> None:
        self.__free_timesteps = free_timesteps
        self.__noise = noise

        self.__timesteps_optimizer = timesteps_optimizer
        self.__noise_optimizer = noise_optimizer

        self.__step = 0

    # -----------------------------------------------------------------------------

    @property
    def free_timesteps(self) -> torch.Tensor:
        """Leaf tensor of optimized timesteps t_1..t_K"""
        return self.__free_timesteps

    # -----------------------------------------------------------------------------

    @property
    def timesteps(self) -> torch.Tensor:
        """Full timesteps vector t_0..t_K, differentiable w.r.t. free timesteps"""
        zero = torch.zeros(1, dtype=self.__free_timesteps.dtype, device=self.__free_timesteps.device)

        return torch.cat([zero, self.__free_timesteps])

    # -----------------------------------------------------------------------------

    @property
    def noise(self) -> torch.Tensor:
        """Leaf noise tensor N"""
        return self.__noise

    # -----------------------------------------------------------------------------

    @property
    def steps_count(self) -> int:
        """Number of denoising steps K"""
        return int(self.__free_timesteps.shape[0])

    # -----------------------------------------------------------------------------

    @property
    def step(self) -> int:
        """Number of applied updates"""
        return self.__step

    # -----------------------------------------------------------------------------

    @property
    def timesteps_optimizer(self) -> torch.optim.AdamW:
        """Optimizer of timesteps"""
        return self.__timesteps_optimizer

    # -----------------------------------------------------------------------------

    @property
    def noise_optimizer(self) -> torch.optim.AdamW:
        """Optimizer of noise"""
        return self.__noise_optimizer

    # -----------------------------------------------------------------------------

    @property
    def timesteps_moments(self) -> Optional[Tuple[torch.Tensor, torch.Tensor]]:
        """First and second moment estimates of timesteps optimizer"""
        return self.__moments(self.__timesteps_optimizer, self.__free_timesteps)

    # -----------------------------------------------------------------------------

    @property
    def noise_moments(self) -> Optional[Tuple[torch.Tensor, torch.Tensor]]:
        """First and second moment estimates of noise optimizer"""
        return self.__moments(self.__noise_optimizer, self.__noise)

    # -----------------------------------------------------------------------------

    def increment_step(self) -> None:
        """Count applied update"""
        self.__step += 1

    # -----------------------------------------------------------------------------

    def snapshot(self) -> Tuple[torch.Tensor, torch.Tensor]:
        """Detached copies of current variables"""
        return self.timesteps.detach().clone(), self.__noise.detach().clone()

    # -----------------------------------------------------------------------------

    @staticmethod
    def __moments(
        optimizer: torch.optim.AdamW,
        parameter: torch.Tensor,
    ) -> Optional[Tuple[torch.Tensor, torch.Tensor]]:
        state = optimizer.state.get(parameter)

        if state is None or "exp_avg" not in state:
            return None

        return state["exp_avg"], state["exp_avg_sq"]


class TrajectoryRecord:
    """
    State of one optimization step

    @package        FastyBird:DiffusionEditor!
    @module         optimizer/records
    """

    __w: int
    __timesteps: List[float]
    __noise: Dict[str, float]
    __loss: LossComponents

    # -----------------------------------------------------------------------------

    def __init__(self, w: int, timesteps: List[float], noise: Dict[str, float], loss: LossComponents) -> None:
        self.__w = w
        self.__timesteps = timesteps
        self.__noise = noise
        self.__loss = loss

    # -----------------------------------------------------------------------------

    @property
    def w(self) -> int:  # pylint: disable=invalid-name
        """Optimization step index"""
        return self.__w

    # -----------------------------------------------------------------------------

    @property
    def timesteps(self) -> List[float]:
        """Timesteps t_0..t_K evaluated at this step"""
        return self.__timesteps

    # -----------------------------------------------------------------------------

    @property
    def noise(self) -> Dict[str, float]:
        """Noise min, max, mean and std"""
        return self.__noise

    # -----------------------------------------------------------------------------

    @property
    def loss(self) -> LossComponents:
        """Loss components"""
        return self.__loss

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict:
        """Transform record to dictionary"""
        return {
            "w": self.__w,
            "t": self.__timesteps,
            "noise": self.__noise,
            "loss": self.__loss.to_dict(),
        }

    # -----------------------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Dict) -> "TrajectoryRecord":
        """Create record from dictionary"""
        return cls(
            w=int(data["w"]),
            timesteps=[float(value) for value in data["t"]],
            noise={key: float(data["noise"][key]) for key in NOISE_STATS},
            loss=LossComponents.from_dict(data["loss"]),
        )


class TrajectoryLog:
    """
    Per step log of one optimization run

    @package        FastyBird:DiffusionEditor!
    @module         optimizer/records
    """

    __config: Dict
    __records: List[TrajectoryRecord]

    # -----------------------------------------------------------------------------

    def __init__(self, config: Dict, records: Optional[List[TrajectoryRecord]] = None) -> None:
        self.__config = config
        self.__records = records if records is not None else []

    # -----------------------------------------------------------------------------

    @property
    def config(self) -> Dict:
        """Run configuration echo"""
        return self.__config

    # -----------------------------------------------------------------------------

    @property
    def records(self) -> List[TrajectoryRecord]:
        """Logged steps"""
        return self.__records

    # -----------------------------------------------------------------------------

    def append(self, record: TrajectoryRecord) -> None:
        """Log optimization step"""
        self.__records.append(record)

    # -----------------------------------------------------------------------------

    def totals(self) -> List[float]:
        """Total loss of every step"""
        return [record.loss.total for record in self.__records]

    # -----------------------------------------------------------------------------

    def plot_series(self) -> Dict[str, Dict[str, List]]:
        """Two panels data, timesteps per step and noise statistics per step"""
        steps = [record.w for record in self.__records]

        if len(self.__records) == 0:
            return {"timesteps": {"w": []}, "noise": {"w": [], **{key: [] for key in NOISE_STATS}}}

        timesteps: Dict[str, List] = {"w": steps}

        for index in range(len(self.__records[0].timesteps)):
            timesteps[f"t_{index}"] = [record.timesteps[index] for record in self.__records]

        noise: Dict[str, List] = {"w": steps}

        for key in NOISE_STATS:
            noise[key] = [record.noise[key] for record in self.__records]

        return {"timesteps": timesteps, "noise": noise}

    # -----------------------------------------------------------------------------

    @staticmethod
    def average(logs: List["TrajectoryLog"]) -> Dict[str, Dict[str, List]]:
        """Plot series averaged over logs of equally configured runs"""
        if len(logs) == 0:
            raise InvalidConfigurationException("Averaging requires at least one trajectory")

        series = [log.plot_series() for log in logs]

        for item in series[1:]:
            for panel in ("timesteps", "noise"):
                if item[panel].keys() != series[0][panel].keys() or len(item[panel]["w"]) != len(
                    series[0][panel]["w"]
                ):
                    raise ShapeMismatchException("Averaged trajectories must have equal steps and timesteps counts")

        averaged: Dict[str, Dict[str, List]] = {}

        for panel in ("timesteps", "noise"):
            averaged[panel] = {"w": list(series[0][panel]["w"])}

            for key in series[0][panel]:
                if key == "w":
                    continue

                columns = torch.tensor([item[panel][key] for item in series], dtype=torch.float64)

                averaged[panel][key] = columns.mean(dim=0).tolist()

        return averaged

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict:
        """Transform log to serializable dictionary"""
        return {
            "config": self.__config,
            "steps": [record.to_dict() for record in self.__records],
        }

    # -----------------------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Dict) -> "TrajectoryLog":
        """Create log from dictionary"""
        return cls(
            config=data.get("config", {}),
            records=[TrajectoryRecord.from_dict(item) for item in data.get("steps", [])],
        )

    # -----------------------------------------------------------------------------

    @staticmethod
    def write_plot_data(series: Dict[str, Dict[str, List]], path: Union[str, Path]) -> None:
        """Write plot panels data as JSON file"""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(series, indent=2), encoding="utf-8")

    # -----------------------------------------------------------------------------

    def save(self, path: Union[str, Path]) -> None:
        """Write log as JSON file"""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    # -----------------------------------------------------------------------------

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TrajectoryLog":
        """Read log from JSON file"""
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class EditResult:  # pylint: disable=too-many-instance-attributes
    """
    Outcome of one editing run

    @package        FastyBird:DiffusionEditor!
    @module         optimizer/records
    """

    __output_image: torch.Tensor
    __final_latent: torch.Tensor
    __trajectory: TrajectoryLog
    __mask: Mask
    __latent_mask: Mask
    __config: Dict
    __wall_time: float

    __best_step: Optional[int]
    __aborted: bool
    __abort_reason: Optional[str]

    __snapshots: Dict[int, torch.Tensor]

    # -----------------------------------------------------------------------------

    def __init__(  # pylint: disable=too-many-arguments
        self,
        output_image: torch.Tensor,
        final_latent: torch.Tensor,
        trajectory: TrajectoryLog,
        mask: Mask,
        latent_mask: Mask,
        config: Dict,
        wall_time: float,
        best_step: Optional[int] = None,
        aborted: bool = False,
        abort_reason: Optional[str] = None,
        snapshots: Optional[Dict[int, torch.Tensor]] = None,
    ) -> None:
        self.__output_image = output_image
        self.__final_latent = final_latent
        self.__trajectory = trajectory
        self.__mask = mask
        self.__latent_mask = latent_mask
        self.__config = config
        self.__wall_time = wall_time

        self.__best_step = best_step
        self.__aborted = aborted
        self.__abort_reason = abort_reason

        self.__snapshots = snapshots if snapshots is not None else {}

    # -----------------------------------------------------------------------------

    @property
    def output_image(self) -> torch.Tensor:
        """Decoded edited image"""
        return self.__output_image

    # -----------------------------------------------------------------------------

    @property
    def final_latent(self) -> torch.Tensor:
        """Edited latent"""
        return self.__final_latent

    # -----------------------------------------------------------------------------

    @property
    def trajectory(self) -> TrajectoryLog:
        """Optimization log"""
        return self.__trajectory

    # -----------------------------------------------------------------------------

    @property
    def mask(self) -> Mask:
        """Pixel resolution editing region"""
        return self.__mask

    # -----------------------------------------------------------------------------

    @property
    def latent_mask(self) -> Mask:
        """Latent resolution editing region used for blending"""
        return self.__latent_mask

    # -----------------------------------------------------------------------------

    @property
    def config(self) -> Dict:
        """Run configuration echo"""
        return self.__config

    # -----------------------------------------------------------------------------

    @property
    def wall_time(self) -> float:
        """Run duration in seconds"""
        return self.__wall_time

    # -----------------------------------------------------------------------------

    @property
    def best_step(self) -> Optional[int]:
        """Optimization step whose variables produced the output"""
        return self.__best_step

    # -----------------------------------------------------------------------------

    @property
    def aborted(self) -> bool:
        """Run stopped on non-finite value"""
        return self.__aborted

    # -----------------------------------------------------------------------------

    @property
    def abort_reason(self) -> Optional[str]:
        """Why run was stopped"""
        return self.__abort_reason

    # -----------------------------------------------------------------------------

    @property
    def snapshots(self) -> Dict[int, torch.Tensor]:
        """Decoded intermediate outputs by optimization step"""
        return self.__snapshots

    # -----------------------------------------------------------------------------

    def save(self, directory: Union[str, Path]) -> Path:
        """Write result image, trajectory, plot data and mask into directory"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)

        ImageHelpers.save_image(self.__output_image, directory / RESULT_IMAGE_FILE)
        self.__trajectory.save(directory / TRAJECTORY_FILE)
        TrajectoryLog.write_plot_data(self.__trajectory.plot_series(), directory / PLOT_DATA_FILE)
        self.__mask.save(directory / MASK_FILE)

        return directory

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict:
        """Transform result summary to dictionary"""
        totals = self.__trajectory.totals()

        return {
            "wall_time": self.__wall_time,
            "steps": len(totals),
            "initial_total": totals[0] if len(totals) > 0 else None,
            "final_total": totals[-1] if len(totals) > 0 else None,
            "best_step": self.__best_step,
            "aborted": self.__aborted,
            "abort_reason": self.__abort_reason,
            "mask_coverage": self.__mask.coverage,
        }


class SweepCell:
    """
    One (seed, starting timestep) cell of non-optimized pipeline sweep

    @package        FastyBird:DiffusionEditor!
    @module         optimizer/records
    """

    __row: int
    __column: int
    __seed: int
    __start_timestep: float

    __result: Optional[EditResult]
    __metrics: Dict[str, Optional[float]]
    __error: Optional[str]

    # -----------------------------------------------------------------------------

    def __init__(  # pylint: disable=too-many-arguments
        self,
        row: int,
        column: int,
        seed: int,
        start_timestep: float,
        result: Optional[EditResult] = None,
        metrics: Optional[Dict[str, Optional[float]]] = None,
        error: Optional[str] = None,
    ) -> None:
        self.__row = row
        self.__column = column
        self.__seed = seed
        self.__start_timestep = start_timestep

        self.__result = result
        self.__metrics = metrics if metrics is not None else {}
        self.__error = error

    # -----------------------------------------------------------------------------

    @property
    def row(self) -> int:
        """Row index, one row per seed"""
        return self.__row

    # -----------------------------------------------------------------------------

    @property
    def column(self) -> int:
        """Column index, one column per starting timestep"""
        return self.__column

    # -----------------------------------------------------------------------------

    @property
    def seed(self) -> int:
        """Noise seed"""
        return self.__seed

    # -----------------------------------------------------------------------------

    @property
    def start_timestep(self) -> float:
        """Starting timestep T"""
        return self.__start_timestep

    # -----------------------------------------------------------------------------

    @property
    def result(self) -> Optional[EditResult]:
        """Pass outcome, None for failed cell"""
        return self.__result

    # -----------------------------------------------------------------------------

    @property
    def metrics(self) -> Dict[str, Optional[float]]:
        """Metric scores of cell output"""
        return self.__metrics

    # -----------------------------------------------------------------------------

    @property
    def error(self) -> Optional[str]:
        """Failure message"""
        return self.__error

    # -----------------------------------------------------------------------------

    @property
    def failed(self) -> bool:
        """Cell could not be computed"""
        return self.__error is not None


class SweepGrid:
    """
    Grid of sweep cells, rows are seeds and columns are starting timesteps

    @package        FastyBird:DiffusionEditor!
    @module         optimizer/records
    """

    __seeds: List[int]
    __start_timesteps: List[float]
    __cells: List[SweepCell]

    # -----------------------------------------------------------------------------

    def __init__(self, seeds: List[int], start_timesteps: List[float], cells: List[SweepCell]) -> None:
        self.__seeds = seeds
        self.__start_timesteps = start_timesteps
        self.__cells = cells

    # -----------------------------------------------------------------------------

    @property
    def seeds(self) -> List[int]:
        """Rows seeds"""
        return self.__seeds

    # -----------------------------------------------------------------------------

    @property
    def start_timesteps(self) -> List[float]:
        """Columns starting timesteps"""
        return self.__start_timesteps

    # -----------------------------------------------------------------------------

    @property
    def cells(self) -> List[SweepCell]:
        """All cells in row-major order"""
        return self.__cells

    # -----------------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, int]:
        """Rows and columns count"""
        return len(self.__seeds), len(self.__start_timesteps)

    # -----------------------------------------------------------------------------

    def cell(self, row: int, column: int) -> SweepCell:
        """Cell at grid position"""
        for item in self.__cells:
            if item.row == row and item.column == column:
                return item

        raise IndexError(f"Sweep grid has no cell ({row}, {column})")

    # -----------------------------------------------------------------------------

    def write(self, directory: Union[str, Path]) -> Path:
        """Write cells outputs and index CSV"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)

        metric_names = sorted({name for item in self.__cells for name in item.metrics})

        with open(directory / SWEEP_INDEX_FILE, "w", newline="", encoding="utf-8") as index_file:
            writer = csv.writer(index_file)
            writer.writerow(["row", "column", "seed", "T", *metric_names, "error"])

            for item in self.__cells:
                if item.result is not None:
                    item.result.save(
                        directory / f"cell_{item.row}_{item.column}_seed_{item.seed}_T_{item.start_timestep:g}"
                    )

                writer.writerow(
                    [
                        item.row,
                        item.column,
                        item.seed,
                        item.start_timestep,
                        *["" if item.metrics.get(name) is None else item.metrics.get(name) for name in metric_names],
                        item.error or "",
                    ]
                )

        return directory
