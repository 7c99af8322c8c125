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
FastyBird diffusion editor evaluation module test set harness
"""

# Python base dependencies
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

# Library dependencies
import torch
from kink import inject
from whistle import EventDispatcher

# Library libs
from fastybird_diffusion_editor.entities import (
    AuxiliaryInputs,
    EditRequest,
    RunConfig,
)
from fastybird_diffusion_editor.evaluation.metrics import (
    MetricReport,
    MetricsCalculator,
    MetricValues,
)
from fastybird_diffusion_editor.events.events import SampleEvaluatedEvent
from fastybird_diffusion_editor.exceptions import EvaluationException
from fastybird_diffusion_editor.helpers import ImageHelpers, TextHelpers
from fastybird_diffusion_editor.logger import Logger
from fastybird_diffusion_editor.optimizer.editor import NoiseTimestepOptimizer
from fastybird_diffusion_editor.optimizer.records import (
    AVERAGE_PLOT_DATA_FILE,
    TrajectoryLog,
)
from fastybird_diffusion_editor.perception.datasets import SyntheticImageDataset
from fastybird_diffusion_editor.types import EditTaskKind

MANIFEST_FILE_NAME: str = "manifest.jsonl"
METRICS_CSV_FILE: str = "metrics.csv"
REPORT_JSON_FILE: str = "report.json"

AUX_IMAGE_FIELDS: Tuple[Tuple[str, str], ...] = (
    ("reference", "r"),
    ("stroke_image", "s"),
    ("composed_image", "c"),
)

SampleOutcome = Tuple[str, Optional[MetricValues], Optional[str], Optional[TrajectoryLog]]


class TestSample:
    """
    Test set entry with resolved file paths

    @package        FastyBird:DiffusionEditor!
    @module         evaluation/testset
    """

    __test__ = False

    __sample_id: str
    __task: EditTaskKind
    __image: Path
    __source_prompt: str
    __prompt: str
    __files: Dict[str, Optional[Path]]
    __edit_objects: Optional[List[str]]

    # -----------------------------------------------------------------------------

    def __init__(  # pylint: disable=too-many-arguments
        self,
        sample_id: str,
        task: EditTaskKind,
        image: Path,
        source_prompt: str,
        prompt: str,
        reference: Optional[Path] = None,
        stroke_image: Optional[Path] = None,
        composed_image: Optional[Path] = None,
        mask: Optional[Path] = None,
        edit_objects: Optional[List[str]] = None,
    ) -> None:
        self.__sample_id = sample_id
        self.__task = task
        self.__image = image
        self.__source_prompt = source_prompt
        self.__prompt = prompt
        self.__files = {
            "reference": reference,
            "stroke_image": stroke_image,
            "composed_image": composed_image,
            "mask": mask,
        }
        self.__edit_objects = edit_objects

    # -----------------------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Dict, base: Path) -> "TestSample":
        """Create sample from manifest line, paths are relative to manifest directory"""
        for field in ("id", "task", "image", "prompt"):
            if field not in data:
                raise EvaluationException(f"Test sample is missing field '{field}'")

        if not EditTaskKind.has_value(str(data["task"])):
            raise EvaluationException(f"Test sample '{data['id']}' has unknown task '{data['task']}'")

        def resolve(field: str) -> Optional[Path]:
            value = data.get(field)

            return None if value is None else base / str(value)

        edit_objects = data.get("edit_objects")

        return cls(
            sample_id=str(data["id"]),
            task=EditTaskKind(str(data["task"])),
            image=base / str(data["image"]),
            source_prompt=str(data.get("source_prompt", "")),
            prompt=str(data["prompt"]),
            reference=resolve("reference"),
            stroke_image=resolve("stroke_image"),
            composed_image=resolve("composed_image"),
            mask=resolve("mask"),
            edit_objects=None if edit_objects is None else [str(item) for item in edit_objects],
        )

    # -----------------------------------------------------------------------------

    @property
    def sample_id(self) -> str:
        """Sample identifier"""
        return self.__sample_id

    # -----------------------------------------------------------------------------

    @property
    def task(self) -> EditTaskKind:
        """Editing operation"""
        return self.__task

    # -----------------------------------------------------------------------------

    @property
    def image(self) -> Path:
        """Original image file"""
        return self.__image

    # -----------------------------------------------------------------------------

    @property
    def prompt(self) -> str:
        """Target prompt"""
        return self.__prompt

    # -----------------------------------------------------------------------------

    def file(self, field: str) -> Optional[Path]:
        """Auxiliary file of given field"""
        return self.__files.get(field)

    # -----------------------------------------------------------------------------

    def to_dict(self, base: Optional[Path] = None) -> Dict:
        """Transform sample to manifest line dictionary"""

        def relative(path: Optional[Path]) -> Optional[str]:
            if path is None:
                return None

            return str(path.relative_to(base)) if base is not None else str(path)

        data: Dict = {
            "id": self.__sample_id,
            "task": self.__task.value,
            "image": relative(self.__image),
            "source_prompt": self.__source_prompt,
            "prompt": self.__prompt,
        }

        for field, path in self.__files.items():
            if path is not None:
                data[field] = relative(path)

        if self.__edit_objects is not None:
            data["edit_objects"] = self.__edit_objects

        return data

    # -----------------------------------------------------------------------------

    def to_request(self) -> EditRequest:
        """Load sample files into editing request"""
        image = ImageHelpers.load_image(self.__require(self.__image))
        size = ImageHelpers.image_size(image)

        def load(field: str) -> Optional[torch.Tensor]:
            path = self.__files[field]

            return None if path is None else ImageHelpers.load_image(self.__require(path), size=size)

        mask_path = self.__files["mask"]

        return EditRequest(
            image=image,
            source_prompt=self.__source_prompt,
            target_prompt=self.__prompt,
            task=self.__task,
            aux=AuxiliaryInputs(
                reference=load("reference"),
                stroke_image=load("stroke_image"),
                composed_image=load("composed_image"),
                region_mask=None if mask_path is None else ImageHelpers.load_mask(self.__require(mask_path)),
            ),
            edit_objects=self.__edit_objects,
            sample_id=self.__sample_id,
        )

    # -----------------------------------------------------------------------------

    @staticmethod
    def __require(path: Path) -> Path:
        if not path.is_file():
            raise EvaluationException(f"Test sample file '{path}' does not exist")

        return path


def load_manifest(path: Union[str, Path]) -> List[TestSample]:
    """Read JSONL test set manifest"""
    path = Path(path)

    if not path.is_file():
        raise EvaluationException(f"Test set manifest '{path}' does not exist")

    samples: List[TestSample] = []

    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if line.strip() == "":
            continue

        try:
            data = json.loads(line)

        except json.JSONDecodeError as ex:
            raise EvaluationException(f"Manifest line {number} is not valid JSON: {ex}") from ex

        if not isinstance(data, dict):
            raise EvaluationException(f"Manifest line {number} is not JSON object")

        samples.append(TestSample.from_dict(data, path.parent))

    if len(samples) == 0:
        raise EvaluationException("no samples")

    return samples


def write_manifest(samples: List[TestSample], path: Union[str, Path]) -> Path:
    """Write JSONL test set manifest with paths relative to its directory"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    lines = [json.dumps(sample.to_dict(base=path.parent)) for sample in samples]

    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    return path


def synthesize_testset(  # pylint: disable=too-many-locals
    directory: Union[str, Path],
    count: int,
    size: int = 32,
    seed: int = 0,
) -> Path:
    """Generate synthetic test set cycling through all editing tasks, returns manifest path"""
    if count < 1:
        raise EvaluationException("Synthetic test set needs at least one sample")

    directory = Path(directory)
    images_dir = directory / "images"

    dataset = SyntheticImageDataset(count=2 * count, size=size, seed=seed)
    generator = torch.Generator().manual_seed(seed)

    tasks = (
        EditTaskKind.STYLE_TRANSFER,
        EditTaskKind.ADD_OBJECT,
        EditTaskKind.STROKE,
        EditTaskKind.COMPOSE,
        EditTaskKind.REPLACE_OBJECT,
    )

    samples: List[TestSample] = []

    for index in range(count):
        sample_id = f"synthetic_{index:04d}"
        task = tasks[index % len(tasks)]

        image = dataset[2 * index]
        other = dataset[2 * index + 1]

        top, left, height, width = _random_box(size, generator)

        files: Dict[str, Path] = {}
        source_prompt, prompt = "a photo", "a painting"
        edit_objects: Optional[List[str]] = None

        if task == EditTaskKind.STYLE_TRANSFER:
            files["reference"] = images_dir / f"{sample_id}_reference.png"
            ImageHelpers.save_image(other, files["reference"])

        elif task == EditTaskKind.ADD_OBJECT:
            region = torch.zeros((size, size))
            region[top : top + height, left : left + width] = 1.0

            files["mask"] = images_dir / f"{sample_id}_mask.png"
            ImageHelpers.save_mask(region, files["mask"])

            source_prompt, prompt = "a photo", "a photo with a ball"

        elif task == EditTaskKind.STROKE:
            stroke = image.clone()
            stroke[:, top : top + height, left : left + width] = torch.rand(3, 1, 1, generator=generator)

            files["stroke_image"] = images_dir / f"{sample_id}_stroke.png"
            ImageHelpers.save_image(stroke, files["stroke_image"])

            source_prompt, prompt = "a photo", "a photo with a tree"

        elif task == EditTaskKind.COMPOSE:
            composed = image.clone()
            composed[:, top : top + height, left : left + width] = other[:, top : top + height, left : left + width]

            files["composed_image"] = images_dir / f"{sample_id}_composed.png"
            ImageHelpers.save_image(composed, files["composed_image"])

            source_prompt, prompt = "a photo", "a photo with a window"

        else:
            image = torch.full((3, size, size), 0.5)
            image[0, top : top + height, left : left + width] = 1.0
            image[1:, top : top + height, left : left + width] = 0.0

            source_prompt, prompt = "a red square", "a blue square"
            edit_objects = ["red"]

        image_path = images_dir / f"{sample_id}.png"
        ImageHelpers.save_image(image, image_path)

        samples.append(
            TestSample(
                sample_id=sample_id,
                task=task,
                image=image_path,
                source_prompt=source_prompt,
                prompt=prompt,
                reference=files.get("reference"),
                stroke_image=files.get("stroke_image"),
                composed_image=files.get("composed_image"),
                mask=files.get("mask"),
                edit_objects=edit_objects,
            )
        )

    return write_manifest(samples, directory / MANIFEST_FILE_NAME)


def _random_box(size: int, generator: torch.Generator) -> Tuple[int, int, int, int]:
    height, width = torch.randint(size // 4, size // 2 + 1, (2,), generator=generator).tolist()
    top = int(torch.randint(0, size - height + 1, (1,), generator=generator))
    left = int(torch.randint(0, size - width + 1, (1,), generator=generator))

    return top, left, height, width


@inject
class TestsetEvaluator:
    """
    Runs editor over test set and collects pixel domain metrics

    Samples may be processed by multiple workers, report is assembled in manifest order.

    @package        FastyBird:DiffusionEditor!
    @module         evaluation/testset
    """

    __test__ = False

    __editor: NoiseTimestepOptimizer
    __metrics: MetricsCalculator

    __event_dispatcher: EventDispatcher

    __logger: Union[Logger, logging.Logger]

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        editor: NoiseTimestepOptimizer,
        metrics: MetricsCalculator,
        event_dispatcher: EventDispatcher,
        logger: Union[Logger, logging.Logger] = logging.getLogger("dummy"),
    ) -> None:
        self.__editor = editor
        self.__metrics = metrics

        self.__event_dispatcher = event_dispatcher

        self.__logger = logger

    # -----------------------------------------------------------------------------

    def evaluate_testset(
        self,
        manifest: Union[str, Path, List[TestSample]],
        config: RunConfig,
        output_dir: Union[str, Path],
        workers: int = 1,
    ) -> MetricReport:
        """Edit every sample, write per sample CSV and aggregate JSON report"""
        samples = manifest if isinstance(manifest, list) else load_manifest(manifest)

        if len(samples) == 0:
            raise EvaluationException("no samples")

        if workers < 1:
            raise EvaluationException(f"Number of workers must be positive, got {workers}")

        slugs: Dict[str, str] = {}

        for sample in samples:
            slug = TextHelpers.slug(sample.sample_id)

            if slug in slugs:
                raise EvaluationException(
                    f"Samples {slugs[slug]!r} and {sample.sample_id!r} share output directory {slug!r}"
                )

            slugs[slug] = sample.sample_id

        output_dir = Path(output_dir)

        if workers == 1:
            outcomes = [self.__evaluate_sample(sample, config, output_dir) for sample in samples]

        else:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                outcomes = list(executor.map(lambda sample: self.__evaluate_sample(sample, config, output_dir), samples))

        report = MetricReport(
            provenance={
                "backends": self.__editor.backends.to_dict(),
                "config": config.to_dict(),
                "dino": self.__metrics.has_dino,
            }
        )

        trajectories: List[TrajectoryLog] = []

        for sample_id, values, error, trajectory in outcomes:
            if values is not None:
                report.add_sample(sample_id, values)

            else:
                report.add_failure(sample_id, str(error))

            if trajectory is not None and len(trajectory.records) == config.optimization_steps:
                trajectories.append(trajectory)

        if len(report.failures) > 0:
            self.__logger.warning(
                "Some test samples failed and are excluded from means",
                extra={
                    "evaluation": {
                        "failed": len(report.failures),
                        "evaluated": report.count,
                    },
                },
            )

        report.write_csv(output_dir / METRICS_CSV_FILE)
        report.write_json(output_dir / REPORT_JSON_FILE)

        # Aborted runs are shorter and left out of the average
        if len(trajectories) > 0:
            TrajectoryLog.write_plot_data(TrajectoryLog.average(trajectories), output_dir / AVERAGE_PLOT_DATA_FILE)

        self.__logger.info(
            "Test set evaluated",
            extra={
                "evaluation": {
                    "count": report.count,
                    "failed": len(report.failures),
                    "means": report.means(),
                },
            },
        )

        return report

    # -----------------------------------------------------------------------------

    def __evaluate_sample(self, sample: TestSample, config: RunConfig, output_dir: Path) -> SampleOutcome:
        try:
            request = sample.to_request()

            result = self.__editor.run(request, config)
            result.save(output_dir / TextHelpers.slug(sample.sample_id))

            aux_images = {
                star: image
                for field, star in AUX_IMAGE_FIELDS
                if (image := getattr(request.aux, field)) is not None
            }

            values = self.__metrics.compute(result.output_image, request.image, request.target_prompt, aux_images)

        except Exception as ex:  # pylint: disable=broad-except
            self.__logger.error(
                "Test sample could not be evaluated",
                extra={
                    "evaluation": {
                        "sample": sample.sample_id,
                    },
                    "exception": {
                        "message": str(ex),
                        "code": type(ex).__name__,
                    },
                },
            )
            self.__logger.exception(ex)

            self.__event_dispatcher.dispatch(
                event_id=SampleEvaluatedEvent.EVENT_NAME,
                event=SampleEvaluatedEvent(sample_id=sample.sample_id, metrics={}, error=str(ex)),
            )

            return sample.sample_id, None, str(ex), None

        self.__event_dispatcher.dispatch(
            event_id=SampleEvaluatedEvent.EVENT_NAME,
            event=SampleEvaluatedEvent(sample_id=sample.sample_id, metrics=values),
        )

        return sample.sample_id, values, None, result.trajectory
