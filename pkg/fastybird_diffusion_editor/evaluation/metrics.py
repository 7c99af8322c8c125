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
FastyBird diffusion editor evaluation module metrics
"""

# Python base dependencies
import csv
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

# Library dependencies
import torch
from kink import inject

# Library libs
from fastybird_diffusion_editor.backends.backend import ITextEmbedder, IVisualEmbedder
from fastybird_diffusion_editor.exceptions import InvalidConfigurationException
from fastybird_diffusion_editor.helpers import TensorHelpers
from fastybird_diffusion_editor.logger import Logger

METRIC_NAMES: Tuple[str, ...] = ("clip_t", "clip_i", "clip_i_r", "clip_i_s", "clip_i_c", "dino_i")

MetricValues = Dict[str, Optional[float]]


@inject
class MetricsCalculator:
    """
    Cosine similarity metrics computed with pixel domain encoders

    @package        FastyBird:DiffusionEditor!
    @module         evaluation/metrics
    """

    __text_embedder: Optional[ITextEmbedder]
    __visual_embedder: Optional[IVisualEmbedder]
    __dino: Optional[IVisualEmbedder]

    __logger: Union[Logger, logging.Logger]

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        text_embedder: Optional[ITextEmbedder],
        visual_embedder: Optional[IVisualEmbedder],
        dino: Optional[IVisualEmbedder] = None,
        logger: Union[Logger, logging.Logger] = logging.getLogger("dummy"),
    ) -> None:
        self.__text_embedder = text_embedder
        self.__visual_embedder = visual_embedder
        self.__dino = dino

        self.__logger = logger

    # -----------------------------------------------------------------------------

    @property
    def has_dino(self) -> bool:
        """Self-supervised embedder is available"""
        return self.__dino is not None

    # -----------------------------------------------------------------------------

    def clip_t(self, output: torch.Tensor, prompt: str) -> float:
        """Cosine between output image feature and prompt feature"""
        if self.__text_embedder is None:
            raise InvalidConfigurationException("CLIP-T metric requires text embedder")

        with torch.no_grad():
            return self.__bounded(
                TensorHelpers.cosine(
                    self.__require_visual().embed_pixel(output),
                    self.__text_embedder.pooled_embed(prompt),
                )
            )

    # -----------------------------------------------------------------------------

    def clip_i(self, output: torch.Tensor, original: torch.Tensor) -> float:
        """Cosine between output and original image features"""
        return self.__image_cosine(self.__require_visual(), output, original)

    # -----------------------------------------------------------------------------

    def clip_i_star(self, output: torch.Tensor, aux_image: torch.Tensor) -> float:
        """Cosine between output and auxiliary image features"""
        return self.__image_cosine(self.__require_visual(), output, aux_image)

    # -----------------------------------------------------------------------------

    def dino_i(self, output: torch.Tensor, original: torch.Tensor) -> float:
        """Cosine between output and original self-supervised features"""
        if self.__dino is None:
            raise InvalidConfigurationException("DINO-I metric requires self-supervised embedder")

        return self.__image_cosine(self.__dino, output, original)

    # -----------------------------------------------------------------------------

    def compute(
        self,
        output: torch.Tensor,
        original: torch.Tensor,
        prompt: str,
        aux_images: Optional[Dict[str, torch.Tensor]] = None,
    ) -> MetricValues:
        """All applicable metrics, unavailable ones are None"""
        aux_images = aux_images if aux_images is not None else {}

        values: MetricValues = {name: None for name in METRIC_NAMES}

        values["clip_t"] = self.clip_t(output, prompt)
        values["clip_i"] = self.clip_i(output, original)

        for star, image in aux_images.items():
            values[f"clip_i_{star}"] = self.clip_i_star(output, image)

        if self.__dino is not None:
            values["dino_i"] = self.dino_i(output, original)

        return values

    # -----------------------------------------------------------------------------

    def __require_visual(self) -> IVisualEmbedder:
        if self.__visual_embedder is None:
            raise InvalidConfigurationException("CLIP-I metrics require visual embedder")

        return self.__visual_embedder

    # -----------------------------------------------------------------------------

    def __image_cosine(self, embedder: IVisualEmbedder, first: torch.Tensor, second: torch.Tensor) -> float:
        with torch.no_grad():
            return self.__bounded(TensorHelpers.cosine(embedder.embed_pixel(first), embedder.embed_pixel(second)))

    # -----------------------------------------------------------------------------

    @staticmethod
    def __bounded(value: torch.Tensor) -> float:
        return min(1.0, max(-1.0, float(value)))


class MetricReport:
    """
    Per sample metrics with their means

    @package        FastyBird:DiffusionEditor!
    @module         evaluation/metrics
    """

    __samples: List[Tuple[str, MetricValues]]
    __failures: List[Tuple[str, str]]
    __provenance: Dict

    # -----------------------------------------------------------------------------

    def __init__(self, provenance: Optional[Dict] = None) -> None:
        self.__samples = []
        self.__failures = []
        self.__provenance = provenance if provenance is not None else {}

    # -----------------------------------------------------------------------------

    @property
    def samples(self) -> List[Tuple[str, MetricValues]]:
        """Evaluated samples identifiers with their metrics"""
        return self.__samples

    # -----------------------------------------------------------------------------

    @property
    def failures(self) -> List[Tuple[str, str]]:
        """Failed samples identifiers with error messages"""
        return self.__failures

    # -----------------------------------------------------------------------------

    @property
    def provenance(self) -> Dict:
        """Embedders description"""
        return self.__provenance

    # -----------------------------------------------------------------------------

    @property
    def count(self) -> int:
        """Number of successfully evaluated samples"""
        return len(self.__samples)

    # -----------------------------------------------------------------------------

    def add_sample(self, sample_id: str, values: MetricValues) -> None:
        """Append evaluated sample"""
        self.__samples.append((sample_id, values))

    # -----------------------------------------------------------------------------

    def add_failure(self, sample_id: str, error: str) -> None:
        """Append failed sample"""
        self.__failures.append((sample_id, error))

    # -----------------------------------------------------------------------------

    def means(self) -> MetricValues:
        """Arithmetic mean of every metric over samples where it is available"""
        means: MetricValues = {}

        for name in METRIC_NAMES:
            values = [
                float(metrics[name]) for _, metrics in self.__samples if metrics.get(name) is not None  # type: ignore[arg-type]
            ]

            means[name] = math.fsum(values) / len(values) if len(values) > 0 else None

        return means

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict:
        """Aggregate report dictionary"""
        return {
            "count": self.count,
            "failed": len(self.__failures),
            "means": self.means(),
            "failures": [{"sample": sample_id, "error": error} for sample_id, error in self.__failures],
            "provenance": self.__provenance,
        }

    # -----------------------------------------------------------------------------

    def write_csv(self, path: Union[str, Path]) -> None:
        """Write per sample metrics, unavailable values are empty"""
        Path(path).parent.mkdir(parents=True, exist_ok=True)

        with open(path, "w", newline="", encoding="utf-8") as report_file:
            writer = csv.writer(report_file)
            writer.writerow(["sample", *METRIC_NAMES])

            for sample_id, metrics in self.__samples:
                writer.writerow(
                    [sample_id, *["" if metrics.get(name) is None else repr(metrics[name]) for name in METRIC_NAMES]]
                )

    # -----------------------------------------------------------------------------

    def write_json(self, path: Union[str, Path]) -> None:
        """Write aggregate report"""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
