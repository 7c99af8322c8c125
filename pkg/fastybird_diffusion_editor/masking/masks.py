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
FastyBird diffusion editor masking module masks builder
"""

# Python base dependencies
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Union

# Library dependencies
import torch
import torch.nn.functional as F
from kink import inject

# Library libs
from fastybird_diffusion_editor.backends.backend import ISegmenter
from fastybird_diffusion_editor.entities import EditRequest
from fastybird_diffusion_editor.exceptions import (
    DomainException,
    InvalidConfigurationException,
    MaskException,
    ShapeMismatchException,
)
from fastybird_diffusion_editor.helpers import ImageHelpers, TextHelpers
from fastybird_diffusion_editor.logger import Logger
from fastybird_diffusion_editor.types import (
    DEFAULT_DIFFERENCE_TOLERANCE,
    DEFAULT_SEGMENTATION_THRESHOLD,
    DEFAULT_STOPWORDS,
    EditTaskKind,
    MaskResolution,
)


class Mask:
    """
    Editing region

    Values are in [0, 1], one value per pixel or per latent cell

    @package        FastyBird:DiffusionEditor!
    @module         masking/masks
    """

    __data: torch.Tensor
    __resolution: MaskResolution

    # -----------------------------------------------------------------------------

    def __init__(self, data: torch.Tensor, resolution: MaskResolution = MaskResolution.PIXEL) -> None:
        if data.dim() != 2:
            raise ShapeMismatchException(f"Mask must be (H, W) tensor, got {tuple(data.shape)}")

        if not bool(torch.isfinite(data).all()) or float(data.min()) < 0 or float(data.max()) > 1:
            raise DomainException("Mask values must be within [0, 1]")

        self.__data = data
        self.__resolution = resolution

    # -----------------------------------------------------------------------------

    @classmethod
    def ones(cls, height: int, width: int, resolution: MaskResolution = MaskResolution.PIXEL) -> "Mask":
        """Mask selecting everything"""
        return cls(torch.ones(height, width), resolution)

    # -----------------------------------------------------------------------------

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "Mask":
        """Read pixel mask from grayscale image file"""
        return cls(ImageHelpers.load_mask(path), MaskResolution.PIXEL)

    # -----------------------------------------------------------------------------

    @property
    def data(self) -> torch.Tensor:
        """Mask values"""
        return self.__data

    # -----------------------------------------------------------------------------

    @property
    def resolution(self) -> MaskResolution:
        """Geometry of mask values"""
        return self.__resolution

    # -----------------------------------------------------------------------------

    @property
    def is_empty(self) -> bool:
        """Nothing is selected for editing"""
        return not bool((self.__data > 0).any())

    # -----------------------------------------------------------------------------

    @property
    def coverage(self) -> float:
        """Mean mask value"""
        return float(self.__data.float().mean())

    # -----------------------------------------------------------------------------

    def binarize(self, threshold: float = DEFAULT_SEGMENTATION_THRESHOLD) -> "Mask":
        """Values at or above threshold become 1, others 0"""
        return Mask((self.__data >= threshold).to(self.__data.dtype), self.__resolution)

    # -----------------------------------------------------------------------------

    def save(self, path: Union[str, Path]) -> None:
        """Write mask as 0/255 grayscale image"""
        ImageHelpers.save_mask(self.__data, path)

    # -----------------------------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mask):
            return False

        return (
            self.__resolution == other.resolution
            and self.__data.shape == other.data.shape
            and bool(torch.equal(self.__data, other.data.to(self.__data.dtype)))
        )


@inject
class MaskBuilder:
    """
    Editing region locator

    Each task kind has its own rule: segmentation of replaced objects, whole image for style transfer,
    user region for added objects and pixel differences for strokes and compositions.

    @package        FastyBird:DiffusionEditor!
    @module         masking/masks
    """

    __stopwords: List[str]
    __threshold: float
    __tolerance: float
    __exact: bool

    __logger: Union[Logger, logging.Logger]

    # -----------------------------------------------------------------------------

    def __init__(  # pylint: disable=too-many-arguments
        self,
        stopwords: Iterable[str] = DEFAULT_STOPWORDS,
        threshold: float = DEFAULT_SEGMENTATION_THRESHOLD,
        tolerance: float = DEFAULT_DIFFERENCE_TOLERANCE,
        exact: bool = False,
        logger: Union[Logger, logging.Logger] = logging.getLogger("dummy"),
    ) -> None:
        if not 0 <= threshold <= 1:
            raise InvalidConfigurationException(f"Segmentation threshold must be within [0, 1], got {threshold}")

        if tolerance < 0:
            raise InvalidConfigurationException(f"Difference tolerance must not be negative, got {tolerance}")

        self.__stopwords = [word.casefold() for word in stopwords]
        self.__threshold = threshold
        self.__tolerance = tolerance
        self.__exact = exact

        self.__logger = logger

    # -----------------------------------------------------------------------------

    @property
    def threshold(self) -> float:
        """Soft segmentation binarization threshold"""
        return self.__threshold

    # -----------------------------------------------------------------------------

    def token_diff(self, source_prompt: str, target_prompt: str) -> List[str]:
        """Tokens of source prompt missing in target prompt, in source order"""
        target_tokens = set(TextHelpers.tokenize(target_prompt))

        objects: List[str] = []

        for token in TextHelpers.tokenize(source_prompt):
            if token in target_tokens or token in self.__stopwords or token in objects:
                continue

            objects.append(token)

        return objects

    # -----------------------------------------------------------------------------

    def difference_mask(
        self,
        image: torch.Tensor,
        other: torch.Tensor,
        tolerance: Optional[float] = None,
        exact: Optional[bool] = None,
    ) -> Mask:
        """Pixels where at least one channel differs by more than tolerance"""
        if image.shape != other.shape:
            raise ShapeMismatchException(
                f"Compared images shapes differ: {tuple(image.shape)} vs {tuple(other.shape)}"
            )

        difference = (image.detach().double() - other.detach().double()).abs()

        if exact if exact is not None else self.__exact:
            changed = difference > 0

        else:
            changed = difference > (tolerance if tolerance is not None else self.__tolerance)

        if changed.dim() == 3:
            changed = changed.any(dim=0)

        return Mask(changed.to(image.dtype), MaskResolution.PIXEL)

    # -----------------------------------------------------------------------------

    @staticmethod
    def to_latent_resolution(mask: Mask, factor: int) -> Mask:
        """Max pooling to latent cells, a cell is editable when any of its pixels is editable"""
        if mask.resolution == MaskResolution.LATENT:
            raise MaskException("Mask is already at latent resolution")

        if factor < 1:
            raise InvalidConfigurationException(f"Spatial factor must be positive, got {factor}")

        height, width = mask.data.shape

        if height % factor != 0 or width % factor != 0:
            raise ShapeMismatchException(f"Mask size {height}x{width} is not divisible by factor {factor}")

        pooled = F.max_pool2d(mask.data.unsqueeze(0).unsqueeze(0), kernel_size=factor, stride=factor)

        return Mask(pooled[0, 0], MaskResolution.LATENT)

    # -----------------------------------------------------------------------------

    def compute_mask(
        self,
        request: EditRequest,
        segmenter: Optional[ISegmenter] = None,
        threshold: Optional[float] = None,
    ) -> Mask:
        """Pixel resolution editing region of request"""
        height, width = request.image.shape[1], request.image.shape[2]

        if request.task == EditTaskKind.STYLE_TRANSFER:
            mask = Mask.ones(height, width)

        elif request.task == EditTaskKind.ADD_OBJECT:
            if request.aux.region_mask is None:
                raise MaskException("Adding object requires region mask")

            mask = Mask(request.aux.region_mask, MaskResolution.PIXEL)

        elif request.task == EditTaskKind.STROKE:
            if request.aux.stroke_image is None:
                raise MaskException("Stroke editing requires stroke image")

            mask = self.difference_mask(request.image, request.aux.stroke_image)

        elif request.task == EditTaskKind.COMPOSE:
            if request.aux.composed_image is None:
                raise MaskException("Composition editing requires composed image")

            mask = self.difference_mask(request.image, request.aux.composed_image)

        else:
            mask = self.__segment_objects(request, segmenter, threshold)

        if mask.is_empty:
            self.__logger.warning(
                "empty edit region",
                extra={
                    "mask": {
                        "sample": request.sample_id,
                        "task": request.task.value,
                    },
                },
            )

        else:
            self.__logger.debug(
                "Edit region located",
                extra={
                    "mask": {
                        "sample": request.sample_id,
                        "task": request.task.value,
                        "coverage": mask.coverage,
                    },
                },
            )

        return mask

    # -----------------------------------------------------------------------------

    def __segment_objects(
        self,
        request: EditRequest,
        segmenter: Optional[ISegmenter],
        threshold: Optional[float],
    ) -> Mask:
        objects = (
            request.edit_objects
            if request.edit_objects is not None and len(request.edit_objects) > 0
            else self.token_diff(request.source_prompt, request.target_prompt)
        )

        if len(objects) == 0:
            raise MaskException("no replace-target found; supply --edit-object")

        if segmenter is None:
            raise InvalidConfigurationException("Replacing objects requires segmenter backend")

        union = torch.zeros(request.image.shape[1], request.image.shape[2], dtype=request.image.dtype)

        with torch.no_grad():
            for item in objects:
                segmented = segmenter.segment(request.image, item)

                if tuple(segmented.shape) != tuple(union.shape):
                    raise ShapeMismatchException(
                        f"Segmenter returned {tuple(segmented.shape)} mask for {tuple(union.shape)} image"
                    )

                union = torch.maximum(union, segmented.to(union.dtype).clamp(0.0, 1.0))

        self.__logger.debug(
            "Replace targets segmented",
            extra={
                "mask": {
                    "sample": request.sample_id,
                    "objects": objects,
                },
            },
        )

        return Mask(union, MaskResolution.PIXEL).binarize(threshold if threshold is not None else self.__threshold)
