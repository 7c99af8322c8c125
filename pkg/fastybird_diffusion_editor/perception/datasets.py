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
FastyBird diffusion editor perception module datasets
"""

# Python base dependencies
import math
from pathlib import Path
from typing import List, Sequence, Tuple, Union

# Library dependencies
import torch
import torch.nn.functional as F
from torch.utils.data import Dataset

# Library libs
from fastybird_diffusion_editor.exceptions import DistillationException
from fastybird_diffusion_editor.helpers import ImageHelpers

IMAGE_SUFFIXES: Tuple[str, ...] = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


class SyntheticImageDataset(Dataset):
    """
    Procedurally generated images

    Images cycle through linear gradients, flat shapes on a flat background and smooth noise textures.
    Every image depends only on dataset seed and its index.

    @package        FastyBird:DiffusionEditor!
    @module         perception/datasets
    """

    __count: int
    __size: Tuple[int, int]
    __seed: int

    # -----------------------------------------------------------------------------

    def __init__(self, count: int, size: Union[int, Tuple[int, int]], seed: int = 0) -> None:
        self.__count = count
        self.__size = (size, size) if isinstance(size, int) else (int(size[0]), int(size[1]))
        self.__seed = seed

    # -----------------------------------------------------------------------------

    @property
    def size(self) -> Tuple[int, int]:
        """Images height and width"""
        return self.__size

    # -----------------------------------------------------------------------------

    def __len__(self) -> int:
        return self.__count

    # -----------------------------------------------------------------------------

    def __getitem__(self, index: int) -> torch.Tensor:
        if not 0 <= index < self.__count:
            raise IndexError(f"Synthetic dataset has no image {index}")

        generator = torch.Generator().manual_seed(self.__seed * 1_000_003 + index)

        kind = index % 3

        if kind == 0:
            image = self.__gradient(generator)

        elif kind == 1:
            image = self.__shapes(generator)

        else:
            image = self.__texture(generator)

        return image.clamp(0.0, 1.0).float()

    # -----------------------------------------------------------------------------

    def __gradient(self, generator: torch.Generator) -> torch.Tensor:
        height, width = self.__size

        start, end = torch.rand(2, 3, 1, 1, generator=generator)
        angle = float(torch.rand(1, generator=generator)) * 2 * math.pi

        rows = torch.linspace(0, 1, height).view(height, 1).expand(height, width)
        columns = torch.linspace(0, 1, width).view(1, width).expand(height, width)

        position = math.cos(angle) * columns + math.sin(angle) * rows
        position = (position - position.min()) / (position.max() - position.min() + 1e-12)

        return start + (end - start) * position.unsqueeze(0)

    # -----------------------------------------------------------------------------

    def __shapes(self, generator: torch.Generator) -> torch.Tensor:
        height, width = self.__size

        image = torch.rand(3, 1, 1, generator=generator).expand(3, height, width).clone()

        rows = torch.arange(height).view(height, 1).float()
        columns = torch.arange(width).view(1, width).float()

        for _ in range(int(torch.randint(1, 4, (1,), generator=generator))):
            colour = torch.rand(3, 1, 1, generator=generator)
            center_y, center_x, extent_y, extent_x = torch.rand(4, generator=generator).tolist()

            center_y, center_x = center_y * height, center_x * width
            extent_y, extent_x = (0.1 + 0.3 * extent_y) * height, (0.1 + 0.3 * extent_x) * width

            if bool(torch.rand(1, generator=generator) < 0.5):
                region = ((rows - center_y).abs() <= extent_y) & ((columns - center_x).abs() <= extent_x)

            else:
                region = ((rows - center_y) / extent_y) ** 2 + ((columns - center_x) / extent_x) ** 2 <= 1

            image = torch.where(region.unsqueeze(0), colour.expand(3, height, width), image)

        return image

    # -----------------------------------------------------------------------------

    def __texture(self, generator: torch.Generator) -> torch.Tensor:
        height, width = self.__size

        cells = int(torch.randint(2, 9, (1,), generator=generator))

        coarse = torch.rand(1, 3, cells, cells, generator=generator)
        base = torch.rand(3, 1, 1, generator=generator)

        texture = F.interpolate(coarse, size=(height, width), mode="bilinear", align_corners=False)[0]

        return 0.5 * base + 0.5 * texture


class ImageFolderDataset(Dataset):
    """
    Images read from directory, resized to common size

    @package        FastyBird:DiffusionEditor!
    @module         perception/datasets
    """

    __paths: List[Path]
    __size: Tuple[int, int]

    # -----------------------------------------------------------------------------

    def __init__(self, directory: Union[str, Path], size: Union[int, Tuple[int, int]]) -> None:
        directory = Path(directory)

        if not directory.is_dir():
            raise DistillationException(f"Dataset directory '{directory}' does not exist", diagnostics={})

        self.__paths = sorted(path for path in directory.rglob("*") if path.suffix.lower() in IMAGE_SUFFIXES)
        self.__size = (size, size) if isinstance(size, int) else (int(size[0]), int(size[1]))

    # -----------------------------------------------------------------------------

    @property
    def paths(self) -> Sequence[Path]:
        """Dataset image files"""
        return self.__paths

    # -----------------------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.__paths)

    # -----------------------------------------------------------------------------

    def __getitem__(self, index: int) -> torch.Tensor:
        return ImageHelpers.load_image(self.__paths[index], size=self.__size)
