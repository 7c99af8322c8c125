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
FastyBird diffusion editor helpers module
"""

# Python base dependencies
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

# Library dependencies
import inflection
import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

# Library libs
from fastybird_diffusion_editor.exceptions import ShapeMismatchException

TOKEN_PATTERN = re.compile(r"<[^<>\s]+>|\w+")


class TextHelpers:
    """
    Prompt text helpers

    @package        FastyBird:DiffusionEditor!
    @module         helpers
    """

    @staticmethod
    def tokenize(text: str) -> List[str]:
        """Split text into case-folded tokens, punctuation is dropped and <concept> tokens are kept whole"""
        return TOKEN_PATTERN.findall(text.casefold())

    # -----------------------------------------------------------------------------

    @staticmethod
    def slug(text: str) -> str:
        """File system safe identifier"""
        slug = inflection.parameterize(text, separator="-")

        return slug if slug != "" else "sample"


class ImageHelpers:
    """
    Image files transformers

    Images are float (3, H, W) tensors in [0, 1], masks are float (H, W) tensors

    @package        FastyBird:DiffusionEditor!
    @module         helpers
    """

    @staticmethod
    def image_size(image: torch.Tensor) -> Tuple[int, int]:
        """Height and width of CHW image"""
        return int(image.shape[-2]), int(image.shape[-1])

    # -----------------------------------------------------------------------------

    @staticmethod
    def load_image(path: Union[str, Path], size: Optional[Tuple[int, int]] = None) -> torch.Tensor:
        """Read RGB image file, optionally resized to (height, width)"""
        with Image.open(path) as source:
            image = source.convert("RGB")

            if size is not None and (image.height, image.width) != tuple(size):
                image = image.resize((size[1], size[0]), resample=Image.Resampling.BICUBIC)

            data = np.asarray(image, dtype=np.float32) / 255.0

        return torch.from_numpy(data.copy()).permute(2, 0, 1).contiguous()

    # -----------------------------------------------------------------------------

    @staticmethod
    def save_image(image: torch.Tensor, path: Union[str, Path]) -> None:
        """Write (3, H, W) tensor as 8-bit RGB PNG"""
        if image.dim() != 3 or image.shape[0] != 3:
            raise ShapeMismatchException(f"Image must be (3, H, W) tensor, got {tuple(image.shape)}")

        data = ImageHelpers.to_uint8(image).permute(1, 2, 0).numpy()

        Path(path).parent.mkdir(parents=True, exist_ok=True)

        Image.fromarray(data).save(path, format="PNG")

    # -----------------------------------------------------------------------------

    @staticmethod
    def load_mask(path: Union[str, Path]) -> torch.Tensor:
        """Read single channel mask file into (H, W) tensor in [0, 1]"""
        with Image.open(path) as source:
            data = np.asarray(source.convert("L"), dtype=np.float32) / 255.0

        return torch.from_numpy(data.copy())

    # -----------------------------------------------------------------------------

    @staticmethod
    def save_mask(mask: torch.Tensor, path: Union[str, Path], threshold: float = 0.5) -> None:
        """Write (H, W) mask as 0/255 grayscale PNG"""
        if mask.dim() != 2:
            raise ShapeMismatchException(f"Mask must be (H, W) tensor, got {tuple(mask.shape)}")

        data = ((mask.detach().cpu() >= threshold).to(torch.uint8) * 255).numpy()

        Path(path).parent.mkdir(parents=True, exist_ok=True)

        Image.fromarray(data).save(path, format="PNG")

    # -----------------------------------------------------------------------------

    @staticmethod
    def to_uint8(image: torch.Tensor) -> torch.Tensor:
        """Quantize [0, 1] image to 8-bit values"""
        return torch.round(image.detach().cpu().float().clamp(0.0, 1.0) * 255.0).to(torch.uint8)


class TensorHelpers:
    """
    Tensor statistics and similarity helpers

    @package        FastyBird:DiffusionEditor!
    @module         helpers
    """

    @staticmethod
    def cosine(first: torch.Tensor, second: torch.Tensor) -> torch.Tensor:
        """Cosine similarity along last dimension"""
        if first.shape[-1] != second.shape[-1]:
            raise ShapeMismatchException(
                f"Feature vectors dimensions differ: {first.shape[-1]} vs {second.shape[-1]}"
            )

        return F.cosine_similarity(first, second.to(first.dtype), dim=-1, eps=1e-12)

    # -----------------------------------------------------------------------------

    @staticmethod
    def noise_stats(noise: torch.Tensor) -> Dict[str, float]:
        """Global min, max, mean and population standard deviation"""
        values = noise.detach().double()

        return {
            "min": float(values.min()),
            "max": float(values.max()),
            "mean": float(values.mean()),
            "std": float(values.std(correction=0)),
        }
