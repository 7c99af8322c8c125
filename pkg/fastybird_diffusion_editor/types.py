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
FastyBird diffusion editor types module
"""

# Python base dependencies
from enum import Enum, unique
from typing import Tuple

EDITOR_NAME: str = "diffusion-editor"

# Schedule clamping bounds
ALPHA_MIN: float = 1e-5
ALPHA_MAX: float = 1 - 1e-6

# Optimized timesteps bounds
T_MIN: float = 1e-4
T_MAX: float = 0.999

# Run defaults
DEFAULT_STEPS_COUNT: int = 10  # K
DEFAULT_START_TIMESTEP: float = 0.75  # T
DEFAULT_OPTIMIZATION_STEPS: int = 50  # W
DEFAULT_TIMESTEPS_LEARNING_RATE: float = 1.0
DEFAULT_NOISE_LEARNING_RATE: float = 0.005
DEFAULT_OPTIMIZER_BETAS: Tuple[float, float] = (0.9, 0.999)
DEFAULT_OPTIMIZER_EPS: float = 1e-8
DEFAULT_WEIGHT_DECAY: float = 0.0

# Recomputation is switched on above this number of denoising steps
CHECKPOINT_STEPS_THRESHOLD: int = 10

# Loss weights defaults
DEFAULT_LAMBDA_SEM: float = 1.0
DEFAULT_LAMBDA_PERC: float = 0.5
DEFAULT_LAMBDA_REF: float = 1.0

# Masking defaults
DEFAULT_SEGMENTATION_THRESHOLD: float = 0.5
DEFAULT_DIFFERENCE_TOLERANCE: float = 2 / 255
DEFAULT_STOPWORDS: Tuple[str, ...] = ("a", "an", "the", "of", "and", "with", "in", "on", "at", "to")

# Distillation defaults
DEFAULT_DISTILL_ITERATIONS: int = 100000
DEFAULT_DISTILL_BATCH_SIZE: int = 16
DEFAULT_DISTILL_LEARNING_RATE: float = 1e-5
DEFAULT_DISTILL_CHECKPOINTS: int = 10

BACKEND_DIR_ENV: str = "TINO_BACKEND_DIR"
MANIFEST_FILE: str = "manifest.txt"


@unique
class ScheduleKind(Enum):
    """
    Noise level function kind

    @package        FastyBird:DiffusionEditor!
    @module         types
    """

    COSINE: str = "cosine"
    INTERPOLATED_TABLE: str = "interpolated_table"

    # -----------------------------------------------------------------------------

    @classmethod
    def has_value(cls, value: str) -> bool:
        """Check if provided value is valid enum value"""
        return value in cls._value2member_map_  # pylint: disable=no-member

    # -----------------------------------------------------------------------------

    def __str__(self) -> str:
        """Transform enum to string"""
        return str(self.value)


@unique
class EditTaskKind(Enum):
    """
    Editing operation declared by user

    @package        FastyBird:DiffusionEditor!
    @module         types
    """

    REPLACE_OBJECT: str = "replace_object"
    STYLE_TRANSFER: str = "style_transfer"
    ADD_OBJECT: str = "add_object"
    STROKE: str = "stroke"
    COMPOSE: str = "compose"

    # -----------------------------------------------------------------------------

    @classmethod
    def has_value(cls, value: str) -> bool:
        """Check if provided value is valid enum value"""
        return value in cls._value2member_map_  # pylint: disable=no-member

    # -----------------------------------------------------------------------------

    def __str__(self) -> str:
        """Transform enum to string"""
        return str(self.value)


@unique
class SemLossMode(Enum):
    """
    Semantic loss reduction of the cosines difference

    @package        FastyBird:DiffusionEditor!
    @module         types
    """

    RAW_DIFFERENCE: str = "raw_difference"
    ABSOLUTE_DIFFERENCE: str = "absolute_difference"
    SQUARED_DIFFERENCE: str = "squared_difference"

    # -----------------------------------------------------------------------------

    @classmethod
    def has_value(cls, value: str) -> bool:
        """Check if provided value is valid enum value"""
        return value in cls._value2member_map_  # pylint: disable=no-member

    # -----------------------------------------------------------------------------

    def __str__(self) -> str:
        """Transform enum to string"""
        return str(self.value)


@unique
class LossDomain(Enum):
    """
    Domain in which image features are extracted for losses

    @package        FastyBird:DiffusionEditor!
    @module         types
    """

    LATENT: str = "latent"
    PIXEL: str = "pixel"

    # -----------------------------------------------------------------------------

    @classmethod
    def has_value(cls, value: str) -> bool:
        """Check if provided value is valid enum value"""
        return value in cls._value2member_map_  # pylint: disable=no-member

    # -----------------------------------------------------------------------------

    def __str__(self) -> str:
        """Transform enum to string"""
        return str(self.value)


@unique
class DistillObjective(Enum):
    """
    Latent twin training objective

    @package        FastyBird:DiffusionEditor!
    @module         types
    """

    COSINE: str = "cosine"
    L1: str = "l1"

    # -----------------------------------------------------------------------------

    @classmethod
    def has_value(cls, value: str) -> bool:
        """Check if provided value is valid enum value"""
        return value in cls._value2member_map_  # pylint: disable=no-member

    # -----------------------------------------------------------------------------

    def __str__(self) -> str:
        """Transform enum to string"""
        return str(self.value)


@unique
class StemInitialization(Enum):
    """
    How the replaced stem of a latent twin is initialized

    @package        FastyBird:DiffusionEditor!
    @module         types
    """

    RANDOM: str = "random"
    DECODE_COMPOSED: str = "decode_composed"

    # -----------------------------------------------------------------------------

    @classmethod
    def has_value(cls, value: str) -> bool:
        """Check if provided value is valid enum value"""
        return value in cls._value2member_map_  # pylint: disable=no-member

    # -----------------------------------------------------------------------------

    def __str__(self) -> str:
        """Transform enum to string"""
        return str(self.value)


@unique
class MaskResolution(Enum):
    """
    Geometry a mask is expressed in

    @package        FastyBird:DiffusionEditor!
    @module         types
    """

    PIXEL: str = "pixel"
    LATENT: str = "latent"

    # -----------------------------------------------------------------------------

    def __str__(self) -> str:
        """Transform enum to string"""
        return str(self.value)


@unique
class EncoderRole(Enum):
    """
    Role of a visual feature encoder

    @package        FastyBird:DiffusionEditor!
    @module         types
    """

    SEMANTIC: str = "semantic"
    PERCEPTUAL: str = "perceptual"

    # -----------------------------------------------------------------------------

    @classmethod
    def has_value(cls, value: str) -> bool:
        """Check if provided value is valid enum value"""
        return value in cls._value2member_map_  # pylint: disable=no-member

    # -----------------------------------------------------------------------------

    def __str__(self) -> str:
        """Transform enum to string"""
        return str(self.value)


@unique
class AblationMode(Enum):
    """
    Ablation runner presets

    @package        FastyBird:DiffusionEditor!
    @module         types
    """

    NONE: str = "none"
    CONST_T: str = "const-t"
    CONST_N: str = "const-n"
    FULL_MASK: str = "full-mask"

    # -----------------------------------------------------------------------------

    @classmethod
    def has_value(cls, value: str) -> bool:
        """Check if provided value is valid enum value"""
        return value in cls._value2member_map_  # pylint: disable=no-member

    # -----------------------------------------------------------------------------

    def __str__(self) -> str:
        """Transform enum to string"""
        return str(self.value)


@unique
class BackendKind(Enum):
    """
    Backend implementations known by model directory loader

    @package        FastyBird:DiffusionEditor!
    @module         types
    """

    GAUSSIAN_ANALYTIC: str = "gaussian-analytic"
    TOY_POOLING: str = "toy-pooling"
    TOY_PROJECTION: str = "toy-projection"
    TOY_PALETTE: str = "toy-palette"
    DISTILLED: str = "distilled"
    DIFFUSERS_UNET: str = "diffusers-unet"
    DIFFUSERS_VAE: str = "diffusers-vae"
    TRANSFORMERS_CLIP: str = "transformers-clip"
    TRANSFORMERS_CLIPSEG: str = "transformers-clipseg"

    # -----------------------------------------------------------------------------

    @classmethod
    def has_value(cls, value: str) -> bool:
        """Check if provided value is valid enum value"""
        return value in cls._value2member_map_  # pylint: disable=no-member

    # -----------------------------------------------------------------------------

    def __str__(self) -> str:
        """Transform enum to string"""
        return str(self.value)


@unique
class BackendComponent(Enum):
    """
    Model directory sub-folders

    @package        FastyBird:DiffusionEditor!
    @module         types
    """

    DENOISER: str = "denoiser"
    AUTOENCODER: str = "autoencoder"
    EMBEDDERS: str = "embedders"
    SEGMENTER: str = "segmenter"
    DINO: str = "dino"
    LATENT_SEMANTIC: str = "latent_semantic"
    LATENT_PERCEPTUAL: str = "latent_perceptual"

    # -----------------------------------------------------------------------------

    def __str__(self) -> str:
        """Transform enum to string"""
        return str(self.value)
