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
FastyBird diffusion editor backends module contracts
"""

# Python base dependencies
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Tuple, Union

# Library dependencies
import torch
from torch import nn

# Library libs
from fastybird_diffusion_editor.diffusion.schedule import Schedule
from fastybird_diffusion_editor.exceptions import (
    InvalidConfigurationException,
    ShapeMismatchException,
)
from fastybird_diffusion_editor.types import EncoderRole


class IDenoiser(ABC):
    """
    Noise predictor interface

    @package        FastyBird:DiffusionEditor!
    @module         backends/backend
    """

    @property
    @abstractmethod
    def schedule(self) -> Schedule:
        """Noise schedule the predictor was trained with"""

    # -----------------------------------------------------------------------------

    @property
    @abstractmethod
    def latent_shape(self) -> Tuple[int, int, int]:
        """Latent geometry (channels, height, width)"""

    # -----------------------------------------------------------------------------

    @property
    @abstractmethod
    def condition_dim(self) -> int:
        """Length of condition embedding vector"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def predict(self, latent: torch.Tensor, t: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        """Predict noise contained in latent at timestep t, differentiable with respect to latent and t"""


class IAutoencoder(ABC):
    """
    Pixel to latent autoencoder interface

    Images are (3, H, W) tensors in [0, 1], latents are (C, H / factor, W / factor) tensors.
    Leading batch dimension is accepted by both directions.

    @package        FastyBird:DiffusionEditor!
    @module         backends/backend
    """

    @property
    @abstractmethod
    def spatial_factor(self) -> int:
        """Integer downsampling ratio between pixel and latent grid"""

    # -----------------------------------------------------------------------------

    @property
    @abstractmethod
    def latent_channels(self) -> int:
        """Number of latent channels"""

    # -----------------------------------------------------------------------------

    @property
    @abstractmethod
    def reconstruction_tolerance(self) -> float:
        """Maximal absolute pixel error of decode(encode(image))"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def encode(self, image: torch.Tensor) -> torch.Tensor:
        """Transform pixel image into latent"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        """Transform latent into pixel image"""


class ITextEmbedder(ABC):
    """
    Prompt embedder interface

    @package        FastyBird:DiffusionEditor!
    @module         backends/backend
    """

    @property
    @abstractmethod
    def condition_dim(self) -> int:
        """Length of condition embedding consumed by denoiser"""

    # -----------------------------------------------------------------------------

    @property
    @abstractmethod
    def feature_dim(self) -> int:
        """Length of pooled feature vector"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def embed(self, prompt: str) -> torch.Tensor:
        """Condition embedding for denoiser"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def pooled_embed(self, prompt: str) -> torch.Tensor:
        """Unit norm prompt feature vector"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def add_concept(self, token: str, vector: torch.Tensor) -> None:
        """Extend vocabulary with learned concept token"""


class IFeatureEncoder(nn.Module, ABC):
    """
    Visual feature encoder with replaceable first convolution

    @package        FastyBird:DiffusionEditor!
    @module         backends/backend
    """

    @property
    @abstractmethod
    def stem(self) -> nn.Conv2d:
        """First convolution layer"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def replace_stem(self, stem: nn.Conv2d) -> None:
        """Swap first convolution layer"""

    # -----------------------------------------------------------------------------

    @property
    @abstractmethod
    def feature_dim(self) -> int:
        """Length of pooled feature vector"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def forward_features(self, inputs: torch.Tensor) -> List[torch.Tensor]:
        """Stack of intermediate feature maps for batched inputs"""

    # -----------------------------------------------------------------------------

    @property
    def in_channels(self) -> int:
        """Number of input channels accepted by stem"""
        return int(self.stem.in_channels)


class IVisualEmbedder(ABC):
    """
    Image embedder interface with pixel and latent entry points

    @package        FastyBird:DiffusionEditor!
    @module         backends/backend
    """

    @property
    @abstractmethod
    def feature_dim(self) -> int:
        """Length of pooled feature vector"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def embed_pixel(self, image: torch.Tensor) -> torch.Tensor:
        """Unit norm semantic feature of pixel image"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def embed_latent(self, latent: torch.Tensor) -> torch.Tensor:
        """Unit norm semantic feature of latent image"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def features_pixel(self, image: torch.Tensor) -> List[torch.Tensor]:
        """Perceptual feature maps stack of pixel image"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def features_latent(self, latent: torch.Tensor) -> List[torch.Tensor]:
        """Perceptual feature maps stack of latent image"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def encoder(self, role: EncoderRole) -> IFeatureEncoder:
        """Pixel domain encoder for given role"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def latent_encoder(self, role: EncoderRole) -> Optional[IFeatureEncoder]:
        """Installed latent domain encoder for given role"""

    # -----------------------------------------------------------------------------

    @abstractmethod
    def install_latent_encoder(self, role: EncoderRole, encoder: IFeatureEncoder) -> None:
        """Replace decode-then-embed latent path with distilled encoder"""


class ISegmenter(ABC):  # pylint: disable=too-few-public-methods
    """
    Text driven segmenter interface

    @package        FastyBird:DiffusionEditor!
    @module         backends/backend
    """

    @abstractmethod
    def segment(self, image: torch.Tensor, text: str) -> torch.Tensor:
        """Soft (H, W) mask in [0, 1] of regions matching text"""


class BackendsBundle:
    """
    Consistent set of backends one editor instance works with

    @package        FastyBird:DiffusionEditor!
    @module         backends/backend
    """

    __denoiser: IDenoiser
    __autoencoder: IAutoencoder
    __text_embedder: ITextEmbedder
    __visual_embedder: IVisualEmbedder
    __segmenter: Optional[ISegmenter] = None
    __dino: Optional[IVisualEmbedder] = None

    # -----------------------------------------------------------------------------

    def __init__(  # pylint: disable=too-many-arguments
        self,
        denoiser: IDenoiser,
        autoencoder: IAutoencoder,
        text_embedder: ITextEmbedder,
        visual_embedder: IVisualEmbedder,
        segmenter: Optional[ISegmenter] = None,
        dino: Optional[IVisualEmbedder] = None,
    ) -> None:
        if denoiser.latent_shape[0] != autoencoder.latent_channels:
            raise ShapeMismatchException(
                f"Denoiser expects {denoiser.latent_shape[0]} latent channels, "
                f"autoencoder produces {autoencoder.latent_channels}"
            )

        if text_embedder.condition_dim != denoiser.condition_dim:
            raise InvalidConfigurationException(
                f"Text embedder condition dimension {text_embedder.condition_dim} "
                f"differs from denoiser condition dimension {denoiser.condition_dim}"
            )

        if text_embedder.feature_dim != visual_embedder.feature_dim:
            raise InvalidConfigurationException(
                f"Text feature dimension {text_embedder.feature_dim} "
                f"differs from visual feature dimension {visual_embedder.feature_dim}"
            )

        self.__denoiser = denoiser
        self.__autoencoder = autoencoder
        self.__text_embedder = text_embedder
        self.__visual_embedder = visual_embedder
        self.__segmenter = segmenter
        self.__dino = dino

    # -----------------------------------------------------------------------------

    @property
    def denoiser(self) -> IDenoiser:
        """Noise predictor"""
        return self.__denoiser

    # -----------------------------------------------------------------------------

    @property
    def autoencoder(self) -> IAutoencoder:
        """Pixel to latent autoencoder"""
        return self.__autoencoder

    # -----------------------------------------------------------------------------

    @property
    def text_embedder(self) -> ITextEmbedder:
        """Prompt embedder"""
        return self.__text_embedder

    # -----------------------------------------------------------------------------

    @property
    def visual_embedder(self) -> IVisualEmbedder:
        """Image embedder"""
        return self.__visual_embedder

    # -----------------------------------------------------------------------------

    @property
    def segmenter(self) -> Optional[ISegmenter]:
        """Text driven segmenter"""
        return self.__segmenter

    # -----------------------------------------------------------------------------

    @property
    def dino(self) -> Optional[IVisualEmbedder]:
        """Self-supervised image embedder used only by metrics"""
        return self.__dino

    # -----------------------------------------------------------------------------

    @property
    def schedule(self) -> Schedule:
        """Noise schedule of installed denoiser"""
        return self.__denoiser.schedule

    # -----------------------------------------------------------------------------

    @property
    def image_size(self) -> Tuple[int, int]:
        """Pixel size (height, width) matching denoiser latent geometry"""
        factor = self.__autoencoder.spatial_factor

        return self.__denoiser.latent_shape[1] * factor, self.__denoiser.latent_shape[2] * factor

    # -----------------------------------------------------------------------------

    def validate_image(self, image: torch.Tensor) -> None:
        """Check image geometry against latent geometry of the bundle"""
        if image.dim() != 3 or image.shape[0] != 3:
            raise ShapeMismatchException(f"Image must be (3, H, W) tensor, got {tuple(image.shape)}")

        if tuple(image.shape[1:]) != self.image_size:
            raise ShapeMismatchException(
                f"Image size {tuple(image.shape[1:])} does not match backends image size {self.image_size}"
            )

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict[str, Union[str, int, List[int], Dict, None]]:
        """Transform bundle description to dictionary"""
        return {
            "denoiser": type(self.__denoiser).__name__,
            "autoencoder": type(self.__autoencoder).__name__,
            "text_embedder": type(self.__text_embedder).__name__,
            "visual_embedder": type(self.__visual_embedder).__name__,
            "segmenter": None if self.__segmenter is None else type(self.__segmenter).__name__,
            "dino": None if self.__dino is None else type(self.__dino).__name__,
            "latent_shape": list(self.__denoiser.latent_shape),
            "spatial_factor": self.__autoencoder.spatial_factor,
            "schedule": self.schedule.to_dict(),
        }
