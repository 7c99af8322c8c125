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
FastyBird diffusion editor backends module visual embedder
"""

# Python base dependencies
from typing import Dict, List, Optional

# Library dependencies
import torch

# Library libs
from fastybird_diffusion_editor.backends.backend import (
    IAutoencoder,
    IFeatureEncoder,
    IVisualEmbedder,
)
from fastybird_diffusion_editor.exceptions import ShapeMismatchException
from fastybird_diffusion_editor.types import EncoderRole


class VisualEmbedder(IVisualEmbedder):
    """
    Visual embedder built from semantic and perceptual feature encoders

    Latent entry points run the installed latent twin of an encoder. When no twin is installed
    latents are decoded and passed to the pixel encoder.

    @package        FastyBird:DiffusionEditor!
    @module         backends/visual
    """

    __encoders: Dict[EncoderRole, IFeatureEncoder]
    __latent_encoders: Dict[EncoderRole, IFeatureEncoder]

    __autoencoder: IAutoencoder

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        semantic: IFeatureEncoder,
        perceptual: IFeatureEncoder,
        autoencoder: IAutoencoder,
    ) -> None:
        for encoder in (semantic, perceptual):
            encoder.requires_grad_(False)
            encoder.eval()

        self.__encoders = {
            EncoderRole.SEMANTIC: semantic,
            EncoderRole.PERCEPTUAL: perceptual,
        }
        self.__latent_encoders = {}

        self.__autoencoder = autoencoder

    # -----------------------------------------------------------------------------

    @property
    def feature_dim(self) -> int:
        """Length of pooled feature vector"""
        return self.__encoders[EncoderRole.SEMANTIC].feature_dim

    # -----------------------------------------------------------------------------

    @property
    def autoencoder(self) -> IAutoencoder:
        """Autoencoder used by decode-then-embed latent path"""
        return self.__autoencoder

    # -----------------------------------------------------------------------------

    def embed_pixel(self, image: torch.Tensor) -> torch.Tensor:
        """Unit norm semantic feature of pixel image"""
        return self.__run_pooled(self.__encoders[EncoderRole.SEMANTIC], image)

    # -----------------------------------------------------------------------------

    def embed_latent(self, latent: torch.Tensor) -> torch.Tensor:
        """Unit norm semantic feature of latent image"""
        twin = self.__latent_encoders.get(EncoderRole.SEMANTIC)

        if twin is None:
            return self.embed_pixel(self.__autoencoder.decode(latent))

        return self.__run_pooled(twin, latent)

    # -----------------------------------------------------------------------------

    def features_pixel(self, image: torch.Tensor) -> List[torch.Tensor]:
        """Perceptual feature maps stack of pixel image"""
        return self.__run_features(self.__encoders[EncoderRole.PERCEPTUAL], image)

    # -----------------------------------------------------------------------------

    def features_latent(self, latent: torch.Tensor) -> List[torch.Tensor]:
        """Perceptual feature maps stack of latent image"""
        twin = self.__latent_encoders.get(EncoderRole.PERCEPTUAL)

        if twin is None:
            return self.features_pixel(self.__autoencoder.decode(latent))

        return self.__run_features(twin, latent)

    # -----------------------------------------------------------------------------

    def encoder(self, role: EncoderRole) -> IFeatureEncoder:
        """Pixel domain encoder for given role"""
        return self.__encoders[role]

    # -----------------------------------------------------------------------------

    def latent_encoder(self, role: EncoderRole) -> Optional[IFeatureEncoder]:
        """Installed latent domain encoder for given role"""
        return self.__latent_encoders.get(role)

    # -----------------------------------------------------------------------------

    def install_latent_encoder(self, role: EncoderRole, encoder: IFeatureEncoder) -> None:
        """Replace decode-then-embed latent path with distilled encoder"""
        if encoder.in_channels != self.__autoencoder.latent_channels:
            raise ShapeMismatchException(
                f"Latent encoder accepts {encoder.in_channels} channels, "
                f"autoencoder produces {self.__autoencoder.latent_channels}"
            )

        if encoder.feature_dim != self.__encoders[role].feature_dim:
            raise ShapeMismatchException(
                f"Latent encoder feature dimension {encoder.feature_dim} "
                f"differs from pixel encoder dimension {self.__encoders[role].feature_dim}"
            )

        encoder.requires_grad_(False)
        encoder.eval()

        self.__latent_encoders[role] = encoder

    # -----------------------------------------------------------------------------

    @staticmethod
    def __run_pooled(encoder: IFeatureEncoder, inputs: torch.Tensor) -> torch.Tensor:
        batched = inputs if inputs.dim() == 4 else inputs.unsqueeze(0)

        result = encoder(batched.to(next(encoder.parameters()).dtype))

        return result if inputs.dim() == 4 else result[0]

    # -----------------------------------------------------------------------------

    @staticmethod
    def __run_features(encoder: IFeatureEncoder, inputs: torch.Tensor) -> List[torch.Tensor]:
        batched = inputs if inputs.dim() == 4 else inputs.unsqueeze(0)

        features = encoder.forward_features(batched.to(next(encoder.parameters()).dtype))

        return features if inputs.dim() == 4 else [feature[0] for feature in features]
