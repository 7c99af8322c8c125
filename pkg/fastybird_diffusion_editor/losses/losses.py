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
FastyBird diffusion editor losses module editing loss
"""

# Python base dependencies
import logging
from typing import Dict, List, Optional, Tuple, Union

# Library dependencies
import torch
from kink import inject

# Library libs
from fastybird_diffusion_editor.backends.backend import (
    IAutoencoder,
    ITextEmbedder,
    IVisualEmbedder,
)
from fastybird_diffusion_editor.entities import LossWeights
from fastybird_diffusion_editor.exceptions import (
    InvalidConfigurationException,
    ShapeMismatchException,
)
from fastybird_diffusion_editor.helpers import TensorHelpers
from fastybird_diffusion_editor.logger import Logger
from fastybird_diffusion_editor.types import LossDomain, SemLossMode


class LossComponents:
    """
    Values of editing loss components

    Reference component is None when no reference image was used

    @package        FastyBird:DiffusionEditor!
    @module         losses/losses
    """

    __sem: float
    __ref: Optional[float]
    __perc: float
    __total: float

    # -----------------------------------------------------------------------------

    def __init__(self, sem: float, ref: Optional[float], perc: float, total: float) -> None:
        self.__sem = sem
        self.__ref = ref
        self.__perc = perc
        self.__total = total

    # -----------------------------------------------------------------------------

    @property
    def sem(self) -> float:
        """Semantic loss value"""
        return self.__sem

    # -----------------------------------------------------------------------------

    @property
    def ref(self) -> Optional[float]:
        """Reference loss value"""
        return self.__ref

    # -----------------------------------------------------------------------------

    @property
    def perc(self) -> float:
        """Perceptual loss value"""
        return self.__perc

    # -----------------------------------------------------------------------------

    @property
    def total(self) -> float:
        """Weighted total loss value"""
        return self.__total

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict[str, Optional[float]]:
        """Transform components to dictionary"""
        return {
            "sem": self.__sem,
            "ref": self.__ref,
            "perc": self.__perc,
            "total": self.__total,
        }

    # -----------------------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Dict[str, Optional[float]]) -> "LossComponents":
        """Create components from dictionary"""
        ref = data.get("ref")

        return cls(
            sem=float(data.get("sem") or 0.0),
            ref=None if ref is None else float(ref),
            perc=float(data.get("perc") or 0.0),
            total=float(data.get("total") or 0.0),
        )


class LossTargets:
    """
    Features of run inputs which stay constant during optimization

    @package        FastyBird:DiffusionEditor!
    @module         losses/losses
    """

    __original_embedding: torch.Tensor
    __original_features: List[torch.Tensor]
    __text_cosine: torch.Tensor
    __reference_embedding: Optional[torch.Tensor]
    __domain: LossDomain

    # -----------------------------------------------------------------------------

    def __init__(  # pylint: disable=too-many-arguments
        self,
        original_embedding: torch.Tensor,
        original_features: List[torch.Tensor],
        text_cosine: torch.Tensor,
        reference_embedding: Optional[torch.Tensor],
        domain: LossDomain,
    ) -> None:
        self.__original_embedding = original_embedding
        self.__original_features = original_features
        self.__text_cosine = text_cosine
        self.__reference_embedding = reference_embedding
        self.__domain = domain

    # -----------------------------------------------------------------------------

    @property
    def original_embedding(self) -> torch.Tensor:
        """Semantic feature of original latent"""
        return self.__original_embedding

    # -----------------------------------------------------------------------------

    @property
    def original_features(self) -> List[torch.Tensor]:
        """Perceptual feature stack of original latent"""
        return self.__original_features

    # -----------------------------------------------------------------------------

    @property
    def text_cosine(self) -> torch.Tensor:
        """Cosine between source and target prompt features"""
        return self.__text_cosine

    # -----------------------------------------------------------------------------

    @property
    def reference_embedding(self) -> Optional[torch.Tensor]:
        """Semantic feature of reference latent"""
        return self.__reference_embedding

    # -----------------------------------------------------------------------------

    @property
    def domain(self) -> LossDomain:
        """Domain the features were extracted in"""
        return self.__domain


@inject
class EditLoss:
    """
    Semantic, reference and perceptual losses of edited latent

    Latent domain uses installed latent encoders, pixel domain decodes latents and uses pixel encoders

    @package        FastyBird:DiffusionEditor!
    @module         losses/losses
    """

    __text_embedder: Optional[ITextEmbedder]
    __visual_embedder: Optional[IVisualEmbedder]
    __autoencoder: IAutoencoder

    __logger: Union[Logger, logging.Logger]

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        text_embedder: Optional[ITextEmbedder],
        visual_embedder: Optional[IVisualEmbedder],
        autoencoder: IAutoencoder,
        logger: Union[Logger, logging.Logger] = logging.getLogger("dummy"),
    ) -> None:
        self.__text_embedder = text_embedder
        self.__visual_embedder = visual_embedder
        self.__autoencoder = autoencoder

        self.__logger = logger

    # -----------------------------------------------------------------------------

    def prepare(  # pylint: disable=too-many-arguments
        self,
        original: torch.Tensor,
        source_prompt: str,
        target_prompt: str,
        reference: Optional[torch.Tensor] = None,
        domain: LossDomain = LossDomain.LATENT,
    ) -> LossTargets:
        """Compute features of constant inputs once per run"""
        text_embedder = self.__require_text_embedder()

        with torch.no_grad():
            text_cosine = TensorHelpers.cosine(
                text_embedder.pooled_embed(source_prompt),
                text_embedder.pooled_embed(target_prompt),
            )

            original_embedding = self.__embed(original, domain)
            original_features = self.__features(original, domain)

            reference_embedding = self.__embed(reference, domain) if reference is not None else None

        self.__logger.debug(
            "Loss targets prepared",
            extra={
                "loss": {
                    "domain": domain.value,
                    "text_cosine": float(text_cosine),
                    "reference": reference is not None,
                },
            },
        )

        return LossTargets(
            original_embedding=original_embedding,
            original_features=original_features,
            text_cosine=text_cosine,
            reference_embedding=reference_embedding,
            domain=domain,
        )

    # -----------------------------------------------------------------------------

    def loss_sem(  # pylint: disable=too-many-arguments
        self,
        original: torch.Tensor,
        output: torch.Tensor,
        source_prompt: str,
        target_prompt: str,
        mode: SemLossMode = SemLossMode.ABSOLUTE_DIFFERENCE,
        domain: LossDomain = LossDomain.LATENT,
    ) -> torch.Tensor:
        """Difference between image pair cosine and prompt pair cosine"""
        targets = self.prepare(original, source_prompt, target_prompt, domain=domain)

        return self.__sem(output, targets, mode)

    # -----------------------------------------------------------------------------

    def loss_ref(
        self,
        output: torch.Tensor,
        reference: Optional[torch.Tensor],
        domain: LossDomain = LossDomain.LATENT,
    ) -> torch.Tensor:
        """One minus cosine between output and reference features"""
        if reference is None:
            raise InvalidConfigurationException("Reference loss requires reference image")

        with torch.no_grad():
            reference_embedding = self.__embed(reference, domain)

        return 1.0 - TensorHelpers.cosine(self.__embed(output, domain), reference_embedding)

    # -----------------------------------------------------------------------------

    def loss_perc(
        self,
        original: torch.Tensor,
        output: torch.Tensor,
        domain: LossDomain = LossDomain.LATENT,
    ) -> torch.Tensor:
        """Mean absolute difference of perceptual feature stacks"""
        if original.shape != output.shape:
            raise ShapeMismatchException(
                f"Perceptual loss inputs shapes differ: {tuple(original.shape)} vs {tuple(output.shape)}"
            )

        with torch.no_grad():
            original_features = self.__features(original, domain)

        return self.feature_distance(original_features, self.__features(output, domain))

    # -----------------------------------------------------------------------------

    def loss_total(  # pylint: disable=too-many-arguments
        self,
        original: torch.Tensor,
        output: torch.Tensor,
        source_prompt: str,
        target_prompt: str,
        reference: Optional[torch.Tensor] = None,
        weights: Optional[LossWeights] = None,
        mode: SemLossMode = SemLossMode.ABSOLUTE_DIFFERENCE,
        domain: LossDomain = LossDomain.LATENT,
    ) -> Tuple[torch.Tensor, LossComponents]:
        """Weighted sum of loss components"""
        targets = self.prepare(original, source_prompt, target_prompt, reference=reference, domain=domain)

        return self.evaluate(output, targets, weights if weights is not None else LossWeights(), mode)

    # -----------------------------------------------------------------------------

    def evaluate(
        self,
        output: torch.Tensor,
        targets: LossTargets,
        weights: LossWeights,
        mode: SemLossMode = SemLossMode.ABSOLUTE_DIFFERENCE,
    ) -> Tuple[torch.Tensor, LossComponents]:
        """Weighted sum of loss components against prepared targets"""
        total = torch.zeros((), dtype=output.dtype, device=output.device)

        sem = self.__weighted(weights.lambda_sem, lambda: self.__sem(output, targets, mode))
        total = total + sem[0]

        perc = self.__weighted(
            weights.lambda_perc,
            lambda: self.feature_distance(targets.original_features, self.__features(output, targets.domain)),
        )
        total = total + perc[0]

        ref_value: Optional[float] = None

        reference_embedding = targets.reference_embedding

        if reference_embedding is not None:
            ref = self.__weighted(
                weights.lambda_ref,
                lambda: 1.0 - TensorHelpers.cosine(self.__embed(output, targets.domain), reference_embedding),
            )
            total = total + ref[0]
            ref_value = ref[1]

        return total, LossComponents(sem=sem[1], ref=ref_value, perc=perc[1], total=float(total.detach()))

    # -----------------------------------------------------------------------------

    @staticmethod
    def reduce_sem(
        image_cosine: torch.Tensor,
        text_cosine: torch.Tensor,
        mode: SemLossMode = SemLossMode.ABSOLUTE_DIFFERENCE,
    ) -> torch.Tensor:
        """Apply semantic loss reduction to the cosines difference"""
        difference = image_cosine - text_cosine.to(image_cosine.dtype)

        if mode == SemLossMode.RAW_DIFFERENCE:
            return difference

        if mode == SemLossMode.SQUARED_DIFFERENCE:
            return difference**2

        return difference.abs()

    # -----------------------------------------------------------------------------

    @staticmethod
    def feature_distance(first: List[torch.Tensor], second: List[torch.Tensor]) -> torch.Tensor:
        """Mean over layers of mean absolute feature difference"""
        if len(first) != len(second) or len(first) == 0:
            raise ShapeMismatchException(f"Feature stacks lengths differ: {len(first)} vs {len(second)}")

        distances = []

        for first_layer, second_layer in zip(first, second):
            if first_layer.shape != second_layer.shape:
                raise ShapeMismatchException(
                    f"Feature maps shapes differ: {tuple(first_layer.shape)} vs {tuple(second_layer.shape)}"
                )

            distances.append((first_layer.to(second_layer.dtype) - second_layer).abs().mean())

        return torch.stack(distances).mean()

    # -----------------------------------------------------------------------------

    def __sem(self, output: torch.Tensor, targets: LossTargets, mode: SemLossMode) -> torch.Tensor:
        image_cosine = TensorHelpers.cosine(targets.original_embedding, self.__embed(output, targets.domain))

        return self.reduce_sem(image_cosine, targets.text_cosine, mode)

    # -----------------------------------------------------------------------------

    @staticmethod
    def __weighted(weight: float, compute) -> Tuple[torch.Tensor, float]:  # type: ignore[no-untyped-def]
        # Zero weighted component is only logged, it never enters the graph
        if weight == 0:
            with torch.no_grad():
                value = compute()

            return torch.zeros((), dtype=value.dtype, device=value.device), float(value)

        value = compute()

        return weight * value, float(value.detach())

    # -----------------------------------------------------------------------------

    def __embed(self, latent: torch.Tensor, domain: LossDomain) -> torch.Tensor:
        visual_embedder = self.__require_visual_embedder()

        if domain == LossDomain.PIXEL:
            return visual_embedder.embed_pixel(self.__autoencoder.decode(latent))

        return visual_embedder.embed_latent(latent)

    # -----------------------------------------------------------------------------

    def __features(self, latent: torch.Tensor, domain: LossDomain) -> List[torch.Tensor]:
        visual_embedder = self.__require_visual_embedder()

        if domain == LossDomain.PIXEL:
            return visual_embedder.features_pixel(self.__autoencoder.decode(latent))

        return visual_embedder.features_latent(latent)

    # -----------------------------------------------------------------------------

    def __require_text_embedder(self) -> ITextEmbedder:
        if self.__text_embedder is None:
            raise InvalidConfigurationException("Semantic loss requires text embedder")

        return self.__text_embedder

    # -----------------------------------------------------------------------------

    def __require_visual_embedder(self) -> IVisualEmbedder:
        if self.__visual_embedder is None:
            raise InvalidConfigurationException("Editing losses require visual embedder")

        return self.__visual_embedder
