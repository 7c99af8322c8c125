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
Shared fixtures builders for diffusion editor tests
"""

# Python base dependencies
import logging
from typing import List, Tuple

# Library dependencies
import torch
from whistle import Event, EventDispatcher

# Library libs
from fastybird_diffusion_editor.backends.backend import BackendsBundle, IDenoiser
from fastybird_diffusion_editor.backends.toy import make_toy_backends
from fastybird_diffusion_editor.diffusion.schedule import Schedule
from fastybird_diffusion_editor.evaluation.metrics import MetricsCalculator
from fastybird_diffusion_editor.losses.losses import EditLoss
from fastybird_diffusion_editor.masking.masks import MaskBuilder
from fastybird_diffusion_editor.optimizer.editor import NoiseTimestepOptimizer

TESTS_LOGGER = "diffusion-editor-tests"


class ConstantNoiseDenoiser(IDenoiser):
    """Denoiser which always predicts the same noise tensor"""

    def __init__(self, noise: torch.Tensor, schedule: Schedule) -> None:
        self.__noise = noise
        self.__schedule = schedule

    @property
    def schedule(self) -> Schedule:
        return self.__schedule

    @property
    def latent_shape(self) -> Tuple[int, int, int]:
        return int(self.__noise.shape[0]), int(self.__noise.shape[1]), int(self.__noise.shape[2])

    @property
    def condition_dim(self) -> int:
        return 8

    def predict(self, latent: torch.Tensor, t: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        return self.__noise.to(latent.dtype)


class FailingDenoiser(IDenoiser):
    """Wrapped denoiser which predicts NaN once failing flag is set"""

    def __init__(self, denoiser: IDenoiser) -> None:
        self.__denoiser = denoiser

        self.failing = False

    @property
    def schedule(self) -> Schedule:
        return self.__denoiser.schedule

    @property
    def latent_shape(self) -> Tuple[int, int, int]:
        return self.__denoiser.latent_shape

    @property
    def condition_dim(self) -> int:
        return self.__denoiser.condition_dim

    def predict(self, latent: torch.Tensor, t: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        prediction = self.__denoiser.predict(latent, t, condition)

        if self.failing:
            return prediction * float("nan")

        return prediction


def with_denoiser(backends: BackendsBundle, denoiser: IDenoiser) -> BackendsBundle:
    """Same toy pipeline with replaced denoiser"""
    return BackendsBundle(
        denoiser=denoiser,
        autoencoder=backends.autoencoder,
        text_embedder=backends.text_embedder,
        visual_embedder=backends.visual_embedder,
        segmenter=backends.segmenter,
        dino=backends.dino,
    )


def block_image(size: int, factor: int, seed: int = 0, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Random image constant over factor x factor blocks"""
    generator = torch.Generator().manual_seed(seed)

    coarse = torch.rand((3, size // factor, size // factor), generator=generator, dtype=torch.float64)

    return coarse.repeat_interleave(factor, dim=1).repeat_interleave(factor, dim=2).to(dtype)


def random_image(size: int, seed: int = 0, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Random image in [0, 1]"""
    generator = torch.Generator().manual_seed(seed)

    return torch.rand((3, size, size), generator=generator, dtype=torch.float64).to(dtype)


def toy_backends(size: int = 16, factor: int = 2, seed: int = 0, dtype: torch.dtype = torch.float64) -> BackendsBundle:
    """Toy pipeline for images of given size"""
    return make_toy_backends(image_size=size, factor=factor, seed=seed, dtype=dtype)


def toy_optimizer(
    backends: BackendsBundle,
    event_dispatcher: EventDispatcher = None,  # type: ignore[assignment]
) -> NoiseTimestepOptimizer:
    """Optimizer wired to toy backends without container"""
    logger = logging.getLogger(TESTS_LOGGER)

    return NoiseTimestepOptimizer(
        backends=backends,
        mask_builder=MaskBuilder(logger=logger),
        edit_loss=EditLoss(
            text_embedder=backends.text_embedder,
            visual_embedder=backends.visual_embedder,
            autoencoder=backends.autoencoder,
            logger=logger,
        ),
        metrics=MetricsCalculator(
            text_embedder=backends.text_embedder,
            visual_embedder=backends.visual_embedder,
            dino=backends.dino,
            logger=logger,
        ),
        event_dispatcher=event_dispatcher if event_dispatcher is not None else EventDispatcher(),
        logger=logger,
    )


def collect_events(event_dispatcher: EventDispatcher, event_id: str) -> List[Event]:
    """Register collecting listener and return its storage"""
    collected: List[Event] = []

    event_dispatcher.add_listener(event_id=event_id, listener=collected.append)

    return collected
