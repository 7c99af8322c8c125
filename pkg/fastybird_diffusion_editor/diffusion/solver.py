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
FastyBird diffusion editor diffusion module DDIM solver
"""

# Python base dependencies
from typing import List, Optional, Tuple, Union

# Library dependencies
import torch
from torch.utils.checkpoint import checkpoint as recompute

# Library libs
from fastybird_diffusion_editor.backends.backend import IDenoiser
from fastybird_diffusion_editor.diffusion.schedule import Schedule
from fastybird_diffusion_editor.exceptions import (
    BackendException,
    DomainException,
    ShapeMismatchException,
)
from fastybird_diffusion_editor.types import T_MAX, T_MIN


class DdimSolver:
    """
    Deterministic forward and reverse diffusion equations

    All methods are pure functions of their arguments and differentiable with respect to every
    tensor and timestep input.

    @package        FastyBird:DiffusionEditor!
    @module         diffusion/solver
    """

    @staticmethod
    def forward_diffuse(
        latent: torch.Tensor,
        noise: torch.Tensor,
        t: Union[float, torch.Tensor],
        schedule: Schedule,
    ) -> torch.Tensor:
        """Corrupt clean latent with noise at level alpha(t)"""
        if latent.shape != noise.shape:
            raise ShapeMismatchException(
                f"Latent and noise shapes differ: {tuple(latent.shape)} vs {tuple(noise.shape)}"
            )

        alpha = schedule.alpha(DdimSolver.as_timestep(t, latent))

        return torch.sqrt(alpha) * latent + torch.sqrt(1 - alpha) * noise

    # -----------------------------------------------------------------------------

    @staticmethod
    def reverse_step(  # pylint: disable=too-many-arguments
        latent: torch.Tensor,
        predicted_noise: torch.Tensor,
        t_from: Union[float, torch.Tensor],
        t_to: Union[float, torch.Tensor],
        schedule: Schedule,
    ) -> torch.Tensor:
        """Move noisy latent from timestep t_from to t_to using predicted noise"""
        if latent.shape != predicted_noise.shape:
            raise ShapeMismatchException(
                f"Latent and predicted noise shapes differ: {tuple(latent.shape)} vs {tuple(predicted_noise.shape)}"
            )

        alpha_from = schedule.alpha(DdimSolver.as_timestep(t_from, latent))
        alpha_to = schedule.alpha(DdimSolver.as_timestep(t_to, latent))

        predicted_clean = (latent - torch.sqrt(1 - alpha_from) * predicted_noise) / torch.sqrt(alpha_from)

        return torch.sqrt(alpha_to) * predicted_clean + torch.sqrt(1 - alpha_to) * predicted_noise

    # -----------------------------------------------------------------------------

    @staticmethod
    def masked_blend(edited: torch.Tensor, original: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Keep edited values inside mask and original values outside, mask is broadcast over channels"""
        if edited.shape != original.shape:
            raise ShapeMismatchException(
                f"Edited and original latent shapes differ: {tuple(edited.shape)} vs {tuple(original.shape)}"
            )

        if tuple(mask.shape[-2:]) != tuple(edited.shape[-2:]) or mask.dim() > edited.dim():
            raise ShapeMismatchException(
                f"Mask shape {tuple(mask.shape)} does not match latent spatial shape {tuple(edited.shape[-2:])}"
            )

        with torch.no_grad():
            if bool(((mask < 0) | (mask > 1)).any()):
                raise DomainException("Mask values must be within [0, 1]")

        mask = mask.to(dtype=edited.dtype, device=edited.device)

        return edited * mask + original * (1 - mask)

    # -----------------------------------------------------------------------------

    @staticmethod
    def denoise_trajectory(  # pylint: disable=too-many-arguments
        latent: torch.Tensor,
        timesteps: torch.Tensor,
        condition: torch.Tensor,
        denoiser: IDenoiser,
        mask: torch.Tensor,
        original: torch.Tensor,
        schedule: Optional[Schedule] = None,
        checkpoint: bool = False,
    ) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        """
        Denoise blended latent from t_K down to t_0

        Every step predicts noise at (latent_k, t_k, condition), applies reverse step t_k -> t_(k-1)
        and blends the result against the original latent. Returned intermediates are latents
        k = K-1 .. 0, the last one is the returned final latent.
        """
        if timesteps.dim() != 1 or timesteps.numel() < 2:
            raise ShapeMismatchException("Timesteps vector must contain t_0 .. t_K with K >= 1")

        active_schedule = schedule if schedule is not None else denoiser.schedule

        def step(current: torch.Tensor, t_from: torch.Tensor, t_to: torch.Tensor, index: int) -> torch.Tensor:
            try:
                predicted_noise = denoiser.predict(current, t_from, condition)

            except (DomainException, ShapeMismatchException) as ex:
                raise BackendException(f"Denoiser rejected input: {ex}", step=index) from ex

            except Exception as ex:  # pylint: disable=broad-except
                raise BackendException(f"Denoiser failed: {ex}", step=index) from ex

            if predicted_noise.shape != current.shape:
                raise BackendException(
                    f"Denoiser returned shape {tuple(predicted_noise.shape)} for latent {tuple(current.shape)}",
                    step=index,
                )

            stepped = DdimSolver.reverse_step(current, predicted_noise, t_from, t_to, active_schedule)

            return DdimSolver.masked_blend(stepped, original, mask)

        intermediates: List[torch.Tensor] = []

        current = latent

        for k in range(timesteps.numel() - 1, 0, -1):
            if checkpoint and torch.is_grad_enabled() and (current.requires_grad or timesteps.requires_grad):
                current = recompute(step, current, timesteps[k], timesteps[k - 1], k, use_reentrant=False)

            else:
                current = step(current, timesteps[k], timesteps[k - 1], k)

            intermediates.append(current)

        return current, intermediates

    # -----------------------------------------------------------------------------

    @staticmethod
    def uniform_timesteps(
        steps_count: int,
        start_timestep: float,
        dtype: torch.dtype = torch.float32,
        t_min: float = T_MIN,
        t_max: float = T_MAX,
    ) -> torch.Tensor:
        """Evenly spaced t_k = k * T / K, t_0 pinned to 0 and t_1 .. t_K clamped to [t_min, t_max]"""
        if steps_count < 1:
            raise DomainException("Number of denoising steps must be positive")

        timesteps = torch.arange(steps_count + 1, dtype=torch.float64) * (start_timestep / steps_count)
        timesteps[1:] = torch.clamp(timesteps[1:], min=t_min, max=t_max)
        timesteps[0] = 0.0

        return timesteps.to(dtype)

    # -----------------------------------------------------------------------------

    @staticmethod
    def img2img(  # pylint: disable=too-many-arguments
        latent: torch.Tensor,
        noise: torch.Tensor,
        timesteps: torch.Tensor,
        condition: torch.Tensor,
        denoiser: IDenoiser,
        mask: torch.Tensor,
        schedule: Optional[Schedule] = None,
    ) -> torch.Tensor:
        """Single forward diffusion and masked denoising pass without optimization"""
        active_schedule = schedule if schedule is not None else denoiser.schedule

        noisy = DdimSolver.forward_diffuse(latent, noise, timesteps[-1], active_schedule)
        noisy = DdimSolver.masked_blend(noisy, latent, mask)

        result, _ = DdimSolver.denoise_trajectory(
            latent=noisy,
            timesteps=timesteps,
            condition=condition,
            denoiser=denoiser,
            mask=mask,
            original=latent,
            schedule=active_schedule,
        )

        return result

    # -----------------------------------------------------------------------------

    @staticmethod
    def as_timestep(t: Union[float, torch.Tensor], like: torch.Tensor) -> torch.Tensor:
        """Convert timestep to scalar tensor matching reference tensor dtype and device"""
        if isinstance(t, torch.Tensor):
            return t.to(dtype=like.dtype, device=like.device)

        return torch.tensor(float(t), dtype=like.dtype, device=like.device)
