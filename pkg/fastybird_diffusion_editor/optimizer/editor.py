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
FastyBird diffusion editor optimizer module noise and timesteps optimizer
"""

# Python base dependencies
import logging
import time
from typing import List, Optional, Tuple, Union

# Library dependencies
import torch
from kink import inject
from whistle import EventDispatcher

# Library libs
from fastybird_diffusion_editor.backends.backend import BackendsBundle
from fastybird_diffusion_editor.diffusion.solver import DdimSolver
from fastybird_diffusion_editor.entities import EditRequest, RunConfig
from fastybird_diffusion_editor.evaluation.metrics import MetricsCalculator
from fastybird_diffusion_editor.events.events import (
    OptimizationStepEvent,
    RunAbortedEvent,
    RunFinishedEvent,
    RunStartedEvent,
)
from fastybird_diffusion_editor.exceptions import (
    BackendException,
    InvalidConfigurationException,
    NonFiniteException,
)
from fastybird_diffusion_editor.helpers import TensorHelpers
from fastybird_diffusion_editor.logger import Logger
from fastybird_diffusion_editor.losses.losses import (
    EditLoss,
    LossComponents,
    LossTargets,
)
from fastybird_diffusion_editor.masking.masks import Mask, MaskBuilder
from fastybird_diffusion_editor.optimizer.records import (
    EditResult,
    OptimizerState,
    SweepCell,
    SweepGrid,
    TrajectoryLog,
    TrajectoryRecord,
)

Gradients = Tuple[Optional[torch.Tensor], Optional[torch.Tensor]]


class RunContext:
    """
    Constant inputs of one editing run

    @package        FastyBird:DiffusionEditor!
    @module         optimizer/editor
    """

    __latent: torch.Tensor
    __mask: torch.Tensor
    __condition: torch.Tensor
    __targets: LossTargets

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        latent: torch.Tensor,
        mask: torch.Tensor,
        condition: torch.Tensor,
        targets: LossTargets,
    ) -> None:
        self.__latent = latent
        self.__mask = mask
        self.__condition = condition
        self.__targets = targets

    # -----------------------------------------------------------------------------

    @property
    def latent(self) -> torch.Tensor:
        """Encoded original image L"""
        return self.__latent

    # -----------------------------------------------------------------------------

    @property
    def mask(self) -> torch.Tensor:
        """Latent resolution blending mask"""
        return self.__mask

    # -----------------------------------------------------------------------------

    @property
    def condition(self) -> torch.Tensor:
        """Target prompt condition embedding"""
        return self.__condition

    # -----------------------------------------------------------------------------

    @property
    def targets(self) -> LossTargets:
        """Prepared loss targets"""
        return self.__targets


@inject
class NoiseTimestepOptimizer:
    """
    Editing by gradient descent on input noise and denoising timesteps

    Every optimization step diffuses the original latent to t_K, denoises it through all K steps with masked
    blending, evaluates the editing loss and back-propagates through the whole unrolled chain. Timesteps and
    noise are updated by two separate AdamW optimizers.

    @package        FastyBird:DiffusionEditor!
    @module         optimizer/editor
    """

    __backends: BackendsBundle
    __mask_builder: MaskBuilder
    __edit_loss: EditLoss
    __metrics: MetricsCalculator

    __event_dispatcher: EventDispatcher

    __logger: Union[Logger, logging.Logger]

    # -----------------------------------------------------------------------------

    def __init__(  # pylint: disable=too-many-arguments
        self,
        backends: BackendsBundle,
        mask_builder: MaskBuilder,
        edit_loss: EditLoss,
        metrics: MetricsCalculator,
        event_dispatcher: EventDispatcher,
        logger: Union[Logger, logging.Logger] = logging.getLogger("dummy"),
    ) -> None:
        self.__backends = backends
        self.__mask_builder = mask_builder
        self.__edit_loss = edit_loss
        self.__metrics = metrics

        self.__event_dispatcher = event_dispatcher

        self.__logger = logger

    # -----------------------------------------------------------------------------

    @property
    def backends(self) -> BackendsBundle:
        """Backends used by editor"""
        return self.__backends

    # -----------------------------------------------------------------------------

    @staticmethod
    def init_state(
        config: RunConfig,
        latent_shape: Tuple[int, ...],
        dtype: torch.dtype = torch.float32,
    ) -> OptimizerState:
        """Uniform timesteps t_k = k * T / K and seeded standard normal noise"""
        timesteps = DdimSolver.uniform_timesteps(
            steps_count=config.steps_count,
            start_timestep=config.start_timestep,
            dtype=dtype,
            t_min=config.t_min,
            t_max=config.t_max,
        )

        free_timesteps = timesteps[1:].clone().requires_grad_(not config.ablation.freeze_timesteps)

        generator = torch.Generator().manual_seed(config.seed)

        noise = torch.randn(tuple(latent_shape), generator=generator, dtype=dtype)
        noise.requires_grad_(not config.ablation.freeze_noise)

        timesteps_optimizer = torch.optim.AdamW(
            [free_timesteps],
            lr=config.lr_timesteps,
            betas=config.optimizer_betas,
            eps=config.optimizer_eps,
            weight_decay=config.weight_decay,
        )

        noise_optimizer = torch.optim.AdamW(
            [noise],
            lr=config.lr_noise,
            betas=config.optimizer_betas,
            eps=config.optimizer_eps,
            weight_decay=config.weight_decay,
        )

        return OptimizerState(
            free_timesteps=free_timesteps,
            noise=noise,
            timesteps_optimizer=timesteps_optimizer,
            noise_optimizer=noise_optimizer,
        )

    # -----------------------------------------------------------------------------

    @staticmethod
    def apply_update(state: OptimizerState, grads: Gradients, config: RunConfig) -> OptimizerState:
        """Apply both optimizers, then clamp and optionally sort timesteps"""
        for grad in grads:
            if grad is not None and not bool(torch.isfinite(grad).all()):
                raise NonFiniteException("Gradients contain non-finite values")

        timesteps_grad, noise_grad = grads

        if not config.ablation.freeze_timesteps and timesteps_grad is not None:
            state.free_timesteps.grad = timesteps_grad.to(state.free_timesteps.dtype)
            state.timesteps_optimizer.step()
            state.timesteps_optimizer.zero_grad(set_to_none=True)

        if not config.ablation.freeze_noise and noise_grad is not None:
            state.noise.grad = noise_grad.to(state.noise.dtype)
            state.noise_optimizer.step()
            state.noise_optimizer.zero_grad(set_to_none=True)

        with torch.no_grad():
            state.free_timesteps.clamp_(min=config.t_min, max=config.t_max)

            if config.enforce_monotonic_t:
                state.free_timesteps.copy_(torch.sort(state.free_timesteps).values)

        state.increment_step()

        return state

    # -----------------------------------------------------------------------------

    def prepare(self, request: EditRequest, config: RunConfig) -> Tuple[RunContext, Mask, Mask]:
        """Encode request inputs, locate editing region and prepare loss targets"""
        self.__backends.validate_image(request.image)

        autoencoder = self.__backends.autoencoder

        with torch.no_grad():
            latent = autoencoder.encode(request.image).detach()

            reference = (
                autoencoder.encode(request.aux.reference).detach() if request.aux.reference is not None else None
            )

            condition = self.__backends.text_embedder.embed(request.target_prompt).detach()

        if config.ablation.full_mask:
            mask = Mask.ones(request.image.shape[1], request.image.shape[2])

        else:
            mask = self.__mask_builder.compute_mask(request, self.__backends.segmenter)

        latent_mask = MaskBuilder.to_latent_resolution(
            mask.binarize(self.__mask_builder.threshold),
            autoencoder.spatial_factor,
        )

        targets = self.__edit_loss.prepare(
            original=latent,
            source_prompt=request.source_prompt,
            target_prompt=request.target_prompt,
            reference=reference,
            domain=config.loss_domain,
        )

        context = RunContext(
            latent=latent,
            mask=latent_mask.data.to(latent.dtype),
            condition=condition,
            targets=targets,
        )

        return context, mask, latent_mask

    # -----------------------------------------------------------------------------

    def objective(
        self,
        state: OptimizerState,
        context: RunContext,
        config: RunConfig,
    ) -> Tuple[torch.Tensor, LossComponents, torch.Tensor]:
        """Forward diffuse, masked denoise and evaluate total loss"""
        timesteps = state.timesteps
        schedule = self.__backends.schedule

        noisy = DdimSolver.forward_diffuse(context.latent, state.noise, timesteps[-1], schedule)
        noisy = DdimSolver.masked_blend(noisy, context.latent, context.mask)

        final, _ = DdimSolver.denoise_trajectory(
            latent=noisy,
            timesteps=timesteps,
            condition=context.condition,
            denoiser=self.__backends.denoiser,
            mask=context.mask,
            original=context.latent,
            schedule=schedule,
            checkpoint=config.checkpoint,
        )

        total, components = self.__edit_loss.evaluate(
            output=final,
            targets=context.targets,
            weights=config.weights,
            mode=config.sem_mode,
        )

        return total, components, final

    # -----------------------------------------------------------------------------

    def run(self, request: EditRequest, config: RunConfig) -> EditResult:  # pylint: disable=too-many-locals
        """Optimize noise and timesteps for W steps and decode the last denoised latent"""
        started = time.perf_counter()

        context, mask, latent_mask = self.prepare(request, config)

        state = self.init_state(config, tuple(context.latent.shape), dtype=context.latent.dtype)

        trajectory = TrajectoryLog(config=config.to_dict())

        self.__event_dispatcher.dispatch(
            event_id=RunStartedEvent.EVENT_NAME,
            event=RunStartedEvent(
                sample_id=request.sample_id,
                config=config.to_dict(),
                mask_coverage=latent_mask.coverage,
            ),
        )

        snapshots = {}

        aborted = False
        abort_reason: Optional[str] = None

        best: Optional[Tuple[int, float, torch.Tensor]] = None
        final_latent: Optional[torch.Tensor] = None

        if config.optimization_steps == 0:
            with torch.no_grad():
                final_latent = DdimSolver.img2img(
                    latent=context.latent,
                    noise=state.noise.detach(),
                    timesteps=state.timesteps.detach(),
                    condition=context.condition,
                    denoiser=self.__backends.denoiser,
                    mask=context.mask,
                    schedule=self.__backends.schedule,
                )

        for w in range(config.optimization_steps):
            timesteps_before, noise_before = state.snapshot()

            try:
                total, components, final = self.objective(state, context, config)

                if not bool(torch.isfinite(total)):
                    raise NonFiniteException(f"Total loss is not finite: {float(total.detach())}")

                record = TrajectoryRecord(
                    w=w,
                    timesteps=timesteps_before.tolist(),
                    noise=TensorHelpers.noise_stats(noise_before),
                    loss=components,
                )

                trajectory.append(record)

                final_latent = final.detach()

                if best is None or components.total < best[1]:
                    best = (w, components.total, final_latent)

                self.apply_update(state, self.__gradients(total, state, config), config)

            except NonFiniteException as ex:
                self.__logger.error(
                    "Optimization produced non-finite value",
                    extra={
                        "run": {
                            "sample": request.sample_id,
                            "step": w,
                        },
                        "exception": {
                            "message": str(ex),
                            "code": type(ex).__name__,
                        },
                    },
                )

                aborted = True
                abort_reason = str(ex)

                self.__event_dispatcher.dispatch(
                    event_id=RunAbortedEvent.EVENT_NAME,
                    event=RunAbortedEvent(sample_id=request.sample_id, step=w, reason=str(ex)),
                )

                break

            except BackendException as ex:
                self.__logger.error(
                    "Backend failed during optimization",
                    extra={
                        "run": {
                            "sample": request.sample_id,
                            "step": w,
                        },
                        "exception": {
                            "message": str(ex),
                            "code": type(ex).__name__,
                        },
                    },
                )
                self.__logger.exception(ex)

                raise BackendException(f"Optimization step {w} failed: {ex}", step=ex.step) from ex

            snapshot: Optional[torch.Tensor] = None

            if config.snapshot_every is not None and w % config.snapshot_every == 0:
                with torch.no_grad():
                    snapshot = self.__backends.autoencoder.decode(final_latent).detach()

                snapshots[w] = snapshot

            self.__event_dispatcher.dispatch(
                event_id=OptimizationStepEvent.EVENT_NAME,
                event=OptimizationStepEvent(sample_id=request.sample_id, record=record, snapshot=snapshot),
            )

        if aborted:
            if best is None:
                raise NonFiniteException(f"No finite iterate was reached: {abort_reason}")

            best_step, _, final_latent = best

        else:
            best_step = config.optimization_steps - 1 if config.optimization_steps > 0 else None

        if final_latent is None:
            raise NonFiniteException("Optimization did not produce any latent")

        with torch.no_grad():
            output_image = self.__backends.autoencoder.decode(final_latent).detach()

        result = EditResult(
            output_image=output_image,
            final_latent=final_latent,
            trajectory=trajectory,
            mask=mask,
            latent_mask=latent_mask,
            config=config.to_dict(),
            wall_time=time.perf_counter() - started,
            best_step=best_step,
            aborted=aborted,
            abort_reason=abort_reason,
            snapshots=snapshots,
        )

        self.__event_dispatcher.dispatch(
            event_id=RunFinishedEvent.EVENT_NAME,
            event=RunFinishedEvent(sample_id=request.sample_id, result=result),
        )

        return result

    # -----------------------------------------------------------------------------

    def sweep(
        self,
        request: EditRequest,
        start_timesteps: List[float],
        seeds: List[int],
        config: Optional[RunConfig] = None,
    ) -> SweepGrid:
        """Non-optimized pass for every (seed, starting timestep) pair"""
        if len(start_timesteps) == 0 or len(seeds) == 0:
            raise InvalidConfigurationException("Sweep requires at least one starting timestep and one seed")

        if len(set(start_timesteps)) != len(start_timesteps) or len(set(seeds)) != len(seeds):
            raise InvalidConfigurationException("Sweep starting timesteps and seeds must not repeat")

        base = config if config is not None else RunConfig()

        cells: List[SweepCell] = []

        for row, seed in enumerate(seeds):
            for column, start_timestep in enumerate(start_timesteps):
                try:
                    result = self.run(
                        request,
                        base.replace(seed=seed, start_timestep=start_timestep, optimization_steps=0),
                    )

                    metrics = {
                        "clip_t": self.__metrics.clip_t(result.output_image, request.target_prompt),
                        "clip_i": self.__metrics.clip_i(result.output_image, request.image),
                    }

                    cells.append(SweepCell(row, column, seed, start_timestep, result=result, metrics=metrics))

                except Exception as ex:  # pylint: disable=broad-except
                    self.__logger.error(
                        "Sweep cell failed",
                        extra={
                            "sweep": {
                                "seed": seed,
                                "T": start_timestep,
                            },
                            "exception": {
                                "message": str(ex),
                                "code": type(ex).__name__,
                            },
                        },
                    )
                    self.__logger.exception(ex)

                    cells.append(SweepCell(row, column, seed, start_timestep, error=str(ex)))

        return SweepGrid(seeds=list(seeds), start_timesteps=list(start_timesteps), cells=cells)

    # -----------------------------------------------------------------------------

    def run_chain(self, requests: List[EditRequest], config: RunConfig) -> List[EditResult]:
        """Compounded editing, every output image becomes input of the next request"""
        if len(requests) == 0:
            raise InvalidConfigurationException("Editing chain requires at least one request")

        results: List[EditResult] = []

        image: Optional[torch.Tensor] = None

        for request in requests:
            current = request if image is None else request.with_image(image)

            result = self.run(current, config)

            results.append(result)

            image = result.output_image

        return results

    # -----------------------------------------------------------------------------

    @staticmethod
    def __gradients(total: torch.Tensor, state: OptimizerState, config: RunConfig) -> Gradients:
        inputs: List[torch.Tensor] = []

        if not config.ablation.freeze_timesteps:
            inputs.append(state.free_timesteps)

        if not config.ablation.freeze_noise:
            inputs.append(state.noise)

        if len(inputs) == 0 or not total.requires_grad:
            return None, None

        computed = list(torch.autograd.grad(total, inputs, allow_unused=True))

        timesteps_grad = computed.pop(0) if not config.ablation.freeze_timesteps else None
        noise_grad = computed.pop(0) if not config.ablation.freeze_noise else None

        if timesteps_grad is None and not config.ablation.freeze_timesteps:
            timesteps_grad = torch.zeros_like(state.free_timesteps)

        if noise_grad is None and not config.ablation.freeze_noise:
            noise_grad = torch.zeros_like(state.noise)

        return timesteps_grad, noise_grad
