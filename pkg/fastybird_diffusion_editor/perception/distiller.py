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
FastyBird diffusion editor perception module latent encoders distiller
"""

# Python base dependencies
import copy
import csv
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

# Library dependencies
import torch
from kink import inject
from torch import nn
from torch.utils.data import Dataset, Subset
from tqdm import tqdm
from whistle import EventDispatcher

# Library libs
from fastybird_diffusion_editor.backends.backend import (
    IAutoencoder,
    IFeatureEncoder,
    IVisualEmbedder,
)
from fastybird_diffusion_editor.backends.toy import ToyAutoencoder
from fastybird_diffusion_editor.entities import DistillConfig
from fastybird_diffusion_editor.events.events import DistillationCheckpointEvent
from fastybird_diffusion_editor.exceptions import (
    DistillationException,
    InvalidConfigurationException,
    ShapeMismatchException,
)
from fastybird_diffusion_editor.helpers import TensorHelpers
from fastybird_diffusion_editor.logger import Logger
from fastybird_diffusion_editor.losses.losses import EditLoss
from fastybird_diffusion_editor.types import (
    DistillObjective,
    EncoderRole,
    StemInitialization,
)

EVALUATION_BATCH_SIZE: int = 32

CurvePoint = Tuple[int, float, Optional[float]]


class DistilledEncoder:
    """
    Latent domain twin of pixel encoder

    @package        FastyBird:DiffusionEditor!
    @module         perception/distiller
    """

    __encoder: IFeatureEncoder
    __role: EncoderRole
    __provenance: Dict
    __curve: List[CurvePoint]

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        encoder: IFeatureEncoder,
        role: EncoderRole,
        provenance: Dict,
        curve: Optional[List[CurvePoint]] = None,
    ) -> None:
        self.__encoder = encoder
        self.__role = role
        self.__provenance = provenance
        self.__curve = curve if curve is not None else []

    # -----------------------------------------------------------------------------

    @property
    def encoder(self) -> IFeatureEncoder:
        """Trained encoder accepting latents"""
        return self.__encoder

    # -----------------------------------------------------------------------------

    @property
    def role(self) -> EncoderRole:
        """Replaced pixel encoder role"""
        return self.__role

    # -----------------------------------------------------------------------------

    @property
    def provenance(self) -> Dict:
        """Teacher, configuration and training losses record"""
        return self.__provenance

    # -----------------------------------------------------------------------------

    @property
    def curve(self) -> List[CurvePoint]:
        """Training curve rows (iteration, loss, held-out metric)"""
        return self.__curve

    # -----------------------------------------------------------------------------

    def install(self, visual_embedder: IVisualEmbedder) -> None:
        """Use encoder as latent path of visual embedder"""
        visual_embedder.install_latent_encoder(self.__role, self.__encoder)

    # -----------------------------------------------------------------------------

    def write_curve(self, path: Union[str, Path]) -> None:
        """Write training curve as CSV"""
        Path(path).parent.mkdir(parents=True, exist_ok=True)

        with open(path, "w", newline="", encoding="utf-8") as curve_file:
            writer = csv.writer(curve_file)
            writer.writerow(["iteration", "loss", "held_out_metric"])

            for iteration, loss, metric in self.__curve:
                writer.writerow([iteration, repr(loss), "" if metric is None else repr(metric)])


class DistillationReport:
    """
    Agreement of latent twin with its teacher over dataset

    @package        FastyBird:DiffusionEditor!
    @module         perception/distiller
    """

    __objective: DistillObjective
    __values: List[float]

    # -----------------------------------------------------------------------------

    def __init__(self, objective: DistillObjective, values: List[float]) -> None:
        self.__objective = objective
        self.__values = values

    # -----------------------------------------------------------------------------

    @property
    def objective(self) -> DistillObjective:
        """Compared quantity, cosine of pooled features or L1 of feature stacks"""
        return self.__objective

    # -----------------------------------------------------------------------------

    @property
    def values(self) -> List[float]:
        """Per image values"""
        return self.__values

    # -----------------------------------------------------------------------------

    @property
    def mean(self) -> float:
        """Arithmetic mean of per image values"""
        return math.fsum(self.__values) / len(self.__values)

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict:
        """Transform report to dictionary"""
        key = "mean_cosine" if self.__objective == DistillObjective.COSINE else "mean_l1"

        return {
            key: self.mean,
            "count": len(self.__values),
            "min": min(self.__values),
            "max": max(self.__values),
            "values": self.__values,
        }


@inject
class LatentDistiller:
    """
    Trainer of latent domain twins of pixel encoders

    Student is a copy of the teacher encoder with the first convolution replaced to consume latents. Teacher
    and autoencoder stay frozen, the whole student is trained.

    @package        FastyBird:DiffusionEditor!
    @module         perception/distiller
    """

    __event_dispatcher: EventDispatcher

    __logger: Union[Logger, logging.Logger]

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        event_dispatcher: EventDispatcher,
        logger: Union[Logger, logging.Logger] = logging.getLogger("dummy"),
    ) -> None:
        self.__event_dispatcher = event_dispatcher

        self.__logger = logger

    # -----------------------------------------------------------------------------

    @staticmethod
    def create_student(
        teacher: IFeatureEncoder,
        autoencoder: IAutoencoder,
        initialization: StemInitialization = StemInitialization.RANDOM,
        seed: int = 0,
    ) -> IFeatureEncoder:
        """Copy of teacher whose stem consumes latents"""
        stem = teacher.stem

        kernel, stride, padding = stem.kernel_size[0], stem.stride[0], stem.padding

        if stem.kernel_size[0] != stem.kernel_size[1] or kernel != stride or any(padding):
            raise InvalidConfigurationException("Only square patchify stems without padding can be replaced")

        factor = autoencoder.spatial_factor

        if kernel % factor != 0:
            raise InvalidConfigurationException(f"Stem kernel {kernel} is not divisible by spatial factor {factor}")

        student = copy.deepcopy(teacher)

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)

            replaced = nn.Conv2d(
                autoencoder.latent_channels,
                stem.out_channels,
                kernel_size=kernel // factor,
                stride=kernel // factor,
                bias=True,
            ).to(dtype=stem.weight.dtype, device=stem.weight.device)

        if initialization == StemInitialization.DECODE_COMPOSED:
            LatentDistiller.__compose_with_decoder(replaced, stem, autoencoder)

        student.replace_stem(replaced)

        return student

    # -----------------------------------------------------------------------------

    def distill(  # pylint: disable=too-many-arguments,too-many-locals,too-many-statements
        self,
        teacher: IVisualEmbedder,
        autoencoder: IAutoencoder,
        config: DistillConfig,
        dataset: Dataset,
        held_out: Optional[Dataset] = None,
        progress: bool = False,
    ) -> DistilledEncoder:
        """Train latent twin of teacher encoder of configured role"""
        train_set, held_out = self.__split(dataset, held_out, config)

        teacher_encoder = teacher.encoder(config.role)
        teacher_encoder.requires_grad_(False)
        teacher_encoder.eval()

        student = self.create_student(teacher_encoder, autoencoder, config.stem_initialization, config.seed)
        student.requires_grad_(True)
        student.train()

        optimizer = torch.optim.AdamW(
            student.parameters(),
            lr=config.learning_rate,
            betas=config.optimizer_betas,
            weight_decay=config.weight_decay,
        )

        generator = torch.Generator().manual_seed(config.seed)

        interval = max(1, math.ceil(config.iterations / config.checkpoints))

        curve: List[CurvePoint] = []

        initial_metric = self.__held_out_metric(student, teacher_encoder, autoencoder, held_out, config.objective)

        best_metric = initial_metric
        best_iteration = 0
        best_state = copy.deepcopy(student.state_dict())

        initial_loss: Optional[float] = None
        last_loss: Optional[float] = None

        self.__logger.info(
            "Starting latent encoder distillation",
            extra={
                "distillation": {
                    "role": config.role.value,
                    "objective": config.objective.value,
                    "iterations": config.iterations,
                    "dataset": len(train_set),
                    "held_out": 0 if held_out is None else len(held_out),
                },
            },
        )

        for iteration in tqdm(
            range(1, config.iterations + 1),
            desc=f"distill {config.role.value}",
            disable=not progress,
        ):
            indices = torch.randint(0, len(train_set), (config.batch_size,), generator=generator).tolist()

            images = self.__batch(train_set, indices).to(dtype=teacher_encoder.stem.weight.dtype)

            with torch.no_grad():
                latents = autoencoder.encode(images)

            loss = self.__objective_loss(student, teacher_encoder, images, latents, config.objective).mean()

            if not bool(torch.isfinite(loss)):
                raise DistillationException(
                    f"Distillation loss is not finite at iteration {iteration}",
                    diagnostics={
                        "iteration": iteration,
                        "role": config.role.value,
                        "last_finite_loss": last_loss,
                        "learning_rate": config.learning_rate,
                        "best_iteration": best_iteration,
                        "best_metric": best_metric,
                    },
                )

            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()

            last_loss = float(loss.detach())
            initial_loss = last_loss if initial_loss is None else initial_loss

            metric: Optional[float] = None

            if iteration % interval == 0 or iteration == config.iterations:
                student.eval()

                metric = self.__held_out_metric(student, teacher_encoder, autoencoder, held_out, config.objective)

                student.train()

                checkpoint_metric = metric if metric is not None else last_loss

                improved = best_metric is None or (
                    checkpoint_metric > best_metric
                    if config.objective == DistillObjective.COSINE and metric is not None
                    else checkpoint_metric < best_metric
                )

                if improved:
                    best_metric = checkpoint_metric
                    best_iteration = iteration
                    best_state = copy.deepcopy(student.state_dict())

                self.__event_dispatcher.dispatch(
                    event_id=DistillationCheckpointEvent.EVENT_NAME,
                    event=DistillationCheckpointEvent(
                        role=config.role,
                        iteration=iteration,
                        loss=last_loss,
                        held_out_metric=checkpoint_metric,
                        improved=improved,
                    ),
                )

            curve.append((iteration, last_loss, metric))

        student.load_state_dict(best_state)
        student.requires_grad_(False)
        student.eval()

        provenance = {
            "teacher": type(teacher_encoder).__name__,
            "teacher_dim": teacher_encoder.feature_dim,
            "role": config.role.value,
            "objective": config.objective.value,
            "config": config.to_dict(),
            "autoencoder": type(autoencoder).__name__,
            "spatial_factor": autoencoder.spatial_factor,
            "initial_loss": initial_loss,
            "final_loss": last_loss,
            "initial_held_out": initial_metric,
            "best_held_out": best_metric,
            "best_iteration": best_iteration,
        }

        base = getattr(getattr(getattr(teacher_encoder, "model", None), "config", None), "name_or_path", None)

        if base is not None:
            provenance["base"] = base

        self.__logger.info(
            "Latent encoder distillation finished",
            extra={
                "distillation": {
                    "role": config.role.value,
                    "final_loss": last_loss,
                    "best_held_out": best_metric,
                    "best_iteration": best_iteration,
                },
            },
        )

        return DistilledEncoder(encoder=student, role=config.role, provenance=provenance, curve=curve)

    # -----------------------------------------------------------------------------

    @staticmethod
    def evaluate_distillation(
        student: Union[DistilledEncoder, IFeatureEncoder],
        teacher: Union[IVisualEmbedder, IFeatureEncoder],
        autoencoder: IAutoencoder,
        dataset: Dataset,
        objective: DistillObjective = DistillObjective.COSINE,
    ) -> DistillationReport:
        """Per image cosine of pooled features or L1 of feature stacks between student and teacher"""
        if len(dataset) == 0:  # type: ignore[arg-type]
            raise DistillationException("Evaluation dataset is empty")

        student_encoder = student.encoder if isinstance(student, DistilledEncoder) else student

        if isinstance(teacher, IVisualEmbedder):
            role = student.role if isinstance(student, DistilledEncoder) else EncoderRole.SEMANTIC
            teacher_encoder = teacher.encoder(role)

        else:
            teacher_encoder = teacher

        if student_encoder.in_channels != autoencoder.latent_channels:
            raise ShapeMismatchException(
                f"Student accepts {student_encoder.in_channels} channels, "
                f"autoencoder produces {autoencoder.latent_channels}"
            )

        if student_encoder.feature_dim != teacher_encoder.feature_dim:
            raise ShapeMismatchException(
                f"Student feature dimension {student_encoder.feature_dim} "
                f"differs from teacher dimension {teacher_encoder.feature_dim}"
            )

        values: List[float] = []

        indices = list(range(len(dataset)))  # type: ignore[arg-type]

        with torch.no_grad():
            for start in range(0, len(indices), EVALUATION_BATCH_SIZE):
                images = LatentDistiller.__batch(dataset, indices[start : start + EVALUATION_BATCH_SIZE]).to(
                    dtype=teacher_encoder.stem.weight.dtype
                )
                latents = autoencoder.encode(images)

                if objective == DistillObjective.COSINE:
                    values.extend(
                        TensorHelpers.cosine(student_encoder(latents), teacher_encoder(images)).double().tolist()
                    )

                else:
                    values.extend(
                        LatentDistiller.__objective_loss(
                            student_encoder, teacher_encoder, images, latents, DistillObjective.L1
                        )
                        .double()
                        .tolist()
                    )

        return DistillationReport(objective=objective, values=values)

    # -----------------------------------------------------------------------------

    @staticmethod
    def __objective_loss(
        student: IFeatureEncoder,
        teacher: IFeatureEncoder,
        images: torch.Tensor,
        latents: torch.Tensor,
        objective: DistillObjective,
    ) -> torch.Tensor:
        # Per image loss values
        if objective == DistillObjective.COSINE:
            with torch.no_grad():
                target = teacher(images)

            return 1.0 - TensorHelpers.cosine(student(latents), target)

        with torch.no_grad():
            target_features = teacher.forward_features(images)

        student_features = student.forward_features(latents)

        return torch.stack(
            [
                EditLoss.feature_distance(
                    [layer[index] for layer in target_features],
                    [layer[index] for layer in student_features],
                )
                for index in range(images.shape[0])
            ]
        )

    # -----------------------------------------------------------------------------

    def __held_out_metric(
        self,
        student: IFeatureEncoder,
        teacher: IFeatureEncoder,
        autoencoder: IAutoencoder,
        held_out: Optional[Dataset],
        objective: DistillObjective,
    ) -> Optional[float]:
        if held_out is None:
            return None

        return self.evaluate_distillation(student, teacher, autoencoder, held_out, objective).mean

    # -----------------------------------------------------------------------------

    @staticmethod
    def __split(
        dataset: Dataset,
        held_out: Optional[Dataset],
        config: DistillConfig,
    ) -> Tuple[Dataset, Optional[Dataset]]:
        count = len(dataset)  # type: ignore[arg-type]

        if count == 0:
            raise DistillationException("Distillation dataset is empty", diagnostics={"dataset": 0})

        if held_out is not None or config.held_out_size == 0:
            return dataset, held_out

        if config.held_out_size >= count:
            raise DistillationException(
                f"Held-out size {config.held_out_size} leaves no training images out of {count}",
                diagnostics={"dataset": count, "held_out": config.held_out_size},
            )

        return (
            Subset(dataset, list(range(count - config.held_out_size))),
            Subset(dataset, list(range(count - config.held_out_size, count))),
        )

    # -----------------------------------------------------------------------------

    @staticmethod
    def __batch(dataset: Dataset, indices: Sequence[int]) -> torch.Tensor:
        return torch.stack([dataset[index] for index in indices])

    # -----------------------------------------------------------------------------

    @staticmethod
    def __compose_with_decoder(replaced: nn.Conv2d, stem: nn.Conv2d, autoencoder: IAutoencoder) -> None:
        # Affine decoder with nearest upsampling folds into the patchify convolution
        if not isinstance(autoencoder, ToyAutoencoder):
            raise InvalidConfigurationException("Decoder composed stem requires affine pooling autoencoder")

        factor = autoencoder.spatial_factor

        with torch.no_grad():
            weight = stem.weight.double()
            out_channels, in_channels, kernel, _ = weight.shape

            summed = weight.view(out_channels, in_channels, kernel // factor, factor, kernel // factor, factor)
            summed = summed.sum(dim=(3, 5))

            matrix = autoencoder.decoder_matrix.double()
            offset = autoencoder.decoder_offset.double()

            composed_weight = torch.einsum("ocab,cl->olab", summed, matrix)
            composed_bias = torch.einsum("ocab,c->o", summed, offset)

            if stem.bias is not None:
                composed_bias = composed_bias + stem.bias.double()

            replaced.weight.copy_(composed_weight.to(replaced.weight.dtype))
            replaced.bias.copy_(composed_bias.to(replaced.bias.dtype))
