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
FastyBird diffusion editor entities module
"""

# Python base dependencies
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

# Library dependencies
import torch

# Library libs
from fastybird_diffusion_editor.exceptions import (
    InvalidConfigurationException,
    MaskException,
    ShapeMismatchException,
)
from fastybird_diffusion_editor.types import (
    CHECKPOINT_STEPS_THRESHOLD,
    DEFAULT_DISTILL_BATCH_SIZE,
    DEFAULT_DISTILL_CHECKPOINTS,
    DEFAULT_DISTILL_ITERATIONS,
    DEFAULT_DISTILL_LEARNING_RATE,
    DEFAULT_LAMBDA_PERC,
    DEFAULT_LAMBDA_REF,
    DEFAULT_LAMBDA_SEM,
    DEFAULT_NOISE_LEARNING_RATE,
    DEFAULT_OPTIMIZATION_STEPS,
    DEFAULT_OPTIMIZER_BETAS,
    DEFAULT_OPTIMIZER_EPS,
    DEFAULT_START_TIMESTEP,
    DEFAULT_STEPS_COUNT,
    DEFAULT_TIMESTEPS_LEARNING_RATE,
    DEFAULT_WEIGHT_DECAY,
    T_MAX,
    T_MIN,
    AblationMode,
    DistillObjective,
    EditTaskKind,
    EncoderRole,
    LossDomain,
    SemLossMode,
    StemInitialization,
)

ConfigValue = Union[str, int, float, bool, None, List, Dict]


def check_positive(name: str, value: Union[int, float], allow_zero: bool = False) -> None:
    """Validate configuration number"""
    if not math.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        raise InvalidConfigurationException(
            f"Configuration value '{name}' must be {'non-negative' if allow_zero else 'positive'}, got {value}"
        )


class LossWeights:
    """
    Weights of the total editing loss components

    @package        FastyBird:DiffusionEditor!
    @module         entities
    """

    __lambda_sem: float
    __lambda_perc: float
    __lambda_ref: float

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        lambda_sem: float = DEFAULT_LAMBDA_SEM,
        lambda_perc: float = DEFAULT_LAMBDA_PERC,
        lambda_ref: float = DEFAULT_LAMBDA_REF,
    ) -> None:
        check_positive("lambda_sem", lambda_sem, allow_zero=True)
        check_positive("lambda_perc", lambda_perc, allow_zero=True)
        check_positive("lambda_ref", lambda_ref, allow_zero=True)

        self.__lambda_sem = float(lambda_sem)
        self.__lambda_perc = float(lambda_perc)
        self.__lambda_ref = float(lambda_ref)

    # -----------------------------------------------------------------------------

    @property
    def lambda_sem(self) -> float:
        """Semantic loss weight"""
        return self.__lambda_sem

    # -----------------------------------------------------------------------------

    @property
    def lambda_perc(self) -> float:
        """Perceptual loss weight"""
        return self.__lambda_perc

    # -----------------------------------------------------------------------------

    @property
    def lambda_ref(self) -> float:
        """Reference loss weight, used only when reference image is supplied"""
        return self.__lambda_ref

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict[str, float]:
        """Transform weights to dictionary"""
        return {
            "lambda_sem": self.__lambda_sem,
            "lambda_perc": self.__lambda_perc,
            "lambda_ref": self.__lambda_ref,
        }


class AblationFlags:
    """
    Switches disabling parts of the optimization

    @package        FastyBird:DiffusionEditor!
    @module         entities
    """

    __freeze_timesteps: bool
    __freeze_noise: bool
    __full_mask: bool

    # -----------------------------------------------------------------------------

    def __init__(self, freeze_timesteps: bool = False, freeze_noise: bool = False, full_mask: bool = False) -> None:
        self.__freeze_timesteps = freeze_timesteps
        self.__freeze_noise = freeze_noise
        self.__full_mask = full_mask

    # -----------------------------------------------------------------------------

    @classmethod
    def from_mode(cls, mode: AblationMode) -> "AblationFlags":
        """Create flags of ablation preset"""
        return cls(
            freeze_timesteps=mode == AblationMode.CONST_T,
            freeze_noise=mode == AblationMode.CONST_N,
            full_mask=mode == AblationMode.FULL_MASK,
        )

    # -----------------------------------------------------------------------------

    @property
    def freeze_timesteps(self) -> bool:
        """Timesteps are kept at their initial values"""
        return self.__freeze_timesteps

    # -----------------------------------------------------------------------------

    @property
    def freeze_noise(self) -> bool:
        """Noise tensor is kept at its initial value"""
        return self.__freeze_noise

    # -----------------------------------------------------------------------------

    @property
    def full_mask(self) -> bool:
        """Computed mask is replaced by all-ones mask"""
        return self.__full_mask

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict[str, bool]:
        """Transform flags to dictionary"""
        return {
            "freeze_timesteps": self.__freeze_timesteps,
            "freeze_noise": self.__freeze_noise,
            "full_mask": self.__full_mask,
        }


class RunConfig:  # pylint: disable=too-many-instance-attributes
    """
    Editing run configuration

    W = 0 is accepted and means a single forward and denoise pass without optimization.
    Start timestep may be 1, the initial schedule is clamped to [t_min, t_max].

    @package        FastyBird:DiffusionEditor!
    @module         entities
    """

    __steps_count: int
    __start_timestep: float
    __optimization_steps: int

    __lr_timesteps: float
    __lr_noise: float

    __weights: LossWeights
    __sem_mode: SemLossMode
    __loss_domain: LossDomain

    __seed: int

    __ablation: AblationFlags
    __enforce_monotonic_t: bool

    __optimizer_betas: Tuple[float, float]
    __optimizer_eps: float
    __weight_decay: float

    __checkpoint: Optional[bool]
    __snapshot_every: Optional[int]

    __t_min: float
    __t_max: float

    # -----------------------------------------------------------------------------

    def __init__(  # pylint: disable=too-many-arguments,too-many-locals
        self,
        steps_count: int = DEFAULT_STEPS_COUNT,
        start_timestep: float = DEFAULT_START_TIMESTEP,
        optimization_steps: int = DEFAULT_OPTIMIZATION_STEPS,
        lr_timesteps: float = DEFAULT_TIMESTEPS_LEARNING_RATE,
        lr_noise: float = DEFAULT_NOISE_LEARNING_RATE,
        weights: Optional[LossWeights] = None,
        sem_mode: SemLossMode = SemLossMode.ABSOLUTE_DIFFERENCE,
        seed: int = 0,
        ablation: Optional[AblationFlags] = None,
        enforce_monotonic_t: bool = False,
        optimizer_betas: Tuple[float, float] = DEFAULT_OPTIMIZER_BETAS,
        optimizer_eps: float = DEFAULT_OPTIMIZER_EPS,
        weight_decay: float = DEFAULT_WEIGHT_DECAY,
        loss_domain: LossDomain = LossDomain.LATENT,
        checkpoint: Optional[bool] = None,
        snapshot_every: Optional[int] = None,
        t_min: float = T_MIN,
        t_max: float = T_MAX,
    ) -> None:
        if steps_count < 1:
            raise InvalidConfigurationException(f"Number of denoising steps K must be at least 1, got {steps_count}")

        if optimization_steps < 0:
            raise InvalidConfigurationException(
                f"Number of optimization steps W must not be negative, got {optimization_steps}"
            )

        if not 0 < t_min < t_max < 1:
            raise InvalidConfigurationException(f"Timestep bounds must satisfy 0 < t_min < t_max < 1, got ({t_min}, {t_max})")

        if not 0 < start_timestep <= 1:
            raise InvalidConfigurationException(f"Start timestep T must be within (0, 1], got {start_timestep}")

        check_positive("lr_t", lr_timesteps)
        check_positive("lr_noise", lr_noise)
        check_positive("optimizer_eps", optimizer_eps)
        check_positive("weight_decay", weight_decay, allow_zero=True)

        if len(optimizer_betas) != 2 or not all(0 <= beta < 1 for beta in optimizer_betas):
            raise InvalidConfigurationException(f"Optimizer betas must be two values in [0, 1), got {optimizer_betas}")

        if snapshot_every is not None and snapshot_every < 1:
            raise InvalidConfigurationException(f"Snapshot interval must be positive, got {snapshot_every}")

        self.__steps_count = steps_count
        self.__start_timestep = float(start_timestep)
        self.__optimization_steps = optimization_steps

        self.__lr_timesteps = float(lr_timesteps)
        self.__lr_noise = float(lr_noise)

        self.__weights = weights if weights is not None else LossWeights()
        self.__sem_mode = sem_mode
        self.__loss_domain = loss_domain

        self.__seed = seed

        self.__ablation = ablation if ablation is not None else AblationFlags()
        self.__enforce_monotonic_t = enforce_monotonic_t

        self.__optimizer_betas = (float(optimizer_betas[0]), float(optimizer_betas[1]))
        self.__optimizer_eps = float(optimizer_eps)
        self.__weight_decay = float(weight_decay)

        self.__checkpoint = checkpoint
        self.__snapshot_every = snapshot_every

        self.__t_min = float(t_min)
        self.__t_max = float(t_max)

    # -----------------------------------------------------------------------------

    @property
    def steps_count(self) -> int:
        """Number of denoising steps K"""
        return self.__steps_count

    # -----------------------------------------------------------------------------

    @property
    def start_timestep(self) -> float:
        """Starting timestep T"""
        return self.__start_timestep

    # -----------------------------------------------------------------------------

    @property
    def optimization_steps(self) -> int:
        """Number of optimization steps W"""
        return self.__optimization_steps

    # -----------------------------------------------------------------------------

    @property
    def lr_timesteps(self) -> float:
        """Timesteps optimizer learning rate"""
        return self.__lr_timesteps

    # -----------------------------------------------------------------------------

    @property
    def lr_noise(self) -> float:
        """Noise optimizer learning rate"""
        return self.__lr_noise

    # -----------------------------------------------------------------------------

    @property
    def weights(self) -> LossWeights:
        """Loss components weights"""
        return self.__weights

    # -----------------------------------------------------------------------------

    @property
    def sem_mode(self) -> SemLossMode:
        """Semantic loss reduction"""
        return self.__sem_mode

    # -----------------------------------------------------------------------------

    @property
    def loss_domain(self) -> LossDomain:
        """Domain of feature extraction for losses"""
        return self.__loss_domain

    # -----------------------------------------------------------------------------

    @property
    def seed(self) -> int:
        """Initial noise seed"""
        return self.__seed

    # -----------------------------------------------------------------------------

    @property
    def ablation(self) -> AblationFlags:
        """Ablation switches"""
        return self.__ablation

    # -----------------------------------------------------------------------------

    @property
    def enforce_monotonic_t(self) -> bool:
        """Sort timesteps ascending after every update"""
        return self.__enforce_monotonic_t

    # -----------------------------------------------------------------------------

    @property
    def optimizer_betas(self) -> Tuple[float, float]:
        """Moments decay rates of both optimizers"""
        return self.__optimizer_betas

    # -----------------------------------------------------------------------------

    @property
    def optimizer_eps(self) -> float:
        """Optimizers denominator term"""
        return self.__optimizer_eps

    # -----------------------------------------------------------------------------

    @property
    def weight_decay(self) -> float:
        """Decoupled weight decay of both optimizers"""
        return self.__weight_decay

    # -----------------------------------------------------------------------------

    @property
    def checkpoint(self) -> bool:
        """Recompute denoising steps during backward pass"""
        if self.__checkpoint is None:
            return self.__steps_count > CHECKPOINT_STEPS_THRESHOLD

        return self.__checkpoint

    # -----------------------------------------------------------------------------

    @property
    def snapshot_every(self) -> Optional[int]:
        """Interval of intermediate output snapshots"""
        return self.__snapshot_every

    # -----------------------------------------------------------------------------

    @property
    def t_min(self) -> float:
        """Lower timesteps clamp"""
        return self.__t_min

    # -----------------------------------------------------------------------------

    @property
    def t_max(self) -> float:
        """Upper timesteps clamp"""
        return self.__t_max

    # -----------------------------------------------------------------------------

    def replace(self, **changes: ConfigValue) -> "RunConfig":
        """Copy of configuration with some values changed"""
        values = {
            "steps_count": self.__steps_count,
            "start_timestep": self.__start_timestep,
            "optimization_steps": self.__optimization_steps,
            "lr_timesteps": self.__lr_timesteps,
            "lr_noise": self.__lr_noise,
            "weights": self.__weights,
            "sem_mode": self.__sem_mode,
            "seed": self.__seed,
            "ablation": self.__ablation,
            "enforce_monotonic_t": self.__enforce_monotonic_t,
            "optimizer_betas": self.__optimizer_betas,
            "optimizer_eps": self.__optimizer_eps,
            "weight_decay": self.__weight_decay,
            "loss_domain": self.__loss_domain,
            "checkpoint": self.__checkpoint,
            "snapshot_every": self.__snapshot_every,
            "t_min": self.__t_min,
            "t_max": self.__t_max,
        }

        unknown = set(changes.keys()) - set(values.keys())

        if len(unknown) > 0:
            raise InvalidConfigurationException(f"Unknown configuration values: {sorted(unknown)}")

        values.update(changes)

        return RunConfig(**values)  # type: ignore[arg-type]

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict[str, ConfigValue]:
        """Transform configuration to dictionary"""
        return {
            "K": self.__steps_count,
            "T": self.__start_timestep,
            "W": self.__optimization_steps,
            "lr_t": self.__lr_timesteps,
            "lr_noise": self.__lr_noise,
            "weights": self.__weights.to_dict(),
            "sem_mode": self.__sem_mode.value,
            "loss_domain": self.__loss_domain.value,
            "seed": self.__seed,
            "ablation": self.__ablation.to_dict(),
            "enforce_monotonic_t": self.__enforce_monotonic_t,
            "optimizer_betas": list(self.__optimizer_betas),
            "optimizer_eps": self.__optimizer_eps,
            "weight_decay": self.__weight_decay,
            "checkpoint": self.checkpoint,
            "snapshot_every": self.__snapshot_every,
            "t_min": self.__t_min,
            "t_max": self.__t_max,
        }


class DistillConfig:  # pylint: disable=too-many-instance-attributes
    """
    Latent twin training configuration

    Semantic twins are trained with cosine objective, perceptual twins with L1 objective.

    @package        FastyBird:DiffusionEditor!
    @module         entities
    """

    __role: EncoderRole
    __objective: DistillObjective

    __iterations: int
    __batch_size: int
    __learning_rate: float
    __weight_decay: float
    __optimizer_betas: Tuple[float, float]

    __dataset_path: Optional[Path]
    __held_out_size: int
    __checkpoints: int

    __stem_initialization: StemInitialization
    __seed: int

    # -----------------------------------------------------------------------------

    def __init__(  # pylint: disable=too-many-arguments
        self,
        role: EncoderRole = EncoderRole.SEMANTIC,
        objective: Optional[DistillObjective] = None,
        iterations: int = DEFAULT_DISTILL_ITERATIONS,
        batch_size: int = DEFAULT_DISTILL_BATCH_SIZE,
        learning_rate: float = DEFAULT_DISTILL_LEARNING_RATE,
        weight_decay: float = DEFAULT_WEIGHT_DECAY,
        optimizer_betas: Tuple[float, float] = DEFAULT_OPTIMIZER_BETAS,
        dataset_path: Union[str, Path, None] = None,
        held_out_size: int = 0,
        checkpoints: int = DEFAULT_DISTILL_CHECKPOINTS,
        stem_initialization: StemInitialization = StemInitialization.RANDOM,
        seed: int = 0,
    ) -> None:
        expected = DistillObjective.COSINE if role == EncoderRole.SEMANTIC else DistillObjective.L1

        if objective is not None and objective != expected:
            raise InvalidConfigurationException(f"Latent {role} encoder must be trained with {expected} objective")

        if iterations <= 0 or batch_size <= 0:
            raise InvalidConfigurationException(
                f"Distillation iterations and batch size must be positive, got ({iterations}, {batch_size})"
            )

        if checkpoints <= 0 or held_out_size < 0:
            raise InvalidConfigurationException("Checkpoints count must be positive and held-out size non-negative")

        check_positive("learning_rate", learning_rate)
        check_positive("weight_decay", weight_decay, allow_zero=True)

        self.__role = role
        self.__objective = expected

        self.__iterations = iterations
        self.__batch_size = batch_size
        self.__learning_rate = float(learning_rate)
        self.__weight_decay = float(weight_decay)
        self.__optimizer_betas = (float(optimizer_betas[0]), float(optimizer_betas[1]))

        self.__dataset_path = Path(dataset_path) if dataset_path is not None else None
        self.__held_out_size = held_out_size
        self.__checkpoints = checkpoints

        self.__stem_initialization = stem_initialization
        self.__seed = seed

    # -----------------------------------------------------------------------------

    @property
    def role(self) -> EncoderRole:
        """Role of distilled encoder"""
        return self.__role

    # -----------------------------------------------------------------------------

    @property
    def objective(self) -> DistillObjective:
        """Training objective"""
        return self.__objective

    # -----------------------------------------------------------------------------

    @property
    def iterations(self) -> int:
        """Number of optimizer steps"""
        return self.__iterations

    # -----------------------------------------------------------------------------

    @property
    def batch_size(self) -> int:
        """Images per step"""
        return self.__batch_size

    # -----------------------------------------------------------------------------

    @property
    def learning_rate(self) -> float:
        """Student optimizer learning rate"""
        return self.__learning_rate

    # -----------------------------------------------------------------------------

    @property
    def weight_decay(self) -> float:
        """Student optimizer decoupled weight decay"""
        return self.__weight_decay

    # -----------------------------------------------------------------------------

    @property
    def optimizer_betas(self) -> Tuple[float, float]:
        """Student optimizer moments decay rates"""
        return self.__optimizer_betas

    # -----------------------------------------------------------------------------

    @property
    def dataset_path(self) -> Optional[Path]:
        """Training images directory, synthetic images are generated when empty"""
        return self.__dataset_path

    # -----------------------------------------------------------------------------

    @property
    def held_out_size(self) -> int:
        """Number of images kept aside for checkpoint selection"""
        return self.__held_out_size

    # -----------------------------------------------------------------------------

    @property
    def checkpoints(self) -> int:
        """Number of evaluation checkpoints over the whole training"""
        return self.__checkpoints

    # -----------------------------------------------------------------------------

    @property
    def stem_initialization(self) -> StemInitialization:
        """Initialization of replaced stem"""
        return self.__stem_initialization

    # -----------------------------------------------------------------------------

    @property
    def seed(self) -> int:
        """Training randomness seed"""
        return self.__seed

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict[str, ConfigValue]:
        """Transform configuration to dictionary"""
        return {
            "role": self.__role.value,
            "objective": self.__objective.value,
            "iterations": self.__iterations,
            "batch_size": self.__batch_size,
            "learning_rate": self.__learning_rate,
            "weight_decay": self.__weight_decay,
            "optimizer_betas": list(self.__optimizer_betas),
            "dataset_path": None if self.__dataset_path is None else str(self.__dataset_path),
            "held_out_size": self.__held_out_size,
            "checkpoints": self.__checkpoints,
            "stem_initialization": self.__stem_initialization.value,
            "seed": self.__seed,
        }


class AuxiliaryInputs:
    """
    Optional task inputs

    Images are (3, H, W) tensors in [0, 1], region mask is (H, W) tensor in [0, 1]

    @package        FastyBird:DiffusionEditor!
    @module         entities
    """

    __reference: Optional[torch.Tensor]
    __stroke_image: Optional[torch.Tensor]
    __composed_image: Optional[torch.Tensor]
    __region_mask: Optional[torch.Tensor]

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        reference: Optional[torch.Tensor] = None,
        stroke_image: Optional[torch.Tensor] = None,
        composed_image: Optional[torch.Tensor] = None,
        region_mask: Optional[torch.Tensor] = None,
    ) -> None:
        self.__reference = reference
        self.__stroke_image = stroke_image
        self.__composed_image = composed_image
        self.__region_mask = region_mask

    # -----------------------------------------------------------------------------

    @property
    def reference(self) -> Optional[torch.Tensor]:
        """Reference image guiding the edit"""
        return self.__reference

    # -----------------------------------------------------------------------------

    @property
    def stroke_image(self) -> Optional[torch.Tensor]:
        """Original image with user painted strokes"""
        return self.__stroke_image

    # -----------------------------------------------------------------------------

    @property
    def composed_image(self) -> Optional[torch.Tensor]:
        """Original image with pasted content"""
        return self.__composed_image

    # -----------------------------------------------------------------------------

    @property
    def region_mask(self) -> Optional[torch.Tensor]:
        """User supplied editing region"""
        return self.__region_mask


class EditRequest:
    """
    Single editing request

    @package        FastyBird:DiffusionEditor!
    @module         entities
    """

    __image: torch.Tensor
    __source_prompt: str
    __target_prompt: str
    __task: EditTaskKind
    __aux: AuxiliaryInputs
    __edit_objects: Optional[List[str]]
    __sample_id: str

    # -----------------------------------------------------------------------------

    def __init__(  # pylint: disable=too-many-arguments
        self,
        image: torch.Tensor,
        source_prompt: str,
        target_prompt: str,
        task: EditTaskKind,
        aux: Optional[AuxiliaryInputs] = None,
        edit_objects: Optional[List[str]] = None,
        sample_id: str = "sample",
    ) -> None:
        aux = aux if aux is not None else AuxiliaryInputs()

        if image.dim() != 3 or image.shape[0] != 3:
            raise ShapeMismatchException(f"Image must be (3, H, W) tensor, got {tuple(image.shape)}")

        if target_prompt.strip() == "":
            raise InvalidConfigurationException("Target prompt must not be empty")

        required = {
            EditTaskKind.ADD_OBJECT: ("region_mask", aux.region_mask),
            EditTaskKind.STROKE: ("stroke_image", aux.stroke_image),
            EditTaskKind.COMPOSE: ("composed_image", aux.composed_image),
        }

        for kind, (name, value) in required.items():
            if kind == task and value is None:
                raise MaskException(f"Task {task} requires auxiliary input '{name}'")

            if kind != task and value is not None:
                raise InvalidConfigurationException(f"Auxiliary input '{name}' is not used by task {task}")

        for name, value in (
            ("reference", aux.reference),
            ("stroke_image", aux.stroke_image),
            ("composed_image", aux.composed_image),
        ):
            if value is not None and tuple(value.shape) != tuple(image.shape):
                raise ShapeMismatchException(
                    f"Auxiliary image '{name}' shape {tuple(value.shape)} differs from image shape {tuple(image.shape)}"
                )

        if aux.region_mask is not None and tuple(aux.region_mask.shape) != tuple(image.shape[1:]):
            raise ShapeMismatchException(
                f"Region mask shape {tuple(aux.region_mask.shape)} differs from image size {tuple(image.shape[1:])}"
            )

        self.__image = image
        self.__source_prompt = source_prompt
        self.__target_prompt = target_prompt
        self.__task = task
        self.__aux = aux
        self.__edit_objects = edit_objects
        self.__sample_id = sample_id

    # -----------------------------------------------------------------------------

    @property
    def image(self) -> torch.Tensor:
        """Original image I"""
        return self.__image

    # -----------------------------------------------------------------------------

    @property
    def source_prompt(self) -> str:
        """Description of original image p_O"""
        return self.__source_prompt

    # -----------------------------------------------------------------------------

    @property
    def target_prompt(self) -> str:
        """Description of desired output p"""
        return self.__target_prompt

    # -----------------------------------------------------------------------------

    @property
    def task(self) -> EditTaskKind:
        """Declared editing operation"""
        return self.__task

    # -----------------------------------------------------------------------------

    @property
    def aux(self) -> AuxiliaryInputs:
        """Auxiliary inputs"""
        return self.__aux

    # -----------------------------------------------------------------------------

    @property
    def edit_objects(self) -> Optional[List[str]]:
        """Explicit replace targets overriding prompts difference"""
        return self.__edit_objects

    # -----------------------------------------------------------------------------

    @property
    def sample_id(self) -> str:
        """Request identifier used in reports and output folders"""
        return self.__sample_id

    # -----------------------------------------------------------------------------

    def with_image(self, image: torch.Tensor) -> "EditRequest":
        """Copy of request editing another image"""
        return EditRequest(
            image=image,
            source_prompt=self.__source_prompt,
            target_prompt=self.__target_prompt,
            task=self.__task,
            aux=self.__aux,
            edit_objects=self.__edit_objects,
            sample_id=self.__sample_id,
        )

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict[str, ConfigValue]:
        """Transform request description to dictionary"""
        return {
            "sample_id": self.__sample_id,
            "task": self.__task.value,
            "source_prompt": self.__source_prompt,
            "target_prompt": self.__target_prompt,
            "edit_objects": self.__edit_objects,
            "image_size": list(self.__image.shape[1:]),
            "reference": self.__aux.reference is not None,
        }
