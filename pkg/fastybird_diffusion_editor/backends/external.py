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
FastyBird diffusion editor backends module pre-trained backbones adapters

Adapters import diffusers and transformers lazily, both are optional extras.
"""

# Python base dependencies
import importlib
from pathlib import Path
from types import ModuleType
from typing import Any, List, Tuple, Union

# Library dependencies
import torch
import torch.nn.functional as F
from torch import nn

# Library libs
from fastybird_diffusion_editor.backends.backend import (
    IAutoencoder,
    IDenoiser,
    IFeatureEncoder,
    ISegmenter,
    ITextEmbedder,
)
from fastybird_diffusion_editor.diffusion.schedule import Schedule
from fastybird_diffusion_editor.exceptions import (
    BackendLoadException,
    ShapeMismatchException,
)

CLIP_PIXEL_MEAN: Tuple[float, float, float] = (0.48145466, 0.4578275, 0.40821073)
CLIP_PIXEL_STD: Tuple[float, float, float] = (0.26862954, 0.26130258, 0.27577711)


def import_optional(package: str, extra: str) -> ModuleType:
    """Import optional package or fail with documented load error"""
    try:
        return importlib.import_module(package)

    except ImportError as ex:
        raise BackendLoadException(
            f"Optional package '{package}' is not installed, install 'fastybird-diffusion-editor[{extra}]'"
        ) from ex


def require_weights(path: Union[str, Path]) -> Path:
    """Check that pre-trained weights are bundled in model directory"""
    weights = Path(path)

    if not weights.exists():
        raise BackendLoadException(f"Pre-trained weights are not bundled, expected them in '{weights}'")

    return weights


class DiffusersUNetDenoiser(IDenoiser):
    """
    Latent diffusion UNet with continuous timestep conditioning

    Optimized timestep t in [0, 1] is rescaled to t * S and fed to the sinusoidal timestep
    embedding as a floating point value, keeping the prediction differentiable in t.

    @package        FastyBird:DiffusionEditor!
    @module         backends/external
    """

    __unet: Any
    __schedule: Schedule
    __latent_shape: Tuple[int, int, int]

    # -----------------------------------------------------------------------------

    def __init__(self, unet: Any, schedule: Schedule, latent_shape: Tuple[int, int, int]) -> None:
        unet.requires_grad_(False)
        unet.eval()

        self.__unet = unet
        self.__schedule = schedule
        self.__latent_shape = latent_shape

    # -----------------------------------------------------------------------------

    @classmethod
    def from_pretrained(
        cls,
        weights: Union[str, Path],
        schedule: Schedule,
        latent_shape: Tuple[int, int, int],
    ) -> "DiffusersUNetDenoiser":
        """Load UNet weights from bundled directory"""
        diffusers = import_optional("diffusers", "diffusers")

        unet = diffusers.UNet2DConditionModel.from_pretrained(str(require_weights(weights)), local_files_only=True)

        return cls(unet=unet, schedule=schedule, latent_shape=latent_shape)

    # -----------------------------------------------------------------------------

    @property
    def schedule(self) -> Schedule:
        """Backbone trained schedule"""
        return self.__schedule

    # -----------------------------------------------------------------------------

    @property
    def latent_shape(self) -> Tuple[int, int, int]:
        """Latent geometry (channels, height, width)"""
        return self.__latent_shape

    # -----------------------------------------------------------------------------

    @property
    def condition_dim(self) -> int:
        """Cross attention dimension"""
        return int(self.__unet.config.cross_attention_dim)

    # -----------------------------------------------------------------------------

    def predict(self, latent: torch.Tensor, t: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        """Predict noise contained in latent at continuous timestep"""
        if tuple(latent.shape[-3:]) != self.__latent_shape:
            raise ShapeMismatchException(
                f"Latent shape {tuple(latent.shape)} does not match backbone shape {self.__latent_shape}"
            )

        steps_count = self.__schedule.steps_count or 1000

        sample = latent.unsqueeze(0).to(self.__unet.dtype)
        hidden_states = (condition if condition.dim() == 3 else condition.unsqueeze(0)).to(self.__unet.dtype)

        # Float timestep keeps autograd path through the sinusoidal embedding
        timestep = (t * steps_count).reshape(1).to(device=sample.device)

        prediction = self.__unet(sample, timestep, encoder_hidden_states=hidden_states).sample

        return prediction[0].to(latent.dtype)


class DiffusersVaeAutoencoder(IAutoencoder):
    """
    KL autoencoder adapter, encoding takes the posterior mean

    @package        FastyBird:DiffusionEditor!
    @module         backends/external
    """

    __vae: Any
    __tolerance: float

    # -----------------------------------------------------------------------------

    def __init__(self, vae: Any, tolerance: float) -> None:
        vae.requires_grad_(False)
        vae.eval()

        self.__vae = vae
        self.__tolerance = tolerance

    # -----------------------------------------------------------------------------

    @classmethod
    def from_pretrained(cls, weights: Union[str, Path], tolerance: float) -> "DiffusersVaeAutoencoder":
        """Load autoencoder weights from bundled directory"""
        diffusers = import_optional("diffusers", "diffusers")

        vae = diffusers.AutoencoderKL.from_pretrained(str(require_weights(weights)), local_files_only=True)

        return cls(vae=vae, tolerance=tolerance)

    # -----------------------------------------------------------------------------

    @property
    def spatial_factor(self) -> int:
        """Integer downsampling ratio between pixel and latent grid"""
        return int(2 ** (len(self.__vae.config.block_out_channels) - 1))

    # -----------------------------------------------------------------------------

    @property
    def latent_channels(self) -> int:
        """Number of latent channels"""
        return int(self.__vae.config.latent_channels)

    # -----------------------------------------------------------------------------

    @property
    def reconstruction_tolerance(self) -> float:
        """Declared round trip tolerance"""
        return self.__tolerance

    # -----------------------------------------------------------------------------

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        """Transform pixel image into scaled latent"""
        batched = image if image.dim() == 4 else image.unsqueeze(0)

        posterior = self.__vae.encode((batched * 2 - 1).to(self.__vae.dtype)).latent_dist
        latent = posterior.mean * self.__vae.config.scaling_factor

        return (latent if image.dim() == 4 else latent[0]).to(image.dtype)

    # -----------------------------------------------------------------------------

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        """Transform scaled latent into pixel image"""
        batched = latent if latent.dim() == 4 else latent.unsqueeze(0)

        decoded = self.__vae.decode((batched / self.__vae.config.scaling_factor).to(self.__vae.dtype)).sample
        image = (decoded + 1) / 2

        return (image if latent.dim() == 4 else image[0]).to(latent.dtype)


class ClipTextEmbedder(ITextEmbedder):
    """
    CLIP text tower adapter

    Condition embedding is the last hidden state sequence, pooled feature is the normalized
    projected text embedding.

    @package        FastyBird:DiffusionEditor!
    @module         backends/external
    """

    __tokenizer: Any
    __model: Any

    # -----------------------------------------------------------------------------

    def __init__(self, tokenizer: Any, model: Any) -> None:
        model.requires_grad_(False)
        model.eval()

        self.__tokenizer = tokenizer
        self.__model = model

    # -----------------------------------------------------------------------------

    @classmethod
    def from_pretrained(cls, weights: Union[str, Path]) -> "ClipTextEmbedder":
        """Load tokenizer and text tower from bundled directory"""
        transformers = import_optional("transformers", "transformers")

        path = str(require_weights(weights))

        return cls(
            tokenizer=transformers.CLIPTokenizer.from_pretrained(path, local_files_only=True),
            model=transformers.CLIPTextModelWithProjection.from_pretrained(path, local_files_only=True),
        )

    # -----------------------------------------------------------------------------

    @property
    def condition_dim(self) -> int:
        """Hidden size of text tower"""
        return int(self.__model.config.hidden_size)

    # -----------------------------------------------------------------------------

    @property
    def feature_dim(self) -> int:
        """Projection dimension"""
        return int(self.__model.config.projection_dim)

    # -----------------------------------------------------------------------------

    def embed(self, prompt: str) -> torch.Tensor:
        """Hidden states sequence for cross attention"""
        with torch.no_grad():
            return self.__model(**self.__tokenize(prompt)).last_hidden_state[0]

    # -----------------------------------------------------------------------------

    def pooled_embed(self, prompt: str) -> torch.Tensor:
        """Unit norm projected prompt feature"""
        with torch.no_grad():
            return F.normalize(self.__model(**self.__tokenize(prompt)).text_embeds[0], dim=-1)

    # -----------------------------------------------------------------------------

    def add_concept(self, token: str, vector: torch.Tensor) -> None:
        """Register learned token embedding, vector lives in token embedding space"""
        embeddings = self.__model.get_input_embeddings()

        if vector.dim() != 1 or vector.shape[0] != embeddings.weight.shape[1]:
            raise ShapeMismatchException(
                f"Concept vector must have shape ({embeddings.weight.shape[1]},), got {tuple(vector.shape)}"
            )

        self.__tokenizer.add_tokens([token])
        self.__model.resize_token_embeddings(len(self.__tokenizer))

        token_id = self.__tokenizer.convert_tokens_to_ids(token)

        with torch.no_grad():
            self.__model.get_input_embeddings().weight[token_id] = vector.to(embeddings.weight.dtype)

    # -----------------------------------------------------------------------------

    def __tokenize(self, prompt: str) -> Any:
        return self.__tokenizer(
            [prompt],
            padding="max_length",
            max_length=self.__tokenizer.model_max_length,
            truncation=True,
            return_tensors="pt",
        )


class ClipVisionEncoder(IFeatureEncoder):
    """
    CLIP vision tower adapter, patch embedding convolution is the replaceable stem

    Pixel inputs are normalized with CLIP statistics. Once the stem is replaced the encoder
    consumes latents as they are.

    @package        FastyBird:DiffusionEditor!
    @module         backends/external
    """

    def __init__(self, model: Any) -> None:
        super().__init__()

        self.model = model
        self.pixel_input = True

        self.register_buffer("pixel_mean", torch.tensor(CLIP_PIXEL_MEAN).view(1, 3, 1, 1), persistent=False)
        self.register_buffer("pixel_std", torch.tensor(CLIP_PIXEL_STD).view(1, 3, 1, 1), persistent=False)

        self.requires_grad_(False)

    # -----------------------------------------------------------------------------

    @classmethod
    def from_pretrained(cls, weights: Union[str, Path]) -> "ClipVisionEncoder":
        """Load vision tower from bundled directory"""
        transformers = import_optional("transformers", "transformers")

        return cls(
            model=transformers.CLIPVisionModelWithProjection.from_pretrained(
                str(require_weights(weights)),
                local_files_only=True,
            ),
        )

    # -----------------------------------------------------------------------------

    @property
    def stem(self) -> nn.Conv2d:
        """Patch embedding convolution"""
        return self.model.vision_model.embeddings.patch_embedding

    # -----------------------------------------------------------------------------

    def replace_stem(self, stem: nn.Conv2d) -> None:
        """Swap patch embedding convolution"""
        if stem.out_channels != self.stem.out_channels:
            raise ShapeMismatchException(f"Stem must produce {self.stem.out_channels} channels, got {stem.out_channels}")

        self.model.vision_model.embeddings.patch_embedding = stem
        self.pixel_input = stem.in_channels == 3 and self.pixel_input

    # -----------------------------------------------------------------------------

    @property
    def feature_dim(self) -> int:
        """Projection dimension"""
        return int(self.model.config.projection_dim)

    # -----------------------------------------------------------------------------

    def forward_features(self, inputs: torch.Tensor) -> List[torch.Tensor]:
        """Hidden states of every transformer layer"""
        outputs = self.model(
            pixel_values=self.__prepare(inputs),
            output_hidden_states=True,
            interpolate_pos_encoding=True,
        )

        return list(outputs.hidden_states[1:])

    # -----------------------------------------------------------------------------

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:  # pylint: disable=arguments-differ
        """Unit norm projected image feature"""
        outputs = self.model(pixel_values=self.__prepare(inputs), interpolate_pos_encoding=True)

        return F.normalize(outputs.image_embeds, dim=-1)

    # -----------------------------------------------------------------------------

    def __prepare(self, inputs: torch.Tensor) -> torch.Tensor:
        if self.pixel_input:
            return (inputs - self.pixel_mean.to(inputs.dtype)) / self.pixel_std.to(inputs.dtype)

        return inputs


class ClipSegSegmenter(ISegmenter):
    """
    CLIPSeg text driven segmenter adapter

    @package        FastyBird:DiffusionEditor!
    @module         backends/external
    """

    __processor: Any
    __model: Any

    # -----------------------------------------------------------------------------

    def __init__(self, processor: Any, model: Any) -> None:
        model.requires_grad_(False)
        model.eval()

        self.__processor = processor
        self.__model = model

    # -----------------------------------------------------------------------------

    @classmethod
    def from_pretrained(cls, weights: Union[str, Path]) -> "ClipSegSegmenter":
        """Load processor and segmentation model from bundled directory"""
        transformers = import_optional("transformers", "transformers")

        path = str(require_weights(weights))

        return cls(
            processor=transformers.CLIPSegProcessor.from_pretrained(path, local_files_only=True),
            model=transformers.CLIPSegForImageSegmentation.from_pretrained(path, local_files_only=True),
        )

    # -----------------------------------------------------------------------------

    def segment(self, image: torch.Tensor, text: str) -> torch.Tensor:
        """Soft (H, W) mask in [0, 1] resized to input image"""
        if image.dim() != 3 or image.shape[0] != 3:
            raise ShapeMismatchException(f"Image must be (3, H, W) tensor, got {tuple(image.shape)}")

        inputs = self.__processor(
            text=[text],
            images=[image.detach().cpu().clamp(0, 1)],
            do_rescale=False,
            padding=True,
            return_tensors="pt",
        )

        with torch.no_grad():
            logits = self.__model(**inputs).logits

        probabilities = torch.sigmoid(logits.reshape(1, 1, logits.shape[-2], logits.shape[-1]))

        resized = F.interpolate(probabilities, size=tuple(image.shape[1:]), mode="bilinear", align_corners=False)

        return resized[0, 0].to(dtype=image.dtype, device=image.device).clamp(0.0, 1.0)
