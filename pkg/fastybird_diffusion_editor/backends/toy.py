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
FastyBird diffusion editor backends module self-contained toy backends
"""

# Python base dependencies
import hashlib
from typing import Dict, List, Optional, Tuple, Union

# Library dependencies
import torch
import torch.nn.functional as F
from torch import nn

# Library libs
from fastybird_diffusion_editor.backends.backend import (
    BackendsBundle,
    IAutoencoder,
    IDenoiser,
    IFeatureEncoder,
    ISegmenter,
    ITextEmbedder,
)
from fastybird_diffusion_editor.backends.visual import VisualEmbedder
from fastybird_diffusion_editor.diffusion.schedule import Schedule
from fastybird_diffusion_editor.exceptions import (
    DomainException,
    InvalidConfigurationException,
    ShapeMismatchException,
)
from fastybird_diffusion_editor.helpers import TextHelpers

ALLOWED_FACTORS: Tuple[int, ...] = (1, 2, 4, 8)

DEFAULT_CONDITION_DIM: int = 8
DEFAULT_ENCODER_WIDTH: int = 16
DEFAULT_ENCODER_PATCH: int = 8
DEFAULT_FEATURE_DIM: int = 32

EMPTY_PROMPT_TOKEN: str = "<empty>"

LIFT_MATRIX: Tuple[Tuple[float, ...], ...] = (
    (1.0, 0.0, 0.0),
    (0.5, 1.0, 0.0),
    (0.25, 0.5, 1.0),
)
PROJECTION_MATRIX: Tuple[Tuple[float, ...], ...] = (
    (1.0, 0.0, 0.0),
    (-0.5, 1.0, 0.0),
    (0.0, -0.5, 1.0),
)

DEFAULT_PALETTE: Dict[str, Tuple[float, float, float]] = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
    "cyan": (0.0, 1.0, 1.0),
    "magenta": (1.0, 0.0, 1.0),
    "white": (1.0, 1.0, 1.0),
    "black": (0.0, 0.0, 0.0),
    "gray": (0.5, 0.5, 0.5),
    "orange": (1.0, 0.5, 0.0),
    "purple": (0.5, 0.0, 0.5),
}


class GaussianAnalyticDenoiser(IDenoiser):
    """
    Closed-form posterior-mean noise predictor for Gaussian data prior

    For x_0 ~ Normal(mu, sigma^2 I) corrupted as x_t = sqrt(a) x_0 + sqrt(1 - a) eps the predictor
    returns E[eps | x_t]. Condition embedding is accepted and ignored.

    @package        FastyBird:DiffusionEditor!
    @module         backends/toy
    """

    __mu: torch.Tensor
    __sigma: float

    __schedule: Schedule

    __condition_dim: int

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        mu: torch.Tensor,
        sigma: float,
        schedule: Schedule,
        condition_dim: int = DEFAULT_CONDITION_DIM,
    ) -> None:
        if sigma <= 0:
            raise DomainException(f"Prior standard deviation must be positive, got {sigma}")

        if mu.dim() != 3:
            raise ShapeMismatchException(f"Prior mean must be (C, H, W) latent, got {tuple(mu.shape)}")

        self.__mu = mu.detach().clone()
        self.__sigma = float(sigma)

        self.__schedule = schedule

        self.__condition_dim = condition_dim

    # -----------------------------------------------------------------------------

    @property
    def schedule(self) -> Schedule:
        """Noise schedule of the corruption model"""
        return self.__schedule

    # -----------------------------------------------------------------------------

    @property
    def latent_shape(self) -> Tuple[int, int, int]:
        """Latent geometry (channels, height, width)"""
        return int(self.__mu.shape[0]), int(self.__mu.shape[1]), int(self.__mu.shape[2])

    # -----------------------------------------------------------------------------

    @property
    def condition_dim(self) -> int:
        """Length of condition embedding vector"""
        return self.__condition_dim

    # -----------------------------------------------------------------------------

    @property
    def mu(self) -> torch.Tensor:
        """Prior mean"""
        return self.__mu.clone()

    # -----------------------------------------------------------------------------

    @property
    def sigma(self) -> float:
        """Prior standard deviation"""
        return self.__sigma

    # -----------------------------------------------------------------------------

    def predict(self, latent: torch.Tensor, t: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        """Posterior mean of the noise contained in latent"""
        if tuple(latent.shape[-3:]) != self.latent_shape:
            raise ShapeMismatchException(
                f"Latent shape {tuple(latent.shape)} does not match prior shape {self.latent_shape}"
            )

        mu = self.__mu.to(dtype=latent.dtype, device=latent.device)
        variance = self.__sigma**2

        alpha = self.__schedule.alpha(t if isinstance(t, torch.Tensor) else torch.tensor(t, dtype=latent.dtype))
        alpha = alpha.to(dtype=latent.dtype, device=latent.device)
        alpha_sqrt = torch.sqrt(alpha)

        gain = alpha_sqrt * variance / (alpha * variance + 1 - alpha)
        expected_clean = mu + gain * (latent - alpha_sqrt * mu)

        return (latent - alpha_sqrt * expected_clean) / torch.sqrt(1 - alpha)


class ToyAutoencoder(IAutoencoder):
    """
    Average-pooling autoencoder with fixed channel lift

    Encoding maps pixels to [-1, 1], average pools factor x factor blocks and mixes RGB with a unit
    lower triangular lift. Decoding applies the exact inverse of the lift and upsamples with nearest
    neighbour, so decode(encode(I)) is exact on block constant images and encode(decode(z)) = z for
    every latent.

    @package        FastyBird:DiffusionEditor!
    @module         backends/toy
    """

    LATENT_CHANNELS: int = 3

    __factor: int
    __dtype: torch.dtype

    __lift: torch.Tensor
    __projection: torch.Tensor

    # -----------------------------------------------------------------------------

    def __init__(self, factor: int, dtype: torch.dtype = torch.float32) -> None:
        if factor not in ALLOWED_FACTORS:
            raise InvalidConfigurationException(f"Toy autoencoder factor must be one of {ALLOWED_FACTORS}, got {factor}")

        self.__factor = factor
        self.__dtype = dtype

        # Dyadic entries, inverse is exact in floating point
        self.__lift = torch.tensor(LIFT_MATRIX, dtype=dtype)
        self.__projection = torch.tensor(PROJECTION_MATRIX, dtype=dtype)

    # -----------------------------------------------------------------------------

    @property
    def spatial_factor(self) -> int:
        """Integer downsampling ratio between pixel and latent grid"""
        return self.__factor

    # -----------------------------------------------------------------------------

    @property
    def latent_channels(self) -> int:
        """Number of latent channels"""
        return self.LATENT_CHANNELS

    # -----------------------------------------------------------------------------

    @property
    def reconstruction_tolerance(self) -> float:
        """Round trip error bound for images constant over factor x factor blocks"""
        return 1e-5

    # -----------------------------------------------------------------------------

    @property
    def decoder_matrix(self) -> torch.Tensor:
        """Linear part A of decoder pixel = A @ latent + b applied before upsampling"""
        return self.__projection * 0.5

    # -----------------------------------------------------------------------------

    @property
    def decoder_offset(self) -> torch.Tensor:
        """Offset b of decoder pixel = A @ latent + b applied before upsampling"""
        return torch.full((3,), 0.5, dtype=self.__dtype)

    # -----------------------------------------------------------------------------

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        """Transform pixel image into latent"""
        if image.shape[-3] != 3:
            raise ShapeMismatchException(f"Image must have 3 channels, got {tuple(image.shape)}")

        height, width = int(image.shape[-2]), int(image.shape[-1])

        if height % self.__factor != 0 or width % self.__factor != 0:
            raise ShapeMismatchException(
                f"Image size ({height}, {width}) is not divisible by autoencoder factor {self.__factor}"
            )

        centered = image * 2 - 1

        if self.__factor > 1:
            centered = F.avg_pool2d(centered, kernel_size=self.__factor)

        return torch.einsum("oc,...chw->...ohw", self.__lift.to(dtype=image.dtype, device=image.device), centered)

    # -----------------------------------------------------------------------------

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        """Transform latent into pixel image"""
        if latent.shape[-3] != self.LATENT_CHANNELS:
            raise ShapeMismatchException(
                f"Latent must have {self.LATENT_CHANNELS} channels, got {tuple(latent.shape)}"
            )

        projection = self.__projection.to(dtype=latent.dtype, device=latent.device)

        pixels = torch.einsum("oc,...chw->...ohw", projection, latent) * 0.5 + 0.5

        if self.__factor == 1:
            return pixels

        batched = pixels if pixels.dim() == 4 else pixels.unsqueeze(0)
        upsampled = F.interpolate(batched, scale_factor=self.__factor, mode="nearest")

        return upsampled if pixels.dim() == 4 else upsampled[0]


class ToyVisualEncoder(IFeatureEncoder):
    """
    Small frozen convolutional encoder

    Patchify convolution stem, two 3x3 residual-free blocks with tanh activations and a linear head
    on spatially pooled features.

    @package        FastyBird:DiffusionEditor!
    @module         backends/toy
    """

    def __init__(  # pylint: disable=too-many-arguments
        self,
        in_channels: int = 3,
        width: int = DEFAULT_ENCODER_WIDTH,
        feature_dim: int = DEFAULT_FEATURE_DIM,
        patch: int = DEFAULT_ENCODER_PATCH,
        seed: int = 0,
    ) -> None:
        super().__init__()

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)

            self.embedding = nn.Conv2d(in_channels, width, kernel_size=patch, stride=patch)
            self.blocks = nn.ModuleList([nn.Conv2d(width, width, kernel_size=3, padding=1) for _ in range(2)])
            self.head = nn.Linear(width, feature_dim)

        self.requires_grad_(False)

    # -----------------------------------------------------------------------------

    @property
    def stem(self) -> nn.Conv2d:
        """First convolution layer"""
        return self.embedding

    # -----------------------------------------------------------------------------

    def replace_stem(self, stem: nn.Conv2d) -> None:
        """Swap first convolution layer"""
        if stem.out_channels != self.embedding.out_channels:
            raise ShapeMismatchException(
                f"Stem must produce {self.embedding.out_channels} channels, got {stem.out_channels}"
            )

        self.embedding = stem

    # -----------------------------------------------------------------------------

    @property
    def feature_dim(self) -> int:
        """Length of pooled feature vector"""
        return int(self.head.out_features)

    # -----------------------------------------------------------------------------

    def forward_features(self, inputs: torch.Tensor) -> List[torch.Tensor]:
        """Stack of feature maps after stem and every block"""
        hidden = torch.tanh(self.embedding(inputs))

        features = [hidden]

        for block in self.blocks:
            hidden = torch.tanh(block(hidden))
            features.append(hidden)

        return features

    # -----------------------------------------------------------------------------

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:  # pylint: disable=arguments-differ
        """Unit norm pooled feature vector"""
        pooled = self.forward_features(inputs)[-1].mean(dim=(-2, -1))

        return F.normalize(self.head(pooled), dim=-1)


class ToyTextEmbedder(ITextEmbedder):
    """
    Bag of hashed tokens text embedder

    Every token maps to a seeded Gaussian vector derived from the token hash, prompt feature is the
    normalized sum of its token vectors. Concept tokens added through the vocabulary hook take
    precedence over hashed vectors.

    @package        FastyBird:DiffusionEditor!
    @module         backends/toy
    """

    __feature_dim: int
    __condition_dim: int
    __seed: int
    __dtype: torch.dtype

    __projection: torch.Tensor

    __concepts: Dict[str, torch.Tensor]

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        feature_dim: int = DEFAULT_FEATURE_DIM,
        condition_dim: int = DEFAULT_CONDITION_DIM,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ) -> None:
        self.__feature_dim = feature_dim
        self.__condition_dim = condition_dim
        self.__seed = seed
        self.__dtype = dtype

        generator = torch.Generator().manual_seed(seed)

        self.__projection = (
            torch.randn((condition_dim, feature_dim), generator=generator, dtype=torch.float64) / feature_dim**0.5
        ).to(dtype)

        self.__concepts = {}

    # -----------------------------------------------------------------------------

    @property
    def condition_dim(self) -> int:
        """Length of condition embedding consumed by denoiser"""
        return self.__condition_dim

    # -----------------------------------------------------------------------------

    @property
    def feature_dim(self) -> int:
        """Length of pooled feature vector"""
        return self.__feature_dim

    # -----------------------------------------------------------------------------

    @property
    def seed(self) -> int:
        """Vocabulary hashing seed"""
        return self.__seed

    # -----------------------------------------------------------------------------

    @property
    def concepts(self) -> List[str]:
        """Learned concept tokens"""
        return list(self.__concepts.keys())

    # -----------------------------------------------------------------------------

    def embed(self, prompt: str) -> torch.Tensor:
        """Condition embedding for denoiser"""
        return self.__projection @ self.pooled_embed(prompt)

    # -----------------------------------------------------------------------------

    def pooled_embed(self, prompt: str) -> torch.Tensor:
        """Unit norm prompt feature vector"""
        tokens = TextHelpers.tokenize(prompt)

        if len(tokens) == 0:
            tokens = [EMPTY_PROMPT_TOKEN]

        summed = torch.stack([self.token_vector(token) for token in tokens]).sum(dim=0)

        return F.normalize(summed, dim=-1)

    # -----------------------------------------------------------------------------

    def add_concept(self, token: str, vector: torch.Tensor) -> None:
        """Extend vocabulary with learned concept token"""
        if vector.dim() != 1 or vector.shape[0] != self.__feature_dim:
            raise ShapeMismatchException(
                f"Concept vector must have shape ({self.__feature_dim},), got {tuple(vector.shape)}"
            )

        if not bool(torch.isfinite(vector).all()) or float(vector.norm()) == 0.0:
            raise DomainException("Concept vector must be finite and non-zero")

        self.__concepts[token.casefold()] = vector.detach().to(self.__dtype).clone()

    # -----------------------------------------------------------------------------

    def token_vector(self, token: str) -> torch.Tensor:
        """Vocabulary vector of single token"""
        if token in self.__concepts:
            return self.__concepts[token]

        digest = hashlib.sha256(f"{self.__seed}:{token}".encode("utf-8")).digest()

        generator = torch.Generator().manual_seed(int.from_bytes(digest[:7], "little"))

        return torch.randn(self.__feature_dim, generator=generator, dtype=torch.float64).to(self.__dtype)


class PaletteSegmenter(ISegmenter):
    """
    Colour keyed segmenter

    Text tokens naming a palette colour select pixels close to that colour with a Gaussian falloff.
    Text without known colour yields an empty mask.

    @package        FastyBird:DiffusionEditor!
    @module         backends/toy
    """

    __palette: Dict[str, Tuple[float, float, float]]
    __width: float

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        palette: Optional[Dict[str, Tuple[float, float, float]]] = None,
        width: float = 0.15,
    ) -> None:
        self.__palette = dict(DEFAULT_PALETTE if palette is None else palette)
        self.__width = width

    # -----------------------------------------------------------------------------

    @property
    def palette(self) -> Dict[str, Tuple[float, float, float]]:
        """Known words and their colours"""
        return dict(self.__palette)

    # -----------------------------------------------------------------------------

    @property
    def width(self) -> float:
        """Colour distance falloff"""
        return self.__width

    # -----------------------------------------------------------------------------

    def assign(self, word: str, colour: Tuple[float, float, float]) -> None:
        """Teach segmenter colour of a word"""
        self.__palette[word.casefold()] = colour

    # -----------------------------------------------------------------------------

    def segment(self, image: torch.Tensor, text: str) -> torch.Tensor:
        """Soft (H, W) mask in [0, 1] of pixels matching colours named by text"""
        if image.dim() != 3 or image.shape[0] != 3:
            raise ShapeMismatchException(f"Image must be (3, H, W) tensor, got {tuple(image.shape)}")

        mask = torch.zeros(image.shape[1:], dtype=image.dtype, device=image.device)

        for token in TextHelpers.tokenize(text):
            if token not in self.__palette:
                continue

            colour = torch.tensor(self.__palette[token], dtype=image.dtype, device=image.device).view(3, 1, 1)
            distance = ((image - colour) ** 2).sum(dim=0)

            mask = torch.maximum(mask, torch.exp(-distance / (2 * self.__width**2)))

        return mask.clamp(0.0, 1.0)


def make_gaussian_analytic_denoiser(
    mu: torch.Tensor,
    sigma: float,
    schedule: Optional[Schedule] = None,
    condition_dim: int = DEFAULT_CONDITION_DIM,
) -> GaussianAnalyticDenoiser:
    """Create closed-form posterior-mean denoiser"""
    return GaussianAnalyticDenoiser(
        mu=mu,
        sigma=sigma,
        schedule=schedule if schedule is not None else Schedule.cosine(),
        condition_dim=condition_dim,
    )


def make_toy_autoencoder(factor: int, dtype: torch.dtype = torch.float32) -> ToyAutoencoder:
    """Create pooling autoencoder"""
    return ToyAutoencoder(factor=factor, dtype=dtype)


def make_toy_embedders(  # pylint: disable=too-many-arguments
    dim: int,
    seed: int,
    autoencoder: Optional[IAutoencoder] = None,
    condition_dim: int = DEFAULT_CONDITION_DIM,
    patch: int = DEFAULT_ENCODER_PATCH,
    dtype: torch.dtype = torch.float32,
) -> Tuple[ToyTextEmbedder, VisualEmbedder]:
    """Create seeded text and visual embedders sharing one feature space dimension"""
    if dim < 8:
        raise InvalidConfigurationException(f"Toy embedders dimension must be at least 8, got {dim}")

    autoencoder = autoencoder if autoencoder is not None else make_toy_autoencoder(factor=1, dtype=dtype)

    text_embedder = ToyTextEmbedder(feature_dim=dim, condition_dim=condition_dim, seed=seed, dtype=dtype)

    visual_embedder = VisualEmbedder(
        semantic=ToyVisualEncoder(feature_dim=dim, patch=patch, seed=seed).to(dtype),
        perceptual=ToyVisualEncoder(feature_dim=dim, patch=patch, seed=seed + 1).to(dtype),
        autoencoder=autoencoder,
    )

    return text_embedder, visual_embedder


def make_toy_backends(  # pylint: disable=too-many-arguments
    image_size: Union[int, Tuple[int, int]],
    factor: int = 2,
    dim: int = DEFAULT_FEATURE_DIM,
    seed: int = 0,
    sigma: float = 1.0,
    schedule: Optional[Schedule] = None,
    dtype: torch.dtype = torch.float32,
) -> BackendsBundle:
    """Create complete consistent toy bundle for images of given size"""
    height, width = (image_size, image_size) if isinstance(image_size, int) else image_size

    if height % DEFAULT_ENCODER_PATCH != 0 or width % DEFAULT_ENCODER_PATCH != 0:
        raise InvalidConfigurationException(
            f"Toy backends image size must be divisible by {DEFAULT_ENCODER_PATCH}, got ({height}, {width})"
        )

    autoencoder = make_toy_autoencoder(factor=factor, dtype=dtype)

    denoiser = make_gaussian_analytic_denoiser(
        mu=torch.zeros((autoencoder.latent_channels, height // factor, width // factor), dtype=dtype),
        sigma=sigma,
        schedule=schedule,
    )

    text_embedder, visual_embedder = make_toy_embedders(dim=dim, seed=seed, autoencoder=autoencoder, dtype=dtype)

    dino = VisualEmbedder(
        semantic=ToyVisualEncoder(feature_dim=dim, seed=seed + 2).to(dtype),
        perceptual=ToyVisualEncoder(feature_dim=dim, seed=seed + 3).to(dtype),
        autoencoder=autoencoder,
    )

    return BackendsBundle(
        denoiser=denoiser,
        autoencoder=autoencoder,
        text_embedder=text_embedder,
        visual_embedder=visual_embedder,
        segmenter=PaletteSegmenter(),
        dino=dino,
    )
