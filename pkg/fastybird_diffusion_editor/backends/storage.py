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
FastyBird diffusion editor backends module model directory storage

Model directory contains one sub-folder per backend component. Every sub-folder holds
a key=value manifest and tensors in safetensors files (JSON header + little-endian payload).
"""

# Python base dependencies
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

# Library dependencies
import torch
from fastnumbers import fast_float, fast_int
from safetensors.torch import load_file, save_file
from torch import nn

# Library libs
from fastybird_diffusion_editor.backends.backend import (
    BackendsBundle,
    IAutoencoder,
    IDenoiser,
    IFeatureEncoder,
    ISegmenter,
    ITextEmbedder,
    IVisualEmbedder,
)
from fastybird_diffusion_editor.backends.external import (
    ClipSegSegmenter,
    ClipTextEmbedder,
    ClipVisionEncoder,
    DiffusersUNetDenoiser,
    DiffusersVaeAutoencoder,
)
from fastybird_diffusion_editor.backends.toy import (
    GaussianAnalyticDenoiser,
    PaletteSegmenter,
    ToyAutoencoder,
    ToyTextEmbedder,
    ToyVisualEncoder,
)
from fastybird_diffusion_editor.backends.visual import VisualEmbedder
from fastybird_diffusion_editor.diffusion.schedule import Schedule
from fastybird_diffusion_editor.exceptions import (
    BackendLoadException,
    InvalidConfigurationException,
    ShapeMismatchException,
)
from fastybird_diffusion_editor.logger import Logger
from fastybird_diffusion_editor.types import (
    MANIFEST_FILE,
    BackendComponent,
    BackendKind,
    EncoderRole,
)

SCHEDULE_TABLE_STEPS: int = 1000
TENSOR_KEY: str = "tensor"
PROVENANCE_FILE: str = "provenance.json"

LATENT_COMPONENTS: Dict[EncoderRole, BackendComponent] = {
    EncoderRole.SEMANTIC: BackendComponent.LATENT_SEMANTIC,
    EncoderRole.PERCEPTUAL: BackendComponent.LATENT_PERCEPTUAL,
}


class BackendManifest:
    """
    Key=value description of one model directory component

    @package        FastyBird:DiffusionEditor!
    @module         backends/storage
    """

    __component: BackendComponent
    __directory: Path
    __values: Dict[str, str]

    # -----------------------------------------------------------------------------

    def __init__(self, component: BackendComponent, directory: Path, values: Dict[str, str]) -> None:
        self.__component = component
        self.__directory = directory
        self.__values = values

    # -----------------------------------------------------------------------------

    @staticmethod
    def exists(root: Union[str, Path], component: BackendComponent) -> bool:
        """Check if model directory contains component manifest"""
        return (Path(root) / component.value / MANIFEST_FILE).is_file()

    # -----------------------------------------------------------------------------

    @classmethod
    def read(cls, root: Union[str, Path], component: BackendComponent) -> "BackendManifest":
        """Parse component manifest"""
        directory = Path(root) / component.value
        manifest_path = directory / MANIFEST_FILE

        if not manifest_path.is_file():
            raise InvalidConfigurationException(f"Model directory '{root}' is missing '{component}' manifest")

        values: Dict[str, str] = {}

        for number, line in enumerate(manifest_path.read_text(encoding="utf-8").splitlines(), start=1):
            stripped = line.strip()

            if stripped == "" or stripped.startswith("#"):
                continue

            if "=" not in stripped:
                raise InvalidConfigurationException(
                    f"Manifest '{manifest_path}' line {number} is not a key=value pair"
                )

            key, value = stripped.split("=", 1)
            values[key.strip()] = value.strip()

        return cls(component=component, directory=directory, values=values)

    # -----------------------------------------------------------------------------

    @staticmethod
    def write(root: Union[str, Path], component: BackendComponent, values: Dict[str, str]) -> Path:
        """Create component folder with manifest"""
        directory = Path(root) / component.value
        directory.mkdir(parents=True, exist_ok=True)

        content = [f"# {component} manifest"] + [f"{key}={value}" for key, value in values.items()]

        (directory / MANIFEST_FILE).write_text("\n".join(content) + "\n", encoding="utf-8")

        return directory

    # -----------------------------------------------------------------------------

    @property
    def component(self) -> BackendComponent:
        """Described component"""
        return self.__component

    # -----------------------------------------------------------------------------

    @property
    def directory(self) -> Path:
        """Component folder"""
        return self.__directory

    # -----------------------------------------------------------------------------

    @property
    def kind(self) -> BackendKind:
        """Backend implementation kind"""
        value = self.require("kind")

        if not BackendKind.has_value(value):
            raise InvalidConfigurationException(f"Manifest of '{self.__component}' declares unknown kind '{value}'")

        return BackendKind(value)

    # -----------------------------------------------------------------------------

    def keys(self) -> List[str]:
        """Declared fields"""
        return list(self.__values.keys())

    # -----------------------------------------------------------------------------

    def has(self, field: str) -> bool:
        """Check if field is declared"""
        return field in self.__values

    # -----------------------------------------------------------------------------

    def require(self, field: str) -> str:
        """Value of mandatory field"""
        if field not in self.__values or self.__values[field] == "":
            raise InvalidConfigurationException(
                f"Manifest of '{self.__component}' is missing required field '{field}'"
            )

        return self.__values[field]

    # -----------------------------------------------------------------------------

    def get(self, field: str, default: Optional[str] = None) -> Optional[str]:
        """Value of optional field"""
        return self.__values.get(field, default)

    # -----------------------------------------------------------------------------

    def get_int(self, field: str, default: Optional[int] = None) -> int:
        """Integer value of field"""
        if default is not None and not self.has(field):
            return default

        return self.__parse(field, lambda value: fast_int(value, raise_on_invalid=True))

    # -----------------------------------------------------------------------------

    def get_float(self, field: str, default: Optional[float] = None) -> float:
        """Float value of field"""
        if default is not None and not self.has(field):
            return default

        return self.__parse(field, lambda value: fast_float(value, raise_on_invalid=True))

    # -----------------------------------------------------------------------------

    def get_ints(self, field: str) -> List[int]:
        """Comma separated integers"""
        return self.__parse(
            field,
            lambda value: [fast_int(item.strip(), raise_on_invalid=True) for item in value.split(",")],
        )

    # -----------------------------------------------------------------------------

    def get_dtype(self) -> torch.dtype:
        """Tensors dtype, float32 when not declared"""
        name = self.get("dtype", "float32")
        dtype = getattr(torch, str(name), None)

        if not isinstance(dtype, torch.dtype):
            raise InvalidConfigurationException(f"Manifest of '{self.__component}' declares unknown dtype '{name}'")

        return dtype

    # -----------------------------------------------------------------------------

    def path(self, field: str) -> Path:
        """Existing file referenced by field, relative to component folder"""
        path = self.__directory / self.require(field)

        if not path.exists():
            raise InvalidConfigurationException(
                f"Manifest of '{self.__component}' field '{field}' references missing file '{path.name}'"
            )

        return path

    # -----------------------------------------------------------------------------

    def load_tensor(self, field: str) -> torch.Tensor:
        """Single tensor stored in file referenced by field"""
        tensors = load_file(str(self.path(field)))

        if TENSOR_KEY not in tensors:
            raise InvalidConfigurationException(
                f"Tensor file of '{self.__component}' field '{field}' has no '{TENSOR_KEY}' entry"
            )

        return tensors[TENSOR_KEY]

    # -----------------------------------------------------------------------------

    def load_state(self, field: str) -> Dict[str, torch.Tensor]:
        """Module state stored in file referenced by field"""
        return load_file(str(self.path(field)))

    # -----------------------------------------------------------------------------

    def __parse(self, field, parser):  # type: ignore[no-untyped-def]
        raw = self.require(field)

        try:
            return parser(raw)

        except (ValueError, TypeError) as ex:
            raise InvalidConfigurationException(
                f"Manifest of '{self.__component}' field '{field}' has invalid value '{raw}'"
            ) from ex


class BackendsLoader:
    """
    Model directory loader

    @package        FastyBird:DiffusionEditor!
    @module         backends/storage
    """

    __logger: Union[Logger, logging.Logger]

    # -----------------------------------------------------------------------------

    def __init__(self, logger: Union[Logger, logging.Logger] = logging.getLogger("dummy")) -> None:
        self.__logger = logger

    # -----------------------------------------------------------------------------

    def load(self, root: Union[str, Path]) -> BackendsBundle:
        """Load every component and install distilled latent encoders when present"""
        root = Path(root)

        if not root.is_dir():
            raise InvalidConfigurationException(f"Model directory '{root}' does not exist")

        denoiser = self.load_external_denoiser(root)
        autoencoder = self.load_external_autoencoder(root)

        if denoiser.latent_shape[0] != autoencoder.latent_channels:
            raise ShapeMismatchException(
                f"Denoiser latent_shape {denoiser.latent_shape} does not match autoencoder output "
                f"with {autoencoder.latent_channels} channels"
            )

        text_embedder, visual_embedder = self.load_external_embedders(root, autoencoder)

        for role in EncoderRole:
            loaded = self.load_latent_encoder(root, role)

            if loaded is not None:
                visual_embedder.install_latent_encoder(role, loaded[0])

        bundle = BackendsBundle(
            denoiser=denoiser,
            autoencoder=autoencoder,
            text_embedder=text_embedder,
            visual_embedder=visual_embedder,
            segmenter=self.load_external_segmenter(root),
            dino=self.load_dino(root, autoencoder),
        )

        self.__logger.info(
            "Backends loaded from model directory",
            extra={
                "backends": {
                    "directory": str(root),
                    "description": bundle.to_dict(),
                },
            },
        )

        return bundle

    # -----------------------------------------------------------------------------

    def load_external_denoiser(self, root: Union[str, Path]) -> IDenoiser:
        """Load noise predictor with its trained schedule table"""
        manifest = BackendManifest.read(root, BackendComponent.DENOISER)

        kind = manifest.kind
        latent_shape = manifest.get_ints("latent_shape")
        condition_dim = manifest.get_int("condition_dim")

        if len(latent_shape) != 3 or min(latent_shape) <= 0:
            raise InvalidConfigurationException(
                f"Manifest of 'denoiser' field 'latent_shape' must be three positive integers, got {latent_shape}"
            )

        schedule = Schedule.from_table(manifest.load_tensor("schedule_table"))
        shape = (latent_shape[0], latent_shape[1], latent_shape[2])

        if kind == BackendKind.GAUSSIAN_ANALYTIC:
            mu = manifest.load_tensor("mu").to(manifest.get_dtype())

            if tuple(mu.shape) != shape:
                raise ShapeMismatchException(
                    f"Stored prior mean shape {tuple(mu.shape)} does not match declared latent_shape {shape}"
                )

            return GaussianAnalyticDenoiser(
                mu=mu,
                sigma=manifest.get_float("sigma"),
                schedule=schedule,
                condition_dim=condition_dim,
            )

        if kind == BackendKind.DIFFUSERS_UNET:
            denoiser = DiffusersUNetDenoiser.from_pretrained(
                weights=manifest.directory / manifest.require("weights"),
                schedule=schedule,
                latent_shape=shape,
            )

            if denoiser.condition_dim != condition_dim:
                raise InvalidConfigurationException(
                    f"Declared condition_dim {condition_dim} differs from backbone value {denoiser.condition_dim}"
                )

            return denoiser

        raise InvalidConfigurationException(f"Backend kind '{kind}' can not be used as denoiser")

    # -----------------------------------------------------------------------------

    def load_external_autoencoder(self, root: Union[str, Path]) -> IAutoencoder:
        """Load pixel to latent autoencoder"""
        manifest = BackendManifest.read(root, BackendComponent.AUTOENCODER)

        kind = manifest.kind
        factor = manifest.get_int("spatial_factor")
        latent_channels = manifest.get_int("latent_channels")

        autoencoder: IAutoencoder

        if kind == BackendKind.TOY_POOLING:
            autoencoder = ToyAutoencoder(factor=factor, dtype=manifest.get_dtype())

        elif kind == BackendKind.DIFFUSERS_VAE:
            autoencoder = DiffusersVaeAutoencoder.from_pretrained(
                weights=manifest.directory / manifest.require("weights"),
                tolerance=manifest.get_float("reconstruction_tolerance", 0.1),
            )

        else:
            raise InvalidConfigurationException(f"Backend kind '{kind}' can not be used as autoencoder")

        if autoencoder.spatial_factor != factor or autoencoder.latent_channels != latent_channels:
            raise InvalidConfigurationException(
                f"Declared autoencoder geometry (factor {factor}, channels {latent_channels}) differs from "
                f"loaded geometry (factor {autoencoder.spatial_factor}, channels {autoencoder.latent_channels})"
            )

        return autoencoder

    # -----------------------------------------------------------------------------

    def load_external_embedders(
        self,
        root: Union[str, Path],
        autoencoder: IAutoencoder,
    ) -> Tuple[ITextEmbedder, VisualEmbedder]:
        """Load text and visual embedders sharing one feature space"""
        manifest = BackendManifest.read(root, BackendComponent.EMBEDDERS)

        kind = manifest.kind

        if kind == BackendKind.TOY_PROJECTION:
            dtype = manifest.get_dtype()

            text_embedder = ToyTextEmbedder(
                feature_dim=manifest.get_int("dim"),
                condition_dim=manifest.get_int("condition_dim"),
                seed=manifest.get_int("seed"),
                dtype=dtype,
            )

            if manifest.has("concepts"):
                for token, vector in manifest.load_state("concepts").items():
                    text_embedder.add_concept(token, vector)

            return text_embedder, VisualEmbedder(
                semantic=self.__restore_toy_encoder(manifest, "semantic", in_channels=3),
                perceptual=self.__restore_toy_encoder(manifest, "perceptual", in_channels=3),
                autoencoder=autoencoder,
            )

        if kind == BackendKind.TRANSFORMERS_CLIP:
            weights = manifest.directory / manifest.require("weights")
            vision = ClipVisionEncoder.from_pretrained(weights)

            return ClipTextEmbedder.from_pretrained(weights), VisualEmbedder(
                semantic=vision,
                perceptual=vision,
                autoencoder=autoencoder,
            )

        raise InvalidConfigurationException(f"Backend kind '{kind}' can not be used as embedders")

    # -----------------------------------------------------------------------------

    def load_external_segmenter(self, root: Union[str, Path]) -> Optional[ISegmenter]:
        """Load optional text driven segmenter"""
        if not BackendManifest.exists(root, BackendComponent.SEGMENTER):
            return None

        manifest = BackendManifest.read(root, BackendComponent.SEGMENTER)

        kind = manifest.kind

        if kind == BackendKind.TOY_PALETTE:
            palette: Dict[str, Tuple[float, float, float]] = {}

            for key in manifest.keys():
                if key.startswith("colour."):
                    values = [
                        fast_float(item.strip(), raise_on_invalid=True) for item in manifest.require(key).split(",")
                    ]

                    if len(values) != 3:
                        raise InvalidConfigurationException(f"Manifest of 'segmenter' field '{key}' must be r,g,b")

                    palette[key[len("colour.") :]] = (values[0], values[1], values[2])

            return PaletteSegmenter(palette=palette or None, width=manifest.get_float("width", 0.15))

        if kind == BackendKind.TRANSFORMERS_CLIPSEG:
            return ClipSegSegmenter.from_pretrained(manifest.directory / manifest.require("weights"))

        raise InvalidConfigurationException(f"Backend kind '{kind}' can not be used as segmenter")

    # -----------------------------------------------------------------------------

    def load_dino(self, root: Union[str, Path], autoencoder: IAutoencoder) -> Optional[IVisualEmbedder]:
        """Load optional self-supervised embedder used by metrics"""
        if not BackendManifest.exists(root, BackendComponent.DINO):
            return None

        manifest = BackendManifest.read(root, BackendComponent.DINO)

        if manifest.kind != BackendKind.TOY_PROJECTION:
            raise InvalidConfigurationException(f"Backend kind '{manifest.kind}' can not be used as DINO embedder")

        return VisualEmbedder(
            semantic=self.__restore_toy_encoder(manifest, "semantic", in_channels=3),
            perceptual=self.__restore_toy_encoder(manifest, "perceptual", in_channels=3),
            autoencoder=autoencoder,
        )

    # -----------------------------------------------------------------------------

    def load_latent_encoder(
        self,
        root: Union[str, Path],
        role: EncoderRole,
    ) -> Optional[Tuple[IFeatureEncoder, Dict]]:
        """Load distilled latent encoder and its provenance record"""
        component = LATENT_COMPONENTS[role]

        if not BackendManifest.exists(root, component):
            return None

        manifest = BackendManifest.read(root, component)

        if manifest.kind != BackendKind.DISTILLED:
            raise InvalidConfigurationException(f"Backend kind '{manifest.kind}' can not be used as latent encoder")

        architecture = manifest.require("architecture")
        in_channels = manifest.get_int("in_channels")

        encoder: IFeatureEncoder

        if architecture == BackendKind.TOY_PROJECTION.value:
            encoder = self.__restore_toy_encoder(manifest, "weights", in_channels=in_channels)

        elif architecture == BackendKind.TRANSFORMERS_CLIP.value:
            encoder = ClipVisionEncoder.from_pretrained(manifest.directory / manifest.require("base"))

            kernel = manifest.get_int("patch")

            encoder.replace_stem(nn.Conv2d(in_channels, encoder.stem.out_channels, kernel_size=kernel, stride=kernel))
            encoder.load_state_dict(manifest.load_state("weights"))

        else:
            raise BackendLoadException(f"Latent encoder architecture '{architecture}' is not supported")

        provenance: Dict = {}

        if (manifest.directory / PROVENANCE_FILE).is_file():
            provenance = json.loads((manifest.directory / PROVENANCE_FILE).read_text(encoding="utf-8"))

        self.__logger.debug(
            "Distilled latent encoder loaded",
            extra={
                "encoder": {
                    "role": role.value,
                    "architecture": architecture,
                },
            },
        )

        return encoder, provenance

    # -----------------------------------------------------------------------------

    @staticmethod
    def __restore_toy_encoder(manifest: BackendManifest, field: str, in_channels: int) -> ToyVisualEncoder:
        encoder = ToyVisualEncoder(
            in_channels=in_channels,
            width=manifest.get_int("width"),
            feature_dim=manifest.get_int("dim"),
            patch=manifest.get_int("patch"),
        ).to(manifest.get_dtype())

        encoder.load_state_dict(manifest.load_state(field))
        encoder.requires_grad_(False)

        return encoder


class BackendsWriter:
    """
    Serializer of toy backends and distilled encoders into model directory

    @package        FastyBird:DiffusionEditor!
    @module         backends/storage
    """

    __logger: Union[Logger, logging.Logger]

    # -----------------------------------------------------------------------------

    def __init__(self, logger: Union[Logger, logging.Logger] = logging.getLogger("dummy")) -> None:
        self.__logger = logger

    # -----------------------------------------------------------------------------

    def write(self, bundle: BackendsBundle, root: Union[str, Path]) -> Path:
        """Write whole bundle, only self-contained toy backends are serializable"""
        root = Path(root)

        self.write_denoiser(bundle.denoiser, root)
        self.write_autoencoder(bundle.autoencoder, root)
        self.write_embedders(bundle.text_embedder, bundle.visual_embedder, root)

        if bundle.segmenter is not None:
            self.write_segmenter(bundle.segmenter, root)

        if bundle.dino is not None:
            self.write_dino(bundle.dino, root)

        for role in EncoderRole:
            twin = bundle.visual_embedder.latent_encoder(role)

            if twin is not None:
                self.write_latent_encoder(root, role, twin, {})

        self.__logger.info("Backends written to model directory", extra={"backends": {"directory": str(root)}})

        return root

    # -----------------------------------------------------------------------------

    def write_denoiser(self, denoiser: IDenoiser, root: Path) -> None:
        """Write analytic denoiser with schedule table"""
        if not isinstance(denoiser, GaussianAnalyticDenoiser):
            raise BackendLoadException(f"Denoiser '{type(denoiser).__name__}' can not be serialized")

        directory = BackendManifest.write(
            root,
            BackendComponent.DENOISER,
            {
                "kind": BackendKind.GAUSSIAN_ANALYTIC.value,
                "latent_shape": ",".join(str(size) for size in denoiser.latent_shape),
                "condition_dim": str(denoiser.condition_dim),
                "schedule_table": "schedule.safetensors",
                "sigma": repr(denoiser.sigma),
                "mu": "mu.safetensors",
                "dtype": str(denoiser.mu.dtype).replace("torch.", ""),
            },
        )

        save_file({TENSOR_KEY: self.schedule_table(denoiser.schedule)}, str(directory / "schedule.safetensors"))
        save_file({TENSOR_KEY: denoiser.mu.contiguous()}, str(directory / "mu.safetensors"))

    # -----------------------------------------------------------------------------

    def write_autoencoder(self, autoencoder: IAutoencoder, root: Path) -> None:
        """Write pooling autoencoder description"""
        if not isinstance(autoencoder, ToyAutoencoder):
            raise BackendLoadException(f"Autoencoder '{type(autoencoder).__name__}' can not be serialized")

        BackendManifest.write(
            root,
            BackendComponent.AUTOENCODER,
            {
                "kind": BackendKind.TOY_POOLING.value,
                "spatial_factor": str(autoencoder.spatial_factor),
                "latent_channels": str(autoencoder.latent_channels),
                "dtype": str(autoencoder.decoder_offset.dtype).replace("torch.", ""),
            },
        )

    # -----------------------------------------------------------------------------

    def write_embedders(self, text_embedder: ITextEmbedder, visual_embedder: IVisualEmbedder, root: Path) -> None:
        """Write hashed token text embedder and toy visual encoders"""
        if not isinstance(text_embedder, ToyTextEmbedder):
            raise BackendLoadException(f"Text embedder '{type(text_embedder).__name__}' can not be serialized")

        semantic = visual_embedder.encoder(EncoderRole.SEMANTIC)
        perceptual = visual_embedder.encoder(EncoderRole.PERCEPTUAL)

        values = self.__toy_encoder_values(semantic, perceptual)
        values.update(
            {
                "kind": BackendKind.TOY_PROJECTION.value,
                "condition_dim": str(text_embedder.condition_dim),
                "seed": str(text_embedder.seed),
            }
        )

        if len(text_embedder.concepts) > 0:
            values["concepts"] = "concepts.safetensors"

        directory = BackendManifest.write(root, BackendComponent.EMBEDDERS, values)

        self.__save_module(semantic, directory / "semantic.safetensors")
        self.__save_module(perceptual, directory / "perceptual.safetensors")

        if len(text_embedder.concepts) > 0:
            save_file(
                {token: text_embedder.token_vector(token).contiguous() for token in text_embedder.concepts},
                str(directory / "concepts.safetensors"),
            )

    # -----------------------------------------------------------------------------

    def write_segmenter(self, segmenter: ISegmenter, root: Path) -> None:
        """Write palette segmenter"""
        if not isinstance(segmenter, PaletteSegmenter):
            raise BackendLoadException(f"Segmenter '{type(segmenter).__name__}' can not be serialized")

        values = {"kind": BackendKind.TOY_PALETTE.value, "width": repr(segmenter.width)}

        for word, colour in segmenter.palette.items():
            values[f"colour.{word}"] = ",".join(repr(channel) for channel in colour)

        BackendManifest.write(root, BackendComponent.SEGMENTER, values)

    # -----------------------------------------------------------------------------

    def write_dino(self, dino: IVisualEmbedder, root: Path) -> None:
        """Write toy self-supervised embedder"""
        semantic = dino.encoder(EncoderRole.SEMANTIC)
        perceptual = dino.encoder(EncoderRole.PERCEPTUAL)

        values = self.__toy_encoder_values(semantic, perceptual)
        values["kind"] = BackendKind.TOY_PROJECTION.value

        directory = BackendManifest.write(root, BackendComponent.DINO, values)

        self.__save_module(semantic, directory / "semantic.safetensors")
        self.__save_module(perceptual, directory / "perceptual.safetensors")

    # -----------------------------------------------------------------------------

    def write_latent_encoder(
        self,
        root: Union[str, Path],
        role: EncoderRole,
        encoder: IFeatureEncoder,
        provenance: Dict,
    ) -> Path:
        """Write distilled latent encoder with provenance record"""
        values = {
            "kind": BackendKind.DISTILLED.value,
            "in_channels": str(encoder.in_channels),
            "patch": str(encoder.stem.kernel_size[0]),
            "weights": "encoder.safetensors",
            "dtype": str(encoder.stem.weight.dtype).replace("torch.", ""),
        }

        if isinstance(encoder, ToyVisualEncoder):
            values.update(
                {
                    "architecture": BackendKind.TOY_PROJECTION.value,
                    "width": str(encoder.stem.out_channels),
                    "dim": str(encoder.feature_dim),
                }
            )

        elif isinstance(encoder, ClipVisionEncoder):
            if "base" not in provenance:
                raise BackendLoadException("CLIP latent encoder provenance must name 'base' weights directory")

            values.update({"architecture": BackendKind.TRANSFORMERS_CLIP.value, "base": str(provenance["base"])})

        else:
            raise BackendLoadException(f"Latent encoder '{type(encoder).__name__}' can not be serialized")

        directory = BackendManifest.write(Path(root), LATENT_COMPONENTS[role], values)

        self.__save_module(encoder, directory / "encoder.safetensors")

        (directory / PROVENANCE_FILE).write_text(json.dumps(provenance, indent=2, default=str), encoding="utf-8")

        return directory

    # -----------------------------------------------------------------------------

    @staticmethod
    def schedule_table(schedule: Schedule, steps_count: int = SCHEDULE_TABLE_STEPS) -> torch.Tensor:
        """Discrete alpha table of schedule, cosine kind is sampled unclamped at k / S"""
        table = schedule.table

        if table is not None:
            return table.contiguous()

        return torch.cos(torch.arange(steps_count + 1, dtype=torch.float64) / steps_count * (math.pi / 2)) ** 2

    # -----------------------------------------------------------------------------

    @staticmethod
    def __toy_encoder_values(semantic: IFeatureEncoder, perceptual: IFeatureEncoder) -> Dict[str, str]:
        for encoder in (semantic, perceptual):
            if not isinstance(encoder, ToyVisualEncoder):
                raise BackendLoadException(f"Visual encoder '{type(encoder).__name__}' can not be serialized")

        return {
            "dim": str(semantic.feature_dim),
            "width": str(semantic.stem.out_channels),
            "patch": str(semantic.stem.kernel_size[0]),
            "semantic": "semantic.safetensors",
            "perceptual": "perceptual.safetensors",
            "dtype": str(semantic.stem.weight.dtype).replace("torch.", ""),
        }

    # -----------------------------------------------------------------------------

    @staticmethod
    def __save_module(module: nn.Module, path: Path) -> None:
        save_file({key: value.detach().contiguous() for key, value in module.state_dict().items()}, str(path))
