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
FastyBird diffusion editor command line interface
"""

# Python base dependencies
import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

# Library dependencies
import torch
from fastnumbers import fast_float, fast_int

# Library libs
from fastybird_diffusion_editor.backends.backend import BackendsBundle
from fastybird_diffusion_editor.backends.storage import BackendsLoader, BackendsWriter
from fastybird_diffusion_editor.backends.toy import make_toy_backends
from fastybird_diffusion_editor.bootstrap import create_editor
from fastybird_diffusion_editor.entities import (
    AblationFlags,
    AuxiliaryInputs,
    DistillConfig,
    EditRequest,
    LossWeights,
    RunConfig,
)
from fastybird_diffusion_editor.evaluation.testset import (
    TestSample,
    synthesize_testset,
)
from fastybird_diffusion_editor.exceptions import (
    DomainException,
    InvalidConfigurationException,
)
from fastybird_diffusion_editor.helpers import ImageHelpers
from fastybird_diffusion_editor.perception.datasets import (
    ImageFolderDataset,
    SyntheticImageDataset,
)
from fastybird_diffusion_editor.perception.distiller import LatentDistiller
from fastybird_diffusion_editor.types import (
    BACKEND_DIR_ENV,
    DEFAULT_DISTILL_BATCH_SIZE,
    DEFAULT_DISTILL_CHECKPOINTS,
    DEFAULT_DISTILL_ITERATIONS,
    DEFAULT_DISTILL_LEARNING_RATE,
    DEFAULT_LAMBDA_PERC,
    DEFAULT_LAMBDA_REF,
    DEFAULT_LAMBDA_SEM,
    DEFAULT_NOISE_LEARNING_RATE,
    DEFAULT_OPTIMIZATION_STEPS,
    DEFAULT_START_TIMESTEP,
    DEFAULT_STEPS_COUNT,
    DEFAULT_TIMESTEPS_LEARNING_RATE,
    EDITOR_NAME,
    AblationMode,
    EditTaskKind,
    EncoderRole,
    LossDomain,
    SemLossMode,
    StemInitialization,
)

EXIT_SUCCESS: int = 0
EXIT_USAGE: int = 1
EXIT_FAILURE: int = 2

DEFAULT_TOY_FACTOR: int = 2
DEFAULT_TOY_SIZE: int = 32


class UsageException(Exception):
    """
    Command line arguments are not valid

    @package        FastyBird:DiffusionEditor!
    @module         cli
    """


class EditorArgumentParser(argparse.ArgumentParser):
    """
    Argument parser raising instead of exiting on invalid arguments

    @package        FastyBird:DiffusionEditor!
    @module         cli
    """

    def error(self, message: str) -> None:  # type: ignore[override]
        """Report usage error"""
        self.print_usage(sys.stderr)

        raise UsageException(message)


def integer(value: str) -> int:
    """Parse integer argument"""
    return int(fast_int(value, raise_on_invalid=True))


def number(value: str) -> float:
    """Parse float argument"""
    return float(fast_float(value, raise_on_invalid=True))


def build_parser() -> EditorArgumentParser:  # pylint: disable=too-many-statements
    """Create command line arguments parser"""
    common = EditorArgumentParser(add_help=False)
    common.add_argument("--backend-dir", type=Path, default=None, help=f"model directory, defaults to ${BACKEND_DIR_ENV}")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=integer, default=0, help="random seed")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    run = EditorArgumentParser(add_help=False)
    run.add_argument("--K", dest="steps_count", type=integer, default=DEFAULT_STEPS_COUNT, help="denoising steps")
    run.add_argument("--T", dest="start_timestep", type=number, default=DEFAULT_START_TIMESTEP, help="start timestep")
    run.add_argument(
        "--W", dest="optimization_steps", type=integer, default=DEFAULT_OPTIMIZATION_STEPS, help="optimization steps"
    )
    run.add_argument("--lr-t", type=number, default=DEFAULT_TIMESTEPS_LEARNING_RATE, help="timesteps learning rate")
    run.add_argument("--lr-noise", type=number, default=DEFAULT_NOISE_LEARNING_RATE, help="noise learning rate")
    run.add_argument("--lambda-sem", type=number, default=DEFAULT_LAMBDA_SEM)
    run.add_argument("--lambda-perc", type=number, default=DEFAULT_LAMBDA_PERC)
    run.add_argument("--lambda-ref", type=number, default=DEFAULT_LAMBDA_REF)
    run.add_argument(
        "--sem-mode",
        choices=[mode.value for mode in SemLossMode],
        default=SemLossMode.ABSOLUTE_DIFFERENCE.value,
    )
    run.add_argument("--loss-domain", choices=[domain.value for domain in LossDomain], default=LossDomain.LATENT.value)
    run.add_argument("--monotonic", action="store_true", help="keep timesteps sorted after every update")
    run.add_argument("--snapshot-every", type=integer, default=None, help="write decoded output every n steps")

    request = EditorArgumentParser(add_help=False)
    request.add_argument("--image", type=Path, required=True, help="original image")
    request.add_argument("--source-prompt", default="", help="description of original image")
    request.add_argument("--prompt", required=True, help="description of desired output")
    request.add_argument("--mask", type=Path, default=None, help="region mask for object addition")
    request.add_argument("--reference", type=Path, default=None, help="style reference image")
    request.add_argument("--stroke-image", type=Path, default=None, help="user stroked image")
    request.add_argument("--composed-image", type=Path, default=None, help="composed image")
    request.add_argument("--edit-object", action="append", default=None, help="explicit replace target")

    task = EditorArgumentParser(add_help=False)
    task.add_argument(
        "--task",
        choices=[kind.value for kind in EditTaskKind],
        default=None,
        help="editing task, inferred from auxiliary inputs when omitted",
    )

    parser = EditorArgumentParser(prog=EDITOR_NAME, description="Diffusion editing by noise and timesteps optimization")
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    commands.add_parser("edit-text", parents=[common, run, request, task], help="text guided editing")
    commands.add_parser("edit-ref", parents=[common, run, request], help="reference image guided style transfer")
    commands.add_parser("edit-stroke", parents=[common, run, request], help="stroke guided editing")
    commands.add_parser("edit-compose", parents=[common, run, request], help="image composition")

    sweep = commands.add_parser("sweep", parents=[common, run, request, task], help="starting timestep and seed grid")
    sweep.add_argument("--T-values", dest="start_timesteps", type=number, nargs="+", default=[0.25, 0.5, 0.75])
    sweep.add_argument("--seeds", type=integer, nargs="+", default=[0, 1])

    ablate = commands.add_parser("ablate", parents=[common, run, request, task], help="ablation runner")
    ablate.add_argument("--mode", choices=[mode.value for mode in AblationMode], required=True)

    chain = commands.add_parser("chain", parents=[common, run], help="compounded editing from JSONL plan")
    chain.add_argument("--image", type=Path, required=True, help="original image")
    chain.add_argument("--plan", type=Path, required=True, help="JSONL plan, one editing step per line")

    distill = commands.add_parser("distill", parents=[common], help="train latent twin of pixel encoder")
    distill.add_argument("--role", choices=[role.value for role in EncoderRole], default=EncoderRole.SEMANTIC.value)
    distill.add_argument("--iterations", type=integer, default=DEFAULT_DISTILL_ITERATIONS)
    distill.add_argument("--batch-size", type=integer, default=DEFAULT_DISTILL_BATCH_SIZE)
    distill.add_argument("--lr", type=number, default=DEFAULT_DISTILL_LEARNING_RATE)
    distill.add_argument("--dataset", type=Path, default=None, help="images directory, synthetic images when omitted")
    distill.add_argument("--synthetic", type=integer, default=500, help="synthetic dataset size")
    distill.add_argument("--held-out", type=integer, default=0, help="held-out images count")
    distill.add_argument("--checkpoints", type=integer, default=DEFAULT_DISTILL_CHECKPOINTS)
    distill.add_argument(
        "--init",
        choices=[initialization.value for initialization in StemInitialization],
        default=StemInitialization.RANDOM.value,
    )
    distill.add_argument("--size", type=integer, default=DEFAULT_TOY_SIZE, help="training image size")
    distill.add_argument("--factor", type=integer, default=DEFAULT_TOY_FACTOR, help="toy autoencoder factor")

    evaluate = commands.add_parser("eval", parents=[common, run], help="test set evaluation")
    evaluate.add_argument("--manifest", type=Path, default=None, help="JSONL test set manifest")
    evaluate.add_argument("--synthesize", type=integer, default=None, help="generate synthetic test set of n samples")
    evaluate.add_argument("--size", type=integer, default=DEFAULT_TOY_SIZE, help="synthetic images size")
    evaluate.add_argument("--factor", type=integer, default=DEFAULT_TOY_FACTOR, help="toy autoencoder factor")
    evaluate.add_argument("--workers", type=integer, default=1)

    bench = commands.add_parser("bench", parents=[common], help="latent versus pixel losses benchmark")
    bench.add_argument("--sizes", type=integer, nargs="+", default=[256])
    bench.add_argument("--repetitions", type=integer, default=5)
    bench.add_argument("--factor", type=integer, default=8)

    init_backend = commands.add_parser("init-backend", parents=[common], help="write toy model directory")
    init_backend.add_argument("--size", type=integer, default=DEFAULT_TOY_SIZE)
    init_backend.add_argument("--factor", type=integer, default=DEFAULT_TOY_FACTOR)
    init_backend.add_argument("--dim", type=integer, default=32)

    return parser


def run_config(args: argparse.Namespace, ablation: Optional[AblationFlags] = None) -> RunConfig:
    """Map optimization flags to run configuration"""
    try:
        return RunConfig(
            steps_count=args.steps_count,
            start_timestep=args.start_timestep,
            optimization_steps=args.optimization_steps,
            lr_timesteps=args.lr_t,
            lr_noise=args.lr_noise,
            weights=LossWeights(
                lambda_sem=args.lambda_sem,
                lambda_perc=args.lambda_perc,
                lambda_ref=args.lambda_ref,
            ),
            sem_mode=SemLossMode(args.sem_mode),
            seed=args.seed,
            ablation=ablation,
            enforce_monotonic_t=args.monotonic,
            loss_domain=LossDomain(args.loss_domain),
            snapshot_every=args.snapshot_every,
        )

    except (InvalidConfigurationException, DomainException) as ex:
        raise UsageException(str(ex)) from ex


def resolve_task(args: argparse.Namespace) -> EditTaskKind:
    """Task declared by subcommand or flags"""
    fixed = {
        "edit-ref": EditTaskKind.STYLE_TRANSFER,
        "edit-stroke": EditTaskKind.STROKE,
        "edit-compose": EditTaskKind.COMPOSE,
    }

    if args.command in fixed:
        return fixed[args.command]

    if getattr(args, "task", None) is not None:
        return EditTaskKind(args.task)

    if args.mask is not None:
        return EditTaskKind.ADD_OBJECT

    if args.stroke_image is not None:
        return EditTaskKind.STROKE

    if args.composed_image is not None:
        return EditTaskKind.COMPOSE

    return EditTaskKind.REPLACE_OBJECT


def edit_request(args: argparse.Namespace) -> EditRequest:
    """Map request flags to editing request"""
    task = resolve_task(args)

    required = {
        EditTaskKind.STYLE_TRANSFER: ("--reference", args.reference) if args.command == "edit-ref" else None,
        EditTaskKind.ADD_OBJECT: ("--mask", args.mask),
        EditTaskKind.STROKE: ("--stroke-image", args.stroke_image),
        EditTaskKind.COMPOSE: ("--composed-image", args.composed_image),
    }.get(task)

    if required is not None and required[1] is None:
        raise UsageException(f"Task {task} requires {required[0]}")

    image = ImageHelpers.load_image(args.image)
    size = ImageHelpers.image_size(image)

    def load(path: Optional[Path]) -> Optional[torch.Tensor]:
        return None if path is None else ImageHelpers.load_image(path, size=size)

    try:
        return EditRequest(
            image=image,
            source_prompt=args.source_prompt,
            target_prompt=args.prompt,
            task=task,
            aux=AuxiliaryInputs(
                reference=load(args.reference),
                stroke_image=load(args.stroke_image),
                composed_image=load(args.composed_image),
                region_mask=None if args.mask is None else ImageHelpers.load_mask(args.mask),
            ),
            edit_objects=args.edit_object,
            sample_id=args.image.stem,
        )

    except InvalidConfigurationException as ex:
        raise UsageException(str(ex)) from ex


def resolve_backends(
    args: argparse.Namespace,
    image_size: Union[int, Tuple[int, int]],
    factor: int = DEFAULT_TOY_FACTOR,
    logger: logging.Logger = logging.getLogger("dummy"),
) -> BackendsBundle:
    """Load backends from model directory or build toy backends"""
    backend_dir = args.backend_dir

    if backend_dir is None and os.environ.get(BACKEND_DIR_ENV):
        backend_dir = Path(os.environ[BACKEND_DIR_ENV])

    if backend_dir is not None:
        return BackendsLoader(logger=logger).load(backend_dir)

    logger.warning(
        "No model directory given, using toy backends",
        extra={
            "backends": {
                "image_size": image_size,
                "factor": factor,
            },
        },
    )

    return make_toy_backends(image_size=image_size, factor=factor, seed=args.seed)


def command_edit(args: argparse.Namespace, logger: logging.Logger) -> int:
    """Single edit, ablation run or sweep"""
    ablation = AblationFlags.from_mode(AblationMode(args.mode)) if args.command == "ablate" else None

    config = run_config(args, ablation)
    request = edit_request(args)

    editor = create_editor(resolve_backends(args, ImageHelpers.image_size(request.image), logger=logger), logger)
    editor.start(snapshots_directory=args.out / "snapshots" if config.snapshot_every is not None else None)

    try:
        if args.command == "sweep":
            grid = editor.sweep(request, args.start_timesteps, args.seeds, config)
            index = grid.write(args.out)

            logger.info("Sweep written", extra={"output": {"index": str(index)}})

        else:
            result = editor.edit(request, config)
            directory = result.save(args.out)

            logger.info("Edit written", extra={"output": {"directory": str(directory), **result.to_dict()}})

    finally:
        editor.stop()

    return EXIT_SUCCESS


def command_chain(args: argparse.Namespace, logger: logging.Logger) -> int:
    """Compounded editing"""
    config = run_config(args)

    if not args.plan.is_file():
        raise UsageException(f"Plan file '{args.plan}' does not exist")

    requests: List[EditRequest] = []

    for index, line in enumerate(args.plan.read_text(encoding="utf-8").splitlines()):
        if line.strip() == "":
            continue

        data = json.loads(line)
        data.setdefault("id", f"step_{index:02d}")
        data["image"] = str(args.image.resolve())

        requests.append(TestSample.from_dict(data, args.plan.parent).to_request())

    if len(requests) == 0:
        raise UsageException("Plan contains no steps")

    editor = create_editor(resolve_backends(args, ImageHelpers.image_size(requests[0].image), logger=logger), logger)
    editor.start()

    try:
        results = editor.chain(requests, config)

        for index, result in enumerate(results):
            result.save(args.out / f"step_{index:02d}")

    finally:
        editor.stop()

    logger.info("Chain written", extra={"output": {"directory": str(args.out), "steps": len(results)}})

    return EXIT_SUCCESS


def command_distill(args: argparse.Namespace, logger: logging.Logger) -> int:
    """Train latent twin of pixel encoder"""
    try:
        config = DistillConfig(
            role=EncoderRole(args.role),
            iterations=args.iterations,
            batch_size=args.batch_size,
            learning_rate=args.lr,
            dataset_path=args.dataset,
            held_out_size=args.held_out,
            checkpoints=args.checkpoints,
            stem_initialization=StemInitialization(args.init),
            seed=args.seed,
        )

    except InvalidConfigurationException as ex:
        raise UsageException(str(ex)) from ex

    dataset = (
        ImageFolderDataset(args.dataset, size=args.size)
        if args.dataset is not None
        else SyntheticImageDataset(count=args.synthetic, size=args.size, seed=args.seed)
    )

    backends = resolve_backends(args, args.size, factor=args.factor, logger=logger)

    editor = create_editor(backends, logger)
    editor.start()

    backend_dir = args.backend_dir if args.backend_dir is not None else os.environ.get(BACKEND_DIR_ENV)

    try:
        distilled = editor.distill(
            config,
            dataset,
            backend_dir=Path(backend_dir) if backend_dir else None,
            progress=True,
        )

    finally:
        editor.stop()

    distilled.write_curve(args.out / "curve.csv")

    summary: Dict = {"provenance": distilled.provenance}

    if args.held_out > 0:
        held_out = SyntheticImageDataset(count=args.held_out, size=args.size, seed=args.seed + 1)

        summary["held_out"] = LatentDistiller.evaluate_distillation(
            distilled,
            backends.visual_embedder,
            backends.autoencoder,
            held_out,
            config.objective,
        ).to_dict()

    (args.out / "distillation.json").write_text(json.dumps(summary, indent=2, default=str), encoding="utf-8")

    return EXIT_SUCCESS


def command_eval(args: argparse.Namespace, logger: logging.Logger) -> int:
    """Test set evaluation"""
    config = run_config(args)

    if args.manifest is None and args.synthesize is None:
        raise UsageException("Either --manifest or --synthesize is required")

    manifest = args.manifest

    if args.synthesize is not None:
        manifest = synthesize_testset(args.out / "testset", args.synthesize, size=args.size, seed=args.seed)

    editor = create_editor(resolve_backends(args, args.size, factor=args.factor, logger=logger), logger)
    editor.start()

    try:
        report = editor.evaluate(manifest, config, args.out / "results", workers=args.workers)

    finally:
        editor.stop()

    logger.info("Test set report written", extra={"output": {"count": report.count, "failed": len(report.failures)}})

    return EXIT_SUCCESS


def command_bench(args: argparse.Namespace, logger: logging.Logger) -> int:
    """Latent versus pixel losses benchmark"""
    editor = create_editor(make_toy_backends(image_size=DEFAULT_TOY_SIZE, seed=args.seed), logger)

    report = editor.benchmark(args.sizes, args.repetitions, factor=args.factor, seed=args.seed)
    report.write_json(args.out / "benchmark.json")

    for row in report.to_dict()["sizes"]:
        logger.info(
            "Benchmark row",
            extra={
                "benchmark": {
                    "size": row["size"],
                    "time_ratio": row["time_ratio"],
                    "memory_ratio": row["memory_ratio"],
                },
            },
        )

    return EXIT_SUCCESS


def command_init_backend(args: argparse.Namespace, logger: logging.Logger) -> int:
    """Write toy backends into model directory"""
    bundle = make_toy_backends(image_size=args.size, factor=args.factor, dim=args.dim, seed=args.seed)

    BackendsWriter(logger=logger).write(bundle, args.out)

    return EXIT_SUCCESS


COMMANDS: Dict[str, Callable[[argparse.Namespace, logging.Logger], int]] = {
    "edit-text": command_edit,
    "edit-ref": command_edit,
    "edit-stroke": command_edit,
    "edit-compose": command_edit,
    "sweep": command_edit,
    "ablate": command_edit,
    "chain": command_chain,
    "distill": command_distill,
    "eval": command_eval,
    "bench": command_bench,
    "init-backend": command_init_backend,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Command line entry point"""
    parser = build_parser()

    try:
        args = parser.parse_args(argv)

    except UsageException as ex:
        print(f"{parser.prog}: error: {ex}", file=sys.stderr)

        return EXIT_USAGE

    except SystemExit as ex:
        return int(ex.code) if isinstance(ex.code, int) else EXIT_SUCCESS

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    logger = logging.getLogger(EDITOR_NAME)

    try:
        return COMMANDS[args.command](args, logger)

    except UsageException as ex:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {ex}", file=sys.stderr)

        return EXIT_USAGE

    except Exception as ex:  # pylint: disable=broad-except
        logger.error(
            "Command failed",
            extra={
                "command": args.command,
                "exception": {
                    "message": str(ex),
                    "code": type(ex).__name__,
                },
            },
        )
        logger.exception(ex)

        return EXIT_FAILURE
