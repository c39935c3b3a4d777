"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 data or format
error, 4 numeric failure (divergence or gradient mismatch).
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import torch
from pydantic import ValidationError

from src.config import configure_logging, get_settings, resolve_run_config
from src.dataset import SkeletonSequence, read_sbu_file, train_test_split
from src.exceptions import AseaError, ConfigError, DataError
from src.gradcheck import DEFAULT_STEP, DEFAULT_TOLERANCE, run_model_gradcheck
from src.models import (
    AblationStrategy,
    FoldProtocol,
    InteractionClass,
    RunReport,
    SynthSpec,
)
from src.network import AseaNetwork
from src.repository import CheckpointRepository, CorpusRepository, ReportRepository
from src.service import (
    AblationService,
    CrossValidationService,
    EvaluationService,
    InspectionService,
    TrainingService,
)
from src.synthetic import synthesize

logger = logging.getLogger(__name__)


def _split_list(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _load_corpus(path: Optional[str]) -> List[SkeletonSequence]:
    if not path:
        raise ConfigError("--data is required")
    if not Path(path).is_dir():
        raise ConfigError(f"data directory not found: {path}")
    sequences = CorpusRepository(path).load()
    if not sequences:
        raise DataError(f"no usable clips below {path}")
    return sequences


def _load_checkpoint(path: str) -> AseaNetwork:
    manifest = Path(path)
    if manifest.is_dir():
        manifest = manifest / "model.json"
    return CheckpointRepository(manifest.parent).load(manifest.stem)


def _load_sample(path: str, joints: int) -> SkeletonSequence:
    sequence = read_sbu_file(Path(path), label=0, subject_id="sample", source="sample", joints=joints)
    if sequence is None:
        raise DataError(f"{path} holds fewer than two frames")
    return sequence


def cmd_synth(args: argparse.Namespace) -> int:
    """Write a seeded synthetic corpus with its manifest."""
    try:
        spec = SynthSpec(
            classes=[InteractionClass(c) for c in _split_list(args.classes)] if args.classes else list(InteractionClass),
            samples_per_class=args.samples,
            frames=args.frames,
            noise=args.noise,
            n_pairs=args.pairs,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e
    sequences = synthesize(spec, args.seed)
    metadata = {"seed": args.seed, "spec": spec.model_dump(mode="json")}
    path = CorpusRepository(args.out).save(sequences, name="synthetic", metadata=metadata)
    print(f"wrote {len(sequences)} clips, manifest {path}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    """Train on a stratified split and save checkpoint plus report."""
    config, spec = resolve_run_config(args.config, args.set)
    sequences = _load_corpus(args.data)
    train, test = train_test_split(sequences, spec.test_fraction, spec.seed)
    model, report = TrainingService(config, spec).train(train, test or None)
    CheckpointRepository(args.out).save(model, "model")
    ReportRepository(args.out).save(report, "report")
    if report.evaluation is not None:
        print(f"test accuracy {report.evaluation.accuracy:.4f} on {report.evaluation.num_samples} clips")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate a checkpoint on every clip of a corpus."""
    model = _load_checkpoint(args.model)
    sequences = _load_corpus(args.data)
    evaluation = EvaluationService().evaluate(model, sequences)
    report = RunReport(config=model.config.model_dump(mode="json"), train_spec={}, evaluation=evaluation)
    out = Path(args.out)
    ReportRepository(out.parent).save(report, out.stem)
    print(f"accuracy {evaluation.accuracy:.4f} on {evaluation.num_samples} clips")
    return 0


def cmd_cv(args: argparse.Namespace) -> int:
    """Cross-validate by participant pair."""
    config, spec = resolve_run_config(args.config, args.set)
    sequences = _load_corpus(args.data)
    report = CrossValidationService(config, spec).run(sequences, args.k, FoldProtocol(args.protocol))
    ReportRepository(args.out).save(report, "cv_report")
    for fold in report.folds:
        accuracy = fold.report.evaluation.accuracy if fold.report.evaluation else float("nan")
        print(f"fold {fold.fold}: {accuracy:.4f}")
    print(f"mean accuracy {report.mean_accuracy:.4f}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    """Compare module variants on one split."""
    config, spec = resolve_run_config(args.config, args.set)
    try:
        strategies = [AblationStrategy(s) for s in _split_list(args.strategies)]
    except ValueError as e:
        raise ConfigError(str(e)) from e
    sequences = _load_corpus(args.data)
    train, test = train_test_split(sequences, spec.test_fraction, spec.seed)
    table = AblationService(config, spec).ablate(train, test, strategies)
    reports = ReportRepository(args.out)
    reports.save(table, "ablation")
    reports.save_text(table.to_csv(), "ablation", ".csv")
    sys.stdout.write(table.to_csv())
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    """Finite-difference check of every parameter of the tiny network."""
    summary = run_model_gradcheck(
        seed=args.seed,
        corrupt=args.corrupt,
        step=args.step,
        tol=args.tol,
        max_elements=args.max_elements,
    )
    for group, error in summary.groups.items():
        print(f"{group:24s} {error:.3e}")
    print(f"{'kinks accepted':24s} {summary.kinks}")
    if args.out:
        out = Path(args.out)
        ReportRepository(out.parent).save(summary, out.stem)
    if not summary.passed:
        print(f"FAILED: {', '.join(summary.failures)}", file=sys.stderr)
        return 4
    print("all gradients within tolerance")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    """Export the joint selection and attention record of one clip."""
    model = _load_checkpoint(args.model)
    response = InspectionService(model).inspect(_load_sample(args.sample, model.graph.n_joints))
    masks_path, attention_path = (Path(p) for p in args.emit)
    config = model.config.model_dump(mode="json")
    masks = {
        "config": config,
        "predicted_class": response.predicted_class,
        "selections": [s.model_dump() for s in response.selections],
    }
    ReportRepository(masks_path.parent).save_document(masks, masks_path.stem)
    ReportRepository(attention_path.parent).save_document(
        {"config": config, "attention": [a.model_dump() for a in response.attention]},
        attention_path.stem,
    )
    print(f"predicted class {response.predicted_class}")
    return 0


def cmd_curves(args: argparse.Namespace) -> int:
    """Export per-joint velocity and weighted-energy curves of one clip."""
    model = _load_checkpoint(args.model)
    csv = InspectionService(model).curves_csv(_load_sample(args.sample, model.graph.n_joints))
    out = Path(args.out)
    ReportRepository(out.parent).save_text(csv, out.stem, out.suffix or ".csv")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    """Serve the inspection API for a checkpoint."""
    import uvicorn

    settings = get_settings()
    if args.model:
        os.environ["ASEA_MODEL_PATH"] = str(Path(args.model).resolve())
    uvicorn.run(
        "src.main:app",
        host=args.host or settings.server_host,
        port=args.port or settings.server_port,
        log_level=args.log_level.lower(),
    )
    return 0


def _add_run_config(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key=value run configuration file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key; may be repeated",
    )
    parser.add_argument("--data", required=True, help="corpus directory (manifest or SBU layout)")
    parser.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    parser = argparse.ArgumentParser(prog="asea", description="Two-person skeleton interaction recognition.")
    parser.add_argument("--log-level", default=None, help="logging level (default from ASEA_LOG_LEVEL)")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="write a synthetic corpus")
    synth.add_argument("--out", required=True, help="corpus directory to create")
    synth.add_argument("--classes", default="", help="comma-separated classes (default: all four)")
    synth.add_argument("--samples", type=int, default=50, help="clips per class")
    synth.add_argument("--frames", type=int, default=32, help="frames per clip")
    synth.add_argument("--noise", type=float, default=0.01, help="Gaussian coordinate noise (meters)")
    synth.add_argument("--pairs", type=int, default=10, help="number of synthetic participant pairs")
    synth.add_argument("--seed", type=int, default=0, help="generator seed")
    synth.set_defaults(handler=cmd_synth)

    train = commands.add_parser("train", help="train one model")
    _add_run_config(train)
    train.set_defaults(handler=cmd_train)

    evaluate = commands.add_parser("eval", help="evaluate a checkpoint")
    evaluate.add_argument("--model", required=True, help="checkpoint manifest or directory")
    evaluate.add_argument("--data", required=True, help="corpus directory")
    evaluate.add_argument("--out", required=True, help="report JSON path")
    evaluate.set_defaults(handler=cmd_eval)

    cv = commands.add_parser("cv", help="k-fold cross-validation by participant pair")
    _add_run_config(cv)
    cv.add_argument("--k", type=int, default=5, help="number of folds")
    cv.add_argument(
        "--protocol",
        choices=[p.value for p in FoldProtocol],
        default=FoldProtocol.SEEDED.value,
        help="seeded shuffle of pairs or the standard SBU split",
    )
    cv.set_defaults(handler=cmd_cv)

    ablate = commands.add_parser("ablate", help="compare module variants")
    _add_run_config(ablate)
    ablate.add_argument(
        "--strategies",
        default=",".join(s.value for s in AblationStrategy),
        help="comma-separated subset of " + ", ".join(s.value for s in AblationStrategy),
    )
    ablate.set_defaults(handler=cmd_ablate)

    gradcheck = commands.add_parser("gradcheck", help="finite-difference gradient check")
    gradcheck.add_argument("--seed", type=int, default=0, help="initialization and data seed")
    gradcheck.add_argument("--step", type=float, default=DEFAULT_STEP, help="finite-difference step")
    gradcheck.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE, help="relative error tolerance")
    gradcheck.add_argument("--max-elements", type=int, default=None, help="sample at most this many elements per parameter")
    gradcheck.add_argument(
        "--corrupt",
        default=None,
        metavar="PARAM",
        help="test hook: distort the analytic gradient of PARAM (e.g. classifier.weight)",
    )
    gradcheck.add_argument("--out", default=None, help="optional JSON summary path")
    gradcheck.set_defaults(handler=cmd_gradcheck)

    inspect = commands.add_parser("inspect", help="export selection and attention for one clip")
    inspect.add_argument("--model", required=True, help="checkpoint manifest or directory")
    inspect.add_argument("--sample", required=True, help="clip in SBU text format")
    inspect.add_argument("--emit", nargs=2, required=True, metavar=("MASKS", "ATTENTION"), help="output JSON paths")
    inspect.set_defaults(handler=cmd_inspect)

    curves = commands.add_parser("curves", help="export joint velocity and energy curves")
    curves.add_argument("--model", required=True, help="checkpoint manifest or directory")
    curves.add_argument("--sample", required=True, help="clip in SBU text format")
    curves.add_argument("--out", required=True, help="CSV path")
    curves.set_defaults(handler=cmd_curves)

    serve = commands.add_parser("serve", help="run the inspection API")
    serve.add_argument("--model", default=None, help="checkpoint manifest (default ASEA_MODEL_PATH)")
    serve.add_argument("--host", default=None, help="bind address")
    serve.add_argument("--port", type=int, default=None, help="bind port")
    serve.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    args.log_level = args.log_level or settings.log_level
    configure_logging(args.log_level)
    torch.set_num_threads(settings.num_threads)

    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except AseaError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return ConfigError.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
