#!/usr/bin/env python3
"""
TSN desk toolkit
Temporal segment networks for action recognition at desk scale

This is the main entry point. It generates synthetic staged-motion datasets,
trains single-stream segment networks, evaluates and fuses streams, checks
gradients, visualizes classes and runs the ablation studies.
"""

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional

# Add src to path to enable absolute imports
current_dir = Path(__file__).parent
src_dir = current_dir / "src"
sys.path.insert(0, str(src_dir))

# Now use absolute imports
from core import __version__
from core.config import PRESETS, Config
from core.exceptions import TSNError
from core.models import CONSENSUS_NAMES, ConsensusKind, Modality
from utils.logger import setup_logging

logger = logging.getLogger("tsn")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def header_lines(command: str, seed: int, echo: dict) -> List[str]:
    from core.trainer import reproducibility_header
    return reproducibility_header(command, seed, echo)


def cmd_gen_data(args, config: Config) -> int:
    from data.synthetic import SyntheticSpec, generate

    spec = SyntheticSpec.load(args.spec) if args.spec else SyntheticSpec()
    root = generate(spec, args.seed, args.out, args.workers)
    print(root)
    return EXIT_OK


def cmd_train(args, config: Config) -> int:
    from core.trainer import train
    from data.sources import open_dataset

    dataset = open_dataset(config.data, "train")
    result = train(config, dataset, args.out, args.workers, progress=not args.quiet)
    if args.plot:
        from visualization.chart_generator import ChartGenerator
        ChartGenerator(Path(args.out)).training_curves(result.metrics)
    final = result.metrics[-1] if result.metrics else None
    if final is not None:
        print(f"step={final.step}\tloss={final.loss:.6f}\ttrain_acc={final.train_acc:.4f}")
    print(result.checkpoint)
    return EXIT_OK


def cmd_eval(args, config: Config) -> int:
    from core.evaluator import FusionSpec, Stream, evaluate, parse_streams
    from data.sources import open_dataset

    parsed = parse_streams(args.stream, config.eval.fusion_weights, config.eval.three_stream_weights)
    streams = [Stream.from_checkpoint(name, path) for name, path, _ in parsed]
    fusion = FusionSpec({name: weight for name, _, weight in parsed})
    dataset = open_dataset(config.data, args.split)
    result = evaluate(
        streams, dataset, fusion, config.eval.test_snippets, config.eval.ten_crop,
        config.data.homography_source, args.workers, progress=not args.quiet,
    )

    echo = {
        "streams": {name: {"checkpoint": path, "weight": weight} for name, path, weight in parsed},
        "eval": {"test_snippets": config.eval.test_snippets, "ten_crop": config.eval.ten_crop},
        "data": asdict(config.data),
        "split": args.split,
    }
    header = header_lines("eval", config.data.seed, echo) + [f"fusion={fusion.echo()}"]
    out = Path(args.out)
    result.dump().write(out, header)
    if len(streams) > 1:
        for stream in streams:
            result.dump(stream.name).write(out.with_name(f"{out.stem}.{stream.name}{out.suffix}"), header)
    for stream in streams:
        print(f"{stream.name}\taccuracy={result.stream_accuracy(stream.name):.4f}")
    print(f"fused\taccuracy={result.accuracy:.4f}")
    return EXIT_OK


def cmd_fuse(args, config: Config) -> int:
    from core.evaluator import FusionSpec, ScoreDump, fuse

    weights = args.weights
    if weights is None:
        weights = [1.0] * len(args.scores)
    fused = fuse([ScoreDump.read(path) for path in args.scores], weights)
    if args.out:
        spec = FusionSpec({str(path): weight for path, weight in zip(args.scores, weights)})
        header = header_lines("fuse", 0, {"scores": list(args.scores), "weights": list(weights)})
        fused.write(args.out, header + [f"fusion={spec.echo()}"])
    print(f"fused\taccuracy={fused.accuracy:.4f}")
    return EXIT_OK


def cmd_gradcheck(args, config: Config) -> int:
    from core.gradcheck import gradcheck

    names = CONSENSUS_NAMES if args.consensus == "all" else (args.consensus,)
    print(f"# tsn-desk {__version__} gradcheck seed={args.seed} segments={args.segments} trials={args.trials}")
    failed = False
    for name in names:
        if name == "weighted":
            total = args.segments * (args.segments + 1) / 2
            kind = ConsensusKind.weighted([(k + 1) / total for k in range(args.segments)])
        else:
            kind = ConsensusKind(name)
        report = gradcheck(kind, args.segments, args.trials, args.seed)
        for line in report.to_lines():
            print(line)
        failed = failed or report.status == "FAIL"
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_visualize(args, config: Config) -> int:
    from network.checkpoint import load_checkpoint
    from visualization.class_visualizer import visualize_class

    checkpoint = load_checkpoint(args.ckpt)
    vis = config.visualize
    result = visualize_class(
        checkpoint.model, args.class_index,
        iterations=vis.iterations, step_size=vis.step_size, blur_sigma=vis.blur_sigma,
        blur_every=vis.blur_every, noise_std=vis.noise_std, seed=vis.seed,
        metadata={"version": __version__, "checkpoint": str(args.ckpt), "modality": checkpoint.modality},
    )
    out = result.save(args.out)
    if args.png:
        from visualization.chart_generator import ChartGenerator
        modality = Modality.parse(checkpoint.modality)
        ChartGenerator(out.parent).class_visualization(
            result.image, modality.is_flow, f"class {args.class_index}", f"{out.stem}.png",
        )
    print(f"class={args.class_index}\tscore={result.scores[0]:.6f}->{result.scores[-1]:.6f}")
    print(out)
    return EXIT_OK


def cmd_ablate(args, config: Config) -> int:
    from core.ablation import run_ablation

    out = Path(args.out) if args.out else config.get_output_path()
    report = run_ablation(args.study, config, args.seeds, out, args.workers)
    if args.plot:
        from visualization.chart_generator import ChartGenerator
        ChartGenerator(out).ablation_chart(
            report.mean_accuracy(), f"{args.study} ablation", f"ablation_{args.study}.png",
        )
    for line in report.to_lines():
        print(line)
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "fuse": cmd_fuse,
    "gradcheck": cmd_gradcheck,
    "visualize": cmd_visualize,
    "ablate": cmd_ablate,
}


def add_data_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--data", default=None, help="Dataset directory (default: synthetic videos rendered in memory)")
    parser.add_argument("--data-seed", type=int, default=None, help="Seed of the in-memory synthetic dataset")
    parser.add_argument("--synthetic-spec", default=None, help="YAML synthetic dataset spec for in-memory rendering")
    parser.add_argument("--homography-source", choices=["metadata", "estimate"], default=None,
                        help="Camera homographies for warped flow: recorded metadata or RANSAC estimate")


def add_train_arguments(parser: argparse.ArgumentParser, modality_default: Optional[str] = None):
    parser.add_argument("--modality", choices=[m.value for m in Modality], default=modality_default,
                        help="Input modality")
    parser.add_argument("--segments", "-K", type=int, default=None, help="Number of segments K")
    parser.add_argument("--consensus", choices=list(CONSENSUS_NAMES), default=None, help="Segmental consensus")
    parser.add_argument("--consensus-weights", type=float_list, default=None,
                        help="Weights of the weighted consensus, e.g. 0.2,0.3,0.5")
    parser.add_argument("--snippet-length", type=int, default=None, help="Frames (rgb) or frame pairs per snippet")
    parser.add_argument("--preset", choices=list(PRESETS), default=None, help="Named optimizer preset")
    parser.add_argument("--iterations", type=int, default=None, help="Training iterations")
    parser.add_argument("--batch-size", type=int, default=None, help="Videos per mini-batch")
    parser.add_argument("--lr", type=float, default=None, help="Initial learning rate")
    parser.add_argument("--lr-steps", type=int_list, default=None, help="Steps at which lr drops by 10x")
    parser.add_argument("--momentum", type=float, default=None, help="SGD momentum")
    parser.add_argument("--dropout", type=float, default=None, help="Dropout probability before the classifier")
    parser.add_argument("--weight-decay", type=float, default=None, help="L2 weight decay")
    parser.add_argument("--seed", type=int, default=None, help="Training seed")
    parser.add_argument("--log-interval", type=int, default=None, help="Steps per metrics line")
    parser.add_argument("--aspect-jitter", action="store_true", help="Draw crop height and width independently")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsn",
        description="TSN desk toolkit - temporal segment networks at desk scale",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Write a synthetic staged-motion dataset
  python main.py gen-data --out data/synthetic --seed 0

  # Train a flow stream with 3 segments and average consensus
  python main.py train --data data/synthetic --modality flow --segments 3 --consensus avg --out ckpt/flow

  # Cross-modality init from an RGB stream with partial BN
  python main.py train --data data/synthetic --modality flow --init-from ckpt/rgb --partial-bn --out ckpt/flow-pbn

  # Two-stream evaluation with weights 1 and 1.5
  python main.py eval --data data/synthetic --stream spatial=ckpt/rgb:1.0 --stream flow=ckpt/flow:1.5 --out scores.tsv

  # Verify gradients of every consensus function
  python main.py gradcheck --consensus all
        """
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", "-c", default="configuration/default.yaml", help="Configuration file path")
    parser.add_argument("--debug", "-d", action="store_true", help="Enable debug logging")
    parser.add_argument("--log-file", default=None, help="Also write logs to this file")
    parser.add_argument("--output-dir", default=None, help="Directory for ablation reports (default: output_dir setting)")
    parser.add_argument("--workers", type=int, default=None, help="Worker threads (default: $TSN_THREADS or all cores)")
    parser.add_argument("--quiet", "-q", action="store_true", help="Hide progress bars and info logs")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    gen = sub.add_parser("gen-data", help="Generate a synthetic staged-motion dataset")
    gen.add_argument("--spec", default=None, help="YAML synthetic dataset spec (default: built-in 4 classes)")
    gen.add_argument("--out", required=True, help="Output dataset directory")
    gen.add_argument("--seed", type=int, default=0, help="Generation seed")

    train = sub.add_parser("train", help="Train one stream")
    add_data_arguments(train)
    add_train_arguments(train)
    train.add_argument("--out", required=True, help="Checkpoint directory")
    train.add_argument("--init-from", default=None, help="Initialize from a checkpoint (cross-modality when needed)")
    train.add_argument("--partial-bn", action="store_true", help="Freeze BN statistics except the first layer")
    train.add_argument("--snippet-baseline", action="store_true", help="Train on single snippets without consensus")
    train.add_argument("--plot", action="store_true", help="Write training curves PNG next to the checkpoint")

    ev = sub.add_parser("eval", help="Evaluate and fuse streams with the 25x10 test protocol")
    add_data_arguments(ev)
    ev.add_argument("--stream", action="append", required=True, metavar="NAME=CKPT[:WEIGHT]",
                    help="Stream checkpoint and fusion weight; repeat per stream")
    ev.add_argument("--out", required=True, help="Fused score TSV")
    ev.add_argument("--split", default="test", help="Dataset split to evaluate")
    ev.add_argument("--test-snippets", type=int, default=None, help="Test snippets per video")
    ev.add_argument("--no-ten-crop", action="store_true", help="Use the centre crop only")

    fu = sub.add_parser("fuse", help="Fuse score TSV files")
    fu.add_argument("--scores", nargs="+", required=True, help="Score TSV files")
    fu.add_argument("--weights", type=float_list, default=None, help="Comma-separated weights, e.g. 1,1.5")
    fu.add_argument("--out", default=None, help="Fused score TSV")

    gc = sub.add_parser("gradcheck", help="Check TSN gradients against finite differences")
    gc.add_argument("--consensus", choices=list(CONSENSUS_NAMES) + ["all"], default="all")
    gc.add_argument("--segments", "-K", type=int, default=3)
    gc.add_argument("--trials", type=int, default=2)
    gc.add_argument("--seed", type=int, default=0)

    vz = sub.add_parser("visualize", help="Visualize a class by gradient ascent on the input")
    vz.add_argument("--ckpt", required=True, help="Checkpoint directory")
    vz.add_argument("--class", dest="class_index", type=int, required=True, help="Class index")
    vz.add_argument("--out", required=True, help="Output tensor file (.tsnt)")
    vz.add_argument("--iterations", type=int, default=None)
    vz.add_argument("--step-size", type=float, default=None)
    vz.add_argument("--blur-sigma", type=float, default=None)
    vz.add_argument("--blur-every", type=int, default=None)
    vz.add_argument("--seed", type=int, default=None)
    vz.add_argument("--png", action="store_true", help="Also render a PNG")

    ab = sub.add_parser("ablate", help="Run a directional ablation study on synthetic data")
    add_data_arguments(ab)
    add_train_arguments(ab, modality_default="flow")
    ab.add_argument("--study", choices=["consensus", "segments", "practices", "modalities"], required=True)
    ab.add_argument("--seeds", type=int_list, default=[0, 1, 2], help="Replicate seeds, e.g. 0,1,2")
    ab.add_argument("--out", default=None, help="Directory for the ablation TSV (default: output_dir)")
    ab.add_argument("--test-snippets", type=int, default=None, help="Test snippets per video")
    ab.add_argument("--no-ten-crop", action="store_true", help="Use the centre crop only")
    ab.add_argument("--plot", action="store_true", help="Write a bar chart PNG")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    # Setup logging
    setup_logging(debug=args.debug, log_file=args.log_file, quiet=args.quiet)

    try:
        # Load configuration
        config = Config.load(args.config)

        # Update config with command line arguments
        config.update_from_args(args)

        return COMMANDS[args.command](args, config)

    except KeyboardInterrupt:
        logger.info("⏹️ Stopped by user")
        return EXIT_RUNTIME
    except (TSNError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
