import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from core.config import LOG_LEVEL
from core.constants import Stage
from encoder import AttentionPattern, ConformerConfig, format_report, receptive_field
from longform import LongFormArm, LongFormExperimentSpec, run_longform
from pipeline import (
    MetricsWriter,
    SynthSpec,
    build_config,
    evaluate_checkpoint,
    featurize_all,
    load_checkpoint,
    load_config_file,
    model_from_checkpoint,
    parse_overrides,
    read_manifest,
    rtf_bench,
    run_stage,
    synth_corpus,
)

pd.set_option("future.no_silent_downcasting", True)

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format="%(asctime)s - %(levelname)s - %(message)s",
    force=True,
)
log = logging.getLogger(__name__)


def _stage_config(stage: Stage, config: Optional[str], overrides: List[str]):
    values = load_config_file(config) if config else {}
    declared = values.get("stage")
    if declared and declared != stage.value:
        raise ValueError(f"{config} is a {declared!r} config, not {stage.value!r}")
    values["stage"] = stage.value
    values.update(parse_overrides(overrides))
    return build_config(values)


def cmd_stage(args) -> int:
    stage = Stage(args.command)
    cfg = _stage_config(stage, args.config, args.set)
    final = run_stage(cfg, stage)
    print(final)
    return 0


def cmd_eval(args) -> int:
    metrics = MetricsWriter(args.out) if args.out else None
    report = evaluate_checkpoint(
        args.checkpoint, args.manifest, pattern=args.pattern, adapters_dir=args.adapters, metrics=metrics, label="cli"
    )
    if args.out:
        out = Path(args.out)
        report.utterances.to_csv(out / "utterances.tsv", sep="\t", index=False, lineterminator="\n")
        report.summary.to_csv(out / "summary.tsv", sep="\t", index=False, float_format="%.6f", lineterminator="\n")
    print(report.summary.to_string(index=False))
    return 0


def cmd_rf_report(args) -> int:
    cfg = ConformerConfig(
        num_layers=args.layers,
        conv_kernel_size=args.kernel,
        use_conv=not args.no_conv,
    )
    report = receptive_field(cfg, AttentionPattern.parse(args.pattern), args.frame_ms / 1000.0, args.frames)
    print(format_report(report))
    return 0


def cmd_rtf(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    paths = read_manifest(args.manifest)["path"].tolist()
    features = [f for f in featurize_all(paths) if f is not None]
    if not features:
        raise ValueError(f"no readable audio in {args.manifest}")
    pattern = AttentionPattern.parse(args.pattern)
    report = rtf_bench(model, features, pattern, args.batch_size, repeats=args.repeats, dtype=args.precision)
    if args.out:
        MetricsWriter(args.out).write("rtf", checkpoint=str(ckpt.path), step=ckpt.step, **report.as_dict())
    print(json.dumps(report.as_dict(), indent=2))
    return 0


def cmd_synth(args) -> int:
    values = parse_overrides(args.set)
    if "languages" in values:
        values["languages"] = tuple(v.strip() for v in values["languages"].split(",") if v.strip())
    spec = SynthSpec(**values)
    written = synth_corpus(spec, args.out, args.seed)
    for name, path in written.items():
        print(f"{name}\t{path}")
    return 0


def _parse_arm(text: str) -> LongFormArm:
    # label=pattern@layers
    label, sep, rest = text.partition("=")
    pattern, at, layers = rest.rpartition("@")
    if not sep or not at:
        raise ValueError(f"arm must look like label=pattern@layers, got {text!r}")
    return LongFormArm(label.strip(), pattern.strip(), int(layers))


def cmd_longform(args) -> int:
    kwargs = {}
    if args.arm:
        kwargs["arms"] = tuple(_parse_arm(a) for a in args.arm)
    if args.seeds:
        kwargs["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    for key in ("train_segment_seconds", "concat_factor", "steps", "eval_every", "tolerance"):
        value = getattr(args, key)
        if value is not None:
            kwargs[key] = value
    spec = LongFormExperimentSpec(overrides=tuple(args.set), **kwargs)
    report = run_longform(spec, args.corpus, args.out, workers=args.workers)
    print(report.summary.to_string(index=False))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deskusm", description="Desk-scale multilingual speech recognition training")
    sub = parser.add_subparsers(dest="command", required=True)

    for stage in Stage:
        p = sub.add_parser(stage.value, help=f"run the {stage.value} stage")
        p.add_argument("config", nargs="?", help="key = value run configuration")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        p.set_defaults(func=cmd_stage)

    p = sub.add_parser("eval", help="WER/CER of a checkpoint on a manifest")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--pattern", help="attention pattern; defaults to the checkpoint's")
    p.add_argument("--adapters", help="directory of saved adapter sets")
    p.add_argument("--out", help="directory for metrics.jsonl and result tables")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rf-report", help="receptive field of an encoder geometry")
    p.add_argument("--pattern", required=True)
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--frame-ms", type=float, default=40.0, help="encoder frame duration")
    p.add_argument("--kernel", type=int, default=5, help="convolution kernel size")
    p.add_argument("--no-conv", action="store_true")
    p.add_argument("--frames", type=int, help="sequence length, bounds global attention")
    p.set_defaults(func=cmd_rf_report)

    p = sub.add_parser("rtf", help="inverse real-time factor of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--pattern", default="global")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--precision", choices=["float32", "float64"], default="float64")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rtf)

    p = sub.add_parser("synth", help="write a synthetic tone corpus")
    p.add_argument("out")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("longform", help="short-train / long-eval attention experiment")
    p.add_argument("corpus", help="directory written by the synth subcommand")
    p.add_argument("out")
    p.add_argument("--arm", action="append", default=[], metavar="LABEL=PATTERN@LAYERS")
    p.add_argument("--seeds", help="comma-separated, at least three")
    p.add_argument("--train-segment-seconds", dest="train_segment_seconds", type=float)
    p.add_argument("--concat-factor", dest="concat_factor", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--eval-every", dest="eval_every", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="fine-tune config overrides")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_longform)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception:
        log.error("deskusm %s failed", args.command, exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
