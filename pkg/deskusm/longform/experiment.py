from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from core.constants import Stage
from encoder import receptive_field
from pipeline import (
    MetricsWriter,
    TrainConfig,
    build_config,
    evaluate_checkpoint,
    finetune,
    list_checkpoints,
    load_checkpoint,
    load_config_file,
    load_synth_spec,
    parse_overrides,
    read_manifest,
    write_longform,
)
from pipeline.synth import CORPUS_CONFIG

from .models import MIN_SURVIVING_SEEDS, LongFormArm, LongFormExperimentSpec, LongFormReport, RunOutcome
from .reporter import RUNS_FILE, write_plot_data, write_report

log = logging.getLogger(__name__)

PLOT_COLUMNS = ["step", "pattern", "seed", "longform_wer"]


def _arm_config(
    spec: LongFormExperimentSpec, arm: LongFormArm, seed: int, corpus: Dict[str, str], out_dir: Path
) -> TrainConfig:
    values = dict(corpus)
    values.update(
        {
            "stage": Stage.FINETUNE.value,
            "seed": str(seed),
            "pattern": arm.pattern,
            "num_layers": str(arm.num_layers),
            "steps": str(spec.steps),
            "checkpoint_every": str(spec.eval_every),
            "output_dir": str(out_dir / "runs" / arm.label / f"seed{seed}"),
        }
    )
    values.update(parse_overrides(spec.overrides))
    return build_config(values)


def check_geometry(spec: LongFormExperimentSpec, template: TrainConfig, longform_seconds: Optional[float] = None) -> None:
    """Long-form eval must outlast the local arms' receptive field, or no mismatch can show."""
    for arm in spec.local_arms():
        cfg = replace(template.conformer(), num_layers=arm.num_layers)
        rf = receptive_field(cfg, arm.attention).total_rf_seconds
        if spec.eval_seconds <= rf:
            raise ValueError(
                f"arm {arm.label!r}: eval length {spec.eval_seconds:.2f}s does not exceed its receptive field {rf:.2f}s"
            )
        if rf <= spec.train_segment_seconds:
            log.warning(
                "arm %r: receptive field %.2fs fits inside %.2fs training segments; expect no long-form mismatch",
                arm.label, rf, spec.train_segment_seconds,
            )
        if longform_seconds is not None and longform_seconds <= rf:
            log.warning("arm %r: shortest long-form clip (%.2fs) is within the receptive field %.2fs",
                        arm.label, longform_seconds, rf)


def _run_one(
    spec: LongFormExperimentSpec,
    arm: LongFormArm,
    seed: int,
    corpus: Dict[str, str],
    out_dir: Path,
    longform_manifest: Path,
) -> Tuple[RunOutcome, List[dict]]:
    cfg = _arm_config(spec, arm, seed, corpus, out_dir)
    try:
        final = finetune(cfg)
    except RuntimeError as e:
        log.error("Long-form run %s seed %d excluded: %s", arm.label, seed, e, exc_info=True)
        return RunOutcome(arm.label, seed, arm.pattern, arm.num_layers, excluded=True, reason=str(e)), []

    metrics = MetricsWriter(cfg.output_dir)
    plot, long_final = [], {}
    final_step = load_checkpoint(final).step
    for ck in list_checkpoints(cfg.output_dir):
        rep = evaluate_checkpoint(ck, longform_manifest, pattern=arm.pattern, metrics=metrics, label="longform")
        step = int(ck.name.split("-")[1])
        plot.append({"step": step, "pattern": arm.label, "seed": seed, "longform_wer": rep.wer})
        if step == final_step:
            long_final = rep.row()
    short = evaluate_checkpoint(final, cfg.eval_manifest, pattern=arm.pattern, metrics=metrics, label="short").row()
    outcome = RunOutcome(
        arm.label, seed, arm.pattern, arm.num_layers, excluded=False,
        checkpoint=str(final), short=short, long=long_final,
    )
    log.info(
        "Long-form %s seed %d: short WER %.4f long WER %.4f (deletions %.4f -> %.4f)",
        arm.label, seed, short["wer"], long_final.get("wer", float("nan")),
        short["deletion_share"], long_final.get("deletion_share", float("nan")),
    )
    return outcome, plot


def summarize(spec: LongFormExperimentSpec, runs: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for arm in spec.arms:
        sub = runs[runs["arm"] == arm.label]
        ok = sub[sub["status"] == "ok"]
        if len(ok) < MIN_SURVIVING_SEEDS:
            raise RuntimeError(
                f"arm {arm.label!r}: only {len(ok)} of {len(sub)} seeds survived; need {MIN_SURVIVING_SEEDS}. "
                f"Excluded: {sub[sub['status'] != 'ok']['seed'].tolist()}"
            )
        rows.append(
            {
                "arm": arm.label,
                "pattern": arm.pattern,
                "num_layers": arm.num_layers,
                "seeds_ok": len(ok),
                "seeds_excluded": len(sub) - len(ok),
                "median_short_wer": float(np.median(ok["short_wer"])),
                "median_long_wer": float(np.median(ok["long_wer"])),
                "median_short_deletion_share": float(np.median(ok["short_deletion_share"])),
                "median_long_deletion_share": float(np.median(ok["long_deletion_share"])),
                "long_minus_short_wer": float(np.median(ok["long_wer"] - ok["short_wer"])),
                "within_tolerance": bool(abs(np.median(ok["long_wer"] - ok["short_wer"])) <= spec.tolerance),
            }
        )
    return pd.DataFrame(rows)


def run_longform(
    spec: LongFormExperimentSpec,
    corpus_dir: Union[str, Path],
    out_dir: Union[str, Path],
    workers: int = 1,
) -> LongFormReport:
    corpus_dir, out_dir = Path(corpus_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    synth_spec, synth_seed = load_synth_spec(corpus_dir)
    corpus = load_config_file(corpus_dir / CORPUS_CONFIG)
    template = _arm_config(spec, spec.arms[0], spec.seeds[0], corpus, out_dir)

    longform_manifest = write_longform(
        synth_spec, out_dir, template.eval_manifest, spec.concat_factor, synth_seed, name=f"longform_k{spec.concat_factor}"
    )
    lf = read_manifest(longform_manifest)
    if lf.empty:
        raise ValueError(f"no long-form clips could be built with k={spec.concat_factor} from {template.eval_manifest}")
    check_geometry(spec, template, float(lf["duration"].min()))

    jobs = [(arm, seed) for arm in spec.arms for seed in spec.seeds]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda job: _run_one(spec, job[0], job[1], corpus, out_dir, longform_manifest), jobs))

    runs = pd.DataFrame([outcome.row() for outcome, _ in results])
    plot = pd.DataFrame([p for _, rows in results for p in rows], columns=PLOT_COLUMNS)
    plot = plot.sort_values(["pattern", "seed", "step"], kind="stable").reset_index(drop=True)
    write_plot_data(plot, out_dir)
    runs.to_csv(out_dir / RUNS_FILE, sep="\t", index=False, float_format="%.6f", lineterminator="\n")
    summary = summarize(spec, runs)
    report = LongFormReport(runs=runs, summary=summary, plot=plot)
    write_report(report, spec, out_dir)
    return report
