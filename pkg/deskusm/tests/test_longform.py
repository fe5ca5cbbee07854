import pandas as pd
import pytest
from openpyxl import load_workbook

from longform import (
    PLOT_COLUMNS,
    LongFormArm,
    LongFormExperimentSpec,
    LongFormReport,
    RunOutcome,
    check_geometry,
    run_longform,
    summarize,
    write_report,
)
from pipeline import build_config


def _spec(**kw):
    return LongFormExperimentSpec(**kw)


def _outcome(arm, seed, short_wer, long_wer, excluded=False):
    if excluded:
        return RunOutcome(arm, seed, "global", 2, excluded=True, reason="diverged")
    stats = lambda w: {"wer": w, "cer": w / 2, "deletion_share": w / 3, "words": 10}  # noqa: E731
    return RunOutcome(arm, seed, "global", 2, excluded=False, short=stats(short_wer), long=stats(long_wer))


def test_arm_normalises_pattern_and_validates():
    arm = LongFormArm("loc", "LOCAL:4:4", 3)
    assert arm.pattern == "local:4:4"
    with pytest.raises(ValueError, match="num_layers"):
        LongFormArm("loc", "global", 0)
    with pytest.raises(ValueError, match="path-safe"):
        LongFormArm("a b", "global", 1)


@pytest.mark.parametrize(
    "kwargs,match",
    [
        ({"seeds": (0, 1)}, "seeds"),
        ({"seeds": (0, 0, 1)}, "seeds"),
        ({"arms": (LongFormArm("a", "global", 1),)}, "two arms"),
        ({"arms": (LongFormArm("a", "global", 1), LongFormArm("a", "chunk:4", 1))}, "two arms"),
        ({"concat_factor": 0}, "concat_factor"),
        ({"steps": 0}, "positive"),
    ],
)
def test_spec_validation(kwargs, match):
    with pytest.raises(ValueError, match=match):
        _spec(**kwargs)


def test_default_spec_geometry():
    spec = _spec()
    assert spec.eval_seconds == 30.0
    assert [a.label for a in spec.local_arms()] == ["local"]
    check_geometry(spec, build_config({"stage": "finetune", "seed": "0"}))


def test_eval_inside_receptive_field_rejected():
    spec = _spec(concat_factor=1, train_segment_seconds=3.0)
    with pytest.raises(ValueError, match="receptive field"):
        check_geometry(spec, build_config({"stage": "finetune", "seed": "0"}))


def test_cli_arm_parsing():
    from main import _parse_arm

    assert _parse_arm("wide=local:8:8@6") == LongFormArm("wide", "local:8:8", 6)
    with pytest.raises(ValueError, match="label=pattern@layers"):
        _parse_arm("local:8:8")


def test_summary_medians_and_exclusions():
    spec = _spec(arms=(LongFormArm("a", "global", 2), LongFormArm("b", "chunk:4", 2)), tolerance=0.05)
    runs = pd.DataFrame(
        [
            _outcome("a", 0, 0.10, 0.12).row(),
            _outcome("a", 1, 0.20, 0.21).row(),
            _outcome("a", 2, 0.30, 0.33).row(),
            _outcome("b", 0, 0.10, 0.50).row(),
            _outcome("b", 1, 0.10, 0.70).row(),
            _outcome("b", 2, 0.0, 0.0, excluded=True).row(),
        ]
    )
    summary = summarize(spec, runs)
    a = summary[summary["arm"] == "a"].iloc[0]
    b = summary[summary["arm"] == "b"].iloc[0]
    assert a["median_short_wer"] == pytest.approx(0.20)
    assert a["long_minus_short_wer"] == pytest.approx(0.02)
    assert bool(a["within_tolerance"])
    assert (b["seeds_ok"], b["seeds_excluded"]) == (2, 1)
    assert b["median_long_wer"] == pytest.approx(0.60)
    assert not bool(b["within_tolerance"])

    runs.loc[runs["arm"] == "b", "status"] = ["ok", "excluded", "excluded"]
    with pytest.raises(RuntimeError, match="survived"):
        summarize(spec, runs)


def test_report_files_and_workbook(tmp_path):
    spec = _spec()
    runs = pd.DataFrame([_outcome("chunk", s, 0.1, 0.1).row() for s in (0, 1)])
    summary = pd.DataFrame([{"arm": "chunk", "median_long_wer": 0.1, "within_tolerance": True}])
    plot = pd.DataFrame([{"step": 1, "pattern": "chunk", "seed": 0, "longform_wer": 0.4}], columns=PLOT_COLUMNS)
    path = write_report(LongFormReport(runs=runs, summary=summary, plot=plot), spec, tmp_path)

    assert path.name == "longform_report.xlsx"
    wb = load_workbook(path)
    assert wb.sheetnames == ["Summary", "Runs", "Plot data", "Spec"]
    assert wb["Summary"].freeze_panes == "A2"
    assert [c.value for c in wb["Plot data"][1]] == PLOT_COLUMNS
    for name in ("plot_data.tsv", "runs.tsv", "summary.tsv"):
        assert (tmp_path / name).exists()
    assert pd.read_csv(tmp_path / "plot_data.tsv", sep="\t").columns.tolist() == PLOT_COLUMNS


@pytest.mark.slow
def test_full_experiment_on_tiny_corpus(tmp_path, tiny_corpus):
    spec = _spec(
        arms=(LongFormArm("local", "local:1:1", 1), LongFormArm("chunk", "chunk:2", 1)),
        seeds=(0, 1, 2),
        train_segment_seconds=0.5,
        concat_factor=3,
        steps=2,
        eval_every=1,
        overrides=("model_dim=8", "attention_heads=2", "conv_kernel_size=3", "batch_size=2"),
    )
    report = run_longform(spec, tiny_corpus, tmp_path, workers=2)
    assert report.summary["arm"].tolist() == ["local", "chunk"]
    assert len(report.runs) == 6 and (report.runs["status"] == "ok").all()
    assert len(report.plot) == 2 * 3 * 2
    assert (tmp_path / "longform_report.xlsx").exists()
    assert report.median("local", "median_long_wer") >= 0.0
