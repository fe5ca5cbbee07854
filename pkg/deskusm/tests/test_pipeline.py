import json
from dataclasses import replace

import numpy as np
import pytest

from core.constants import N_MELS, Stage
from encoder import AttentionPattern, UsmModel
from features import read_wav
from numerics import Tensor
from pipeline import (
    EditCounts,
    MetricsWriter,
    build_config,
    cer,
    char_counts,
    check_resume,
    edit_counts,
    evaluate_checkpoint,
    featurize,
    featurize_all,
    fingerprint,
    init_encoder_from,
    latest_checkpoint,
    list_checkpoints,
    load_checkpoint,
    load_config,
    load_config_file,
    load_synth_spec,
    model_from_checkpoint,
    pack_batch,
    parse_config_text,
    read_manifest,
    read_metrics,
    resolved_text,
    rtf_bench,
    run_stage,
    save_checkpoint,
    synth_corpus,
    wer,
    word_counts,
)
from utils import CheckpointError

TINY = {
    "seed": "5",
    "num_layers": "1",
    "model_dim": "8",
    "attention_heads": "2",
    "conv_kernel_size": "3",
    "relative_cap": "4",
    "num_codebooks": "2",
    "codebook_size": "4",
    "codebook_dim": "4",
    "mask_probability": "0.2",
    "batch_size": "2",
    "steps": "4",
    "checkpoint_every": "2",
    "pattern": "global",
}


def _cfg(corpus, out, stage=Stage.PRETRAIN, **extra):
    values = load_config_file(corpus / "corpus.conf")
    values.update(TINY)
    values.update({"stage": stage.value, "output_dir": str(out)})
    values.update({k: str(v) for k, v in extra.items()})
    return build_config(values)


# --- configuration ---------------------------------------------------------


def test_include_overrides_and_relative_paths(tmp_path):
    (tmp_path / "train.tsv").write_text("")
    (tmp_path / "base.conf").write_text("seed = 3\nnum_layers = 2\n# comment\ntrain_manifest = train.tsv\n")
    (tmp_path / "run.conf").write_text('include base.conf\nstage = finetune\nnum_layers = 3  # later wins\ngraphemes = " ab#"\n')
    cfg = load_config(tmp_path / "run.conf", ["model_dim=16", "attention_heads=2"])
    assert cfg.stage is Stage.FINETUNE
    assert (cfg.seed, cfg.num_layers, cfg.model_dim) == (3, 3, 16)
    assert cfg.graphemes == " ab#"
    assert cfg.train_manifest == str((tmp_path / "train.tsv").resolve())


@pytest.mark.parametrize(
    "text,match",
    [
        ("stage = pretrain\nseed = 1\nbogus = 2\n", "invalid configuration"),
        ("stage = pretrain\nseed = 1\ntrain_manifest = nowhere.tsv\n", "do not exist"),
        ("stage = pretrain\nseed = 1\nnum_layers\n", "line 3"),
        ("stage = pretrain\nseed = 1\nmodel_dim = 10\n", "invalid configuration"),
        ("stage = pretrain\nseed = 1\npattern = chunk:0\n", "invalid configuration"),
    ],
)
def test_invalid_configs_rejected(tmp_path, text, match):
    (tmp_path / "c.conf").write_text(text)
    with pytest.raises(ValueError, match=match):
        load_config(tmp_path / "c.conf")


def test_include_cycle_rejected(tmp_path):
    (tmp_path / "a.conf").write_text("include b.conf\n")
    (tmp_path / "b.conf").write_text("include a.conf\n")
    with pytest.raises(ValueError, match="cycle"):
        load_config_file(tmp_path / "a.conf")


def test_resolved_text_round_trips(tmp_path):
    cfg = build_config({"stage": "most", "seed": "9", "graphemes": " xyz", "w_asr": "0.5"})
    again = build_config(parse_config_text(resolved_text(cfg), tmp_path))
    assert again == cfg
    assert fingerprint(again) == fingerprint(cfg)


def test_fingerprint_ignores_run_length_only():
    base = build_config({"stage": "pretrain", "seed": "1"})
    assert fingerprint(base) == fingerprint(build_config({"stage": "pretrain", "seed": "1", "steps": "999"}))
    assert fingerprint(base) != fingerprint(build_config({"stage": "pretrain", "seed": "2"}))


def test_relative_cap_comes_from_pattern():
    def cap(**values):
        return build_config({"stage": "pretrain", "seed": "1", **values}).conformer().relative_cap

    assert cap() == 50
    assert cap(pattern="local:128:128") == 128
    assert cap(pattern="chunk:25", relative_cap="25") == 25
    assert cap(pattern="global") == 64
    assert cap(pattern="global", relative_cap="4") == 4
    with pytest.raises(ValueError, match="conflicts with pattern chunk:25"):
        build_config({"stage": "pretrain", "seed": "1", "pattern": "chunk:25", "relative_cap": "16"})


# --- scoring ---------------------------------------------------------------


def test_word_error_rate_counts():
    counts = word_counts("a b c", "a x c d")
    assert counts == EditCounts(substitutions=1, deletions=0, insertions=1, reference_length=3)
    assert wer("a b c".split(), "a x c d".split()) == pytest.approx(2 / 3)
    assert wer(["a", "b"], ["a", "b"]) == 0.0


def _levenshtein(ref, hyp):
    row = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        prev, row[0] = row[0], i
        for j, h in enumerate(hyp, 1):
            prev, row[j] = row[j], min(row[j] + 1, row[j - 1] + 1, prev + (r != h))
    return row[-1]


def test_all_deleted_and_swapped():
    deleted = edit_counts("abc", "")
    assert (deleted.deletions, deleted.rate, deleted.deletion_share) == (3, 1.0, 1.0)
    assert edit_counts("ab", "ba").errors == 2
    assert cer("abcd", "abxd") == 0.25
    assert char_counts("a b", "ab") == EditCounts(0, 1, 0, 3)
    total = word_counts("a b", "a") + word_counts("c", "d e")
    assert total == EditCounts(1, 1, 1, 3)
    assert word_counts("", "x y") == EditCounts(insertions=2)
    with pytest.raises(ValueError, match="whitespace"):
        edit_counts(["a b"], ["a"])


def test_counts_match_minimum_edit_distance(rng):
    for _ in range(200):
        ref = list(rng.choice(list("abc"), size=rng.integers(1, 7)))
        hyp = list(rng.choice(list("abc"), size=rng.integers(0, 7)))
        counts = edit_counts(ref, hyp)
        assert counts.errors == _levenshtein(ref, hyp)
        assert counts.deletions - counts.insertions == len(ref) - len(hyp)
        assert char_counts("".join(ref), "".join(hyp)) == counts


def test_empty_reference_is_an_error():
    with pytest.raises(ValueError):
        wer([], ["a"])
    with pytest.raises(ValueError):
        cer("", "a")


# --- metrics ---------------------------------------------------------------


def test_metrics_stream_and_truncation(tmp_path):
    writer = MetricsWriter(tmp_path, stdout=False)
    for step in (1, 2, 3):
        writer.write("step", stage=Stage.PRETRAIN, step=step, loss=np.float64(step / 2), grads=np.arange(2))
    writer.write("checkpoint", stage="pretrain", step=2, path="x")
    writer.write("eval", step=3, wer=0.5)
    writer.truncate_after(2)

    steps = read_metrics(tmp_path, event="step")
    assert steps["step"].tolist() == [1, 2]
    assert steps["stage"].tolist() == ["pretrain", "pretrain"]
    assert steps["grads"].iloc[0] == [0, 1]
    assert read_metrics(tmp_path, event="checkpoint")["step"].tolist() == [2]
    assert read_metrics(tmp_path, event="eval")["wer"].tolist() == [0.5]
    assert read_metrics(tmp_path / "missing").empty


# --- synthetic corpus ------------------------------------------------------


def test_synth_is_byte_identical_per_seed(tmp_path, tiny_spec):
    a = synth_corpus(tiny_spec, tmp_path / "a", seed=7)
    b = synth_corpus(tiny_spec, tmp_path / "b", seed=7)
    for key in ("train", "eval", "unlabeled", "text", "longform"):
        assert a[key].read_bytes() == b[key].read_bytes()
    first = sorted((tmp_path / "a" / "audio" / "train").iterdir())[0]
    assert first.read_bytes() == (tmp_path / "b" / "audio" / "train" / first.name).read_bytes()
    c = synth_corpus(tiny_spec, tmp_path / "c", seed=8)
    assert c["train"].read_bytes() != a["train"].read_bytes() or c["text"].read_bytes() != a["text"].read_bytes()


def test_corpus_layout(tiny_corpus, tiny_spec):
    train = read_manifest(tiny_corpus / "train.tsv")
    assert len(train) == tiny_spec.train_clips * len(tiny_spec.languages)
    assert sorted(train["language"].unique()) == ["xa", "xb"]
    assert all(set(t) <= set(tiny_spec.graphemes) and t for t in train["transcript"])
    assert (read_manifest(tiny_corpus / "unlabeled.tsv")["transcript"] == "").all()

    clip = read_wav(train["path"].iloc[0])
    assert clip.duration == pytest.approx(train["duration"].iloc[0], abs=1e-5)
    assert clip.duration <= tiny_spec.max_seconds + 1e-9

    longform = read_manifest(tiny_corpus / "longform_k3.tsv")
    evals = read_manifest(tiny_corpus / "eval.tsv")
    assert len(longform) == 2
    first_xa = evals[evals["language"] == "xa"]["transcript"].tolist()
    assert longform["transcript"].iloc[0] == " ".join(first_xa)

    spec, seed = load_synth_spec(tiny_corpus)
    assert (spec, seed) == (tiny_spec, 3)
    assert load_config_file(tiny_corpus / "corpus.conf")["graphemes"] == " abcd"


def test_features_cached_and_unreadable_skipped(tiny_corpus):
    paths = read_manifest(tiny_corpus / "train.tsv")["path"].tolist()[:3]
    first = featurize_all(paths + [str(tiny_corpus / "missing.wav")], workers=2)
    assert first[-1] is None
    assert all(f.shape[1] == N_MELS and not f.flags.writeable for f in first[:3])
    assert featurize(paths[1]) is first[1]
    assert all(f is g for f, g in zip(featurize_all(paths, workers=1), first))


# --- checkpoints and training ----------------------------------------------


def test_checkpoint_round_trip_and_resume_guard(tmp_path, tiny_corpus, rng):
    cfg = _cfg(tiny_corpus, tmp_path / "run")
    model = UsmModel(cfg.conformer(), 5, rng, num_codebooks=2, codebook_size=4)
    for step in (2, 10):
        save_checkpoint(cfg.output_dir, step, cfg, model)
    assert [p.name for p in list_checkpoints(cfg.output_dir)] == ["step-00000002", "step-00000010"]

    ckpt = load_checkpoint(latest_checkpoint(cfg.output_dir))
    assert ckpt.step == 10 and ckpt.stage == "pretrain"
    assert ckpt.vocab().symbols == tuple(" abcd")
    rebuilt = model_from_checkpoint(ckpt)
    for name, arr in model.state_dict().items():
        np.testing.assert_array_equal(rebuilt.state_dict()[name], arr)

    check_resume(ckpt, _cfg(tiny_corpus, tmp_path / "run", steps=50))
    with pytest.raises(CheckpointError, match="fingerprint"):
        check_resume(ckpt, _cfg(tiny_corpus, tmp_path / "run", seed=6))


def test_encoder_init_requires_matching_layers(tmp_path, tiny_corpus, rng):
    cfg = _cfg(tiny_corpus, tmp_path / "run")
    source = UsmModel(cfg.conformer(), 5, rng, num_codebooks=2, codebook_size=4)
    ckpt = load_checkpoint(save_checkpoint(cfg.output_dir, 2, cfg, source))

    deeper = UsmModel(replace(cfg.conformer(), num_layers=2), 5, rng)
    with pytest.raises(ValueError, match=r"Only in model: \['encoder\.layer1\."):
        init_encoder_from(deeper, ckpt)

    bigger = UsmModel(replace(cfg.conformer(), num_layers=2), 5, rng, num_codebooks=2, codebook_size=4)
    deep_cfg = _cfg(tiny_corpus, tmp_path / "deep", num_layers=2)
    deep_ckpt = load_checkpoint(save_checkpoint(deep_cfg.output_dir, 2, deep_cfg, bigger))
    with pytest.raises(ValueError, match=r"Only in checkpoint: \['encoder\.layer1\."):
        init_encoder_from(UsmModel(cfg.conformer(), 5, rng), deep_ckpt)

    target = UsmModel(cfg.conformer(), 5, rng, speech_layer=True)
    left = init_encoder_from(target, ckpt)
    assert left and all(n.startswith(("speech_layer.", "ctc_head.")) for n in left)
    for name, arr in source.encoder_state().items():
        np.testing.assert_array_equal(target.state_dict()[name], arr)


def test_resumed_pretraining_matches_uninterrupted(tmp_path, tiny_corpus):
    straight = run_stage(_cfg(tiny_corpus, tmp_path / "a"))
    run_stage(_cfg(tiny_corpus, tmp_path / "b", steps=2))
    resumed = run_stage(_cfg(tiny_corpus, tmp_path / "b"))

    a, b = load_checkpoint(straight), load_checkpoint(resumed)
    assert a.step == b.step == 4
    assert a.arrays.keys() == b.arrays.keys()
    for name in a.arrays:
        np.testing.assert_array_equal(a.arrays[name], b.arrays[name])
    assert read_metrics(tmp_path / "b", event="step")["step"].tolist() == [1, 2, 3, 4]
    assert read_metrics(tmp_path / "b", event="checkpoint")["step"].tolist() == [2, 4]


def test_divergence_saves_pre_update_state(tmp_path, tiny_corpus, monkeypatch):
    reference = load_checkpoint(run_stage(_cfg(tiny_corpus, tmp_path / "ok", steps=3, checkpoint_every=4)))

    original = UsmModel.masked_prediction_loss

    def nan_at_step_three(self, batch, quantizer, spec, pattern, step=0):
        loss, accuracy = original(self, batch, quantizer, spec, pattern, step)
        return (Tensor(np.array(np.nan)) if step == 3 else loss), accuracy

    monkeypatch.setattr(UsmModel, "masked_prediction_loss", nan_at_step_three)
    with pytest.raises(RuntimeError, match="diverged at step 3") as err:
        run_stage(_cfg(tiny_corpus, tmp_path / "bad", checkpoint_every=4))

    saved = latest_checkpoint(tmp_path / "bad")
    assert str(saved) in str(err.value)
    ckpt = load_checkpoint(saved)
    assert ckpt.step == 3
    assert ckpt.arrays.keys() == reference.arrays.keys()
    for name in reference.arrays:
        np.testing.assert_array_equal(ckpt.arrays[name], reference.arrays[name])
    assert read_metrics(tmp_path / "bad", event="step")["step"].tolist() == [1, 2, 3]


def test_run_stage_rejects_other_stage(tmp_path, tiny_corpus):
    with pytest.raises(ValueError, match="not 'finetune'"):
        run_stage(_cfg(tiny_corpus, tmp_path / "run"), Stage.FINETUNE)


def test_finetune_from_pretrain_then_evaluate(tmp_path, tiny_corpus):
    pre = run_stage(_cfg(tiny_corpus, tmp_path / "pre", steps=2))
    final = run_stage(_cfg(tiny_corpus, tmp_path / "ft", stage=Stage.FINETUNE, init_checkpoint=pre, steps=2))
    report = evaluate_checkpoint(final, tiny_corpus / "eval.tsv", metrics=MetricsWriter(tmp_path / "ev", stdout=False))
    assert report.summary["language"].tolist() == ["xa", "xb", "all"]
    assert len(report.utterances) == 6
    assert report.wer >= 0.0 and np.isfinite(report.cer)
    evals = read_metrics(tmp_path / "ev", event="eval")
    assert evals["language"].tolist() == ["xa", "xb", "all"]
    assert set(evals["pattern"]) == {"global"}


# --- real-time factor -------------------------------------------------------


def test_pack_batch_rows():
    rows = pack_batch([np.zeros((50, 3)), np.zeros((50, 3)), np.zeros((50, 3))], 2)
    assert [r.shape for r in rows] == [(72, 3), (72, 3)]
    with pytest.raises(ValueError, match="cannot fill"):
        pack_batch([np.zeros((5, 3))], 2)
    with pytest.raises(ValueError):
        pack_batch([], 1)


@pytest.mark.parametrize("dtype", ["float64", "float32"])
def test_rtf_bench_report(rng, tiny_conformer, dtype):
    model = UsmModel(tiny_conformer, 5, rng)
    feats = [rng.normal(size=(50, 128)) for _ in range(3)]
    report = rtf_bench(model, feats, AttentionPattern.chunked(4), batch_size=2, repeats=2, dtype=dtype)
    assert report.audio_seconds == pytest.approx(1.44)
    assert len(report.wall_seconds) == 2 and report.inverse_rtf > 0
    assert report.params == model.num_parameters()
    assert report.precision == dtype and report.pattern == "chunk:4"
    assert "numpy" in report.hardware
    json.dumps(report.as_dict())


# --- command line ------------------------------------------------------------


def test_cli_rf_report(capsys):
    from main import main

    assert main(["rf-report", "--pattern", "local:1:1", "--layers", "4", "--no-conv"]) == 0
    last = capsys.readouterr().out.strip().splitlines()[-1]
    assert last.startswith("rf pattern=local(1,1) layers=4 frames=8")
    assert main(["rf-report", "--pattern", "banded:3", "--layers", "4"]) == 1


def test_cli_synth_and_stage_mismatch(tmp_path, capsys):
    from main import main

    out = tmp_path / "corpus"
    args = ["synth", str(out), "--seed", "2", "--set", "languages=xa", "--set", "train_clips=1",
            "--set", "eval_clips=1", "--set", "unlabeled_clips=0", "--set", "text_sentences=2",
            "--set", "longform_factor=1"]
    assert main(args) == 0
    printed = dict(line.split("\t") for line in capsys.readouterr().out.strip().splitlines())
    assert {"train", "eval", "unlabeled", "text", "longform", "config", "synth"} <= set(printed)
    assert len(read_manifest(out / "train.tsv")) == 1

    (tmp_path / "p.conf").write_text("stage = pretrain\nseed = 1\n")
    assert main(["finetune", str(tmp_path / "p.conf")]) == 1
