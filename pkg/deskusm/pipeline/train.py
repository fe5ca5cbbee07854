from __future__ import annotations

import hashlib
import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from adapters import AdapterConfig, adapter_optimizer, attach_adapters, save_adapters
from bestrq import make_quantizer, verify_quantizer
from core.config import CHECK_FROZEN
from core.constants import N_MELS, SUBSAMPLING_FACTOR, Source, Stage
from ctc import LabelSequence, TokenVocab
from encoder import DECODER_GROUP, ENCODER_GROUP, UsmModel
from features import read_wav, write_wav
from most import MostBatch, TextEncoder, curriculum_gate, most_step
from nst import filter_pseudo, mark_kept, mix_datasets, pseudo_label, segment_clip, write_pseudo_manifest
from numerics import Adam, GroupSettings, forward_backward
from utils import atomic_write_text

from .checkpoint import (
    TEXT_PREFIX,
    Checkpoint,
    check_resume,
    init_encoder_from,
    latest_checkpoint,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from .config import TrainConfig, resolved_text
from .data import MANIFEST_COLUMNS, Utterance, featurize, load_utterances, read_text_corpus, require_manifest, write_manifest
from .evaluate import Transcriber, load_adapted
from .metrics import MetricsWriter

log = logging.getLogger(__name__)

ADAPTER_DIR = "adapters"
PSEUDO_MANIFEST = "pseudo.tsv"


class Diverged(Exception):
    """A loss came out non-finite before the parameter update."""


def step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, step])


def sample_indices(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    if n == 0 or k == 0:
        return np.zeros(0, dtype=np.int64)
    return rng.choice(n, size=k, replace=n < k)


def vocab_of(cfg: TrainConfig) -> TokenVocab:
    return TokenVocab(tuple(cfg.graphemes))


def build_optimizer(groups: Dict[str, list], cfg: TrainConfig) -> Adam:
    settings = {
        ENCODER_GROUP: GroupSettings(learning_rate=cfg.encoder_lr, warmup_steps=cfg.encoder_warmup),
        DECODER_GROUP: GroupSettings(learning_rate=cfg.decoder_lr, warmup_steps=cfg.decoder_warmup),
    }
    return Adam({g: (params, settings[g]) for g, params in groups.items()}, clip_norm=cfg.clip_norm)


def _finite(value: float, step: int) -> float:
    if not math.isfinite(value):
        raise Diverged(f"step {step}: loss is {value}")
    return value


def _open_run(cfg: TrainConfig) -> MetricsWriter:
    run_dir = Path(cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(run_dir / "config.conf", resolved_text(cfg))
    return MetricsWriter(run_dir)


def _resume(cfg: TrainConfig, metrics: MetricsWriter) -> Optional[Checkpoint]:
    path = latest_checkpoint(cfg.output_dir)
    if path is None:
        return None
    ckpt = load_checkpoint(path)
    check_resume(ckpt, cfg)
    metrics.truncate_after(ckpt.step)
    log.info("Resuming %s from %s at step %d", cfg.stage.value, path, ckpt.step)
    return ckpt


def run_loop(
    cfg: TrainConfig,
    metrics: MetricsWriter,
    start: int,
    step_fn: Callable[[int], Dict[str, object]],
    save_fn: Callable[[int], Path],
) -> Path:
    """Run steps [start, cfg.steps); checkpoint every `checkpoint_every` completed steps and at the end.

    On divergence the pre-update state is saved and RuntimeError raised.
    """
    last: Optional[Path] = latest_checkpoint(cfg.output_dir) if start else None
    for step in range(start, cfg.steps):
        try:
            record = step_fn(step)
        except Diverged as e:
            last = save_fn(step)
            log.error("%s diverged at step %d; last good checkpoint %s", cfg.stage.value, step, last, exc_info=True)
            raise RuntimeError(f"{cfg.stage.value} diverged at step {step}: {e}. Last good checkpoint: {last}") from e
        done = step + 1
        metrics.write("step", stage=cfg.stage.value, step=done, **record)
        if done % cfg.log_every == 0 or done == cfg.steps:
            log.info("%s step %d/%d: %s", cfg.stage.value, done, cfg.steps,
                     {k: v for k, v in record.items() if isinstance(v, float)})
        if done % cfg.checkpoint_every == 0 or done == cfg.steps:
            last = save_fn(done)
            metrics.write("checkpoint", stage=cfg.stage.value, step=done, path=str(last))
    if last is None or start >= cfg.steps:
        last = latest_checkpoint(cfg.output_dir)
        if last is None or load_checkpoint(last).step != cfg.steps:
            last = save_fn(cfg.steps)
    return last


def _features(cfg: TrainConfig) -> List[np.ndarray]:
    utts = load_utterances(require_manifest(cfg.unlabeled_manifest, "unlabeled"))
    if not utts:
        raise ValueError(f"no readable clips in {cfg.unlabeled_manifest}")
    return [u.features for u in utts]


def _labeled(cfg: TrainConfig, vocab: TokenVocab, language: Optional[str] = None) -> List[Utterance]:
    df = require_manifest(cfg.train_manifest, "train")
    if language is not None:
        available = sorted(df["language"].unique())
        df = df[df["language"] == language]
        if df.empty:
            raise ValueError(f"train manifest has no {language!r} rows. Available: {available}")
    utts = load_utterances(df, vocab, require_transcript=True)
    if not utts:
        raise ValueError(f"no usable transcribed clips in {cfg.train_manifest}")
    return utts


def pretrain(cfg: TrainConfig) -> Path:
    """BEST-RQ masked prediction against a frozen random quantizer."""
    metrics = _open_run(cfg)
    feats = _features(cfg)
    vocab = vocab_of(cfg)
    model = UsmModel(
        cfg.conformer(), vocab.size, np.random.default_rng([cfg.seed, 0]),
        num_codebooks=cfg.num_codebooks, codebook_size=cfg.codebook_size,
    )
    quantizer = make_quantizer(
        d_in=N_MELS * SUBSAMPLING_FACTOR, d_emb=cfg.codebook_dim,
        num_codebooks=cfg.num_codebooks, codebook_size=cfg.codebook_size, seed=cfg.seed,
    )
    optimizer = build_optimizer(model.param_groups(), cfg)
    spec, pattern = cfg.mask_spec(), cfg.attention()

    start = 0
    ckpt = _resume(cfg, metrics)
    if ckpt is not None:
        model.load_state_dict(ckpt.model_state())
        quantizer = ckpt.quantizer() or quantizer
        optimizer.load_state_dict(ckpt.optimizer_state())
        start = ckpt.step

    def step_fn(step: int) -> Dict[str, object]:
        idx = sample_indices(step_rng(cfg.seed, step), len(feats), cfg.batch_size)
        optimizer.zero_grad()
        loss, accuracy = model.masked_prediction_loss([feats[i] for i in idx], quantizer, spec, pattern, step)
        if CHECK_FROZEN:
            verify_quantizer(quantizer)
        if loss is None:
            log.warning("pretrain step %d: every mask in the batch was empty; no update", step)
            return {"loss": 0.0, "accuracy": accuracy, "updated": False}
        value = _finite(forward_backward(loss), step)
        rates = optimizer.step()
        return {"loss": value, "accuracy": accuracy, "updated": True, **rates}

    def save_fn(step: int) -> Path:
        return save_checkpoint(cfg.output_dir, step, cfg, model, quantizer=quantizer, optimizer=optimizer)

    return run_loop(cfg, metrics, start, step_fn, save_fn)


def _ctc_step(model_loss: Callable[[list], tuple], optimizer: Adam, batch: list, step: int) -> Dict[str, object]:
    optimizer.zero_grad()
    loss, infeasible = model_loss(batch)
    if loss is None:
        log.warning("step %d: every item was infeasible; no update", step)
        return {"loss": 0.0, "infeasible": infeasible, "updated": False}
    value = _finite(forward_backward(loss), step)
    rates = optimizer.step()
    return {"loss": value, "infeasible": infeasible, "updated": True, **rates}


def _student(cfg: TrainConfig, vocab: TokenVocab, init: Optional[Checkpoint]) -> UsmModel:
    speech_layer = init is not None and init.header.get("speech_layer") == "1"
    model = UsmModel(cfg.conformer(), vocab.size, np.random.default_rng([cfg.seed, 0]), speech_layer=speech_layer)
    if init is not None:
        init_encoder_from(model, init)
    return model


def finetune(cfg: TrainConfig) -> Path:
    """CTC fine-tuning with separate encoder and decoder optimizer groups."""
    metrics = _open_run(cfg)
    vocab = vocab_of(cfg)
    utts = _labeled(cfg, vocab)
    init = load_checkpoint(cfg.init_checkpoint) if cfg.init_checkpoint else None
    model = _student(cfg, vocab, init)
    optimizer = build_optimizer(model.param_groups(), cfg)
    pattern = cfg.attention()

    start = 0
    ckpt = _resume(cfg, metrics)
    if ckpt is not None:
        model.load_state_dict(ckpt.model_state())
        optimizer.load_state_dict(ckpt.optimizer_state())
        start = ckpt.step

    def step_fn(step: int) -> Dict[str, object]:
        idx = sample_indices(step_rng(cfg.seed, step), len(utts), cfg.batch_size)
        batch = [(utts[i].features, utts[i].labels) for i in idx]
        return _ctc_step(lambda b: model.asr_loss(b, pattern), optimizer, batch, step)

    def save_fn(step: int) -> Path:
        return save_checkpoint(cfg.output_dir, step, cfg, model, optimizer=optimizer)

    return run_loop(cfg, metrics, start, step_fn, save_fn)


def most(cfg: TrainConfig) -> Path:
    """Joint speech/text step from a BEST-RQ checkpoint with a new speech-only layer and text encoder."""
    if not cfg.init_checkpoint:
        raise ValueError("most needs init_checkpoint pointing at a BEST-RQ checkpoint")
    metrics = _open_run(cfg)
    vocab = vocab_of(cfg)
    init = load_checkpoint(cfg.init_checkpoint)
    quantizer = init.quantizer()
    if quantizer is None:
        raise ValueError(f"{init.path}: checkpoint carries no quantizer; MOST needs the BEST-RQ one")

    rng = np.random.default_rng([cfg.seed, 0])
    model = UsmModel(
        cfg.conformer(), vocab.size, rng,
        num_codebooks=quantizer.num_codebooks, codebook_size=quantizer.codebook_size, speech_layer=True,
    )
    init_encoder_from(model, init, heads=True)
    text_encoder = TextEncoder(cfg.conformer(), vocab.size, rng)
    groups = model.param_groups()
    groups[ENCODER_GROUP] = groups[ENCODER_GROUP] + text_encoder.named_parameters(TEXT_PREFIX)
    optimizer = build_optimizer(groups, cfg)

    speech = _features(cfg)
    paired = [(u.features, u.labels) for u in _labeled(cfg, vocab)] if cfg.train_manifest else []
    text = _text_labels(cfg, vocab)
    sizes, weights = cfg.most_sizes(), cfg.most_weights()
    gate = curriculum_gate(cfg.steps)
    spec, pattern = cfg.mask_spec(), cfg.attention()
    log.info("MOST: sizes=%s gate step=%d speech=%d paired=%d text=%d", sizes, gate, len(speech), len(paired), len(text))

    start = 0
    ckpt = _resume(cfg, metrics)
    if ckpt is not None:
        model.load_state_dict(ckpt.model_state())
        text_encoder.load_state_dict(ckpt.section(TEXT_PREFIX))
        optimizer.load_state_dict(ckpt.optimizer_state())
        start = ckpt.step

    def step_fn(step: int) -> Dict[str, object]:
        rng = step_rng(cfg.seed, step)
        batch = MostBatch(
            unlabeled_speech=[speech[i] for i in sample_indices(rng, len(speech), sizes.speech)],
            paired=[paired[i] for i in sample_indices(rng, len(paired), sizes.paired)],
            unlabeled_text=[text[i] for i in sample_indices(rng, len(text), sizes.text)],
        )
        optimizer.zero_grad()
        try:
            result = most_step(model, text_encoder, batch, sizes, weights, step, gate, quantizer, spec, pattern)
        except RuntimeError as e:
            raise Diverged(str(e)) from e
        if CHECK_FROZEN:
            verify_quantizer(quantizer)
        rates = optimizer.step()
        return {
            "loss": result.total,
            "losses": result.losses,
            "gated": result.gated,
            "missing": [k for k, v in result.missing.items() if v],
            "skipped_items": result.skipped_items,
            "grad_contributions": result.grad_contributions,
            **rates,
        }

    def save_fn(step: int) -> Path:
        return save_checkpoint(
            cfg.output_dir, step, cfg, model, quantizer=quantizer, optimizer=optimizer, text_encoder=text_encoder
        )

    return run_loop(cfg, metrics, start, step_fn, save_fn)


def _text_labels(cfg: TrainConfig, vocab: TokenVocab) -> List[LabelSequence]:
    if not cfg.text_corpus:
        return []
    out, dropped = [], 0
    for line in read_text_corpus(cfg.text_corpus):
        try:
            out.append(vocab.encode(line))
        except ValueError:
            dropped += 1
    if dropped:
        log.warning("Dropped %d text lines with characters outside the vocabulary", dropped)
    return out


def _state_digest(model: UsmModel) -> str:
    h = hashlib.sha256()
    for name, arr in sorted(model.state_dict().items()):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def adapt(cfg: TrainConfig) -> Path:
    """Train one language's residual adapters on a frozen base model; adapters land in <run>/adapters/<lang>."""
    if not cfg.init_checkpoint:
        raise ValueError("adapt needs init_checkpoint pointing at the base model")
    if not cfg.adapter_language:
        raise ValueError("adapt needs adapter_language")
    metrics = _open_run(cfg)
    base = load_checkpoint(cfg.init_checkpoint)
    model = model_from_checkpoint(base)
    vocab = base.vocab()
    utts = _labeled(cfg, vocab, language=cfg.adapter_language)
    lang = cfg.adapter_language

    adapted, report = attach_adapters(
        model,
        AdapterConfig(bottleneck_dim=cfg.adapter_bottleneck, target_ratio=cfg.adapter_ratio, languages=(lang,)),
        np.random.default_rng([cfg.seed, 0]),
    )
    view = adapted.select(lang)
    optimizer = adapter_optimizer(view, GroupSettings(learning_rate=cfg.encoder_lr, warmup_steps=cfg.encoder_warmup))
    pattern = cfg.attention()
    prefix = f"adapters.{lang}."
    base_digest = _state_digest(model)
    metrics.write(
        "adapters", language=lang, bottleneck=report.bottleneck_dim, adapter_params=report.adapter_params,
        base_params=report.base_params, ratio=report.ratio,
    )

    start = 0
    ckpt = _resume(cfg, metrics)
    if ckpt is not None:
        view.adapters.load_state_dict(ckpt.section(prefix))
        optimizer.load_state_dict(ckpt.optimizer_state())
        start = ckpt.step

    def step_fn(step: int) -> Dict[str, object]:
        idx = sample_indices(step_rng(cfg.seed, step), len(utts), cfg.batch_size)
        batch = [(utts[i].features, utts[i].labels) for i in idx]
        model.zero_grad()
        return _ctc_step(lambda b: view.asr_loss(b, pattern), optimizer, batch, step)

    def save_fn(step: int) -> Path:
        extra = {prefix + k: v for k, v in view.adapters.state_dict().items()}
        path = save_checkpoint(
            cfg.output_dir, step, cfg, model, optimizer=optimizer, extra=extra,
            extra_header={"adapter_language": lang, "adapter_bottleneck": str(adapted.bottleneck)},
        )
        save_adapters(adapted, Path(cfg.output_dir) / ADAPTER_DIR)
        return path

    last = run_loop(cfg, metrics, start, step_fn, save_fn)
    if _state_digest(model) != base_digest:
        raise RuntimeError("adapter training modified frozen base parameters")
    return last


def _segment_manifest(cfg: TrainConfig, df: pd.DataFrame) -> pd.DataFrame:
    out_dir = Path(cfg.output_dir) / "segments"
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, row in enumerate(df.itertuples(index=False)):
        try:
            clip = read_wav(row.path)
        except (OSError, ValueError) as e:
            log.warning("Skipping unreadable clip %s: %s", row.path, e)
            continue
        pieces = segment_clip(clip, cfg.segment_min_seconds, cfg.segment_max_seconds, np.random.default_rng([cfg.seed, 41, i]))
        for j, piece in enumerate(pieces):
            path = out_dir / f"{Path(row.path).stem}_{i:05d}_{j:03d}.wav"
            write_wav(path, piece)
            rows.append({"path": str(path), "duration": piece.duration, "transcript": "", "language": row.language})
    seg = pd.DataFrame(rows, columns=MANIFEST_COLUMNS)
    write_manifest(seg, Path(cfg.output_dir) / "segments.tsv")
    return seg


def pseudo_label_stage(cfg: TrainConfig) -> Sequence:
    """Teacher transcription, words-per-second filter and the pseudo-label manifest."""
    if not cfg.teacher_checkpoint:
        raise ValueError("nst needs teacher_checkpoint")
    teacher_ckpt = load_checkpoint(cfg.teacher_checkpoint)
    teacher = model_from_checkpoint(teacher_ckpt)
    adapted = load_adapted(teacher, cfg.teacher_adapters) if cfg.teacher_adapters else None
    transcriber = Transcriber(teacher, teacher_ckpt.vocab(), cfg.attention(), adapted)

    df = require_manifest(cfg.unlabeled_manifest, "unlabeled")
    if cfg.segment_max_seconds > 0:
        df = _segment_manifest(cfg, df)
    language_of = dict(zip(df["path"], df["language"]))

    items = pseudo_label(lambda p: transcriber.transcribe_features(featurize(p), language_of[p]), df)
    kept = filter_pseudo(items, cfg.min_wps, cfg.max_wps)
    write_pseudo_manifest(mark_kept(items, kept), Path(cfg.output_dir) / PSEUDO_MANIFEST)
    return kept


def nst(cfg: TrainConfig) -> Path:
    """One noisy-student generation: pseudo-label, filter, then train on a fixed supervised/pseudo mix."""
    metrics = _open_run(cfg)
    vocab = vocab_of(cfg)
    kept = pseudo_label_stage(cfg)

    pseudo = []
    for it in kept:
        try:
            pseudo.append((featurize(it.audio), vocab.encode(it.hypothesis)))
        except (OSError, ValueError) as e:
            log.warning("Skipping pseudo-labelled %s: %s", it.audio, e)
    supervised = [(u.features, u.labels) for u in _labeled(cfg, vocab)]
    metrics.write("nst", pseudo_kept=len(kept), pseudo_usable=len(pseudo), supervised=len(supervised),
                  mixing_ratio=cfg.mixing_ratio)

    init = load_checkpoint(cfg.init_checkpoint or cfg.teacher_checkpoint)
    model = _student(cfg, vocab, init)
    optimizer = build_optimizer(model.param_groups(), cfg)
    pattern = cfg.attention()
    stream = mix_datasets(supervised, pseudo, cfg.mixing_ratio, cfg.seed, cfg.batch_size)

    start = 0
    ckpt = _resume(cfg, metrics)
    if ckpt is not None:
        model.load_state_dict(ckpt.model_state())
        optimizer.load_state_dict(ckpt.optimizer_state())
        start = ckpt.step
        for _ in range(start):
            stream.next_batch()

    def step_fn(step: int) -> Dict[str, object]:
        mixed = stream.next_batch()
        record = _ctc_step(lambda b: model.asr_loss(b, pattern), optimizer, [item for _, item in mixed], step)
        record["supervised_items"] = sum(1 for src, _ in mixed if src is Source.SUPERVISED)
        return record

    def save_fn(step: int) -> Path:
        return save_checkpoint(cfg.output_dir, step, cfg, model, optimizer=optimizer)

    return run_loop(cfg, metrics, start, step_fn, save_fn)


RUNNERS: Dict[Stage, Callable[[TrainConfig], Path]] = {
    Stage.PRETRAIN: pretrain,
    Stage.MOST: most,
    Stage.FINETUNE: finetune,
    Stage.ADAPT: adapt,
    Stage.NST: nst,
}


def run_stage(cfg: TrainConfig, stage: Optional[Stage] = None) -> Path:
    stage = Stage(stage or cfg.stage)
    if stage is not cfg.stage:
        raise ValueError(f"config is for stage {cfg.stage.value!r}, not {stage.value!r}")
    return RUNNERS[stage](cfg)
