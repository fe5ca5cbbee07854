from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from adapters import AdaptedModel, load_adapters
from ctc import TokenVocab, ctc_greedy_decode
from encoder import AttentionPattern, UsmModel
from numerics import no_grad
from utils import read_manifest as read_array_manifest

from .checkpoint import load_checkpoint, model_from_checkpoint
from .data import Utterance, featurize, load_utterances, read_manifest
from .metrics import MetricsWriter
from .scoring import EditCounts, char_counts, word_counts

log = logging.getLogger(__name__)

POOLED = "all"


@dataclass(frozen=True, eq=False)
class EvalReport:
    utterances: pd.DataFrame
    summary: pd.DataFrame

    def row(self, language: str = POOLED) -> Dict[str, float]:
        hit = self.summary[self.summary["language"] == language]
        if hit.empty:
            raise ValueError(f"no results for language {language!r}. Available: {self.summary['language'].tolist()}")
        return hit.iloc[0].to_dict()

    @property
    def wer(self) -> float:
        return float(self.row()["wer"])

    @property
    def cer(self) -> float:
        return float(self.row()["cer"])


class Transcriber:
    """Greedy CTC transcription with the base model or, when registered, the utterance language's adapters."""

    def __init__(
        self,
        model: UsmModel,
        vocab: TokenVocab,
        pattern: AttentionPattern,
        adapted: Optional[AdaptedModel] = None,
        language: Optional[str] = None,
    ):
        self.model = model
        self.vocab = vocab
        self.pattern = pattern
        self.adapted = adapted
        self.language = language

    def transcribe_features(self, features: np.ndarray, language: Optional[str] = None) -> str:
        lang = self.language or language
        with no_grad():
            if self.adapted is not None and lang in self.adapted.sets:
                lp = self.adapted.select(lang).log_probs(features, self.pattern)
            else:
                lp = self.model.log_probs(self.model.encode(features, self.pattern))
        return self.vocab.decode(ctc_greedy_decode(lp))

    def __call__(self, path: str) -> str:
        return self.transcribe_features(featurize(path))


def _summarize(rows: List[dict], key: str, value: str) -> dict:
    words = sum((r["_w"] for r in rows), EditCounts())
    chars = sum((r["_c"] for r in rows), EditCounts())
    return {
        key: value,
        "utterances": len(rows),
        "wer": words.rate if words.reference_length else float("nan"),
        "cer": chars.rate if chars.reference_length else float("nan"),
        "words": words.reference_length,
        "substitutions": words.substitutions,
        "deletions": words.deletions,
        "insertions": words.insertions,
        "deletion_share": words.deletion_share if words.reference_length else float("nan"),
    }


def evaluate(transcriber: Transcriber, utterances: Sequence[Utterance]) -> EvalReport:
    rows = []
    for u in utterances:
        if not u.transcript:
            log.warning("Skipping %s: no reference transcript", u.path)
            continue
        hyp = transcriber.transcribe_features(u.features, u.language)
        w = word_counts(u.transcript, hyp)
        c = char_counts(u.transcript, hyp)
        rows.append(
            {
                "path": u.path,
                "language": u.language,
                "duration": u.duration,
                "reference": u.transcript,
                "hypothesis": hyp,
                "wer": w.rate if w.reference_length else float("nan"),
                "cer": c.rate,
                "substitutions": w.substitutions,
                "deletions": w.deletions,
                "insertions": w.insertions,
                "_w": w,
                "_c": c,
            }
        )
    if not rows:
        raise ValueError("nothing to evaluate: no utterance has a reference transcript")
    by_lang: Dict[str, List[dict]] = {}
    for r in rows:
        by_lang.setdefault(r["language"], []).append(r)
    summary = [_summarize(by_lang[lang], "language", lang) for lang in sorted(by_lang)]
    summary.append(_summarize(rows, "language", POOLED))
    per_utt = pd.DataFrame([{k: v for k, v in r.items() if not k.startswith("_")} for r in rows])
    return EvalReport(utterances=per_utt, summary=pd.DataFrame(summary))


def load_adapted(model: UsmModel, directory: Union[str, Path]) -> AdaptedModel:
    """Wrap `model` with every adapter set saved under `directory`."""
    directory = Path(directory)
    subdirs = sorted(p for p in directory.iterdir() if p.is_dir() and not p.name.startswith("."))
    if not subdirs:
        raise ValueError(f"{directory}: no adapter sets found")
    header, _ = read_array_manifest(subdirs[0])
    model.freeze()
    adapted = AdaptedModel(model, int(header["bottleneck"]))
    load_adapters(adapted, directory, np.random.default_rng(0))
    return adapted


def evaluate_checkpoint(
    checkpoint: Union[str, Path],
    manifest: Union[str, Path],
    pattern: Optional[str] = None,
    adapters_dir: Optional[Union[str, Path]] = None,
    metrics: Optional[MetricsWriter] = None,
    label: str = "",
) -> EvalReport:
    ckpt = load_checkpoint(checkpoint)
    model = model_from_checkpoint(ckpt)
    vocab = ckpt.vocab()
    attention = AttentionPattern.parse(pattern or _checkpoint_pattern(ckpt))
    adapted = load_adapted(model, adapters_dir) if adapters_dir else None
    utterances = load_utterances(read_manifest(manifest), vocab=None)
    report = evaluate(Transcriber(model, vocab, attention, adapted), utterances)
    log.info(
        "Eval %s on %s (%s): WER %.4f CER %.4f over %d utterances",
        ckpt.path.name, Path(manifest).name, attention.label, report.wer, report.cer, len(report.utterances),
    )
    if metrics is not None:
        for rec in report.summary.to_dict("records"):
            metrics.write("eval", checkpoint=str(ckpt.path), step=ckpt.step, manifest=str(manifest),
                          pattern=attention.spec, label=label, **rec)
    return report


def _checkpoint_pattern(ckpt) -> str:
    conf = ckpt.path / "config.conf"
    if conf.exists():
        for line in conf.read_text(encoding="utf-8").splitlines():
            key, _, value = line.partition("=")
            if key.strip() == "pattern":
                return value.strip()
    return "global"

