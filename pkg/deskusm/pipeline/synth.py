"""Synthetic spoken-grapheme corpus.

Every grapheme is rendered as a short linear chirp under a Hann envelope; each
language maps graphemes to a different permutation of one chirp table, so the
same text sounds different per language while staying exactly transcribable.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.signal import chirp, get_window

from core.constants import SAMPLE_RATE
from features import AudioClip, read_wav, write_wav

from .data import MANIFEST_COLUMNS, read_manifest, write_manifest

log = logging.getLogger(__name__)

CORPUS_CONFIG = "corpus.conf"
SYNTH_FILE = "synth.json"
SPLITS = ("train", "eval", "unlabeled")


class SynthSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    graphemes: str = " abcdefgh"
    languages: Tuple[str, ...] = ("xa", "xb")
    train_clips: int = Field(200, ge=0)
    eval_clips: int = Field(40, ge=0)
    unlabeled_clips: int = Field(200, ge=0)
    text_sentences: int = Field(400, ge=0)
    lexicon_size: int = Field(40, ge=1)
    min_word_length: int = Field(1, ge=1)
    max_word_length: int = Field(4, ge=1)
    min_words: int = Field(1, ge=1)
    max_words: int = Field(3, ge=1)
    max_seconds: float = Field(3.0, gt=0.0)
    token_seconds: float = Field(0.08, gt=0.0)
    pad_seconds: float = Field(0.04, ge=0.0)
    noise_level: float = Field(0.01, ge=0.0)
    amplitude: float = Field(0.5, gt=0.0, le=1.0)
    min_hz: float = Field(200.0, gt=0.0)
    max_hz: float = Field(6000.0, gt=0.0)
    sample_rate: int = Field(SAMPLE_RATE, gt=0)
    longform_factor: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "SynthSpec":
        letters = self.letters
        if not letters:
            raise ValueError(f"graphemes {self.graphemes!r} contain no word characters")
        if len(set(self.graphemes)) != len(self.graphemes):
            raise ValueError(f"graphemes must be unique, got {self.graphemes!r}")
        if self.min_word_length > self.max_word_length or self.min_words > self.max_words:
            raise ValueError("word/length ranges must satisfy min <= max")
        if not self.languages or len(set(self.languages)) != len(self.languages):
            raise ValueError(f"languages must be non-empty and unique, got {list(self.languages)}")
        if self.max_hz * 1.25 >= self.sample_rate / 2:
            raise ValueError(f"max_hz {self.max_hz} leaves no headroom below Nyquist at {self.sample_rate} Hz")
        shortest = self.min_words * self.min_word_length * self.token_seconds + 2 * self.pad_seconds
        if shortest > self.max_seconds:
            raise ValueError(f"the shortest possible clip ({shortest:.2f}s) exceeds max_seconds {self.max_seconds}")
        return self

    @property
    def letters(self) -> str:
        return self.graphemes.replace(" ", "")

    @property
    def separator(self) -> str:
        return " " if " " in self.graphemes else ""


def tone_table(spec: SynthSpec, language_index: int, seed: int) -> Dict[str, Tuple[float, float]]:
    """grapheme -> (start Hz, end Hz) for one language."""
    starts = np.geomspace(spec.min_hz, spec.max_hz, len(spec.graphemes))
    order = np.random.default_rng([seed, 7, language_index]).permutation(len(spec.graphemes))
    return {g: (float(starts[k]), float(starts[k] * 1.25)) for g, k in zip(spec.graphemes, order)}


def render_text(text: str, tones: Dict[str, Tuple[float, float]], spec: SynthSpec, rng: np.random.Generator) -> AudioClip:
    sr = spec.sample_rate
    n_tok = int(round(spec.token_seconds * sr))
    t = np.arange(n_tok) / sr
    env = get_window("hann", n_tok, fftbins=False)
    pad = np.zeros(int(round(spec.pad_seconds * sr)))
    parts = [pad]
    for ch in text:
        f0, f1 = tones[ch]
        parts.append(spec.amplitude * env * chirp(t, f0=f0, t1=spec.token_seconds, f1=f1, method="linear"))
    parts.append(pad)
    samples = np.concatenate(parts)
    if spec.noise_level > 0:
        samples = samples + rng.normal(0.0, spec.noise_level, size=samples.shape)
    return AudioClip(samples=samples, sample_rate=sr)


def _lexicon(spec: SynthSpec, seed: int) -> List[str]:
    rng = np.random.default_rng([seed, 11])
    letters = list(spec.letters)
    words = []
    for _ in range(spec.lexicon_size):
        n = int(rng.integers(spec.min_word_length, spec.max_word_length + 1))
        words.append("".join(rng.choice(letters, size=n)))
    return words


def _sentence(lexicon: Sequence[str], spec: SynthSpec, rng: np.random.Generator) -> str:
    limit = spec.max_seconds - 2 * spec.pad_seconds
    while True:
        n = int(rng.integers(spec.min_words, spec.max_words + 1))
        text = spec.separator.join(lexicon[int(i)] for i in rng.integers(0, len(lexicon), size=n))
        if len(text) * spec.token_seconds <= limit + 1e-9:
            return text


def concatenate_clips(
    clips: Sequence[AudioClip], transcripts: Sequence[str], separator: AudioClip, joiner: str
) -> Tuple[AudioClip, str]:
    """Join clips with `separator` audio between them; the transcript joins with `joiner`."""
    if not clips or len(clips) != len(transcripts):
        raise ValueError(f"need matching non-empty clips and transcripts, got {len(clips)} and {len(transcripts)}")
    rates = {c.sample_rate for c in clips}
    if len(rates) != 1 or separator.sample_rate not in rates:
        raise ValueError(f"clips must share one sample rate, got {sorted(rates | {separator.sample_rate})}")
    pieces = []
    for i, c in enumerate(clips):
        if i:
            pieces.append(separator.samples)
        pieces.append(c.samples)
    return AudioClip(samples=np.concatenate(pieces), sample_rate=clips[0].sample_rate), joiner.join(transcripts)


def synth_corpus(spec: SynthSpec, out_dir: Union[str, Path], seed: int) -> Dict[str, Path]:
    """Write WAVs, manifests, an unspoken-text file and a long-form manifest; same seed gives identical bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lexicon = _lexicon(spec, seed)
    counts = {"train": spec.train_clips, "eval": spec.eval_clips, "unlabeled": spec.unlabeled_clips}
    written: Dict[str, Path] = {}

    for split_index, split in enumerate(SPLITS):
        rows = []
        audio_dir = out / "audio" / split
        audio_dir.mkdir(parents=True, exist_ok=True)
        for li, lang in enumerate(spec.languages):
            tones = tone_table(spec, li, seed)
            rng = np.random.default_rng([seed, split_index, li])
            for i in range(counts[split]):
                text = _sentence(lexicon, spec, rng)
                clip = render_text(text, tones, spec, rng)
                path = audio_dir / f"{lang}_{i:05d}.wav"
                write_wav(path, clip)
                rows.append(
                    {
                        "path": str(path),
                        "duration": clip.duration,
                        "transcript": text if split != "unlabeled" else "",
                        "language": lang,
                    }
                )
        written[split] = write_manifest(pd.DataFrame(rows, columns=MANIFEST_COLUMNS), out / f"{split}.tsv")

    rng = np.random.default_rng([seed, 23])
    sentences = [_sentence(lexicon, spec, rng) for _ in range(spec.text_sentences)]
    written["text"] = out / "text.txt"
    written["text"].write_text("".join(s + "\n" for s in sentences), encoding="utf-8")

    written["longform"] = write_longform(spec, out, written["eval"], spec.longform_factor, seed)

    conf = out / CORPUS_CONFIG
    conf.write_text(
        "\n".join(
            [
                f'graphemes = "{spec.graphemes}"',
                "unlabeled_manifest = unlabeled.tsv",
                "train_manifest = train.tsv",
                "eval_manifest = eval.tsv",
                "text_corpus = text.txt",
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    written["config"] = conf
    written["synth"] = out / SYNTH_FILE
    payload = {"seed": seed, "spec": spec.model_dump(mode="json")}
    written["synth"].write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    log.info("Synthesised corpus in %s: %s", out, {k: str(v.name) for k, v in written.items()})
    return written


def write_longform(
    spec: SynthSpec, out_dir: Union[str, Path], eval_manifest: Union[str, Path], k: int, seed: int, name: str = ""
) -> Path:
    """Concatenate consecutive groups of `k` eval clips per language into long-form clips."""
    if k < 1:
        raise ValueError(f"concatenation factor must be >= 1, got {k}")
    out = Path(out_dir)
    name = name or f"longform_k{k}"
    audio_dir = out / "audio" / name
    audio_dir.mkdir(parents=True, exist_ok=True)
    df = read_manifest(eval_manifest)
    rows = []
    for li, lang in enumerate(spec.languages):
        sub = df[df["language"] == lang].reset_index(drop=True)
        tones = tone_table(spec, li, seed)
        rng = np.random.default_rng([seed, 31, li])
        sep_text = spec.separator
        separator = render_text(sep_text, tones, spec, rng) if sep_text else AudioClip(
            samples=np.zeros(int(round(spec.pad_seconds * spec.sample_rate))), sample_rate=spec.sample_rate
        )
        for g in range(len(sub) // k):
            group = sub.iloc[g * k:(g + 1) * k]
            clips = [read_wav(p) for p in group["path"]]
            clip, text = concatenate_clips(clips, group["transcript"].tolist(), separator, sep_text)
            path = audio_dir / f"{lang}_{g:05d}.wav"
            write_wav(path, clip)
            rows.append({"path": str(path), "duration": clip.duration, "transcript": text, "language": lang})
    if not rows:
        log.warning("No long-form clips: fewer than %d eval clips per language", k)
    return write_manifest(pd.DataFrame(rows, columns=MANIFEST_COLUMNS), out / f"{name}.tsv")


def load_synth_spec(corpus_dir: Union[str, Path]) -> Tuple[SynthSpec, int]:
    path = Path(corpus_dir) / SYNTH_FILE
    if not path.exists():
        raise ValueError(f"{corpus_dir}: no {SYNTH_FILE}; generate the corpus with `synth` first")
    raw = json.loads(path.read_text(encoding="utf-8"))
    return SynthSpec(**raw["spec"]), int(raw["seed"])
