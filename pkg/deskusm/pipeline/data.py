from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from core.config import WORKERS
from core.constants import SAMPLE_RATE
from ctc import LabelSequence, TokenVocab
from features import log_mel, normalize_features, read_wav, resample
from utils import cached_features

log = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["path", "duration", "transcript", "language"]


@dataclass(frozen=True, eq=False)
class Utterance:
    path: str
    features: np.ndarray
    transcript: str
    language: str
    duration: float
    labels: Optional[LabelSequence] = None


def read_manifest(path: Union[str, Path]) -> pd.DataFrame:
    """Headerless TSV: path, duration seconds, transcript or "-", language. Relative paths resolve against the file."""
    path = Path(path)
    if path.stat().st_size == 0:
        return pd.DataFrame({c: pd.Series(dtype=float if c == "duration" else str) for c in MANIFEST_COLUMNS})
    df = pd.read_csv(
        path,
        sep="\t",
        header=None,
        names=MANIFEST_COLUMNS,
        dtype=str,
        keep_default_na=False,
        quoting=csv.QUOTE_NONE,
    )
    bad = df.index[(df["path"] == "") | (df["language"] == "")].tolist()
    if bad:
        raise ValueError(f"{path}: rows {[i + 1 for i in bad]} lack a path or language")
    df["duration"] = pd.to_numeric(df["duration"], errors="coerce")
    if df["duration"].isna().any():
        rows = (df.index[df["duration"].isna()] + 1).tolist()
        raise ValueError(f"{path}: non-numeric duration on rows {rows}")
    df["transcript"] = df["transcript"].where(df["transcript"] != "-", "")
    df["path"] = [p if Path(p).is_absolute() else str((path.parent / p).resolve()) for p in df["path"]]
    return df


def write_manifest(df: pd.DataFrame, path: Union[str, Path], relative_to: Optional[Path] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = df[MANIFEST_COLUMNS].copy()
    base = relative_to if relative_to is not None else path.parent
    out["path"] = [_relative(p, base) for p in out["path"]]
    out["transcript"] = out["transcript"].where(out["transcript"] != "", "-")
    out.to_csv(
        path, sep="\t", header=False, index=False, float_format="%.6f", lineterminator="\n", quoting=csv.QUOTE_NONE
    )
    return path


def _relative(p: str, base: Path) -> str:
    try:
        return str(Path(p).resolve().relative_to(base.resolve()))
    except ValueError:
        return str(p)


def read_text_corpus(path: Union[str, Path]) -> List[str]:
    """Unspoken text: one sentence per line, blank lines ignored."""
    return [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def _compute_features(path: str) -> np.ndarray:
    clip = read_wav(path)
    if clip.sample_rate != SAMPLE_RATE:
        clip = resample(clip, SAMPLE_RATE)
    frames = normalize_features(log_mel(clip).frames)
    frames.setflags(write=False)
    return frames


def featurize(path: str) -> np.ndarray:
    """Normalized log-mel frames of one clip, cached per file version."""
    return cached_features(path, _compute_features)


def featurize_all(paths: Sequence[str], workers: Optional[int] = None) -> List[Optional[np.ndarray]]:
    """Features in input order; unreadable clips come back as None and are logged."""

    def _one(p: str) -> Optional[np.ndarray]:
        try:
            return featurize(p)
        except (OSError, ValueError) as e:
            log.warning("Skipping unreadable clip %s: %s", p, e)
            return None

    n_workers = max(1, workers if workers is not None else WORKERS)
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_one, paths))


def load_utterances(
    df: pd.DataFrame,
    vocab: Optional[TokenVocab] = None,
    require_transcript: bool = False,
    workers: Optional[int] = None,
) -> List[Utterance]:
    """Featurize a manifest; with a vocabulary, encode transcripts and drop those it cannot spell."""
    feats = featurize_all(df["path"].tolist(), workers)
    out: List[Utterance] = []
    dropped = 0
    for row, f in zip(df.itertuples(index=False), feats):
        if f is None or f.shape[0] == 0:
            dropped += 1
            continue
        labels = None
        if vocab is not None and row.transcript:
            try:
                labels = vocab.encode(row.transcript)
            except ValueError as e:
                log.warning("Skipping %s: %s", row.path, e)
                dropped += 1
                continue
        if require_transcript and not row.transcript:
            log.warning("Skipping %s: no transcript", row.path)
            dropped += 1
            continue
        out.append(
            Utterance(
                path=row.path,
                features=f,
                transcript=row.transcript,
                language=row.language,
                duration=float(row.duration),
                labels=labels,
            )
        )
    if dropped:
        log.warning("Dropped %d of %d manifest rows", dropped, len(df))
    return out


def require_manifest(path: Optional[str], what: str) -> pd.DataFrame:
    if not path:
        raise ValueError(f"{what} manifest is not configured")
    df = read_manifest(path)
    if df.empty:
        raise ValueError(f"{what} manifest {path} is empty")
    return df
