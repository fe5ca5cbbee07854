from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from core.config import WORKERS
from features import AudioClip

from .models import DEFAULT_MAX_WPS, DEFAULT_MIN_WPS, PseudoLabeledItem, word_count

log = logging.getLogger(__name__)

PSEUDO_COLUMNS = ["path", "duration", "hypothesis", "wps", "kept", "language"]


def pseudo_label(
    transcribe: Callable[[str], str],
    manifest: pd.DataFrame,
    workers: Optional[int] = None,
) -> List[PseudoLabeledItem]:
    """Transcribe every clip of `manifest` with the teacher; unreadable clips are logged and skipped.

    Results keep manifest order whatever the thread scheduling.
    """
    paths = manifest["path"].astype(str).tolist()
    durations = manifest["duration"].astype(float).tolist()
    languages = manifest["language"].astype(str).tolist() if "language" in manifest else ["-"] * len(paths)

    def _one(i: int) -> Optional[PseudoLabeledItem]:
        try:
            text = transcribe(paths[i])
        except (OSError, ValueError) as e:
            log.warning("Skipping unreadable clip %s: %s", paths[i], e)
            return None
        return PseudoLabeledItem(audio=paths[i], hypothesis=text, duration=durations[i], language=languages[i])

    n_workers = max(1, workers if workers is not None else WORKERS)
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        results = list(pool.map(_one, range(len(paths))))
    items = [r for r in results if r is not None]
    log.info("Pseudo-labelled %d of %d clips", len(items), len(paths))
    return items


def filter_pseudo(
    items: Sequence[PseudoLabeledItem],
    min_wps: float = DEFAULT_MIN_WPS,
    max_wps: float = DEFAULT_MAX_WPS,
) -> List[PseudoLabeledItem]:
    """Keep items whose words-per-second lies in [min_wps, max_wps]; empty hypotheses never survive."""
    if not min_wps < max_wps:
        raise ValueError(f"min_wps ({min_wps}) must be below max_wps ({max_wps})")
    kept = [
        replace(it, kept=True)
        for it in items
        if word_count(it.hypothesis) > 0 and min_wps <= it.words_per_second <= max_wps
    ]
    log.info("NST filter kept %d of %d items (%.2f..%.2f wps)", len(kept), len(items), min_wps, max_wps)
    return kept


def mark_kept(items: Sequence[PseudoLabeledItem], kept: Sequence[PseudoLabeledItem]) -> List[PseudoLabeledItem]:
    keep = {it.audio for it in kept}
    return [replace(it, kept=it.audio in keep) for it in items]


def segment_clip(
    clip: AudioClip, min_seconds: float, max_seconds: float, rng: np.random.Generator
) -> List[AudioClip]:
    """Cut a long clip into consecutive pieces of random length in [min_seconds, max_seconds].

    A tail shorter than min_seconds is appended to the previous piece.
    """
    if not 0 < min_seconds <= max_seconds:
        raise ValueError(f"segment bounds must satisfy 0 < min <= max, got ({min_seconds}, {max_seconds})")
    sr = clip.sample_rate
    n = len(clip.samples)
    bounds = [0]
    while n - bounds[-1] >= int(min_seconds * sr):
        length = int(round(rng.uniform(min_seconds, max_seconds) * sr))
        bounds.append(min(n, bounds[-1] + length))
    if len(bounds) == 1:
        return [clip]
    if bounds[-1] < n:
        bounds[-1] = n
    return [AudioClip(samples=clip.samples[a:b].copy(), sample_rate=sr) for a, b in zip(bounds, bounds[1:])]


def write_pseudo_manifest(items: Sequence[PseudoLabeledItem], path: Union[str, Path]) -> Path:
    df = pd.DataFrame(
        [
            {
                "path": it.audio,
                "duration": it.duration,
                "hypothesis": it.hypothesis if it.hypothesis else "-",
                "wps": it.words_per_second,
                "kept": int(it.kept),
                "language": it.language,
            }
            for it in items
        ],
        columns=PSEUDO_COLUMNS,
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, sep="\t", index=False, float_format="%.6f", lineterminator="\n")
    return path


def read_pseudo_manifest(path: Union[str, Path]) -> List[PseudoLabeledItem]:
    df = pd.read_csv(path, sep="\t", dtype={"hypothesis": str, "path": str, "language": str}, keep_default_na=False)
    missing = [c for c in PSEUDO_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: pseudo-label manifest lacks columns {missing}. Available: {list(df.columns)}")
    return [
        PseudoLabeledItem(
            audio=row.path,
            hypothesis="" if row.hypothesis == "-" else row.hypothesis,
            duration=float(row.duration),
            language=row.language,
            kept=bool(int(row.kept)),
        )
        for row in df.itertuples(index=False)
    ]
