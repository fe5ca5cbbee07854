from __future__ import annotations

from pathlib import Path
from typing import Dict, Union

import numpy as np

from .models import FeatureSequence

_MAGIC = "deskusm-feat"


def write_feature_dump(path: Union[str, Path], seq: FeatureSequence) -> None:
    """Text header line, then frames as little-endian float64, row-major."""
    t, d = seq.frames.shape
    header = f"{_MAGIC} dims={d} frames={t} hop={seq.frame_hop!r} window={seq.frame_window!r} dtype=<f8\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(seq.frames, dtype="<f8").tobytes())


def _parse_header(line: str) -> Dict[str, str]:
    parts = line.strip().split()
    if not parts or parts[0] != _MAGIC:
        raise ValueError(f"not a feature dump (header {line.strip()[:40]!r})")
    return dict(p.split("=", 1) for p in parts[1:])


def read_feature_dump(path: Union[str, Path]) -> FeatureSequence:
    with open(path, "rb") as fh:
        header = _parse_header(fh.readline().decode("ascii"))
        payload = fh.read()
    dims, frames = int(header["dims"]), int(header["frames"])
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != dims * frames:
        raise ValueError(f"{path}: expected {dims * frames} values, found {data.size}")
    return FeatureSequence(
        frames=data.reshape(frames, dims).astype(np.float64),
        frame_hop=float(header["hop"]),
        frame_window=float(header["window"]),
    )
