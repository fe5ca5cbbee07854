"""Directory of named arrays: a text manifest plus one little-endian blob.

manifest.txt holds `# key=value` header lines, then one tab-separated row per array:
name, dtype, shape (comma-separated, empty for scalars), byte offset, byte count, sha256.
"""
from __future__ import annotations

import hashlib
import logging
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from .files import atomic_directory

log = logging.getLogger(__name__)

MANIFEST = "manifest.txt"
BLOB = "arrays.bin"


class CheckpointError(ValueError):
    pass


def _le(dtype: np.dtype) -> np.dtype:
    return np.dtype(dtype).newbyteorder("<")


def write_array_dir(
    path: Union[str, Path],
    arrays: Mapping[str, np.ndarray],
    header: Optional[Mapping[str, str]] = None,
    extra_files: Optional[Mapping[str, str]] = None,
) -> Path:
    path = Path(path)
    with atomic_directory(path) as tmp:
        rows = []
        offset = 0
        with open(tmp / BLOB, "wb") as blob:
            for name in sorted(arrays):
                if any(c in name for c in "\t\n"):
                    raise ValueError(f"array name {name!r} contains whitespace control characters")
                arr = np.asarray(arrays[name])
                dt = _le(arr.dtype)
                data = np.ascontiguousarray(arr, dtype=dt).tobytes()
                blob.write(data)
                shape = ",".join(str(s) for s in arr.shape)
                rows.append(f"{name}\t{dt.str}\t{shape}\t{offset}\t{len(data)}\t{hashlib.sha256(data).hexdigest()}")
                offset += len(data)
        lines = [f"# {k}={v}" for k, v in (header or {}).items()]
        (tmp / MANIFEST).write_text("\n".join(lines + rows) + "\n", encoding="utf-8")
        for fname, text in (extra_files or {}).items():
            (tmp / fname).write_text(text, encoding="utf-8")
    log.debug("Wrote %d arrays (%d bytes) to %s", len(arrays), offset, path)
    return path


def read_manifest(path: Union[str, Path]) -> Tuple[Dict[str, str], list]:
    path = Path(path)
    mf = path / MANIFEST
    if not mf.exists():
        raise CheckpointError(f"{path}: no {MANIFEST}")
    header: Dict[str, str] = {}
    rows = []
    for line in mf.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
            continue
        parts = line.split("\t")
        if len(parts) != 6:
            raise CheckpointError(f"{mf}: malformed row {line[:60]!r}")
        rows.append(parts)
    return header, rows


def read_array_dir(path: Union[str, Path], verify: bool = True) -> Tuple[Dict[str, np.ndarray], Dict[str, str]]:
    path = Path(path)
    header, rows = read_manifest(path)
    raw = (path / BLOB).read_bytes() if (path / BLOB).exists() else b""
    arrays: Dict[str, np.ndarray] = {}
    corrupt = []
    for name, dtype, shape, offset, nbytes, digest in rows:
        start, size = int(offset), int(nbytes)
        chunk = raw[start:start + size]
        if len(chunk) != size or (verify and hashlib.sha256(chunk).hexdigest() != digest):
            corrupt.append(name)
            continue
        dims = tuple(int(s) for s in shape.split(",")) if shape else ()
        arrays[name] = np.frombuffer(chunk, dtype=np.dtype(dtype)).reshape(dims).astype(np.dtype(dtype).newbyteorder("="))
    if corrupt:
        raise CheckpointError(f"{path}: checksum or size mismatch for arrays {corrupt}")
    return arrays, header
