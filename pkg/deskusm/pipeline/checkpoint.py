from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from bestrq import RandomQuantizer, quantizer_from_state, quantizer_state
from ctc import TokenVocab
from encoder import ConformerConfig, UsmModel
from most import TextEncoder
from numerics import Adam
from utils import CheckpointError, atomic_write_text, read_array_dir, write_array_dir

from .config import TrainConfig, fingerprint, resolved_text

log = logging.getLogger(__name__)

CHECKPOINT_DIR = "checkpoints"
CONFIG_FILE = "config.conf"
_STEP_DIR = re.compile(r"^step-(\d{8})$")

MODEL_PREFIX = "model."
TEXT_PREFIX = "text_encoder."
_BODY_PREFIXES = ("encoder.", "speech_layer.")


@dataclass(frozen=True, eq=False)
class Checkpoint:
    path: Path
    arrays: Dict[str, np.ndarray]
    header: Dict[str, str]

    @property
    def step(self) -> int:
        return int(self.header.get("step", 0))

    @property
    def fingerprint(self) -> str:
        return self.header.get("fingerprint", "")

    @property
    def stage(self) -> str:
        return self.header.get("stage", "")

    def section(self, prefix: str) -> Dict[str, np.ndarray]:
        return {k[len(prefix):]: v for k, v in self.arrays.items() if k.startswith(prefix)}

    def model_state(self) -> Dict[str, np.ndarray]:
        return self.section(MODEL_PREFIX)

    def has(self, prefix: str) -> bool:
        return any(k.startswith(prefix) for k in self.arrays)

    def conformer(self) -> ConformerConfig:
        raw = json.loads(self.header["conformer"])
        names = {f.name for f in fields(ConformerConfig)}
        return ConformerConfig(**{k: v for k, v in raw.items() if k in names})

    def vocab(self) -> TokenVocab:
        return TokenVocab(tuple(json.loads(self.header["graphemes"])))

    def quantizer(self) -> Optional[RandomQuantizer]:
        if "quantizer.projection" not in self.arrays:
            return None
        return quantizer_from_state(self.arrays)

    def optimizer_state(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.arrays.items() if k.startswith("optim.")}


def checkpoint_path(run_dir: Union[str, Path], step: int) -> Path:
    return Path(run_dir) / CHECKPOINT_DIR / f"step-{step:08d}"


def list_checkpoints(run_dir: Union[str, Path]) -> List[Path]:
    root = Path(run_dir) / CHECKPOINT_DIR
    if not root.is_dir():
        return []
    found = [p for p in root.iterdir() if p.is_dir() and _STEP_DIR.match(p.name)]
    return sorted(found, key=lambda p: p.name)


def latest_checkpoint(run_dir: Union[str, Path]) -> Optional[Path]:
    found = list_checkpoints(run_dir)
    return found[-1] if found else None


def save_checkpoint(
    run_dir: Union[str, Path],
    step: int,
    cfg: TrainConfig,
    model: UsmModel,
    quantizer: Optional[RandomQuantizer] = None,
    optimizer: Optional[Adam] = None,
    text_encoder: Optional[TextEncoder] = None,
    extra: Optional[Dict[str, np.ndarray]] = None,
    extra_header: Optional[Dict[str, str]] = None,
) -> Path:
    arrays: Dict[str, np.ndarray] = {MODEL_PREFIX + k: v for k, v in model.state_dict().items()}
    if text_encoder is not None:
        arrays.update({TEXT_PREFIX + k: v for k, v in text_encoder.state_dict().items()})
    if quantizer is not None:
        arrays.update(quantizer_state(quantizer))
    if optimizer is not None:
        arrays.update(optimizer.state_dict())
    if extra:
        arrays.update(extra)
    header = {
        "kind": "checkpoint",
        "stage": cfg.stage.value,
        "step": str(step),
        "fingerprint": fingerprint(cfg),
        "conformer": json.dumps(asdict(model.config), sort_keys=True),
        "graphemes": json.dumps(cfg.graphemes),
        "vocab_size": str(model.vocab_size),
        "num_codebooks": str(0 if model.bestrq_heads is None else model.bestrq_heads.num_codebooks),
        "codebook_size": str(0 if model.bestrq_heads is None else model.bestrq_heads.codebook_size),
        "speech_layer": str(int(model.speech_layer is not None)),
    }
    header.update(extra_header or {})
    config_text = resolved_text(cfg)
    path = write_array_dir(checkpoint_path(run_dir, step), arrays, header, extra_files={CONFIG_FILE: config_text})
    atomic_write_text(Path(run_dir) / CONFIG_FILE, config_text)
    log.info("Saved checkpoint %s (%d arrays)", path, len(arrays))
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    arrays, header = read_array_dir(path)
    if header.get("kind") != "checkpoint":
        raise CheckpointError(f"{path}: not a model checkpoint (kind={header.get('kind')!r})")
    return Checkpoint(path=path, arrays=arrays, header=header)


def check_resume(ckpt: Checkpoint, cfg: TrainConfig) -> None:
    want = fingerprint(cfg)
    if ckpt.fingerprint != want:
        raise CheckpointError(
            f"{ckpt.path}: config fingerprint {ckpt.fingerprint[:12]} does not match the current config {want[:12]}; "
            "refusing to resume"
        )


def model_from_checkpoint(ckpt: Checkpoint, rng: Optional[np.random.Generator] = None) -> UsmModel:
    """Rebuild the exact architecture recorded in the checkpoint and load every model array."""
    rng = rng if rng is not None else np.random.default_rng(0)
    model = UsmModel(
        ckpt.conformer(),
        int(ckpt.header["vocab_size"]),
        rng,
        num_codebooks=int(ckpt.header.get("num_codebooks", 0)),
        codebook_size=int(ckpt.header.get("codebook_size", 0)),
        speech_layer=ckpt.header.get("speech_layer") == "1",
    )
    model.load_state_dict(ckpt.model_state())
    return model


def init_encoder_from(model: UsmModel, ckpt: Checkpoint, heads: bool = False) -> List[str]:
    """Copy encoder (and speech-only layer) arrays; the CTC head stays fresh unless `heads`.

    Every encoder array must exist on both sides. Only a speech-only layer the checkpoint
    lacks may stay at init. Layout and shape mismatches raise ValueError naming the arrays.
    """
    state = ckpt.model_state()
    keep = {k: v for k, v in state.items() if k.startswith(_BODY_PREFIXES)}
    if heads:
        keep.update({k: v for k, v in state.items() if k.startswith(("bestrq_heads.", "ctc_head."))})
    has_speech_layer = any(k.startswith("speech_layer.") for k in keep)
    if has_speech_layer and model.speech_layer is None:
        raise ValueError(f"{ckpt.path}: checkpoint has a speech-only layer but the model was built without one")

    body = {n for n, _ in model.named_parameters() if n.startswith(_BODY_PREFIXES)}
    if not has_speech_layer:
        body = {n for n in body if not n.startswith("speech_layer.")}
    only_ckpt = sorted(k for k in keep if k.startswith(_BODY_PREFIXES) and k not in body)
    only_model = sorted(body - set(keep))
    if only_ckpt or only_model:
        raise ValueError(
            f"{ckpt.path}: encoder layout differs from the model. "
            f"Only in checkpoint: {only_ckpt}. Only in model: {only_model}"
        )
    missing = model.load_state_dict(keep, strict=False)
    log.info("Initialised from %s (step %d); %d arrays left at init", ckpt.path, ckpt.step, len(missing))
    return missing
