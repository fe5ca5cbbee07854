from __future__ import annotations

import hashlib
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.config import RUNS_DIR
from core.constants import Stage
from encoder import GLOBAL_RELATIVE_CAP, AttentionPattern, ConformerConfig
from bestrq import MaskSpec
from most import MostBatchSizes, MostLossWeights

log = logging.getLogger(__name__)

DEFAULT_GRAPHEMES = " abcdefghijklmnopqrstuvwxyz"

# Keys that do not change the training trajectory; excluded from the fingerprint.
NON_TRAJECTORY_KEYS = {"steps", "output_dir", "checkpoint_every", "log_every", "eval_manifest"}

_PATH_KEYS = (
    "unlabeled_manifest",
    "train_manifest",
    "eval_manifest",
    "text_corpus",
    "init_checkpoint",
    "teacher_checkpoint",
    "teacher_adapters",
)
_NULLABLE_KEYS = _PATH_KEYS + ("relative_cap",)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    stage: Stage
    seed: int

    num_layers: int = Field(4, ge=0)
    model_dim: int = Field(64, gt=0)
    attention_heads: int = Field(4, gt=0)
    conv_kernel_size: int = Field(5, gt=0)
    relative_attention: bool = True
    relative_cap: Optional[int] = Field(None, ge=0)
    use_conv: bool = True
    pattern: str = "chunk:50"
    graphemes: str = DEFAULT_GRAPHEMES

    num_codebooks: int = Field(16, ge=1)
    codebook_size: int = Field(256, ge=2)
    codebook_dim: int = Field(16, ge=1)
    mask_probability: float = Field(0.01, ge=0.0, le=1.0)
    mask_span: float = Field(0.4, gt=0.0)
    mask_noise_mean: float = 0.0
    mask_noise_std: float = Field(0.1, ge=0.0)

    batch_size: int = Field(8, ge=1)
    steps: int = Field(100, ge=0)
    checkpoint_every: int = Field(50, ge=1)
    log_every: int = Field(10, ge=1)
    encoder_lr: float = Field(1e-3, ge=0.0)
    decoder_lr: float = Field(1e-3, ge=0.0)
    encoder_warmup: int = Field(0, ge=0)
    decoder_warmup: int = Field(0, ge=0)
    clip_norm: float = Field(5.0, ge=0.0)
    precision: str = "float64"

    most_scale: float = Field(1.0 / 1024, gt=0.0)
    w_bestrq: float = Field(1.0, ge=0.0)
    w_asr: float = Field(1.0, ge=0.0)
    w_consistency: float = Field(1.0, ge=0.0)
    w_reconstruction: float = Field(1.0, ge=0.0)

    adapter_language: str = ""
    adapter_bottleneck: int = Field(0, ge=0)
    adapter_ratio: float = Field(0.023, gt=0.0, lt=1.0)

    teacher_adapters: Optional[str] = None
    min_wps: float = Field(0.5, ge=0.0)
    max_wps: float = Field(6.0, gt=0.0)
    mixing_ratio: float = Field(0.5, gt=0.0, le=1.0)
    segment_min_seconds: float = Field(0.0, ge=0.0)
    segment_max_seconds: float = Field(0.0, ge=0.0)

    unlabeled_manifest: Optional[str] = None
    train_manifest: Optional[str] = None
    eval_manifest: Optional[str] = None
    text_corpus: Optional[str] = None
    init_checkpoint: Optional[str] = None
    teacher_checkpoint: Optional[str] = None
    output_dir: str = str(RUNS_DIR / "default")

    @field_validator("pattern")
    @classmethod
    def _pattern(cls, v: str) -> str:
        return AttentionPattern.parse(v).spec

    @field_validator("precision")
    @classmethod
    def _precision(cls, v: str) -> str:
        if v not in ("float64", "float32"):
            raise ValueError(f"precision must be float64 or float32, got {v!r}")
        return v

    @field_validator("graphemes")
    @classmethod
    def _graphemes(cls, v: str) -> str:
        if len(set(v)) != len(v) or not v:
            raise ValueError(f"graphemes must be non-empty and unique, got {v!r}")
        return v

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        bound = self.attention().relative_cap()
        if bound is not None and self.relative_cap is not None and self.relative_cap != bound:
            raise ValueError(
                f"relative_cap={self.relative_cap} conflicts with pattern {self.pattern}, which fixes it at {bound}; "
                "leave relative_cap unset for local and chunk patterns"
            )
        ConformerConfig(**self.conformer_kwargs())
        if self.min_wps >= self.max_wps:
            raise ValueError(f"min_wps ({self.min_wps}) must be below max_wps ({self.max_wps})")
        missing = [f"{k}={getattr(self, k)}" for k in _PATH_KEYS if getattr(self, k) and not Path(getattr(self, k)).exists()]
        if missing:
            raise ValueError(f"referenced files do not exist: {missing}")
        return self

    def conformer_kwargs(self) -> Dict[str, object]:
        return {
            "num_layers": self.num_layers,
            "model_dim": self.model_dim,
            "attention_heads": self.attention_heads,
            "conv_kernel_size": self.conv_kernel_size,
            "relative_attention": self.relative_attention,
            "relative_cap": self.attention().relative_cap(
                GLOBAL_RELATIVE_CAP if self.relative_cap is None else self.relative_cap
            ),
            "use_conv": self.use_conv,
        }

    def conformer(self) -> ConformerConfig:
        return ConformerConfig(**self.conformer_kwargs())

    def attention(self) -> AttentionPattern:
        return AttentionPattern.parse(self.pattern)

    def mask_spec(self) -> MaskSpec:
        return MaskSpec(
            start_probability=self.mask_probability,
            span=self.mask_span,
            noise_mean=self.mask_noise_mean,
            noise_std=self.mask_noise_std,
            seed=self.seed,
        )

    def most_weights(self) -> MostLossWeights:
        return MostLossWeights(self.w_bestrq, self.w_asr, self.w_consistency, self.w_reconstruction)

    def most_sizes(self) -> MostBatchSizes:
        return MostBatchSizes.scaled(self.most_scale)


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip() if not line.lstrip().startswith("graphemes") else line.rstrip("\n")


def parse_config_text(text: str, base_dir: Path, seen: Optional[Set[Path]] = None) -> Dict[str, str]:
    """Flat `key = value` lines; `include <path>` pulls in another file (later keys win)."""
    seen = set() if seen is None else seen
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line.strip():
            continue
        if line.startswith("include "):
            values.update(load_config_file(base_dir / line[len("include "):].strip(), seen))
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key = key.strip()
        value = value.strip() if key != "graphemes" else _unquote(value.strip())
        values[key] = value
    return values


def _unquote(v: str) -> str:
    if len(v) >= 2 and v[0] == v[-1] == '"':
        return v[1:-1]
    return v


def load_config_file(path: Union[str, Path], seen: Optional[Set[Path]] = None) -> Dict[str, str]:
    path = Path(path).resolve()
    seen = set() if seen is None else seen
    if path in seen:
        raise ValueError(f"config include cycle through {path}")
    if not path.exists():
        raise ValueError(f"config file not found: {path}")
    seen.add(path)
    try:
        values = parse_config_text(path.read_text(encoding="utf-8"), path.parent, seen)
    finally:
        seen.discard(path)
    for key in _PATH_KEYS + ("output_dir",):
        if values.get(key) and values[key] != "-" and not Path(values[key]).is_absolute():
            values[key] = str((path.parent / values[key]).resolve())
    return values


def parse_overrides(pairs: Iterable[str]) -> Dict[str, str]:
    out = {}
    for p in pairs:
        key, sep, value = p.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"override must look like key=value, got {p!r}")
        out[key.strip()] = _unquote(value.strip()) if key.strip() == "graphemes" else value.strip()
    return out


def build_config(values: Dict[str, str]) -> TrainConfig:
    clean = {k: (None if v in ("", "-") and k in _NULLABLE_KEYS else v) for k, v in values.items()}
    defaulted = sorted(set(TrainConfig.model_fields) - set(clean))
    if defaulted:
        log.debug("Config keys using defaults: %s", defaulted)
    try:
        return TrainConfig(**clean)
    except ValidationError as e:
        raise ValueError(f"invalid configuration: {e}") from None


def load_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> TrainConfig:
    values = load_config_file(path) if path else {}
    values.update(parse_overrides(overrides))
    return build_config(values)


def _render(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "true" if value else "false"
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def resolved_items(cfg: TrainConfig) -> List[tuple]:
    return [(k, _render(getattr(cfg, k))) for k in sorted(TrainConfig.model_fields)]


def resolved_text(cfg: TrainConfig) -> str:
    lines = []
    for k, v in resolved_items(cfg):
        lines.append(f'{k} = "{v}"' if k == "graphemes" else f"{k} = {v}")
    return "\n".join(lines) + "\n"


def fingerprint(cfg: TrainConfig) -> str:
    h = hashlib.sha256()
    for k, v in resolved_items(cfg):
        if k in NON_TRAJECTORY_KEYS:
            continue
        h.update(f"{k}={v}\n".encode("utf-8"))
    return h.hexdigest()
