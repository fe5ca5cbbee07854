from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from core.constants import N_MELS, SUBSAMPLING_FACTOR, PatternKind

GLOBAL_RELATIVE_CAP = 64


@dataclass(frozen=True)
class ConformerConfig:
    num_layers: int = 4
    model_dim: int = 64
    attention_heads: int = 4
    conv_kernel_size: int = 5
    subsampling_factor: int = SUBSAMPLING_FACTOR
    relative_attention: bool = True
    relative_cap: int = GLOBAL_RELATIVE_CAP
    input_dim: int = N_MELS
    ff_multiplier: int = 4
    use_conv: bool = True

    def __post_init__(self):
        if self.num_layers < 0:
            raise ValueError(f"num_layers must be >= 0, got {self.num_layers}")
        if self.model_dim <= 0 or self.attention_heads <= 0 or self.model_dim % self.attention_heads:
            raise ValueError(
                f"model_dim ({self.model_dim}) must be a positive multiple of attention_heads ({self.attention_heads})"
            )
        if self.conv_kernel_size <= 0 or self.conv_kernel_size % 2 == 0:
            raise ValueError(f"conv_kernel_size must be odd and positive, got {self.conv_kernel_size}")
        f = self.subsampling_factor
        if f < 1 or f & (f - 1):
            raise ValueError(f"subsampling_factor must be a power of two, got {f}")
        if self.relative_cap < 0:
            raise ValueError(f"relative_cap must be >= 0, got {self.relative_cap}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.attention_heads

    @property
    def stem_layers(self) -> int:
        return self.subsampling_factor.bit_length() - 1

    def for_pattern(self, pattern: AttentionPattern) -> "ConformerConfig":
        """Same model with the relative-bias table sized to the pattern's context or chunk."""
        cap = pattern.relative_cap(self.relative_cap)
        return self if cap == self.relative_cap else replace(self, relative_cap=cap)


CONFORMER_0_6B = ConformerConfig(num_layers=24, model_dim=1024, attention_heads=8, conv_kernel_size=5)
CONFORMER_2B = ConformerConfig(num_layers=32, model_dim=1536, attention_heads=16, conv_kernel_size=5)


@dataclass(frozen=True)
class AttentionPattern:
    kind: PatternKind = PatternKind.GLOBAL
    left: int = 0
    right: int = 0
    chunk: int = 0

    def __post_init__(self):
        kind = PatternKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is PatternKind.LOCAL and (self.left < 0 or self.right < 0):
            raise ValueError(f"local context must be non-negative, got left={self.left} right={self.right}")
        if kind is PatternKind.CHUNK and self.chunk <= 0:
            raise ValueError(f"chunk size must be positive, got {self.chunk}")

    @classmethod
    def global_(cls) -> "AttentionPattern":
        return cls(PatternKind.GLOBAL)

    @classmethod
    def local(cls, left: int, right: int) -> "AttentionPattern":
        return cls(PatternKind.LOCAL, left=left, right=right)

    @classmethod
    def chunked(cls, chunk: int) -> "AttentionPattern":
        return cls(PatternKind.CHUNK, chunk=chunk)

    @classmethod
    def parse(cls, text: str) -> "AttentionPattern":
        """'global', 'local:L:R' or 'chunk:S' (frames)."""
        parts = [p.strip() for p in str(text).strip().lower().split(":")]
        try:
            if parts[0] == PatternKind.GLOBAL.value and len(parts) == 1:
                return cls.global_()
            if parts[0] == PatternKind.LOCAL.value and len(parts) == 3:
                return cls.local(int(parts[1]), int(parts[2]))
            if parts[0] == PatternKind.CHUNK.value and len(parts) == 2:
                return cls.chunked(int(parts[1]))
        except ValueError as e:
            raise ValueError(f"Bad attention pattern {text!r}: {e}") from None
        raise ValueError(f"Bad attention pattern {text!r}. Expected global, local:L:R or chunk:S")

    @property
    def label(self) -> str:
        if self.kind is PatternKind.LOCAL:
            return f"local({self.left},{self.right})"
        if self.kind is PatternKind.CHUNK:
            return f"chunk({self.chunk})"
        return "global"

    @property
    def spec(self) -> str:
        if self.kind is PatternKind.LOCAL:
            return f"local:{self.left}:{self.right}"
        if self.kind is PatternKind.CHUNK:
            return f"chunk:{self.chunk}"
        return "global"

    def relative_cap(self, default: Optional[int] = None) -> Optional[int]:
        """Clip distance for the relative bias: the context or chunk width; `default` under global attention."""
        if self.kind is PatternKind.LOCAL:
            return max(self.left, self.right)
        if self.kind is PatternKind.CHUNK:
            return self.chunk
        return default


@dataclass(frozen=True)
class ReceptiveFieldReport:
    pattern: str
    num_layers: int
    attention_left_frames: Optional[int]
    attention_right_frames: Optional[int]
    attention_rf_frames: Optional[int]
    attention_rf_width: Optional[int]
    conv_rf_frames: int
    total_rf_frames: Optional[int]
    total_rf_seconds: Optional[float]
    attention_rf_seconds: Optional[float]
    encoder_frame_duration: float
