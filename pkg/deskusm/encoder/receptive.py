from __future__ import annotations

from fractions import Fraction
from typing import Optional, Tuple

from core.constants import ENCODER_FRAME, PatternKind

from .models import AttentionPattern, ConformerConfig, ReceptiveFieldReport


def _attend(lo: int, hi: int, pattern: AttentionPattern) -> Tuple[Optional[int], Optional[int]]:
    if pattern.kind is PatternKind.LOCAL:
        return lo - pattern.left, hi + pattern.right
    if pattern.kind is PatternKind.CHUNK:
        s = pattern.chunk
        return (lo // s) * s, (hi // s) * s + s - 1
    return None, None


def influence_interval(
    cfg: ConformerConfig,
    pattern: AttentionPattern,
    position: int,
    num_frames: Optional[int] = None,
) -> Tuple[Optional[int], Optional[int]]:
    """Encoder-rate input interval [lo, hi] that can reach output `position`; None means unbounded."""
    half = (cfg.conv_kernel_size - 1) // 2 if cfg.use_conv else 0
    lo, hi = position, position
    for _ in range(cfg.num_layers):
        lo, hi = lo - half, hi + half
        lo, hi = _attend(lo, hi, pattern)
        if lo is None:
            if num_frames is None:
                return None, None
            return 0, num_frames - 1
    if num_frames is not None:
        lo, hi = max(lo, 0), min(hi, num_frames - 1)
    return lo, hi


def _seconds(frames: Optional[int], frame_duration: float) -> Optional[float]:
    if frames is None:
        return None
    return float(Fraction(str(frame_duration)) * frames)


def receptive_field(
    cfg: ConformerConfig,
    pattern: AttentionPattern,
    encoder_frame_duration: float = ENCODER_FRAME,
    num_frames: Optional[int] = None,
) -> ReceptiveFieldReport:
    """Context frames (excluding the frame itself) visible to one output, attention-only and combined."""
    layers = cfg.num_layers
    if pattern.kind is PatternKind.LOCAL:
        left, right = layers * pattern.left, layers * pattern.right
        attention = left + right
    elif pattern.kind is PatternKind.CHUNK:
        left = right = pattern.chunk - 1 if layers else 0
        attention = pattern.chunk - 1 if layers else 0
    else:
        full = num_frames - 1 if num_frames is not None else None
        left = right = attention = full if layers else 0

    conv = layers * (cfg.conv_kernel_size - 1) if cfg.use_conv else 0

    offsets = range(pattern.chunk) if pattern.kind is PatternKind.CHUNK else range(1)
    widths = []
    for t in offsets:
        lo, hi = influence_interval(cfg, pattern, t, None)
        widths.append(None if lo is None else hi - lo)
    if any(w is None for w in widths):
        total = num_frames - 1 if num_frames is not None else None
    else:
        total = max(widths)
        if num_frames is not None:
            total = min(total, num_frames - 1)

    return ReceptiveFieldReport(
        pattern=pattern.label,
        num_layers=layers,
        attention_left_frames=left,
        attention_right_frames=right,
        attention_rf_frames=attention,
        attention_rf_width=None if attention is None else attention + 1,
        conv_rf_frames=conv,
        total_rf_frames=total,
        total_rf_seconds=_seconds(total, encoder_frame_duration),
        attention_rf_seconds=_seconds(attention, encoder_frame_duration),
        encoder_frame_duration=encoder_frame_duration,
    )


def _fmt(value) -> str:
    if value is None:
        return "unbounded"
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def format_report(report: ReceptiveFieldReport) -> str:
    rows = [
        ("pattern", report.pattern),
        ("layers", report.num_layers),
        ("attention left frames", report.attention_left_frames),
        ("attention right frames", report.attention_right_frames),
        ("attention rf frames", report.attention_rf_frames),
        ("attention rf width", report.attention_rf_width),
        ("attention rf seconds", report.attention_rf_seconds),
        ("conv rf frames", report.conv_rf_frames),
        ("total rf frames", report.total_rf_frames),
        ("total rf seconds", report.total_rf_seconds),
    ]
    width = max(len(k) for k, _ in rows)
    lines = [f"{k.ljust(width)}  {_fmt(v)}" for k, v in rows]
    lines.append(
        f"rf pattern={report.pattern} layers={report.num_layers} "
        f"frames={_fmt(report.attention_rf_frames)} seconds={_fmt(report.attention_rf_seconds)} "
        f"total_frames={_fmt(report.total_rf_frames)} total_seconds={_fmt(report.total_rf_seconds)}"
    )
    return "\n".join(lines)
