from .models import BestRqStats, MaskSpec, QuantizedTargets, RandomQuantizer
from .quantizer import (
    STATS,
    make_quantizer,
    quantize,
    quantizer_from_state,
    quantizer_state,
    stack_frames,
    verify_quantizer,
)
from .masking import apply_mask, draw_mask, encoder_mask, item_seed, span_mask
from .loss import MultiSoftmaxHeads, bestrq_loss, masked_accuracy, prepare_example

__all__ = [
    "BestRqStats",
    "MaskSpec",
    "QuantizedTargets",
    "RandomQuantizer",
    "STATS",
    "make_quantizer",
    "quantize",
    "quantizer_from_state",
    "quantizer_state",
    "stack_frames",
    "verify_quantizer",
    "apply_mask",
    "draw_mask",
    "encoder_mask",
    "item_seed",
    "span_mask",
    "MultiSoftmaxHeads",
    "bestrq_loss",
    "masked_accuracy",
    "prepare_example",
]
