from .models import TERMS, MostBatch, MostBatchSizes, MostLossWeights, MostStepResult
from .text import TextEncoder, interpolation_matrix, upsample_text
from .losses import aligned_mse, consistency_loss, text_reconstruction_loss
from .step import GATE_FRACTION, HEADS, SPEECH_ENCODER, TEXT_ENCODER, curriculum_gate, most_step

__all__ = [
    "TERMS",
    "MostBatch",
    "MostBatchSizes",
    "MostLossWeights",
    "MostStepResult",
    "TextEncoder",
    "interpolation_matrix",
    "upsample_text",
    "aligned_mse",
    "consistency_loss",
    "text_reconstruction_loss",
    "GATE_FRACTION",
    "HEADS",
    "SPEECH_ENCODER",
    "TEXT_ENCODER",
    "curriculum_gate",
    "most_step",
]
