from .models import CONFORMER_0_6B, CONFORMER_2B, GLOBAL_RELATIVE_CAP, AttentionPattern, ConformerConfig, ReceptiveFieldReport
from .masks import build_attention_mask, mask_bias, relative_index
from .conformer import (
    ConformerBlock,
    ConformerEncoder,
    ConvModule,
    FeedForward,
    SelfAttention,
    Subsampling,
    conformer_forward,
    conformer_param_count,
)
from .receptive import format_report, influence_interval, receptive_field
from .speech_model import DECODER_GROUP, ENCODER_GROUP, UsmModel

__all__ = [
    "CONFORMER_0_6B",
    "CONFORMER_2B",
    "GLOBAL_RELATIVE_CAP",
    "AttentionPattern",
    "ConformerConfig",
    "ReceptiveFieldReport",
    "build_attention_mask",
    "mask_bias",
    "relative_index",
    "ConformerBlock",
    "ConformerEncoder",
    "ConvModule",
    "FeedForward",
    "SelfAttention",
    "Subsampling",
    "conformer_forward",
    "conformer_param_count",
    "format_report",
    "influence_interval",
    "receptive_field",
    "DECODER_GROUP",
    "ENCODER_GROUP",
    "UsmModel",
]
