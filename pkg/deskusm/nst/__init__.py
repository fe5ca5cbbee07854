from .models import DEFAULT_MAX_WPS, DEFAULT_MIN_WPS, PseudoLabeledItem, word_count
from .labeling import (
    PSEUDO_COLUMNS,
    filter_pseudo,
    mark_kept,
    pseudo_label,
    read_pseudo_manifest,
    segment_clip,
    write_pseudo_manifest,
)
from .mixing import MixedStream, mix_datasets

__all__ = [
    "DEFAULT_MAX_WPS",
    "DEFAULT_MIN_WPS",
    "PseudoLabeledItem",
    "word_count",
    "PSEUDO_COLUMNS",
    "filter_pseudo",
    "mark_kept",
    "pseudo_label",
    "read_pseudo_manifest",
    "segment_clip",
    "write_pseudo_manifest",
    "MixedStream",
    "mix_datasets",
]
