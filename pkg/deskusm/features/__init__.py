from .models import AudioClip, FeatureSequence
from .audio import read_wav, resample, write_wav
from .logmel import empty_filters, log_mel, mel_filterbank, normalize_features, num_frames
from .dump import read_feature_dump, write_feature_dump

__all__ = [
    "AudioClip",
    "FeatureSequence",
    "read_wav",
    "write_wav",
    "resample",
    "empty_filters",
    "log_mel",
    "mel_filterbank",
    "normalize_features",
    "num_frames",
    "read_feature_dump",
    "write_feature_dump",
]
