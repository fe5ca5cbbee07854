from enum import Enum


class Stage(str, Enum):
    PRETRAIN = "pretrain"
    MOST = "most"
    FINETUNE = "finetune"
    ADAPT = "adapt"
    NST = "nst"


class PatternKind(str, Enum):
    GLOBAL = "global"
    LOCAL = "local"
    CHUNK = "chunk"


class Source(str, Enum):
    SUPERVISED = "supervised"
    PSEUDO = "pseudo"


SAMPLE_RATE = 16000
N_MELS = 128
FRAME_WINDOW = 0.025
FRAME_HOP = 0.010
MEL_FMIN = 125.0
MEL_FMAX = 7600.0
ENERGY_FLOOR = 1e-10

SUBSAMPLING_FACTOR = 4
ENCODER_FRAME = FRAME_HOP * SUBSAMPLING_FACTOR

BLANK_ID = 0
BLANK_SYMBOL = "<b>"

# Full-scale MOST batch composition: un-transcribed speech, unspoken text, paired.
MOST_BATCH_RATIO = (4096, 8192, 1024)

VALID_STAGES = {s.value for s in Stage}
