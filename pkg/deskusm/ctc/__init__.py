from .models import CtcResult, LabelSequence, TokenVocab
from .loss import CtcNll, ctc_loss, ctc_min_frames
from .decode import collapse, ctc_greedy_decode
from .brute import ctc_brute_force

__all__ = [
    "CtcResult",
    "LabelSequence",
    "TokenVocab",
    "CtcNll",
    "ctc_loss",
    "ctc_min_frames",
    "collapse",
    "ctc_greedy_decode",
    "ctc_brute_force",
]
