from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import jiwer


@dataclass(frozen=True)
class EditCounts:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    reference_length: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def rate(self) -> float:
        if self.reference_length == 0:
            raise ValueError("error rate is undefined for an empty reference")
        return self.errors / self.reference_length

    @property
    def deletion_share(self) -> float:
        if self.reference_length == 0:
            raise ValueError("deletion share is undefined for an empty reference")
        return self.deletions / self.reference_length

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.reference_length + other.reference_length,
        )


# Spaces are graphemes, so character scoring keeps them.
_CHARS = jiwer.Compose([jiwer.ReduceToListOfListOfChars()])


def _from_output(out, reference_length: int) -> EditCounts:
    return EditCounts(out.substitutions, out.deletions, out.insertions, reference_length)


def edit_counts(reference: Sequence[str], hypothesis: Sequence[str]) -> EditCounts:
    """Minimum-edit alignment counts between two token sequences."""
    ref, hyp = [str(t) for t in reference], [str(t) for t in hypothesis]
    bad = [t for t in ref + hyp if not t or any(c.isspace() for c in t)]
    if bad:
        raise ValueError(f"tokens must be non-empty and free of whitespace, got {bad[:5]}")
    if not ref:
        return EditCounts(insertions=len(hyp))
    return _from_output(jiwer.process_words(" ".join(ref), " ".join(hyp)), len(ref))


def word_counts(reference: str, hypothesis: str) -> EditCounts:
    return edit_counts(reference.split(), hypothesis.split())


def char_counts(reference: str, hypothesis: str) -> EditCounts:
    if not reference:
        return EditCounts(insertions=len(hypothesis))
    out = jiwer.process_characters(reference, hypothesis, reference_transform=_CHARS, hypothesis_transform=_CHARS)
    return _from_output(out, len(reference))


def wer(reference: Sequence[str], hypothesis: Sequence[str]) -> float:
    if len(reference) == 0:
        raise ValueError("WER is undefined for an empty reference")
    return edit_counts(reference, hypothesis).rate


def cer(reference: str, hypothesis: str) -> float:
    if len(reference) == 0:
        raise ValueError("CER is undefined for an empty reference")
    return char_counts(reference, hypothesis).rate
