from __future__ import annotations

import logging
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from bestrq import MaskSpec, RandomQuantizer, item_seed
from core.constants import ENCODER_FRAME
from encoder import AttentionPattern, UsmModel
from numerics import Adam, Tensor, forward_backward

from .losses import consistency_loss, text_reconstruction_loss
from .models import TERMS, MostBatch, MostBatchSizes, MostLossWeights, MostStepResult
from .text import TextEncoder

log = logging.getLogger(__name__)

GATE_FRACTION = 0.17

SPEECH_ENCODER = "speech_encoder"
TEXT_ENCODER = "text_encoder"
HEADS = "heads"


def curriculum_gate(total_steps: int) -> int:
    """First step at which unspoken text is used."""
    return int(round(GATE_FRACTION * total_steps))


def _accounting_groups(model: UsmModel, text_encoder: TextEncoder) -> Dict[str, List[Tuple[str, Tensor]]]:
    groups: Dict[str, List[Tuple[str, Tensor]]] = {SPEECH_ENCODER: [], HEADS: [], TEXT_ENCODER: []}
    for name, t in model.named_parameters():
        key = HEADS if name.startswith(("ctc_head.", "bestrq_heads.")) else SPEECH_ENCODER
        groups[key].append((name, t))
    groups[TEXT_ENCODER] = text_encoder.named_parameters("text_encoder.")
    return groups


def _grad_snapshot(groups) -> Dict[str, np.ndarray]:
    return {
        name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
        for params in groups.values()
        for name, t in params
    }


def _contribution(groups, before: Dict[str, np.ndarray]) -> Dict[str, float]:
    out = {}
    for g, params in groups.items():
        worst = 0.0
        for name, t in params:
            if t.grad is None:
                continue
            worst = max(worst, float(np.max(np.abs(t.grad - before[name]))) if t.size else 0.0)
        out[g] = worst
    return out


def _mean(terms: List[Tensor]) -> Optional[Tensor]:
    if not terms:
        return None
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def most_step(
    model: UsmModel,
    text_encoder: TextEncoder,
    batch: MostBatch,
    sizes: MostBatchSizes,
    weights: MostLossWeights,
    step: int,
    gate_step: int,
    quantizer: RandomQuantizer,
    mask_spec: MaskSpec,
    pattern: AttentionPattern,
    optimizer: Optional[Adam] = None,
) -> MostStepResult:
    """One joint step: each term is back-propagated on its own, in fixed order, before the update."""
    missing = batch.check(sizes)
    gated = step < gate_step
    w = weights.as_dict()
    groups = _accounting_groups(model, text_encoder)

    model.zero_grad()
    text_encoder.zero_grad()

    skipped = 0

    def bestrq_term() -> Optional[Tensor]:
        loss, _ = model.masked_prediction_loss(batch.unlabeled_speech, quantizer, mask_spec, pattern, step)
        return loss

    def asr_term() -> Optional[Tensor]:
        nonlocal skipped
        loss, bad = model.asr_loss(batch.paired, pattern)
        skipped += bad
        return loss

    def consistency_term() -> Optional[Tensor]:
        nonlocal skipped
        parts = []
        for features, labels in batch.paired:
            part = consistency_loss(model, text_encoder, features, labels, pattern)
            if part is None:
                skipped += 1
            else:
                parts.append(part)
        return _mean(parts)

    def reconstruction_term() -> Optional[Tensor]:
        nonlocal skipped
        if gated:
            return None
        text_spec = replace(mask_spec, frame_hop=ENCODER_FRAME)
        parts = []
        for i, labels in enumerate(batch.unlabeled_text):
            spec = replace(text_spec, seed=item_seed(mask_spec.seed + 1, step, i))
            result = text_reconstruction_loss(model, text_encoder, labels, spec, pattern)
            if result.infeasible:
                skipped += 1
            else:
                parts.append(result.loss)
        return _mean(parts)

    builders: Dict[str, Callable[[], Optional[Tensor]]] = {
        "bestrq": bestrq_term,
        "asr": asr_term,
        "consistency": consistency_term,
        "reconstruction": reconstruction_term,
    }
    source = {"bestrq": "speech", "asr": "paired", "consistency": "paired", "reconstruction": "text"}

    losses: Dict[str, float] = {}
    contributions: Dict[str, Dict[str, float]] = {}
    total = 0.0
    for term in TERMS:
        if missing[source[term]]:
            losses[term] = 0.0
            contributions[term] = {g: 0.0 for g in groups}
            continue
        loss = builders[term]()
        value = 0.0 if loss is None else loss.item()
        losses[term] = value
        before = _grad_snapshot(groups)
        if loss is not None and w[term] > 0 and loss.requires_grad:
            forward_backward(loss * w[term], accumulate=True)
        contributions[term] = _contribution(groups, before)
        total += w[term] * value

    if any(missing.values()):
        log.warning("MOST step %d: missing sub-batches %s", step, [k for k, v in missing.items() if v])
    if not np.isfinite(total):
        raise RuntimeError(f"MOST step {step}: non-finite loss {losses}")
    if optimizer is not None:
        optimizer.step()

    return MostStepResult(
        step=step,
        losses=losses,
        total=total,
        gated=gated,
        missing=missing,
        skipped_items=skipped,
        grad_contributions=contributions,
    )
