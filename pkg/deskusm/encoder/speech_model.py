from __future__ import annotations

import logging
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from bestrq import MaskSpec, MultiSoftmaxHeads, RandomQuantizer, bestrq_loss, item_seed, masked_accuracy, prepare_example
from ctc import LabelSequence, ctc_loss
from numerics import Linear, Module, Tensor, ops

from .conformer import AdapterPair, ConformerBlock, ConformerEncoder
from .masks import build_attention_mask, mask_bias
from .models import AttentionPattern, ConformerConfig

log = logging.getLogger(__name__)

ENCODER_GROUP = "encoder"
DECODER_GROUP = "decoder"

_DECODER_PREFIXES = ("ctc_head.", "bestrq_heads.")

Example = Tuple[np.ndarray, LabelSequence]


class UsmModel(Module):
    """Conformer encoder with a CTC head, optional BEST-RQ heads and an optional speech-only layer."""

    def __init__(
        self,
        cfg: ConformerConfig,
        vocab_size: int,
        rng: np.random.Generator,
        num_codebooks: int = 0,
        codebook_size: int = 0,
        speech_layer: bool = False,
    ):
        super().__init__()
        self.config = cfg
        self.vocab_size = vocab_size
        self.encoder = self.add_module("encoder", ConformerEncoder(cfg, rng))
        self.speech_layer: Optional[ConformerBlock] = None
        if speech_layer:
            self.add_speech_layer(rng)
        self.ctc_head = self.add_module("ctc_head", Linear(cfg.model_dim, vocab_size, rng))
        self.bestrq_heads: Optional[MultiSoftmaxHeads] = None
        if num_codebooks:
            self.bestrq_heads = self.add_module(
                "bestrq_heads", MultiSoftmaxHeads(cfg.model_dim, num_codebooks, codebook_size, rng)
            )

    def add_speech_layer(self, rng: np.random.Generator) -> ConformerBlock:
        if self.speech_layer is None:
            self.speech_layer = self.add_module("speech_layer", ConformerBlock(self.config, rng))
            log.info("Added randomly initialised speech-only conformer layer")
        return self.speech_layer

    def embed_speech(self, features: Union[np.ndarray, Tensor], pattern: AttentionPattern) -> Tensor:
        """Subsampling stem plus the speech-only layer when present."""
        x = self.encoder.embed(features)
        if self.speech_layer is not None:
            x = self.speech_layer(x, mask_bias(build_attention_mask(pattern, x.shape[0])))
        return x

    def encode(
        self,
        features: Union[np.ndarray, Tensor],
        pattern: AttentionPattern,
        adapters: Optional[Sequence[AdapterPair]] = None,
    ) -> Tensor:
        return self.encoder.encode(self.embed_speech(features, pattern), pattern, adapters)

    def log_probs(self, encoded: Tensor) -> Tensor:
        return ops.log_softmax(self.ctc_head(encoded))

    def asr_loss(
        self,
        batch: Sequence[Example],
        pattern: AttentionPattern,
        adapters: Optional[Sequence[AdapterPair]] = None,
    ) -> Tuple[Optional[Tensor], int]:
        """Mean CTC loss over feasible items; returns (loss or None, number of infeasible items)."""
        total, used, skipped = None, 0, 0
        for features, labels in batch:
            result = ctc_loss(self.log_probs(self.encode(features, pattern, adapters)), labels)
            if result.infeasible:
                skipped += 1
                continue
            total = result.loss if total is None else total + result.loss
            used += 1
        if skipped:
            log.warning("asr_loss: skipped %d infeasible item(s) of %d", skipped, len(batch))
        return (None if total is None else total * (1.0 / used)), skipped

    def masked_prediction_loss(
        self,
        batch: Sequence[np.ndarray],
        quantizer: RandomQuantizer,
        spec: MaskSpec,
        pattern: AttentionPattern,
        step: int = 0,
    ) -> Tuple[Optional[Tensor], float]:
        """Mean BEST-RQ loss over utterances with a non-empty mask, plus mean masked accuracy."""
        if self.bestrq_heads is None:
            raise ValueError("model has no BEST-RQ heads; build it with num_codebooks > 0")
        total, used, acc = None, 0, []
        for i, features in enumerate(batch):
            masked, targets = prepare_example(features, quantizer, replace(spec, seed=item_seed(spec.seed, step, i)))
            encoded = self.encode(masked, pattern)
            loss = bestrq_loss(encoded, targets, self.bestrq_heads)
            if targets.mask_indices.size == 0:
                continue
            acc.append(float(np.mean(masked_accuracy(encoded, targets, self.bestrq_heads))))
            total = loss if total is None else total + loss
            used += 1
        accuracy = float(np.mean(acc)) if acc else float("nan")
        return (None if total is None else total * (1.0 / used)), accuracy

    def param_groups(self) -> Dict[str, List[Tuple[str, Tensor]]]:
        groups: Dict[str, List[Tuple[str, Tensor]]] = {ENCODER_GROUP: [], DECODER_GROUP: []}
        for name, t in self.named_parameters():
            key = DECODER_GROUP if name.startswith(_DECODER_PREFIXES) else ENCODER_GROUP
            groups[key].append((name, t))
        return groups

    def encoder_state(self) -> Dict[str, np.ndarray]:
        return {n: a for n, a in self.state_dict().items() if not n.startswith(_DECODER_PREFIXES)}
