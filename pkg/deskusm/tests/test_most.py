from dataclasses import replace

import numpy as np
import pytest

from bestrq import MaskSpec, make_quantizer
from core.constants import ENCODER_FRAME, N_MELS
from ctc import LabelSequence
from encoder import AttentionPattern, UsmModel
from most import (
    HEADS,
    SPEECH_ENCODER,
    TEXT_ENCODER,
    MostBatch,
    MostBatchSizes,
    MostLossWeights,
    TextEncoder,
    aligned_mse,
    consistency_loss,
    curriculum_gate,
    interpolation_matrix,
    most_step,
    text_reconstruction_loss,
    upsample_text,
)
from numerics import Tensor, forward_backward, grad_check

GLOBAL = AttentionPattern.global_()
SIZES = MostBatchSizes(speech=2, text=2, paired=2)


@pytest.fixture
def model(rng, tiny_conformer):
    return UsmModel(tiny_conformer, vocab_size=5, rng=rng, num_codebooks=2, codebook_size=4)


@pytest.fixture
def text_encoder(rng, tiny_conformer):
    return TextEncoder(tiny_conformer, vocab_size=5, rng=rng)


@pytest.fixture
def quantizer():
    return make_quantizer(d_in=N_MELS * 4, d_emb=4, num_codebooks=2, codebook_size=4, seed=1)


@pytest.fixture
def batch(rng):
    return MostBatch(
        unlabeled_speech=[rng.normal(size=(40, N_MELS)) for _ in range(2)],
        paired=[(rng.normal(size=(40, N_MELS)), LabelSequence((1, 2, 3))), (rng.normal(size=(32, N_MELS)), LabelSequence((4, 2)))],
        unlabeled_text=[LabelSequence((2, 3, 1)), LabelSequence((4,))],
    )


def _run(model, text_encoder, batch, quantizer, weights=MostLossWeights(), step=10, gate=5):
    return most_step(
        model, text_encoder, batch, SIZES, weights, step, gate, quantizer,
        MaskSpec(start_probability=0.2, seed=4), GLOBAL,
    )


def test_upsample_repeats_in_order():
    tokens = Tensor(np.array([[1.0], [2.0], [3.0]]))
    assert upsample_text(tokens, 2).data.ravel().tolist() == [1, 1, 2, 2, 3, 3]
    np.testing.assert_array_equal(upsample_text(tokens, 1).data, tokens.data)
    np.testing.assert_array_equal(upsample_text(tokens, 4).data[::4], tokens.data)
    with pytest.raises(ValueError):
        upsample_text(tokens, 0)


def test_text_encoder_matches_encoder_input_rate(rng, text_encoder, tiny_conformer):
    out = text_encoder(LabelSequence((1, 2, 3)), GLOBAL)
    assert out.shape == (12, tiny_conformer.model_dim)
    with pytest.raises(ValueError, match="at least one token"):
        text_encoder(LabelSequence(()), GLOBAL)


def test_interpolation_matrix():
    np.testing.assert_array_equal(interpolation_matrix(4, 4), np.eye(4))
    m = interpolation_matrix(12, 10)
    np.testing.assert_allclose(m.sum(axis=1), 1.0)
    assert m[0, 0] == 1.0 and m[-1, -1] == 1.0
    with pytest.raises(ValueError):
        interpolation_matrix(0, 3)


def test_aligned_mse_zero_and_homogeneous(rng):
    speech = rng.normal(size=(6, 3))
    assert aligned_mse(Tensor(speech), speech).item() == 0.0
    gap = rng.normal(size=(6, 3))
    one = aligned_mse(Tensor(speech + gap), speech).item()
    two = aligned_mse(Tensor(speech + 2 * gap), speech).item()
    assert np.sqrt(two) == pytest.approx(2 * np.sqrt(one), rel=1e-12)


def test_consistency_never_reaches_speech_side(rng, model, text_encoder):
    loss = consistency_loss(model, text_encoder, rng.normal(size=(40, N_MELS)), LabelSequence((1, 2, 3)), GLOBAL)
    forward_backward(loss)
    assert all(p.grad is None for p in model.parameters())
    assert any(p.grad is not None and p.grad.any() for p in text_encoder.parameters())


def test_consistency_skips_empty_transcript(rng, model, text_encoder):
    assert consistency_loss(model, text_encoder, rng.normal(size=(40, N_MELS)), LabelSequence(()), GLOBAL) is None


def test_full_masking_ignores_text_embeddings(model, text_encoder):
    spec = replace(MaskSpec(start_probability=1.0, seed=8), frame_hop=ENCODER_FRAME)
    labels = LabelSequence((1, 3, 2))
    first = text_reconstruction_loss(model, text_encoder, labels, spec, GLOBAL).value
    text_encoder.embedding.table.data = text_encoder.embedding.table.data * -3.0 + 1.0
    assert text_reconstruction_loss(model, text_encoder, labels, spec, GLOBAL).value == first


def test_reconstruction_gradients_match_finite_differences(model, text_encoder):
    spec = replace(MaskSpec(start_probability=0.0), frame_hop=ENCODER_FRAME)
    labels = LabelSequence((1, 2))
    report = grad_check(
        lambda: text_reconstruction_loss(model, text_encoder, labels, spec, GLOBAL).loss,
        {"table": text_encoder.embedding.table},
    )
    assert report.max_relative_error < 1e-5


def test_curriculum_gate_scales_with_run_length():
    assert curriculum_gate(120_000) == 20_400
    assert curriculum_gate(0) == 0


def test_before_gate_reconstruction_is_silent(model, text_encoder, batch, quantizer):
    result = _run(model, text_encoder, batch, quantizer, step=2, gate=5)
    assert result.gated
    assert result.losses["reconstruction"] == 0.0
    assert result.grad_contributions["reconstruction"][TEXT_ENCODER] == 0.0

    after = _run(model, text_encoder, batch, quantizer, step=5, gate=5)
    assert not after.gated
    assert after.losses["reconstruction"] > 0.0
    assert after.grad_contributions["reconstruction"][SPEECH_ENCODER] > 0.0


def test_consistency_contributes_nothing_to_speech_encoder(model, text_encoder, batch, quantizer):
    result = _run(model, text_encoder, batch, quantizer)
    contrib = result.grad_contributions["consistency"]
    assert contrib[SPEECH_ENCODER] == 0.0
    assert contrib[HEADS] == 0.0
    assert contrib[TEXT_ENCODER] > 0.0


def test_total_is_weighted_sum(model, text_encoder, batch, quantizer):
    result = _run(model, text_encoder, batch, quantizer)
    assert set(result.losses) == {"bestrq", "asr", "consistency", "reconstruction"}
    assert result.total == pytest.approx(sum(result.losses.values()), abs=1e-12)

    asr_only = MostLossWeights(w_bestrq=0.0, w_asr=1.0, w_consistency=0.0, w_reconstruction=0.0)
    result = _run(model, text_encoder, batch, quantizer, weights=asr_only)
    assert result.total == result.losses["asr"]


def test_missing_sub_batch_is_flagged(model, text_encoder, batch, quantizer):
    partial = MostBatch(unlabeled_speech=batch.unlabeled_speech, paired=batch.paired)
    result = _run(model, text_encoder, partial, quantizer)
    assert result.missing == {"speech": False, "paired": False, "text": True}
    assert result.losses["reconstruction"] == 0.0

    with pytest.raises(ValueError, match="sub-batch"):
        _run(model, text_encoder, MostBatch(unlabeled_speech=batch.unlabeled_speech[:1]), quantizer)


def test_weights_and_sizes():
    with pytest.raises(ValueError, match="non-negative"):
        MostLossWeights(w_asr=-1.0)
    with pytest.raises(ValueError, match="positive"):
        MostLossWeights(0.0, 0.0, 0.0, 0.0)
    assert MostBatchSizes.scaled(1 / 1024) == MostBatchSizes(speech=4, text=8, paired=1)
    assert MostBatchSizes.scaled(1e-6) == MostBatchSizes(speech=1, text=1, paired=1)
