import numpy as np
import pytest

from bestrq import (
    STATS,
    MaskSpec,
    MultiSoftmaxHeads,
    QuantizedTargets,
    RandomQuantizer,
    apply_mask,
    bestrq_loss,
    encoder_mask,
    make_quantizer,
    masked_accuracy,
    prepare_example,
    quantize,
    quantizer_from_state,
    quantizer_state,
    stack_frames,
    verify_quantizer,
)
from numerics import ShapeError, Tensor, forward_backward, ops


def _axis_quantizer():
    return RandomQuantizer(projection=np.eye(2), codebooks=np.array([[[1.0, 0.0], [0.0, 1.0]]]))


def test_axis_aligned_frame_picks_matching_code():
    targets = quantize(np.array([[5.0, 0.0], [0.0, 0.3]]), _axis_quantizer())
    assert targets.labels.tolist() == [[0, 1]]


def test_quantize_is_scale_invariant(rng):
    q = make_quantizer(d_in=12, d_emb=4, num_codebooks=3, codebook_size=8, seed=5)
    x = rng.normal(size=(20, 12))
    np.testing.assert_array_equal(quantize(x, q).labels, quantize(x * 7.5, q).labels)


def test_quantize_matches_brute_force_argmax(rng):
    q = make_quantizer(d_in=6, d_emb=3, num_codebooks=2, codebook_size=4, seed=9)
    x = rng.normal(size=(8, 6))
    got = quantize(x, q).labels
    for n in range(2):
        for t in range(8):
            p = x[t] @ q.projection
            scores = []
            for j in range(4):
                v = q.codebooks[n, j]
                scores.append(float(p @ v) / (np.linalg.norm(p) * np.linalg.norm(v)))
            assert got[n, t] == int(np.argmax(scores))


def test_ties_break_to_lowest_index():
    q = RandomQuantizer(projection=np.eye(2), codebooks=np.array([[[1.0, 1.0], [2.0, 2.0]]]))
    assert quantize(np.array([[1.0, 1.0]]), q).labels.tolist() == [[0]]


def test_zero_frame_is_degenerate():
    before = STATS.as_dict()["degenerate_frames"]
    targets = quantize(np.array([[0.0, 0.0], [0.0, 1.0]]), _axis_quantizer())
    assert targets.labels.tolist() == [[0, 1]]
    assert targets.degenerate_frames == 1
    assert STATS.as_dict()["degenerate_frames"] == before + 1


def test_quantize_rejects_wrong_width():
    with pytest.raises(ShapeError, match="x 2"):
        quantize(np.zeros((3, 5)), _axis_quantizer())


def test_quantizer_is_frozen():
    q = make_quantizer(d_in=4, d_emb=2, num_codebooks=1, codebook_size=3)
    with pytest.raises(ValueError):
        q.projection[0, 0] = 1.0
    with pytest.raises(ValueError):
        q.codebooks[0, 0, 0] = 1.0
    verify_quantizer(q)
    assert quantizer_from_state(quantizer_state(q)).checksum == q.checksum


def test_zero_norm_codebook_rejected():
    with pytest.raises(ValueError, match="nonzero"):
        RandomQuantizer(projection=np.eye(2), codebooks=np.zeros((1, 2, 2)))


def test_every_code_used_on_gaussian_frames(rng):
    q = make_quantizer(d_in=32, d_emb=16, num_codebooks=2, codebook_size=16, seed=1)
    labels = quantize(rng.normal(size=(10_000, 32)), q).labels
    for n in range(2):
        assert set(np.unique(labels[n])) == set(range(16))


def test_mask_probability_zero_is_identity(rng):
    x = rng.normal(size=(50, 3))
    out, idx = apply_mask(x, MaskSpec(start_probability=0.0))
    np.testing.assert_array_equal(out, x)
    assert idx.size == 0


def test_mask_probability_one_masks_everything(rng):
    x = rng.normal(size=(50, 3))
    out, idx = apply_mask(x, MaskSpec(start_probability=1.0, span=0.01))
    assert idx.tolist() == list(range(50))
    assert not np.any(out == x)


def test_unmasked_frames_untouched_and_deterministic(rng):
    x = rng.normal(size=(400, 3))
    spec = MaskSpec(start_probability=0.05, seed=11)
    out, idx = apply_mask(x, spec)
    keep = np.setdiff1d(np.arange(400), idx)
    np.testing.assert_array_equal(out[keep], x[keep])
    again, idx2 = apply_mask(x, spec)
    np.testing.assert_array_equal(out, again)
    np.testing.assert_array_equal(idx, idx2)


def test_mask_coverage_matches_expectation():
    fractions = []
    for seed in range(100):
        spec = MaskSpec(start_probability=0.01, span=0.4, seed=seed)
        _, idx = apply_mask(np.zeros((10_000, 1)), spec)
        fractions.append(idx.size / 10_000)
    expected = MaskSpec(start_probability=0.01, span=0.4).expected_coverage()
    assert abs(np.mean(fractions) - expected) <= 0.2 * expected


def test_mask_spec_validation():
    with pytest.raises(ValueError):
        MaskSpec(start_probability=1.5)
    with pytest.raises(ValueError):
        MaskSpec(span=0.0)


def test_stack_and_encoder_mask():
    frames = np.arange(22, dtype=float).reshape(11, 2)
    stacked = stack_frames(frames)
    assert stacked.shape == (2, 8)
    np.testing.assert_array_equal(stacked[1], np.arange(8, 16))
    assert encoder_mask(np.array([0, 1, 5, 10]), 11).tolist() == [0, 1]


def _heads(rng, n, c, dim=3):
    return MultiSoftmaxHeads(dim, n, c, rng)


def test_uniform_logits_give_log_c(rng):
    heads = _heads(rng, 2, 5)
    for h in heads.heads:
        h.weight.data = np.zeros_like(h.weight.data)
        h.bias.data = np.zeros_like(h.bias.data)
    targets = QuantizedTargets(labels=rng.integers(0, 5, size=(2, 6)), mask_indices=np.array([1, 4]))
    loss = bestrq_loss(Tensor(rng.normal(size=(6, 3))), targets, heads)
    assert loss.item() == pytest.approx(np.log(5), abs=1e-12)


def test_identical_heads_equal_single_head(rng):
    single = _heads(np.random.default_rng(0), 1, 4)
    double = _heads(np.random.default_rng(1), 2, 4)
    for h in double.heads:
        h.load_state_dict(single.heads[0].state_dict())
    labels = rng.integers(0, 4, size=(1, 8))
    out = Tensor(rng.normal(size=(8, 3)))
    mask = np.array([0, 3, 7])
    one = bestrq_loss(out, QuantizedTargets(labels=labels, mask_indices=mask), single).item()
    two = bestrq_loss(out, QuantizedTargets(labels=np.repeat(labels, 2, axis=0), mask_indices=mask), double).item()
    assert two == pytest.approx(one, abs=1e-12)


def test_two_heads_match_hand_computation(rng):
    heads = _heads(rng, 2, 4)
    out = rng.normal(size=(7, 3))
    labels = rng.integers(0, 4, size=(2, 7))
    mask = np.array([2, 3, 6])
    got = bestrq_loss(Tensor(out), QuantizedTargets(labels=labels, mask_indices=mask), heads).item()

    def ce(n):
        h = heads.heads[n]
        logits = out[mask] @ h.weight.data + h.bias.data
        logz = np.log(np.exp(logits - logits.max(axis=1, keepdims=True)).sum(axis=1)) + logits.max(axis=1)
        return float(np.mean(logz - logits[np.arange(len(mask)), labels[n, mask]]))

    assert got == pytest.approx(0.5 * (ce(0) + ce(1)), abs=1e-12)


def test_empty_mask_gives_zero_and_no_gradient(rng):
    heads = _heads(rng, 2, 4)
    before = STATS.as_dict()["empty_masks"]
    out = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    loss = bestrq_loss(out, QuantizedTargets(labels=np.zeros((2, 5), dtype=int)), heads)
    assert loss.item() == 0.0
    loss.backward()
    assert out.grad is None
    assert all(p.grad is None for p in heads.parameters())
    assert STATS.as_dict()["empty_masks"] == before + 1


def test_loss_ignores_unmasked_frames(rng):
    heads = _heads(rng, 3, 4)
    out = rng.normal(size=(9, 3))
    targets = QuantizedTargets(labels=rng.integers(0, 4, size=(3, 9)), mask_indices=np.array([1, 5]))
    base = bestrq_loss(Tensor(out), targets, heads).item()
    perturbed = out.copy()
    perturbed[[0, 2, 3, 4, 6, 7, 8]] += 100.0
    assert bestrq_loss(Tensor(perturbed), targets, heads).item() == base


def test_loss_rejects_misaligned_output(rng):
    heads = _heads(rng, 1, 4)
    with pytest.raises(ShapeError, match="frames"):
        bestrq_loss(Tensor(np.zeros((3, 3))), QuantizedTargets(labels=np.zeros((1, 4), dtype=int)), heads)


def test_prepare_example_keeps_quantizer_frozen(rng):
    q = make_quantizer(d_in=128 * 4, d_emb=16, num_codebooks=2, codebook_size=8, seed=2)
    feats = rng.normal(size=(40, 128))
    masked, targets = prepare_example(feats, q, MaskSpec(start_probability=0.2, seed=3))
    assert targets.labels.shape == (2, 10)
    assert masked.shape == feats.shape
    heads = _heads(rng, 2, 8, dim=4)
    out = Tensor(rng.normal(size=(10, 4)), requires_grad=True)
    forward_backward(lambda: bestrq_loss(out, targets, heads))
    verify_quantizer(q)
    acc = masked_accuracy(out, targets, heads)
    assert acc.shape == (2,) and np.all((acc >= 0) & (acc <= 1))
