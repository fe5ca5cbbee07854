import numpy as np
import pytest

from ctc import ctc_loss
from numerics import (
    Adam,
    GroupSettings,
    Linear,
    ShapeError,
    Tensor,
    forward_backward,
    grad_check,
    no_grad,
    ops,
    precision,
    schedule,
)


def _param(rng, *shape, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


def test_sum_of_squares_gradient():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    loss = forward_backward(lambda: ops.sum(ops.mul(x, x)))
    assert loss == 14.0
    np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])


def test_logsumexp_of_equal_entries_splits_gradient():
    x = Tensor([3.5, 3.5], requires_grad=True)
    forward_backward(lambda: ops.logsumexp(x))
    np.testing.assert_allclose(x.grad, [0.5, 0.5], atol=1e-15)


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        forward_backward(lambda: ops.mul(x, x))


def test_shape_mismatch_names_shapes():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones((3, 2)))
    with pytest.raises(ShapeError, match=r"\(2, 3\)"):
        ops.add(a, b)
    with pytest.raises(ShapeError, match="inner dimensions"):
        ops.matmul(a, Tensor(np.ones((2, 2))))


def test_mlp_matches_finite_differences(rng):
    layers = [Linear(4, 5, rng), Linear(5, 5, rng), Linear(5, 1, rng)]
    x = Tensor(rng.normal(size=(3, 4)))

    def loss():
        h = ops.swish(layers[0](x))
        h = ops.sigmoid(layers[1](h))
        return ops.sum(ops.mul(layers[2](h), layers[2](h)))

    params = [(f"l{i}.{n}", t) for i, layer in enumerate(layers) for n, t in layer.named_parameters()]
    report = grad_check(loss, params)
    assert report.ok
    assert report.max_relative_error < 1e-6


def test_quadratic_grad_check():
    w = Tensor([0.7], requires_grad=True)
    report = grad_check(lambda: ops.sum(ops.mul(w, w)), {"w": w})
    assert report.max_relative_error < 1e-8
    assert report.max_relative_error == max(e for _, e in report.per_parameter_errors)


def test_softmax_cross_entropy_grad_check(rng):
    logits = _param(rng, 5, 7, low=-10, high=10)
    labels = rng.integers(0, 7, size=5)
    report = grad_check(lambda: ops.cross_entropy(logits, labels), {"logits": logits})
    assert report.max_relative_error < 1e-6


def test_ctc_grad_check(rng):
    logits = _param(rng, 4, 3)
    report = grad_check(lambda: ctc_loss(ops.log_softmax(logits), [1, 2]).loss, {"logits": logits})
    assert report.max_relative_error < 1e-5


@pytest.mark.parametrize(
    "build",
    [
        lambda rng: ([_param(rng, 3, 4), _param(rng, 4, 2)], lambda a, b: ops.sum(ops.matmul(a, b))),
        lambda rng: ([_param(rng, 3, 4), _param(rng, 3, 4)], lambda a, b: ops.sum(ops.mul(ops.sub(a, b), a))),
        lambda rng: ([_param(rng, 2, 5, low=-10, high=10)], lambda a: ops.sum(ops.mul(ops.softmax(a), a))),
        lambda rng: ([_param(rng, 2, 5, low=0.5, high=10)], lambda a: ops.sum(ops.log(a))),
        lambda rng: ([_param(rng, 6, 4), _param(rng, 4), _param(rng, 4)],
                     lambda x, g, b: ops.sum(ops.mul(ops.layer_norm(x, g, b), x))),
        lambda rng: ([_param(rng, 9, 3), _param(rng, 2, 3, 2)],
                     lambda x, w: ops.sum(ops.mul(ops.conv1d(x, w, stride=2), ops.conv1d(x, w, stride=2)))),
        lambda rng: ([_param(rng, 7, 3), _param(rng, 3, 3)],
                     lambda x, w: ops.sum(ops.mul(ops.depthwise_conv1d(x, w), x))),
        lambda rng: ([_param(rng, 4, 3)], lambda t: ops.sum(ops.mul(ops.take(t, [0, 2, 2, 3]), ops.take(t, [1, 1, 0, 3])))),
        lambda rng: ([_param(rng, 3, 4)], lambda x: ops.masked_sum(ops.mul(x, x), np.array([[1, 0, 1, 0]] * 3, bool))),
        lambda rng: ([_param(rng, 3, 2)], lambda x: ops.sum(ops.mul(ops.repeat(x, 3), ops.repeat(x, 3)))),
        lambda rng: ([_param(rng, 4, 6, low=-10, high=10)], lambda x: ops.sum(ops.swish(ops.scale(x, 0.3)))),
    ],
    ids=["matmul", "sub-mul", "softmax", "log", "layer_norm", "conv1d", "depthwise", "take", "masked_sum",
         "repeat", "swish"],
)
def test_primitive_gradients(rng, build):
    params, fn = build(rng)
    report = grad_check(lambda: fn(*params), [(f"p{i}", p) for i, p in enumerate(params)])
    assert report.max_relative_error < 1e-6


def test_softmax_rows_normalised_and_log_softmax_finite(rng):
    x = Tensor(rng.uniform(-800, 800, size=(4, 9)))
    np.testing.assert_allclose(ops.softmax(x).data.sum(axis=-1), 1.0, atol=1e-12)
    assert np.isfinite(ops.log_softmax(x).data).all()


def test_determinism(rng):
    data = rng.normal(size=(5, 4))

    def run():
        layer = Linear(4, 3, np.random.default_rng(7))
        x = Tensor(data)
        loss = forward_backward(lambda: ops.sum(ops.swish(layer(x))))
        return loss, layer.weight.grad.copy()

    (l1, g1), (l2, g2) = run(), run()
    assert l1 == l2
    np.testing.assert_array_equal(g1, g2)


def test_gradients_accumulate_once_per_backward():
    x = Tensor([2.0], requires_grad=True)
    forward_backward(lambda: ops.sum(ops.add(ops.mul(x, x), x)))
    np.testing.assert_array_equal(x.grad, [5.0])


def test_repeated_calls_reset_leaf_gradients():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    forward_backward(lambda: ops.sum(ops.mul(x, x)))
    first = x.grad.copy()
    forward_backward(lambda: ops.sum(ops.mul(x, x)))
    np.testing.assert_array_equal(first, [2.0, 4.0, 6.0])
    np.testing.assert_array_equal(x.grad, first)

    forward_backward(lambda: ops.sum(ops.mul(x, x)), accumulate=True)
    np.testing.assert_array_equal(x.grad, [4.0, 8.0, 12.0])


def test_no_grad_records_nothing():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with no_grad():
        y = ops.sum(ops.mul(x, x))
    assert not y.requires_grad
    y.backward()
    assert x.grad is None


def test_detach_stops_gradient():
    x = Tensor([3.0], requires_grad=True)
    forward_backward(lambda: ops.sum(ops.mul(x, x.detach())))
    np.testing.assert_array_equal(x.grad, [3.0])


def test_precision_context_switches_dtype():
    with precision("float32"):
        assert Tensor([1.0]).data.dtype == np.float32
    assert Tensor([1.0]).data.dtype == np.float64
    with pytest.raises(ValueError):
        with precision("float16"):
            pass


def test_grad_check_reports_nonfinite_probes():
    w = Tensor([0.0], requires_grad=True)
    report = grad_check(lambda: ops.sum(ops.log(ops.mul(w, w))), {"w": w}, step=1e-5)
    assert not report.ok
    assert report.nonfinite_probes


def test_grad_check_rejects_bad_step():
    w = Tensor([1.0], requires_grad=True)
    with pytest.raises(ValueError):
        grad_check(lambda: ops.sum(w), {"w": w}, step=0.0)


def test_schedule_warmup_then_inverse_sqrt():
    s = GroupSettings(learning_rate=1.0, warmup_steps=4)
    assert schedule(s, 0) == 0.0
    assert schedule(s, 2) == pytest.approx(0.5)
    assert schedule(s, 4) == pytest.approx(1.0)
    assert schedule(s, 16) == pytest.approx(0.5)
    assert schedule(GroupSettings(learning_rate=0.1), 100) == pytest.approx(0.1)


def test_adam_groups_are_independent(rng):
    a, b = Linear(2, 2, rng), Linear(2, 2, rng)
    opt = Adam(
        {
            "encoder": (a.named_parameters(), GroupSettings(learning_rate=0.1)),
            "decoder": (b.named_parameters(), GroupSettings(learning_rate=0.0)),
        }
    )
    before_b = b.state_dict()
    before_a = a.state_dict()
    x = Tensor(rng.normal(size=(3, 2)))
    forward_backward(lambda: ops.sum(b(a(x))))
    rates = opt.step()
    assert rates["lr_encoder"] == 0.1 and rates["lr_decoder"] == 0.0
    for k, v in b.state_dict().items():
        np.testing.assert_array_equal(v, before_b[k])
    assert any(not np.array_equal(v, before_a[k]) for k, v in a.state_dict().items())


def test_adam_rejects_shared_parameter(rng):
    layer = Linear(2, 2, rng)
    with pytest.raises(ValueError, match="groups"):
        Adam({"x": (layer.named_parameters(), GroupSettings()), "y": (layer.named_parameters(), GroupSettings())})


def test_adam_clips_global_norm(rng):
    w = Tensor(np.zeros(2), requires_grad=True)
    opt = Adam({"g": ([("w", w)], GroupSettings(learning_rate=1.0))}, clip_norm=1.0)
    w.grad = np.array([30.0, 40.0])
    rates = opt.step()
    assert rates["grad_norm"] == pytest.approx(50.0)
    np.testing.assert_allclose(opt.m["g"]["w"], 0.1 * np.array([0.6, 0.8]))


def test_adam_state_round_trip(rng):
    layer = Linear(2, 2, rng)
    opt = Adam({"g": (layer.named_parameters(), GroupSettings())})
    forward_backward(lambda: ops.sum(layer(Tensor(np.ones((1, 2))))))
    opt.step()
    fresh = Adam({"g": (layer.named_parameters(), GroupSettings())})
    fresh.load_state_dict(opt.state_dict())
    assert fresh.steps == opt.steps
    with pytest.raises(ValueError, match="missing"):
        fresh.load_state_dict({})


def test_module_state_dict_shape_mismatch_named(rng):
    layer = Linear(2, 3, rng)
    bad = layer.state_dict()
    bad["weight"] = np.zeros((3, 3))
    with pytest.raises(ValueError, match="weight"):
        layer.load_state_dict(bad)
