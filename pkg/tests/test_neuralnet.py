import numpy as np
import pytest

from excavator_rl.neuralnet import (
    AdamState,
    MlpParams,
    MlpSpec,
    StaleCacheError,
    adam_step,
    backward,
    forward,
    gradient_check,
    init_mlp,
    polyak_update,
    zeros_like,
)


def test_identity_layer():
    spec = MlpSpec((3, 3), "identity")
    p = MlpParams([np.eye(3)], [np.zeros(3)])
    x = np.array([1.0, -2.0, 0.5])
    out, _ = forward(p, spec, x)
    np.testing.assert_array_equal(out, x)


def test_negative_preactivation_gives_zero_hidden():
    spec = MlpSpec((2, 3, 1), "identity")
    p = MlpParams([-np.ones((3, 2)), np.ones((1, 3))], [np.zeros(3), np.array([0.7])])
    out, cache = forward(p, spec, np.array([1.0, 2.0]))
    np.testing.assert_array_equal(cache.inputs[1], 0.0)
    assert out[0] == 0.7


def test_two_layer_hand_calculation():
    W0 = np.array([[1.0, -1.0], [0.5, 2.0], [-3.0, 0.25]])
    b0 = np.array([0.1, -0.2, 0.3])
    W1 = np.array([[2.0, -1.0, 0.5]])
    b1 = np.array([-0.4])
    x = np.array([0.6, -0.3])
    # by hand: z0 = W0 x + b0 = [1.0, -0.5, -1.575]; relu -> [1, 0, 0]
    # z1 = 2*1 - 0.4 = 1.6; tanh head
    spec = MlpSpec((2, 3, 1), "tanh")
    out, _ = forward(MlpParams([W0, W1], [b0, b1]), spec, x)
    assert out[0] == pytest.approx(np.tanh(1.6), abs=1e-12)


def test_forward_width_mismatch():
    spec = MlpSpec((3, 4, 2), "identity")
    p = init_mlp(spec, np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(p, spec, np.zeros(4))


def test_init_deterministic_and_glorot_bounds():
    spec = MlpSpec((10, 180, 4), "tanh")
    a = init_mlp(spec, np.random.default_rng(3))
    b = init_mlp(spec, np.random.default_rng(3))
    assert a.bit_equal(b)
    assert np.abs(a.weights[0]).max() <= np.sqrt(6 / 190)
    assert all(np.all(bb == 0) for bb in a.biases)


def test_zero_output_grad():
    spec = MlpSpec((4, 8, 2), "tanh")
    p = init_mlp(spec, np.random.default_rng(0))
    _, cache = forward(p, spec, np.ones((3, 4)))
    grads, gx = backward(p, spec, cache, np.zeros((3, 2)))
    assert not grads.flat.any() and not gx.any()


def test_identity_layer_weight_grad_closed_form():
    spec = MlpSpec((3, 2), "identity")
    rng = np.random.default_rng(1)
    p = MlpParams([rng.normal(size=(2, 3))], [rng.normal(size=2)])
    x, t = rng.normal(size=3), rng.normal(size=2)
    y, cache = forward(p, spec, x)
    grads, _ = backward(p, spec, cache, y - t)  # d/dy of 0.5 * |y - t|^2
    np.testing.assert_allclose(grads.weights[0], np.outer(y - t, x), atol=1e-14)
    np.testing.assert_allclose(grads.biases[0], y - t, atol=1e-14)


def test_stale_cache_rejected():
    spec = MlpSpec((2, 3, 1), "identity")
    p = init_mlp(spec, np.random.default_rng(0))
    _, cache = forward(p, spec, np.ones(2))
    adam_step(p, zeros_like(p), AdamState.zeros(p), 1e-3)
    with pytest.raises(StaleCacheError):
        backward(p, spec, cache, np.ones(1))
    with pytest.raises(StaleCacheError):
        backward(p.copy(), spec, forward(p, spec, np.ones(2))[1], np.ones(1))


def test_backward_does_not_mutate_params():
    spec = MlpSpec((5, 7, 3), "tanh")
    p = init_mlp(spec, np.random.default_rng(0))
    before = p.copy()
    _, cache = forward(p, spec, np.ones((2, 5)))
    backward(p, spec, cache, np.ones((2, 3)))
    assert p.bit_equal(before)


@pytest.mark.parametrize("widths,head", [
    ((10, 180, 180, 180, 4), "tanh"),
    ((14, 180, 180, 180, 1), "identity"),
    ((14, 64, 180, 180, 1), "identity"),
    ((17, 180, 180, 180, 4), "tanh"),
    ((3, 5, 2), "identity"),
    ((6, 4), "tanh"),
])
def test_gradient_check(widths, head):
    res = gradient_check(MlpSpec(widths, head), np.random.default_rng(11))
    assert res["max_rel_err"] < 1e-4
    assert res["checked"] > 0


def test_adam_zero_grad_and_zero_lr():
    spec = MlpSpec((3, 4, 2), "identity")
    p = init_mlp(spec, np.random.default_rng(0))
    before = p.copy()
    st = AdamState.zeros(p)
    adam_step(p, zeros_like(p), st, 1e-3)
    assert p.bit_equal(before) and st.t == 1
    g = zeros_like(p)
    g.flat[:] = np.random.default_rng(1).normal(size=g.flat.size)
    adam_step(p, g, st, 0.0)
    assert p.bit_equal(before) and st.t == 2


def test_adam_first_step_is_sign_times_lr():
    p = MlpParams([np.zeros((1, 2))], [np.zeros(1)])
    g = MlpParams([np.array([[0.3, -2.0]])], [np.array([1e-3])])
    adam_step(p, g, AdamState.zeros(p), 0.01)
    np.testing.assert_allclose(p.flat, [-0.01, 0.01, -0.01], rtol=1e-4)


def test_adam_rejects_nonfinite():
    p = MlpParams([np.zeros((1, 1))], [np.zeros(1)])
    g = MlpParams([np.array([[np.inf]])], [np.zeros(1)])
    with pytest.raises(FloatingPointError):
        adam_step(p, g, AdamState.zeros(p), 0.01)


def test_polyak():
    def scalar(v):
        return MlpParams([np.array([[v]])], [np.array([v])])

    t = polyak_update(scalar(0.0), scalar(2.0), 0.5)
    np.testing.assert_array_equal(t.flat, [1.0, 1.0])
    rng = np.random.default_rng(0)
    spec = MlpSpec((3, 4, 2), "identity")
    a, b = init_mlp(spec, rng), init_mlp(spec, rng)
    a0 = a.copy()
    assert polyak_update(a, b, 0.0).bit_equal(a0)
    assert polyak_update(a, b, 1.0).bit_equal(b)
    with pytest.raises(ValueError):
        polyak_update(a, init_mlp(MlpSpec((3, 5, 2), "identity"), rng), 0.5)


def test_serialization_round_trip():
    for dtype in (np.float32, np.float64):
        p = init_mlp(MlpSpec((4, 6, 2), "tanh"), np.random.default_rng(0), dtype)
        q = MlpParams.from_lists(p.to_lists())
        assert q.bit_equal(p)
        st = AdamState(np.arange(q.flat.size, dtype=dtype) / 7, np.ones(q.flat.size, dtype=dtype), 5)
        back = AdamState.from_lists(st.to_lists())
        assert back.m.tobytes() == st.m.tobytes() and back.t == 5
