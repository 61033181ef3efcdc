import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfnoma import verify
from gfnoma.valuefn import (
    RMS_DECAY,
    RMS_EPS,
    Gradient,
    Minibatch,
    ValueNet,
    copy_into_target,
    forward,
    load_checkpoint,
    net_init,
    rmsprop_step,
    save_checkpoint,
    td_gradient,
    td_targets,
)


def small_net(seed=0, dims=(4, 6, 5, 3)):
    return net_init(dims, np.random.default_rng(seed))


def batch_for(net, seed=1, n=8, terminal=None):
    rng = np.random.default_rng(seed)
    d, a = net.layer_dims[0], net.n_actions
    return Minibatch(
        states=rng.normal(size=(n, d)),
        actions=rng.integers(0, a, size=n),
        rewards=rng.normal(size=n),
        next_states=rng.normal(size=(n, d)),
        terminal=np.zeros(n, bool) if terminal is None else terminal,
    )


def test_param_count_of_default_shape():
    net = net_init((5, 128, 128, 5), np.random.default_rng(0))
    assert net.n_params() == 768 + 16512 + 645 == 17925


def test_init_reproducible_and_bounded():
    a, b = small_net(3), small_net(3)
    for wa, wb, fan_in in zip(a.weights, b.weights, a.layer_dims):
        assert np.array_equal(wa, wb)
        assert np.all(np.abs(wa) <= 1 / np.sqrt(fan_in))
    assert all(np.all(x == 0) for x in a.biases + a.rms_w + a.rms_b)


def test_init_rejects_bad_dims():
    with pytest.raises(ValueError):
        net_init((4,), np.random.default_rng(0))
    with pytest.raises(ValueError):
        net_init((4, 0, 2), np.random.default_rng(0))


def test_fresh_output_finite():
    net = small_net()
    assert np.all(np.isfinite(forward(net, np.random.default_rng(0).normal(size=(50, 4)) * 1e3)))


def test_zero_net_outputs_zero():
    net = small_net()
    net.weights = [np.zeros_like(w) for w in net.weights]
    assert np.all(forward(net, np.ones(4)) == 0)


def test_identity_single_layer():
    net = ValueNet((3, 3), [np.eye(3)], [np.zeros(3)])
    x = np.array([-1.5, 0.0, 2.0])
    assert np.array_equal(forward(net, x), x)


def test_hand_computed_2_2_2():
    w1 = np.array([[1.0, -2.0], [0.5, 1.0]])
    b1 = np.array([0.1, -0.3])
    w2 = np.array([[2.0, -1.0], [3.0, 0.5]])
    b2 = np.array([0.0, 1.0])
    net = ValueNet((2, 2, 2), [w1, w2], [b1, b2])
    # hidden pre-activations for s=(1, 2): 1 + 1 + 0.1 = 2.1 and -2 + 2 - 0.3 = -0.3
    # ReLU gives (2.1, 0); outputs 2*2.1 = 4.2 and -2.1 + 1 = -1.1
    assert np.allclose(forward(net, [1.0, 2.0]), [4.2, -1.1], atol=1e-12, rtol=0)


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(small_net(), np.ones(5))


def test_shapes_must_chain():
    with pytest.raises(ValueError):
        ValueNet((2, 3), [np.zeros((3, 2))], [np.zeros(2)])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_positive_homogeneity_without_biases(c, seed):
    net = small_net(seed % 7)
    x = np.random.default_rng(seed).normal(size=4)
    assert np.allclose(forward(net, c * x), c * forward(net, x), rtol=1e-9, atol=1e-12)


def test_gamma_zero_targets_are_rewards():
    net = small_net()
    b = batch_for(net)
    for ddqn in (True, False):
        assert np.array_equal(td_targets(net, net, b, 0.0, ddqn), b.rewards)


def test_terminal_targets_are_rewards():
    net = small_net()
    b = batch_for(net, terminal=np.ones(8, bool))
    assert np.array_equal(td_targets(net, small_net(5), b, 0.9, True), b.rewards)


def test_targets_use_online_argmax_for_ddqn():
    online, target = small_net(1), small_net(2)
    b = batch_for(online, n=64)
    a_on = forward(online, b.next_states).argmax(1)
    q_t = forward(target, b.next_states)
    want = b.rewards + 0.5 * q_t[np.arange(64), a_on]
    assert np.allclose(td_targets(online, target, b, 0.5, True), want)
    want_dqn = b.rewards + 0.5 * q_t.max(1)
    assert np.allclose(td_targets(online, target, b, 0.5, False), want_dqn)


def test_zero_gradient_at_fixed_point():
    net = small_net()
    b = batch_for(net)
    b.rewards = forward(net, b.states)[np.arange(8), b.actions]
    g = td_gradient(net, net, b, 0.0, True)
    assert all(np.all(x == 0) for x in g.weights + g.biases)
    assert g.loss == 0


def test_ddqn_equals_dqn_for_identical_nets():
    net = small_net()
    b = batch_for(net)
    g1 = td_gradient(net, copy_into_target(net), b, 0.7, True)
    g2 = td_gradient(net, copy_into_target(net), b, 0.7, False)
    for x, y in zip(g1.weights + g1.biases, g2.weights + g2.biases):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-15)


def test_gradient_plain_central_difference_on_smooth_case():
    # inputs chosen so no hidden unit sits near its kink
    net = small_net(4)
    b = batch_for(net, seed=9, n=4)
    targets = td_targets(net, net, b, 0.5, True)
    g = td_gradient(net, net, b, 0.5, True)

    def loss(n):
        q = forward(n, b.states)[np.arange(4), b.actions]
        return 0.5 * np.mean((targets - q) ** 2)

    h = 1e-5
    worst = 0.0
    for params, grads in ((net.weights, g.weights), (net.biases, g.biases)):
        for p, gp in zip(params, grads):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = loss(net)
                p[idx] = old - h
                down = loss(net)
                p[idx] = old
                num = (up - down) / (2 * h)
                scale = max(abs(num), abs(gp[idx]), 1e-6)
                worst = max(worst, abs(num - gp[idx]) / scale)
    assert worst <= 1e-4


def test_gradient_suite_small():
    res = verify.gradient_suite(n_batches=10)
    assert res.passed, res.failures[:3]


def test_gradient_suite_catches_wrong_sign(monkeypatch):
    import gfnoma.valuefn as vf

    real = vf.td_gradient

    def flipped(*a, **k):
        g = real(*a, **k)
        g.biases[-1] = -g.biases[-1]
        return g

    monkeypatch.setattr(verify, "td_gradient", flipped)
    assert not verify.gradient_suite(n_batches=3).passed


def test_rmsprop_zero_gradient_and_zero_lr():
    net = small_net()
    before = [w.copy() for w in net.weights]
    zeros = Gradient([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])
    rmsprop_step(net, zeros, 0.1)
    assert all(np.array_equal(a, b) for a, b in zip(before, net.weights))
    g = td_gradient(net, net, batch_for(net), 0.5, True)
    rmsprop_step(net, g, 0.0)
    assert all(np.array_equal(a, b) for a, b in zip(before, net.weights))


def test_rmsprop_scalar_examples():
    net = ValueNet((1, 1), [np.array([[0.0]])], [np.array([0.0])])
    g = Gradient([np.array([[1.0]])], [np.array([0.0])])
    rmsprop_step(net, g, 0.01)
    acc = 1 - RMS_DECAY
    assert net.rms_w[0][0, 0] == pytest.approx(acc)
    assert net.weights[0][0, 0] == pytest.approx(-0.01 / (np.sqrt(acc) + RMS_EPS))
    for _ in range(2000):
        before = net.weights[0][0, 0]
        rmsprop_step(net, g, 0.01)
    # the accumulator converges to 1, so the step converges to lr / (1 + eps)
    assert before - net.weights[0][0, 0] == pytest.approx(0.01 / (1 + RMS_EPS), rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_rmsprop_accumulator_nonnegative(gs):
    net = ValueNet((1, 1), [np.array([[0.0]])], [np.array([0.0])])
    for x in gs:
        rmsprop_step(net, Gradient([np.array([[x]])], [np.array([-x])]), 1e-3)
        assert net.rms_w[0][0, 0] >= 0 and net.rms_b[0][0] >= 0


def test_copy_semantics():
    online = small_net()
    target = copy_into_target(online)
    x = np.random.default_rng(0).normal(size=(10, 4))
    assert np.array_equal(forward(online, x), forward(target, x))
    before = forward(target, x)
    rmsprop_step(online, td_gradient(online, target, batch_for(online), 0.5, True), 0.1)
    assert np.array_equal(forward(target, x), before)
    assert not np.array_equal(forward(online, x), before)
    again = copy_into_target(copy_into_target(online))
    assert np.array_equal(forward(again, x), forward(online, x))


def test_checkpoint_roundtrip(tmp_path):
    net = small_net()
    rmsprop_step(net, td_gradient(net, net, batch_for(net), 0.5, True), 0.1)
    path = tmp_path / "a.gfqn"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    assert back.layer_dims == net.layer_dims
    for x, y in zip(net.weights + net.biases + net.rms_w + net.rms_b,
                    back.weights + back.biases + back.rms_w + back.rms_b):
        assert np.array_equal(x, y)
    n_floats = 2 * net.n_params()
    assert path.stat().st_size == 4 + 8 + 4 * len(net.layer_dims) + 8 * n_floats


def test_checkpoint_rejects_bad_files(tmp_path):
    net = small_net()
    path = tmp_path / "a.gfqn"
    save_checkpoint(net, path)
    data = path.read_bytes()
    (tmp_path / "short").write_bytes(data[:-8])
    (tmp_path / "long").write_bytes(data + b"\0" * 8)
    (tmp_path / "magic").write_bytes(b"XXXX" + data[4:])
    for name in ("short", "long", "magic"):
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / name)
