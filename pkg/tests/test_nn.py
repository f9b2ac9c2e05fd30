"""Network forward/backward checks against independent oracles: a naive
loop-based forward pass and central finite differences for the gradient."""
import numpy as np
import pytest

from dilemma.nn import (DimensionMismatch, Network, NonFiniteLoss, forward,
                        forward_batch, grad_step, init_network,
                        parameter_count, parameter_vector, save_parameters)


def naive_forward(net, state):
    """Scalar-loop reference for the layer arithmetic."""
    hidden = []
    for i in range(net.hidden_size):
        z = net.b1[i]
        for j in range(net.input_dim):
            z += net.w1[i, j] * state[j]
        hidden.append(max(z, 0.0))
    out = []
    for k in range(net.output_dim):
        q = net.b2[k]
        for i in range(net.hidden_size):
            q += net.w2[k, i] * hidden[i]
        out.append(q)
    return np.array(out)


def batch_loss(w1, b1, w2, b2, states, actions, targets):
    """Duplicate loss implementation used by the finite-difference oracle."""
    hidden = np.maximum(states @ w1.T + b1, 0.0)
    q = hidden @ w2.T + b2
    picked = q[np.arange(len(actions)), actions]
    return np.mean((picked - targets) ** 2)


def test_init_shapes_and_zero_biases():
    net = init_network(4, 7, 3, np.random.default_rng(0))
    assert net.w1.shape == (7, 4)
    assert net.b1.shape == (7,)
    assert net.w2.shape == (3, 7)
    assert net.b2.shape == (3,)
    assert not net.b1.any()
    assert not net.b2.any()


def test_init_scale_tracks_fan_in():
    rng = np.random.default_rng(1)
    net = init_network(64, 2000, 16, rng)
    assert abs(net.w1.std() - 1 / np.sqrt(64)) < 0.005
    assert abs(net.w2.std() - 1 / np.sqrt(2000)) < 0.002


def test_init_reproducible():
    a = init_network(3, 5, 2, np.random.default_rng(9))
    b = init_network(3, 5, 2, np.random.default_rng(9))
    assert np.array_equal(a.w1, b.w1) and np.array_equal(a.w2, b.w2)


def test_parameter_count_default_dilemma_net():
    net = init_network(2, 256, 2, np.random.default_rng(0))
    assert parameter_count(net) == 2 * 256 + 256 + 256 * 2 + 2 == 1282


def test_parameter_vector_layout():
    net = Network(w1=np.array([[1.0, 2.0], [3.0, 4.0]]),
                  b1=np.array([5.0, 6.0]),
                  w2=np.array([[7.0, 8.0]]),
                  b2=np.array([9.0]))
    assert np.array_equal(parameter_vector(net),
                          np.arange(1.0, 10.0))


def test_save_parameters_round_trip(tmp_path):
    net = init_network(3, 4, 2, np.random.default_rng(3))
    path = tmp_path / "params.txt"
    save_parameters(net, path)
    assert np.allclose(np.loadtxt(path), parameter_vector(net))


def test_forward_matches_naive_reference():
    rng = np.random.default_rng(7)
    for _ in range(20):
        net = init_network(int(rng.integers(1, 6)), int(rng.integers(1, 9)),
                           int(rng.integers(1, 5)), rng)
        state = rng.normal(size=net.input_dim)
        assert np.allclose(forward(net, state), naive_forward(net, state),
                           rtol=0, atol=1e-12)


def test_forward_output_is_linear():
    # a negative output proves there is no rectifier on the output layer
    net = Network(w1=np.eye(2), b1=np.zeros(2),
                  w2=np.array([[-3.0, 0.0], [0.0, 1.0]]), b2=np.zeros(2))
    q = forward(net, np.array([1.0, 0.0]))
    assert q[0] == -3.0 and q[1] == 0.0


def test_forward_batch_matches_forward():
    rng = np.random.default_rng(11)
    net = init_network(4, 6, 3, rng)
    states = rng.normal(size=(5, 4))
    batched = forward_batch(net, states)
    for k in range(5):
        assert np.allclose(batched[k], forward(net, states[k]), atol=1e-12)


def test_dimension_mismatch():
    net = init_network(3, 4, 2, np.random.default_rng(0))
    with pytest.raises(DimensionMismatch):
        forward(net, np.zeros(4))
    with pytest.raises(DimensionMismatch):
        forward_batch(net, np.zeros((2, 2)))
    with pytest.raises(DimensionMismatch):
        grad_step(net, [], 0.1)
    with pytest.raises(DimensionMismatch):
        grad_step(net, [(np.zeros(3), 5, 1.0)], 0.1)


def _random_instance(rng):
    """Network plus batch staying away from rectifier kinks, so the finite
    difference sees a locally smooth loss."""
    while True:
        net = init_network(3, 5, 2, rng)
        states = rng.normal(size=(4, 3))
        z = states @ net.w1.T + net.b1
        if np.abs(z).min() > 1e-3:
            actions = rng.integers(0, 2, size=4)
            targets = rng.normal(size=4)
            return net, states, actions, targets


def test_gradient_matches_central_finite_differences():
    """Analytic gradient within 1e-4 relative error of the finite-difference
    oracle on over 100 random instances."""
    rng = np.random.default_rng(2024)
    delta = 1e-5
    worst = 0.0
    for _ in range(120):
        net, states, actions, targets = _random_instance(rng)
        # lr=1 turns the parameter delta into the gradient itself
        stepped = grad_step(
            net, list(zip(states, actions, targets)), lr=1.0)
        analytic = parameter_vector(net) - parameter_vector(stepped)

        theta = parameter_vector(net)
        shapes = [net.w1.shape, net.b1.shape, net.w2.shape, net.b2.shape]

        def loss_at(vec):
            parts = []
            at = 0
            for shape in shapes:
                size = int(np.prod(shape))
                parts.append(vec[at:at + size].reshape(shape))
                at += size
            return batch_loss(*parts, states, actions, targets)

        fd = np.empty_like(theta)
        for k in range(theta.size):
            up, down = theta.copy(), theta.copy()
            up[k] += delta
            down[k] -= delta
            fd[k] = (loss_at(up) - loss_at(down)) / (2 * delta)
        rel = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, rel)
        assert rel <= 1e-4
    assert worst > 0  # the check actually exercised nonzero gradients


def test_gradient_touches_only_taken_action_output():
    rng = np.random.default_rng(5)
    net = init_network(3, 4, 2, rng)
    state = rng.normal(size=3)
    stepped = grad_step(net, [(state, 0, 10.0)], lr=1.0)
    # output row 1 and its bias receive no gradient from an action-0 sample
    assert np.array_equal(stepped.w2[1], net.w2[1])
    assert stepped.b2[1] == net.b2[1]
    assert not np.array_equal(stepped.w2[0], net.w2[0])


def test_grad_step_reduces_loss():
    rng = np.random.default_rng(13)
    net = init_network(4, 8, 3, rng)
    states = rng.normal(size=(6, 4))
    actions = rng.integers(0, 3, size=6)
    targets = rng.normal(size=6)
    before = batch_loss(net.w1, net.b1, net.w2, net.b2, states, actions, targets)
    stepped = grad_step(net, list(zip(states, actions, targets)), lr=1e-2)
    after = batch_loss(stepped.w1, stepped.b1, stepped.w2, stepped.b2,
                       states, actions, targets)
    assert after < before


def test_small_lr_descent_is_monotone():
    """Repeated small-step descent on a fixed batch keeps the loss
    non-increasing in at least 95% of random instances."""
    rng = np.random.default_rng(31)
    monotone = 0
    for _ in range(60):
        net = init_network(3, 6, 2, rng)
        states = rng.normal(size=(5, 3))
        actions = rng.integers(0, 2, size=5)
        targets = rng.normal(size=5)
        batch = list(zip(states, actions, targets))
        prev = batch_loss(net.w1, net.b1, net.w2, net.b2,
                          states, actions, targets)
        ok = True
        for _ in range(20):
            net = grad_step(net, batch, lr=1e-3)
            cur = batch_loss(net.w1, net.b1, net.w2, net.b2,
                             states, actions, targets)
            if cur > prev + 1e-12:
                ok = False
                break
            prev = cur
        monotone += ok
    assert monotone >= 57


def test_grad_step_leaves_input_untouched():
    rng = np.random.default_rng(17)
    net = init_network(2, 3, 2, rng)
    w1_before = net.w1.copy()
    grad_step(net, [(np.array([1.0, 0.0]), 0, 2.0)], lr=0.5)
    assert np.array_equal(net.w1, w1_before)


def test_non_finite_loss_raises():
    net = init_network(2, 3, 2, np.random.default_rng(0))
    with pytest.raises(NonFiniteLoss):
        grad_step(net, [(np.array([1.0, 0.0]), 0, np.inf)], lr=0.1)
