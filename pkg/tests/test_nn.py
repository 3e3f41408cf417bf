import math

import numpy as np
import pytest

from maredge import nn

ACTIVATIONS = ["identity", "relu", "leaky_relu", "tanh", "sigmoid", "selu"]


def finite_diff_grads(net, x, grad_out, eps=1e-5):
    """Central finite differences of loss = sum(output * grad_out)."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            up = float(np.sum(net.forward(x)[0] * grad_out))
            p[idx] = orig - eps
            down = float(np.sum(net.forward(x)[0] * grad_out))
            p[idx] = orig
            g[idx] = (up - down) / (2 * eps)
            it.iternext()
        grads.append(g)
    return grads


# ---------------------------------------------------------------------------
# forward


def test_zero_net_outputs_zero():
    net = nn.DenseNet([3, 4, 2], activations=["relu", "identity"])
    for w in net.weights:
        w[:] = 0.0
    out, _ = net.forward(np.ones(3))
    assert np.all(out == 0.0)


def test_scalar_affine():
    net = nn.DenseNet([1, 1], activations=["identity"])
    net.weights[0][:] = 2.0
    net.biases[0][:] = 1.0
    out, _ = net.forward(np.array([3.0]))
    assert out[0] == 7.0


def test_forward_matches_matrix_oracle():
    rng = np.random.default_rng(0)
    net = nn.DenseNet([4, 8, 2], rng=rng, hidden_activation="tanh")
    x = rng.normal(size=(5, 4))
    out, _ = net.forward(x)
    h = np.tanh(x @ net.weights[0] + net.biases[0])
    expect = h @ net.weights[1] + net.biases[1]
    assert np.allclose(out, expect, rtol=1e-14)


def test_dimension_mismatch_rejected():
    net = nn.DenseNet([3, 2])
    with pytest.raises(ValueError):
        net.forward(np.ones(4))


# ---------------------------------------------------------------------------
# backward


def test_scalar_gradients():
    net = nn.DenseNet([1, 1], activations=["identity"])
    net.weights[0][:] = 2.0
    net.biases[0][:] = 1.0
    _, cache = net.forward(np.array([3.0]))
    grads, _ = net.backward(cache, np.array([1.0]))
    assert grads[0][0, 0] == 3.0   # dL/dw = input
    assert grads[1][0] == 1.0      # dL/db = 1


def test_gradients_match_finite_differences_all_activations():
    rng = np.random.default_rng(1)
    for n in range(20):
        act = ACTIVATIONS[n % len(ACTIVATIONS)]
        sizes = [int(rng.integers(2, 6)) for _ in range(3)]
        net = nn.DenseNet(sizes, activations=[act, "identity"], rng=rng)
        # keep pre-activations away from kinks
        x = rng.normal(size=sizes[0]) + 0.1
        grad_out = rng.normal(size=sizes[-1])
        _, cache = net.forward(x)
        analytic, _ = net.backward(cache, grad_out)
        numeric = finite_diff_grads(net, x, grad_out)
        for a, b in zip(analytic, numeric):
            scale = np.maximum(np.abs(b), 1e-6)
            assert np.max(np.abs(a - b) / scale) <= 1e-4, act


def test_leaky_relu_kink_uses_negative_slope():
    net = nn.DenseNet([1, 1, 1], activations=["leaky_relu", "identity"])
    net.weights[0][:] = 1.0
    net.biases[0][:] = 0.0
    net.weights[1][:] = 1.0
    _, cache = net.forward(np.array([0.0]))  # pre-activation exactly 0
    grads, grad_in = net.backward(cache, np.array([1.0]))
    assert grad_in[0] == pytest.approx(nn.LEAKY_SLOPE)


def test_grad_input_matches_finite_difference():
    rng = np.random.default_rng(2)
    net = nn.DenseNet([3, 5, 2], rng=rng)
    x = rng.normal(size=3) + 0.05
    g = rng.normal(size=2)
    _, cache = net.forward(x)
    _, grad_in = net.backward(cache, g)
    eps = 1e-6
    for d in range(3):
        xp, xm = x.copy(), x.copy()
        xp[d] += eps
        xm[d] -= eps
        num = (np.sum(net.forward(xp)[0] * g) - np.sum(net.forward(xm)[0] * g)) / (2 * eps)
        assert grad_in[d] == pytest.approx(num, rel=1e-5, abs=1e-8)


# ---------------------------------------------------------------------------
# optimizer


def test_adam_zero_gradient_noop():
    net = nn.DenseNet([2, 2], rng=np.random.default_rng(0))
    before = [p.copy() for p in net.parameters()]
    opt = nn.Adam(net.parameters())
    opt.step(net.parameters(), [np.zeros_like(p) for p in net.parameters()])
    for a, b in zip(net.parameters(), before):
        assert np.array_equal(a, b)


def test_adam_descent_direction():
    p = np.array([0.0])
    opt = nn.Adam([p], lr=0.1)
    for _ in range(50):
        opt.step([p], [np.array([1.0])])
    assert p[0] < 0.0


def test_adam_single_step_hand_calculation():
    p = np.array([1.0])
    g = np.array([0.5])
    lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
    opt = nn.Adam([p], lr=lr, beta1=b1, beta2=b2, eps=eps)
    opt.step([p], [g])
    m_hat = (1 - b1) * 0.5 / (1 - b1)
    v_hat = (1 - b2) * 0.25 / (1 - b2)
    expect = 1.0 - lr * m_hat / (math.sqrt(v_hat) + eps)
    assert p[0] == pytest.approx(expect, rel=1e-12)


def test_adam_shape_mismatch():
    p = np.zeros(2)
    opt = nn.Adam([p])
    with pytest.raises(ValueError):
        opt.step([p], [np.zeros(3)])


# ---------------------------------------------------------------------------
# heads


def test_gaussian_head_collapsed_variance():
    raw = np.array([0.0, 0.0, -20.0, -20.0])
    action, _, _ = nn.gaussian_head(raw, rng=np.random.default_rng(0))
    assert np.allclose(action, 0.0, atol=1e-7)


def test_gaussian_actions_in_range():
    rng = np.random.default_rng(0)
    raw = np.tile(np.array([0.5, -0.2, 0.3, 1.0]), (100_000, 1))
    actions, _, _ = nn.gaussian_head(raw, rng=rng)
    assert np.all(actions > -1.0) and np.all(actions < 1.0)


def test_gaussian_log_prob_matches_quadrature():
    # 1-D check: integrating exp(log_prob) over (-1, 1) must give ~1
    raw = np.array([0.3, -0.5])
    grid = np.linspace(-1 + 1e-9, 1 - 1e-9, 200_001)
    logp = nn.gaussian_log_prob(np.tile(raw, (len(grid), 1)), grid[:, None])
    mass = np.trapezoid(np.exp(logp), grid)
    assert mass == pytest.approx(1.0, abs=2e-3)


def test_gaussian_head_backward_finite_difference():
    rng = np.random.default_rng(3)
    raw = rng.normal(size=6)
    noise = rng.standard_normal(3)
    d_action = rng.normal(size=3)
    d_logp = 0.7
    _, _, cache = nn.gaussian_head(raw, noise=noise)
    analytic = nn.gaussian_head_backward(cache, d_action, d_logp)
    eps = 1e-6
    for d in range(6):
        rp, rm = raw.copy(), raw.copy()
        rp[d] += eps
        rm[d] -= eps
        ap, lp, _ = nn.gaussian_head(rp, noise=noise)
        am, lm, _ = nn.gaussian_head(rm, noise=noise)
        num = (np.dot(ap, d_action) + lp * d_logp
               - np.dot(am, d_action) - lm * d_logp) / (2 * eps)
        assert analytic[d] == pytest.approx(num, rel=1e-4, abs=1e-7)


def test_categorical_dominant_logit():
    idx, _, hard, _ = nn.categorical_head(np.array([1e9, 0.0, 0.0]),
                                          rng=np.random.default_rng(0))
    assert idx == 0
    assert hard.tolist() == [1.0, 0.0, 0.0]


def test_categorical_uniform_frequencies():
    rng = np.random.default_rng(0)
    n, draws = 4, 100_000
    logits = np.zeros((draws, n))
    idx, _, _, _ = nn.categorical_head(logits, rng=rng)
    counts = np.bincount(idx, minlength=n)
    p = 1.0 / n
    sigma = math.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(counts - draws * p) <= 3 * sigma)


def test_categorical_log_mass_normalization():
    logits = np.array([0.3, -1.2, 2.0, 0.0])
    total = 0.0
    for idx in range(4):
        log_soft = logits - (np.max(logits)
                             + np.log(np.sum(np.exp(logits - np.max(logits)))))
        total += math.exp(log_soft[idx])
    assert total == pytest.approx(1.0, abs=1e-12)
    # and the head reports exactly that log-mass for its sample
    i, logp, _, _ = nn.categorical_head(logits, rng=np.random.default_rng(1))
    log_soft = logits - (np.max(logits)
                         + np.log(np.sum(np.exp(logits - np.max(logits)))))
    assert logp == pytest.approx(log_soft[i], rel=1e-12)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    net = nn.DenseNet([3, 7, 2], rng=rng, hidden_activation="selu")
    path = tmp_path / "net.npz"
    net.save(path)
    loaded = nn.DenseNet.load(path)
    x = rng.normal(size=(4, 3))
    assert np.array_equal(net.forward(x)[0], loaded.forward(x)[0])
    assert loaded.activations == net.activations
