"""Dense networks with hand-derived gradients, an adaptive-moment optimizer,
and stochastic policy heads. Everything runs in float64 numpy; determinism
outranks speed at the scales used here."""

from __future__ import annotations

import numpy as np

_SELU_LAMBDA = 1.0507009873554805
_SELU_ALPHA = 1.6732632423543772
LEAKY_SLOPE = 0.01
LOGSTD_MIN, LOGSTD_MAX = -20.0, 2.0
_SQUASH_EPS = 1e-6


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "selu":
        return _SELU_LAMBDA * np.where(z > 0, z, _SELU_ALPHA * (np.exp(z) - 1.0))
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    # at z == 0 the negative-side slope is used for the kinked activations
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0).astype(float)
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    if name == "tanh":
        return 1.0 - y * y
    if name == "sigmoid":
        return y * (1.0 - y)
    if name == "selu":
        return _SELU_LAMBDA * np.where(z > 0, 1.0, _SELU_ALPHA * np.exp(z))
    raise ValueError(f"unknown activation {name!r}")


class DenseNet:
    """Fully connected network; layer i maps sizes[i] -> sizes[i+1]."""

    def __init__(self, sizes, activations=None, rng: np.random.Generator | None = None,
                 hidden_activation: str = "leaky_relu"):
        self.sizes = list(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        n_layers = len(self.sizes) - 1
        if activations is None:
            activations = [hidden_activation] * (n_layers - 1) + ["identity"]
        if len(activations) != n_layers:
            raise ValueError("one activation per layer required")
        for name in activations:
            _act(name, np.zeros(1))  # validates the name
        self.activations = list(activations)
        rng = rng or np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    # -- parameter plumbing ---------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "DenseNet":
        clone = DenseNet.__new__(DenseNet)
        clone.sizes = list(self.sizes)
        clone.activations = list(self.activations)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def save(self, path) -> None:
        arrays = {"sizes": np.array(self.sizes),
                  "activations": np.array(self.activations)}
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"w{idx}"] = w
            arrays[f"b{idx}"] = b
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "DenseNet":
        data = np.load(path, allow_pickle=False)
        net = cls(data["sizes"].tolist(), [str(a) for a in data["activations"]])
        for idx in range(len(net.weights)):
            net.weights[idx] = data[f"w{idx}"]
            net.biases[idx] = data[f"b{idx}"]
        return net

    # -- forward / backward ------------------------------------------------------

    def forward(self, x: np.ndarray):
        """Returns (output, cache); accepts a single vector or a batch."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.sizes[0]}")
        pres, outs = [], [x]
        h = x
        for w, b, name in zip(self.weights, self.biases, self.activations):
            z = h @ w + b
            h = _act(name, z)
            pres.append(z)
            outs.append(h)
        cache = {"pres": pres, "outs": outs, "squeeze": squeeze}
        return (h[0] if squeeze else h), cache

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of a scalar loss given dL/d(output).

        Returns (param_grads, grad_input) where param_grads aligns with
        parameters().
        """
        grad_out = np.asarray(grad_out, dtype=float)
        if cache["squeeze"]:
            grad_out = grad_out[None, :]
        pres, outs = cache["pres"], cache["outs"]
        if grad_out.shape != outs[-1].shape:
            raise ValueError("gradient shape does not match cached forward output")
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = grad_out
        for layer in reversed(range(len(self.weights))):
            dz = delta * _act_grad(self.activations[layer], pres[layer], outs[layer + 1])
            grads_w[layer] = outs[layer].T @ dz
            grads_b[layer] = dz.sum(axis=0)
            delta = dz @ self.weights[layer].T
        param_grads = []
        for gw, gb in zip(grads_w, grads_b):
            param_grads.extend([gw, gb])
        grad_input = delta[0] if cache["squeeze"] else delta
        return param_grads, grad_input


class Adam:
    """Adaptive-moment optimizer with bias correction."""

    def __init__(self, params: list[np.ndarray], lr: float = 5e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter/gradient count mismatch")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


# ---------------------------------------------------------------------------
# policy heads


def gaussian_head(raw: np.ndarray, rng: np.random.Generator | None = None,
                  noise: np.ndarray | None = None, deterministic: bool = False):
    """Squashed-Gaussian sample from a (means, log-stds) vector.

    Returns (action in (-1,1)^n, log_prob, cache). The sample is
    reparameterized, so gradients flow through it via gaussian_head_backward.
    """
    raw = np.asarray(raw, dtype=float)
    squeeze = raw.ndim == 1
    if squeeze:
        raw = raw[None, :]
    if raw.shape[1] % 2:
        raise ValueError("head input must have even length (means, log-stds)")
    n = raw.shape[1] // 2
    mean, logstd_raw = raw[:, :n], raw[:, n:]
    logstd = np.clip(logstd_raw, LOGSTD_MIN, LOGSTD_MAX)
    std = np.exp(logstd)
    if deterministic:
        eps = np.zeros_like(mean)
    elif noise is not None:
        eps = np.asarray(noise, dtype=float).reshape(mean.shape)
    else:
        eps = (rng or np.random.default_rng()).standard_normal(mean.shape)
    pre = mean + std * eps
    action = np.tanh(pre)
    logp = (-0.5 * eps * eps - logstd - 0.5 * np.log(2.0 * np.pi)
            - np.log(1.0 - action * action + _SQUASH_EPS)).sum(axis=1)
    cache = {"action": action, "eps": eps, "std": std,
             "logstd_raw": logstd_raw, "squeeze": squeeze, "n": n}
    if squeeze:
        return action[0], float(logp[0]), cache
    return action, logp, cache


def gaussian_head_backward(cache, d_action: np.ndarray, d_logp: np.ndarray) -> np.ndarray:
    """Gradient wrt the raw (means, log-stds) vector."""
    a, eps, std = cache["action"], cache["eps"], cache["std"]
    squeeze = cache["squeeze"]
    d_action = np.asarray(d_action, dtype=float).reshape(a.shape)
    d_logp = np.atleast_1d(np.asarray(d_logp, dtype=float))
    one_m_a2 = 1.0 - a * a
    dlogp_da = 2.0 * a / (one_m_a2 + _SQUASH_EPS)
    d_pre = (d_action + d_logp[:, None] * dlogp_da) * one_m_a2
    d_mean = d_pre
    d_logstd = d_pre * std * eps - d_logp[:, None]
    in_range = (cache["logstd_raw"] > LOGSTD_MIN) & (cache["logstd_raw"] < LOGSTD_MAX)
    d_logstd = d_logstd * in_range
    out = np.concatenate([d_mean, d_logstd], axis=1)
    return out[0] if squeeze else out


def gaussian_log_prob(raw: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Exact log-density of a squashed-Gaussian head at a given action."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    action = np.atleast_2d(np.asarray(action, dtype=float))
    n = raw.shape[1] // 2
    mean, logstd = raw[:, :n], np.clip(raw[:, n:], LOGSTD_MIN, LOGSTD_MAX)
    a = np.clip(action, -1.0 + 1e-9, 1.0 - 1e-9)
    pre = np.arctanh(a)
    z = (pre - mean) / np.exp(logstd)
    logp = (-0.5 * z * z - logstd - 0.5 * np.log(2.0 * np.pi)
            - np.log(1.0 - a * a + _SQUASH_EPS)).sum(axis=1)
    return logp


def categorical_head(logits: np.ndarray, rng: np.random.Generator | None = None,
                     temperature: float = 1.0, deterministic: bool = False):
    """Gumbel-trick categorical sample with a straight-through surrogate.

    Returns (index, log_prob, hard one-hot, cache). The one-hot is the value
    to feed downstream; categorical_head_backward routes its gradient through
    the relaxed softmax.
    """
    logits = np.asarray(logits, dtype=float)
    squeeze = logits.ndim == 1
    if squeeze:
        logits = logits[None, :]
    if deterministic:
        y = logits / temperature
    else:
        u = (rng or np.random.default_rng()).uniform(1e-12, 1.0, size=logits.shape)
        y = (logits - np.log(-np.log(u))) / temperature
    idx = y.argmax(axis=1)
    soft = _softmax_rows(y)
    hard = np.zeros_like(logits)
    hard[np.arange(len(idx)), idx] = 1.0
    log_soft = logits - _logsumexp_rows(logits)[:, None]
    logp = log_soft[np.arange(len(idx)), idx]
    cache = {"soft": soft, "hard": hard, "probs": _softmax_rows(logits),
             "temperature": temperature, "squeeze": squeeze}
    if squeeze:
        return int(idx[0]), float(logp[0]), hard[0], cache
    return idx, logp, hard, cache


def categorical_head_backward(cache, d_onehot: np.ndarray, d_logp: np.ndarray) -> np.ndarray:
    """Gradient wrt the logits: straight-through path plus the exact
    log-mass path."""
    soft, hard, probs = cache["soft"], cache["hard"], cache["probs"]
    squeeze = cache["squeeze"]
    d_onehot = np.asarray(d_onehot, dtype=float).reshape(soft.shape)
    d_logp = np.atleast_1d(np.asarray(d_logp, dtype=float))
    inner = (d_onehot * soft).sum(axis=1, keepdims=True)
    d_logits = soft * (d_onehot - inner) / cache["temperature"]
    d_logits += d_logp[:, None] * (hard - probs)
    return d_logits[0] if squeeze else d_logits


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _logsumexp_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1)
    return m + np.log(np.exp(x - m[:, None]).sum(axis=1))
