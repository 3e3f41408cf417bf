"""Heterogeneous-agent soft actor-critic on the maritime offloading game.

Two centralized critics score (global state, flattened joint action) pairs;
each agent keeps its own stochastic policy. Policies are updated one at a
time in a freshly drawn random order, with the already-updated predecessors
re-sampling their actions before the current agent's gradient is taken.
Gradients reach the policies straight through the feasibility projection:
the projected joint action is treated as if it were the differentiable
relaxed action emitted by the heads.

A lighter on-policy advantage actor-critic trainer with the same agent
layout is included for ablations.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from maredge import nn
from maredge.config import SimConfig
from maredge.env import MaritimeMecEnv, UavAction, VesselAction


@dataclass
class TrainerConfig:
    hidden: tuple = (512, 512)
    activation: str = "leaky_relu"
    lr: float = 5e-4
    batch_size: int = 1024
    buffer_size: int = 1_000_000
    gamma: float = 0.99
    alpha: float = 0.001          # fixed entropy temperature
    polyak: float = 0.995
    update_every: int = 10        # env steps between update cycles
    updates_per_cycle: int = 1
    warmup_steps: int = 256       # steps collected before learning starts
    episodes: int = 200
    seed: int = 0


# ---------------------------------------------------------------------------
# feasibility projection as a pure function with a hand-rolled backward pass


@dataclass
class ProjectionContext:
    """Everything the projection needs besides the agents' raw actions."""
    m2u_potential: np.ndarray       # (I, J)
    q_uav: np.ndarray               # (J,)
    uav_resident: np.ndarray        # (I, J) boolean
    vessel_resident: np.ndarray     # (J, K) boolean


def capture_context(env: MaritimeMecEnv) -> ProjectionContext:
    return ProjectionContext(
        m2u_potential=env._potential_m2u(),
        q_uav=env.queues.q_uav.copy(),
        uav_resident=env.ledger.uav_resident_bits() > 0,
        vessel_resident=env.ledger.vessel_resident_bits() > 0,
    )


def project_vectors(cfg: SimConfig, ctx: ProjectionContext,
                    uav_vecs: list[np.ndarray], vessel_vecs: list[np.ndarray]):
    """Mirror of the environment projection on encoded action vectors.

    Returns (flat joint action, backward) where backward maps a gradient on
    the flat joint action to per-agent vector gradients, routing the discrete
    selections straight through and the allocations through their softmax.
    """
    I, J, K = cfg.num_miot, cfg.num_uav, cfg.num_vessel
    offers = np.stack([v[:I] for v in uav_vecs])                  # (J, I)
    choices = [int(np.argmax(v[I:I + K + 1])) for v in uav_vecs]  # 0 = none
    alloc_u_logits = np.stack([v[I + K + 1:] for v in uav_vecs])  # (J, I)
    admits = np.stack([v[:J] for v in vessel_vecs])               # (K, J)
    alloc_v_logits = np.stack([v[J:] for v in vessel_vecs])       # (K, J)

    o = np.zeros((I, J))
    for i in range(I):
        offering = [j for j in range(J) if offers[j, i] > 0]
        if offering:
            rates = [ctx.m2u_potential[i, j] for j in offering]
            o[i, offering[int(np.argmax(rates))]] = 1.0

    s = np.zeros((J, K))
    for k in range(K):
        js = [j for j in range(J) if choices[j] == k + 1 and admits[k, j] > 0]
        ranked = sorted(js, key=lambda j: (-ctx.q_uav[j], j))
        for j in ranked[: cfg.antenna_limit]:
            s[j, k] = 1.0

    f_u = np.zeros((I, J))
    active_u = []
    for j in range(J):
        idx = np.flatnonzero(ctx.uav_resident[:, j] | (o[:, j] > 0))
        active_u.append(idx)
        if len(idx):
            f_u[idx, j] = cfg.uav_cpu * _softmax(alloc_u_logits[j, idx])
    f_v = np.zeros((J, K))
    active_v = []
    for k in range(K):
        idx = np.flatnonzero(ctx.vessel_resident[:, k] | (s[:, k] > 0))
        active_v.append(idx)
        if len(idx):
            f_v[idx, k] = cfg.vessel_cpu * _softmax(alloc_v_logits[k, idx])

    flat = np.concatenate([o.ravel(), s.ravel(), f_u.ravel(), f_v.ravel()])

    def backward(d_flat: np.ndarray):
        d_o = d_flat[:I * J].reshape(I, J)
        d_s = d_flat[I * J:I * J + J * K].reshape(J, K)
        d_fu = d_flat[I * J + J * K:I * J + J * K + I * J].reshape(I, J)
        d_fv = d_flat[I * J + J * K + I * J:].reshape(J, K)
        d_uav = [np.zeros(2 * I + K + 1) for _ in range(J)]
        d_vessel = [np.zeros(2 * J) for _ in range(K)]
        for j in range(J):
            d_uav[j][:I] = d_o[:, j]                        # straight through
            d_uav[j][I + 1:I + K + 1] = d_s[j, :]           # straight through
            idx = active_u[j]
            if len(idx):
                p = f_u[idx, j] / cfg.uav_cpu
                g = d_fu[idx, j] * cfg.uav_cpu
                d_uav[j][I + K + 1 + idx] = p * (g - float(np.dot(g, p)))
        for k in range(K):
            d_vessel[k][:J] = d_s[:, k]                     # straight through
            idx = active_v[k]
            if len(idx):
                p = f_v[idx, k] / cfg.vessel_cpu
                g = d_fv[idx, k] * cfg.vessel_cpu
                d_vessel[k][J + idx] = p * (g - float(np.dot(g, p)))
        return d_uav, d_vessel

    return flat, backward


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max()
    e = np.exp(z)
    return e / e.sum()


# ---------------------------------------------------------------------------
# replay buffer


@dataclass
class Transition:
    obs: dict[str, np.ndarray]
    vecs: dict[str, np.ndarray]   # encoded per-agent actions
    ctx: ProjectionContext
    flat: np.ndarray              # projected joint action, flattened
    reward: float
    next_obs: dict[str, np.ndarray]
    next_ctx: ProjectionContext
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring; uniform sampling without replacement."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._data: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._data)

    def add(self, tr: Transition) -> None:
        if len(self._data) < self.capacity:
            self._data.append(tr)
        else:
            self._data[self._next] = tr
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if batch_size > len(self._data):
            raise ValueError("not enough transitions buffered")
        idx = rng.choice(len(self._data), size=batch_size, replace=False)
        return [self._data[i] for i in idx]


# ---------------------------------------------------------------------------
# agents


class _Agent:
    """One policy network plus the head bookkeeping for its agent kind."""

    def __init__(self, kind: str, cfg: SimConfig, tcfg: TrainerConfig,
                 obs_dim: int, rng: np.random.Generator):
        self.kind = kind
        I, J, K = cfg.num_miot, cfg.num_uav, cfg.num_vessel
        if kind == "uav":
            self.n_binary, self.n_choice, self.n_alloc = I, K + 1, I
        else:
            self.n_binary, self.n_choice, self.n_alloc = J, 0, J
        out_dim = 2 * self.n_binary + self.n_choice + 2 * self.n_alloc
        self.net = nn.DenseNet([obs_dim, *tcfg.hidden, out_dim], rng=rng,
                               hidden_activation=tcfg.activation)
        self.opt = nn.Adam(self.net.parameters(), lr=tcfg.lr)

    def _split(self, raw: np.ndarray):
        nb, nc = 2 * self.n_binary, self.n_choice
        return raw[:nb].reshape(self.n_binary, 2), raw[nb:nb + nc], raw[nb + nc:]

    def sample(self, obs: np.ndarray, rng: np.random.Generator,
               deterministic: bool = False):
        """Returns (encoded action vector, total log-prob, grad closure).

        The closure maps (d_vector, d_logp) to network parameter gradients,
        using the reparameterized and straight-through paths of the heads.
        """
        raw, net_cache = self.net.forward(obs)
        bin_logits, choice_logits, gauss_raw = self._split(raw)
        _, logp_b, hard, cache_b = nn.categorical_head(
            bin_logits, rng=rng, deterministic=deterministic)
        binary = hard[:, 1]
        logp = float(logp_b.sum())
        cache_c = None
        choice_onehot = np.zeros(0)
        if self.n_choice:
            _, logp_c, choice_onehot, cache_c = nn.categorical_head(
                choice_logits, rng=rng, deterministic=deterministic)
            logp += float(logp_c)
        alloc, logp_g, cache_g = nn.gaussian_head(
            gauss_raw, rng=rng, deterministic=deterministic)
        logp += float(logp_g)
        vec = np.concatenate([binary, choice_onehot, alloc])

        def backward(d_vec: np.ndarray, d_logp: float) -> list[np.ndarray]:
            nb, nc = self.n_binary, self.n_choice
            d_hard = np.zeros((nb, 2))
            d_hard[:, 1] = d_vec[:nb]
            d_bin = nn.categorical_head_backward(
                cache_b, d_hard, np.full(nb, d_logp))
            parts = [d_bin.ravel()]
            if nc:
                d_choice = nn.categorical_head_backward(
                    cache_c, d_vec[nb:nb + nc], d_logp)
                parts.append(np.atleast_1d(d_choice).ravel())
            d_gauss = nn.gaussian_head_backward(
                cache_g, d_vec[nb + nc:], d_logp)
            parts.append(np.atleast_1d(d_gauss).ravel())
            d_raw = np.concatenate(parts)
            grads, _ = self.net.backward(net_cache, d_raw)
            return grads

        return vec, logp, backward

    def log_prob(self, obs: np.ndarray, vec: np.ndarray) -> float:
        """Log-density of a stored encoded action under the current policy."""
        raw, _ = self.net.forward(obs)
        bin_logits, choice_logits, gauss_raw = self._split(raw)
        nb, nc = self.n_binary, self.n_choice
        log_soft = bin_logits - _logsumexp(bin_logits)
        idx = (vec[:nb] > 0.5).astype(int)
        logp = float(log_soft[np.arange(nb), idx].sum())
        if nc:
            lc = choice_logits - _logsumexp(choice_logits[None, :])[0]
            logp += float(lc[int(np.argmax(vec[nb:nb + nc]))])
        logp += float(nn.gaussian_log_prob(gauss_raw, vec[nb + nc:])[0])
        return logp


def _logsumexp(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    m = x.max(axis=1, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))


def decode_vector(kind: str, cfg: SimConfig, vec: np.ndarray):
    I, J, K = cfg.num_miot, cfg.num_uav, cfg.num_vessel
    if kind == "uav":
        return UavAction(offers=(vec[:I] > 0.5).astype(float),
                         vessel_choice=int(np.argmax(vec[I:I + K + 1])),
                         alloc=vec[I + K + 1:].copy())
    return VesselAction(admit=(vec[:J] > 0.5).astype(float), alloc=vec[J:].copy())


# ---------------------------------------------------------------------------
# normalization


class Scales:
    """Fixed input scales so network inputs are O(1); deterministic by design."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.pos = max(cfg.area_side, cfg.uav_height, 1.0)
        self.bits = max(cfg.num_miot * cfg.arrival_mean * cfg.task_scale_bits, 1.0)
        I, J, K = cfg.num_miot, cfg.num_uav, cfg.num_vessel
        n_pos = {"uav": 3 * (I + J), "vessel": 3 * (J + K),
                 "state": 3 * (I + J + K)}
        n_q = {"uav": I + J, "vessel": J + K, "state": I + J + K}
        self._obs_scale = {
            kind: np.concatenate([np.full(n_pos[kind], self.pos),
                                  np.full(n_q[kind], self.bits)])
            for kind in ("uav", "vessel", "state")}
        self.flat_scale = np.concatenate([
            np.ones(I * J), np.ones(J * K),
            np.full(I * J, cfg.uav_cpu), np.full(J * K, cfg.vessel_cpu)])

    def obs(self, kind: str, x: np.ndarray) -> np.ndarray:
        return x / self._obs_scale[kind]

    def flat(self, x: np.ndarray) -> np.ndarray:
        return x / self.flat_scale


# ---------------------------------------------------------------------------
# the trainer


@dataclass
class EpisodeLog:
    episode: int
    steps: int
    mean_reward: float
    avg_completion: float
    avg_response: float
    edge_pct: float
    critic_loss: float


class HasacTrainer:
    """Off-policy trainer: twin critics, soft targets, sequential updates."""

    def __init__(self, cfg: SimConfig, tcfg: TrainerConfig | None = None,
                 env: MaritimeMecEnv | None = None):
        self.cfg = cfg
        self.tcfg = tcfg or TrainerConfig()
        self.rng = np.random.default_rng(self.tcfg.seed)
        self.env = env or MaritimeMecEnv(cfg, seed=self.tcfg.seed)
        self.scales = Scales(cfg)
        self.agent_ids = list(self.env.agent_ids)

        obs = self.env.reset()
        init_rng = np.random.default_rng(
            np.random.SeedSequence(self.tcfg.seed).spawn(1)[0])
        self.agents: dict[str, _Agent] = {}
        for aid in self.agent_ids:
            kind = "uav" if aid.startswith("uav_") else "vessel"
            self.agents[aid] = _Agent(kind, cfg, self.tcfg, len(obs[aid]), init_rng)

        state_dim = len(self.env.global_state_vector())
        flat_dim = len(self.scales.flat_scale)
        self.q1 = nn.DenseNet([state_dim + flat_dim, *self.tcfg.hidden, 1],
                              rng=init_rng, hidden_activation=self.tcfg.activation)
        self.q2 = nn.DenseNet([state_dim + flat_dim, *self.tcfg.hidden, 1],
                              rng=init_rng, hidden_activation=self.tcfg.activation)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.q1_opt = nn.Adam(self.q1.parameters(), lr=self.tcfg.lr)
        self.q2_opt = nn.Adam(self.q2.parameters(), lr=self.tcfg.lr)
        self.buffer = ReplayBuffer(self.tcfg.buffer_size)
        self.total_steps = 0
        self.logs: list[EpisodeLog] = []

    # -- acting ---------------------------------------------------------------

    def _kind(self, aid: str) -> str:
        return "uav" if aid.startswith("uav_") else "vessel"

    def _norm_obs(self, aid: str, obs: np.ndarray) -> np.ndarray:
        return self.scales.obs(self._kind(aid), obs)

    def act(self, obs: dict[str, np.ndarray], deterministic: bool = False):
        vecs = {}
        for aid in self.agent_ids:
            vec, _, _ = self.agents[aid].sample(
                self._norm_obs(aid, obs[aid]), self.rng, deterministic)
            vecs[aid] = vec
        raw = {aid: decode_vector(self._kind(aid), self.cfg, vecs[aid])
               for aid in self.agent_ids}
        return raw, vecs

    def _vec_lists(self, vecs: dict[str, np.ndarray]):
        uav = [vecs[f"uav_{j}"] for j in range(self.cfg.num_uav)]
        vessel = [vecs[f"vessel_{k}"] for k in range(self.cfg.num_vessel)]
        return uav, vessel

    # -- critic side ------------------------------------------------------------

    def _critic_input(self, state: np.ndarray, flat: np.ndarray) -> np.ndarray:
        return np.concatenate([self.scales.obs("state", state), self.scales.flat(flat)])

    def critic_target(self, batch: list[Transition]) -> np.ndarray:
        """One-step soft target: r + gamma (min target Q - alpha sum log pi)."""
        t = self.tcfg
        ys = np.zeros(len(batch))
        for n, tr in enumerate(batch):
            if tr.done:
                ys[n] = tr.reward
                continue
            vecs, logp = {}, 0.0
            for aid in self.agent_ids:
                vec, lp, _ = self.agents[aid].sample(
                    self._norm_obs(aid, tr.next_obs[aid]), self.rng)
                vecs[aid] = vec
                logp += lp
            uav, vessel = self._vec_lists(vecs)
            flat, _ = project_vectors(self.cfg, tr.next_ctx, uav, vessel)
            x = self._critic_input(self._next_state(tr), flat)
            q1, _ = self.q1_target.forward(x)
            q2, _ = self.q2_target.forward(x)
            ys[n] = tr.reward + t.gamma * (min(float(q1[0]), float(q2[0]))
                                           - t.alpha * logp)
        return ys

    def _state(self, tr: Transition) -> np.ndarray:
        return tr.obs["__state__"]

    def _next_state(self, tr: Transition) -> np.ndarray:
        return tr.next_obs["__state__"]

    def critic_update(self, batch: list[Transition]) -> float:
        ys = self.critic_target(batch)
        xs = np.stack([self._critic_input(self._state(tr), tr.flat) for tr in batch])
        loss = 0.0
        for net, opt in ((self.q1, self.q1_opt), (self.q2, self.q2_opt)):
            pred, cache = net.forward(xs)
            err = pred[:, 0] - ys
            loss += float(np.mean(err ** 2))
            grads, _ = net.backward(cache, (2.0 * err / len(batch))[:, None])
            if not all(np.isfinite(g).all() for g in grads):
                raise FloatingPointError("non-finite critic gradient")
            opt.step(net.parameters(), grads)
        return loss / 2.0

    def polyak_update(self) -> None:
        rho = self.tcfg.polyak
        for net, target in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            for p, tp in zip(net.parameters(), target.parameters()):
                tp *= rho
                tp += (1.0 - rho) * p

    # -- policy side ------------------------------------------------------------

    def sequential_policy_update(self, batch: list[Transition]) -> None:
        """Update each agent in a random order; predecessors re-sample with
        their already-updated policies, successors keep their buffered
        actions."""
        order = [self.agent_ids[i]
                 for i in self.rng.permutation(len(self.agent_ids))]
        t = self.tcfg
        for pos, aid in enumerate(order):
            done_agents = set(order[:pos])
            grads_total = None
            for tr in batch:
                vecs = {a: tr.vecs[a] for a in self.agent_ids}
                for prev in done_agents:
                    vecs[prev], _, _ = self.agents[prev].sample(
                        self._norm_obs(prev, tr.obs[prev]), self.rng)
                vec, logp, head_back = self.agents[aid].sample(
                    self._norm_obs(aid, tr.obs[aid]), self.rng)
                vecs[aid] = vec
                uav, vessel = self._vec_lists(vecs)
                flat, proj_back = project_vectors(self.cfg, tr.ctx, uav, vessel)
                x = self._critic_input(self._state(tr), flat)
                q1, c1 = self.q1.forward(x)
                q2, c2 = self.q2.forward(x)
                net, cache = (self.q1, c1) if q1[0] <= q2[0] else (self.q2, c2)
                # maximize min Q - alpha log pi  ->  descend its negation
                _, d_input = net.backward(cache, np.array([-1.0 / len(batch)]))
                d_flat = d_input[len(self._state(tr)):] / self.scales.flat_scale
                d_uav, d_vessel = proj_back(d_flat)
                if aid.startswith("uav_"):
                    d_vec = d_uav[int(aid.split("_")[1])]
                else:
                    d_vec = d_vessel[int(aid.split("_")[1])]
                grads = head_back(d_vec, t.alpha / len(batch))
                if grads_total is None:
                    grads_total = grads
                else:
                    for acc, g in zip(grads_total, grads):
                        acc += g
            agent = self.agents[aid]
            if not all(np.isfinite(g).all() for g in grads_total):
                raise FloatingPointError(f"non-finite policy gradient for {aid}")
            agent.opt.step(agent.net.parameters(), grads_total)

    # -- main loop -----------------------------------------------------------------

    def train(self, episodes: int | None = None,
              checkpoint_dir: str | None = None) -> list[EpisodeLog]:
        t = self.tcfg
        episodes = episodes if episodes is not None else t.episodes
        for ep in range(episodes):
            obs = self.env.reset(seed=int(self.rng.integers(2 ** 31)))
            rewards = []
            losses = []
            done = False
            while not done:
                state = self.env.global_state_vector()
                ctx = capture_context(self.env)
                raw, vecs = self.act(obs)
                joint = self.env.project_action(raw)
                flat = np.concatenate([
                    joint.offload_o.ravel(), joint.offload_s.ravel(),
                    joint.alloc_u.ravel(), joint.alloc_v.ravel()])
                next_obs, reward, done, _info = self.env.step_joint(joint,
                                                                    _projected=True)
                store_obs = dict(obs)
                store_obs["__state__"] = state
                store_next = dict(next_obs)
                store_next["__state__"] = self.env.global_state_vector()
                self.buffer.add(Transition(
                    obs=store_obs, vecs=vecs, ctx=ctx, flat=flat,
                    reward=reward, next_obs=store_next,
                    next_ctx=capture_context(self.env), done=done))
                rewards.append(reward)
                obs = next_obs
                self.total_steps += 1
                ready = (len(self.buffer) >= max(t.batch_size, t.warmup_steps)
                         and self.total_steps % t.update_every == 0)
                if ready:
                    for _ in range(t.updates_per_cycle):
                        batch = self.buffer.sample(t.batch_size, self.rng)
                        losses.append(self.critic_update(batch))
                        self.sequential_policy_update(batch)
                        self.polyak_update()
            metrics = self.env.ledger.metrics()
            self.logs.append(EpisodeLog(
                episode=ep, steps=len(rewards),
                mean_reward=float(np.mean(rewards)),
                avg_completion=metrics.avg_completion,
                avg_response=metrics.avg_response,
                edge_pct=metrics.edge_pct,
                critic_loss=float(np.mean(losses)) if losses else float("nan")))
            if checkpoint_dir is not None:
                self.save(checkpoint_dir)
        return self.logs

    def evaluate(self, episodes: int = 1, seed: int = 0):
        """Deterministic rollouts; returns (mean reward, ledger metrics list)."""
        rewards, metrics = [], []
        for ep in range(episodes):
            obs = self.env.reset(seed=seed + ep)
            done = False
            while not done:
                raw, _ = self.act(obs, deterministic=True)
                obs, reward, done, _ = self.env.step(raw)
                rewards.append(reward)
            metrics.append(self.env.ledger.metrics())
        return float(np.mean(rewards)), metrics

    # -- persistence -------------------------------------------------------------

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        for aid, agent in self.agents.items():
            agent.net.save(os.path.join(directory, f"policy_{aid}.npz"))
        self.q1.save(os.path.join(directory, "q1.npz"))
        self.q2.save(os.path.join(directory, "q2.npz"))
        self.q1_target.save(os.path.join(directory, "q1_target.npz"))
        self.q2_target.save(os.path.join(directory, "q2_target.npz"))

    def load(self, directory: str) -> None:
        for aid, agent in self.agents.items():
            agent.net = nn.DenseNet.load(os.path.join(directory, f"policy_{aid}.npz"))
            agent.opt = nn.Adam(agent.net.parameters(), lr=self.tcfg.lr)
        self.q1 = nn.DenseNet.load(os.path.join(directory, "q1.npz"))
        self.q2 = nn.DenseNet.load(os.path.join(directory, "q2.npz"))
        self.q1_target = nn.DenseNet.load(os.path.join(directory, "q1_target.npz"))
        self.q2_target = nn.DenseNet.load(os.path.join(directory, "q2_target.npz"))
        self.q1_opt = nn.Adam(self.q1.parameters(), lr=self.tcfg.lr)
        self.q2_opt = nn.Adam(self.q2.parameters(), lr=self.tcfg.lr)


# ---------------------------------------------------------------------------
# on-policy variant


class HaA2cTrainer:
    """Advantage actor-critic sharing the agent layout: one value network on
    the global state, per-agent policy gradients taken in a random order each
    episode."""

    def __init__(self, cfg: SimConfig, tcfg: TrainerConfig | None = None,
                 env: MaritimeMecEnv | None = None):
        self.cfg = cfg
        self.tcfg = tcfg or TrainerConfig()
        self.rng = np.random.default_rng(self.tcfg.seed)
        self.env = env or MaritimeMecEnv(cfg, seed=self.tcfg.seed)
        self.scales = Scales(cfg)
        self.agent_ids = list(self.env.agent_ids)
        obs = self.env.reset()
        init_rng = np.random.default_rng(
            np.random.SeedSequence(self.tcfg.seed).spawn(1)[0])
        self.agents = {}
        for aid in self.agent_ids:
            kind = "uav" if aid.startswith("uav_") else "vessel"
            self.agents[aid] = _Agent(kind, cfg, self.tcfg, len(obs[aid]), init_rng)
        state_dim = len(self.env.global_state_vector())
        self.value = nn.DenseNet([state_dim, *self.tcfg.hidden, 1], rng=init_rng,
                                 hidden_activation=self.tcfg.activation)
        self.value_opt = nn.Adam(self.value.parameters(), lr=self.tcfg.lr)
        self.logs: list[EpisodeLog] = []

    def _kind(self, aid: str) -> str:
        return "uav" if aid.startswith("uav_") else "vessel"

    def _norm_obs(self, aid: str, obs: np.ndarray) -> np.ndarray:
        return self.scales.obs(self._kind(aid), obs)

    def act(self, obs, deterministic: bool = False):
        vecs = {}
        for aid in self.agent_ids:
            vec, _, _ = self.agents[aid].sample(
                self._norm_obs(aid, obs[aid]), self.rng, deterministic)
            vecs[aid] = vec
        raw = {aid: decode_vector(self._kind(aid), self.cfg, vecs[aid])
               for aid in self.agent_ids}
        return raw, vecs

    def train(self, episodes: int | None = None) -> list[EpisodeLog]:
        t = self.tcfg
        episodes = episodes if episodes is not None else t.episodes
        for ep in range(episodes):
            obs = self.env.reset(seed=int(self.rng.integers(2 ** 31)))
            states, all_obs, all_vecs, rewards = [], [], [], []
            done = False
            while not done:
                states.append(self.scales.obs("state", self.env.global_state_vector()))
                raw, vecs = self.act(obs)
                all_obs.append(obs)
                all_vecs.append(vecs)
                obs, reward, done, _ = self.env.step(raw)
                rewards.append(reward)
            returns = np.zeros(len(rewards))
            acc = 0.0
            for n in reversed(range(len(rewards))):
                acc = rewards[n] + t.gamma * acc
                returns[n] = acc
            xs = np.stack(states)
            values, cache = self.value.forward(xs)
            adv = returns - values[:, 0]
            grads, _ = self.value.backward(
                cache, (-2.0 * adv / len(adv))[:, None])
            self.value_opt.step(self.value.parameters(), grads)
            order = [self.agent_ids[i]
                     for i in self.rng.permutation(len(self.agent_ids))]
            for aid in order:
                agent = self.agents[aid]
                total = None
                for n in range(len(rewards)):
                    o = self._norm_obs(aid, all_obs[n][aid])
                    g = self._logp_grads(agent, o, all_vecs[n][aid],
                                         -adv[n] / len(rewards))
                    if total is None:
                        total = g
                    else:
                        for acc_g, gg in zip(total, g):
                            acc_g += gg
                agent.opt.step(agent.net.parameters(), total)
            metrics = self.env.ledger.metrics()
            losses = float(np.mean(adv ** 2))
            self.logs.append(EpisodeLog(
                episode=ep, steps=len(rewards),
                mean_reward=float(np.mean(rewards)),
                avg_completion=metrics.avg_completion,
                avg_response=metrics.avg_response,
                edge_pct=metrics.edge_pct, critic_loss=losses))
        return self.logs

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        for aid, agent in self.agents.items():
            agent.net.save(os.path.join(directory, f"policy_{aid}.npz"))
        self.value.save(os.path.join(directory, "value.npz"))

    def load(self, directory: str) -> None:
        for aid, agent in self.agents.items():
            agent.net = nn.DenseNet.load(os.path.join(directory, f"policy_{aid}.npz"))
            agent.opt = nn.Adam(agent.net.parameters(), lr=self.tcfg.lr)
        self.value = nn.DenseNet.load(os.path.join(directory, "value.npz"))
        self.value_opt = nn.Adam(self.value.parameters(), lr=self.tcfg.lr)

    def _logp_grads(self, agent: _Agent, obs: np.ndarray, vec: np.ndarray,
                    d_logp: float) -> list[np.ndarray]:
        """Parameter gradients of d_logp * log pi(vec | obs)."""
        raw, net_cache = agent.net.forward(obs)
        bin_logits, choice_logits, gauss_raw = agent._split(raw)
        nb, nc = agent.n_binary, agent.n_choice
        probs_b = _softmax_rows(bin_logits)
        onehot_b = np.zeros_like(bin_logits)
        onehot_b[np.arange(nb), (vec[:nb] > 0.5).astype(int)] = 1.0
        d_bin = d_logp * (onehot_b - probs_b)
        parts = [d_bin.ravel()]
        if nc:
            probs_c = _softmax_rows(choice_logits[None, :])[0]
            onehot_c = np.zeros(nc)
            onehot_c[int(np.argmax(vec[nb:nb + nc]))] = 1.0
            parts.append(d_logp * (onehot_c - probs_c))
        parts.append(_gaussian_logp_grad(gauss_raw, vec[nb + nc:]) * d_logp)
        grads, _ = agent.net.backward(net_cache, np.concatenate(parts))
        return grads


def _gaussian_logp_grad(raw: np.ndarray, action: np.ndarray) -> np.ndarray:
    """d log-density / d (means, log-stds) for a squashed-Gaussian head."""
    n = len(raw) // 2
    mean, logstd_raw = raw[:n], raw[n:]
    logstd = np.clip(logstd_raw, nn.LOGSTD_MIN, nn.LOGSTD_MAX)
    a = np.clip(action, -1.0 + 1e-9, 1.0 - 1e-9)
    z = (np.arctanh(a) - mean) / np.exp(logstd)
    d_mean = z / np.exp(logstd)
    d_logstd = (z * z - 1.0) * ((logstd_raw > nn.LOGSTD_MIN)
                                & (logstd_raw < nn.LOGSTD_MAX))
    return np.concatenate([d_mean, d_logstd])


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
