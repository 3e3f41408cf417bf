"""Partially observable Markov-game wrapper over the scenario, channel,
queueing, and drift models: one agent per UAV and per vessel."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from maredge import channel, lyapunov, queueing, scenario
from maredge.config import SimConfig
from maredge.queueing import JointAction, QueueState, TaskLedger
from maredge.scenario import NodeSet, Task


@dataclass
class UavAction:
    offers: np.ndarray       # (I,) binary offers to MIoTs
    vessel_choice: int       # 0 = keep local, 1..K = offload to vessel k-1
    alloc: np.ndarray        # (I,) allocation logits

    def copy(self) -> "UavAction":
        return UavAction(self.offers.copy(), self.vessel_choice, self.alloc.copy())


@dataclass
class VesselAction:
    admit: np.ndarray        # (J,) binary admission mask over UAVs
    alloc: np.ndarray        # (J,) allocation logits

    def copy(self) -> "VesselAction":
        return VesselAction(self.admit.copy(), self.alloc.copy())


@dataclass
class EnvState:
    nodes: NodeSet
    queues: QueueState
    tasks: list[Task]


@dataclass
class SchedulerView:
    """Read-only snapshot handed to non-learning policies."""
    cfg: SimConfig
    nodes: NodeSet
    queues: QueueState
    tasks: list[Task]
    miot_backlog: np.ndarray        # (I,) ledger bits still at the MIoTs
    uav_resident: np.ndarray        # (I, J) ledger bits resident at UAVs
    vessel_resident: np.ndarray     # (J, K) ledger bits resident at vessels
    m2u_potential: np.ndarray       # (I, J) rate if the link were selected
    u2v_potential: np.ndarray       # (J, K) single-UAV rate if selected


@dataclass
class StepRecord:
    slot: int
    reward: float
    phi: float
    objective: float
    bits_local: float
    bits_uav: float
    bits_vessel: float


class MaritimeMecEnv:
    """Joint-reward Markov game with J UAV agents and K vessel agents."""

    def __init__(self, cfg: SimConfig, seed: int | None = None,
                 reward_norm: float | None = None):
        self.cfg = cfg
        self._seed = cfg.rng_seed if seed is None else seed
        self.reward_norm = reward_norm if reward_norm is not None \
            else default_reward_norm(cfg)
        self.caps = lyapunov.default_rate_caps(cfg)
        self.d_const = lyapunov.constant_d(cfg, self.caps)
        self.agent_ids = [f"uav_{j}" for j in range(cfg.num_uav)] \
            + [f"vessel_{k}" for k in range(cfg.num_vessel)]
        self.reset()

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int | None = None) -> dict[str, np.ndarray]:
        if seed is not None:
            self._seed = seed
        ss = np.random.SeedSequence(self._seed)
        topo_ss, arrival_ss, mobility_ss = ss.spawn(3)
        self._arrival_rng = np.random.default_rng(arrival_ss)
        self._mobility_rng = np.random.default_rng(mobility_ss)
        self.nodes = scenario.generate_topology(self.cfg, np.random.default_rng(topo_ss))
        self.queues = QueueState.zeros(self.cfg)
        self.ledger = TaskLedger(self.cfg)
        self.slot = 0
        self.done = False
        self._pending_tasks: list[Task] | None = None
        self.records: list[StepRecord] = []
        self.drift_reports: list[lyapunov.DriftReport] = []
        return self.observations()

    @property
    def state(self) -> EnvState:
        return EnvState(self.nodes, self.queues, self._tasks())

    def _tasks(self) -> list[Task]:
        # arrivals for the current slot are sampled exactly once
        if self._pending_tasks is None:
            self._pending_tasks = scenario.sample_arrivals(
                self.cfg, self.slot, self._arrival_rng)
        return self._pending_tasks

    # -- observation / action surfaces --------------------------------------

    def observations(self) -> dict[str, np.ndarray]:
        obs = {}
        uav_obs = np.concatenate([
            self.nodes.miot_pos.ravel(), self.nodes.uav_pos.ravel(),
            self.queues.q_miot, self.queues.q_uav,
        ])
        vessel_obs = np.concatenate([
            self.nodes.uav_pos.ravel(), self.nodes.vessel_pos.ravel(),
            self.queues.q_uav, self.queues.q_vessel,
        ])
        for j in range(self.cfg.num_uav):
            obs[f"uav_{j}"] = uav_obs.copy()
        for k in range(self.cfg.num_vessel):
            obs[f"vessel_{k}"] = vessel_obs.copy()
        return obs

    def global_state_vector(self) -> np.ndarray:
        return np.concatenate([
            self.nodes.miot_pos.ravel(), self.nodes.uav_pos.ravel(),
            self.nodes.vessel_pos.ravel(),
            self.queues.q_miot, self.queues.q_uav, self.queues.q_vessel,
        ])

    def action_space(self, agent_id: str) -> dict:
        cfg = self.cfg
        if agent_id.startswith("uav_") and agent_id in self.agent_ids:
            return {"kind": "uav", "offers": cfg.num_miot,
                    "vessel_choices": cfg.num_vessel + 1, "alloc": cfg.num_miot}
        if agent_id.startswith("vessel_") and agent_id in self.agent_ids:
            return {"kind": "vessel", "admit": cfg.num_uav, "alloc": cfg.num_uav}
        raise KeyError(f"unknown agent id {agent_id!r}")

    # -- projection -----------------------------------------------------------

    def project_action(self, raw: dict[str, UavAction | VesselAction]) -> JointAction:
        """Map raw agent intents to a feasible JointAction.

        MIoTs accept the best-rate offering UAV (ties to the lowest index);
        vessels admit at most antenna_limit UAVs by descending backlog;
        allocations are softmax shares over each node's resident work.
        """
        cfg = self.cfg
        I, J, K = cfg.num_miot, cfg.num_uav, cfg.num_vessel
        action = JointAction.zeros(cfg)
        potential = self._potential_m2u()

        for i in range(I):
            offering = [j for j in range(J) if raw[f"uav_{j}"].offers[i] > 0]
            if not offering:
                continue
            rates = [potential[i, j] for j in offering]
            action.offload_o[i, offering[int(np.argmax(rates))]] = 1.0

        wants: dict[int, list[int]] = {k: [] for k in range(K)}
        for j in range(J):
            choice = int(raw[f"uav_{j}"].vessel_choice)
            if 1 <= choice <= K:
                k = choice - 1
                if raw[f"vessel_{k}"].admit[j] > 0:
                    wants[k].append(j)
        for k, js in wants.items():
            ranked = sorted(js, key=lambda j: (-self.queues.q_uav[j], j))
            for j in ranked[: cfg.antenna_limit]:
                action.offload_s[j, k] = 1.0

        resident = self.ledger.uav_resident_bits()
        for j in range(J):
            active = np.flatnonzero((resident[:, j] > 0) | (action.offload_o[:, j] > 0))
            if len(active):
                logits = raw[f"uav_{j}"].alloc[active]
                action.alloc_u[active, j] = cfg.uav_cpu * _softmax(logits)
        vessel_resident = self.ledger.vessel_resident_bits()
        for k in range(K):
            active = np.flatnonzero((vessel_resident[:, k] > 0) | (action.offload_s[:, k] > 0))
            if len(active):
                logits = raw[f"vessel_{k}"].alloc[active]
                action.alloc_v[active, k] = cfg.vessel_cpu * _softmax(logits)
        return action

    def _potential_m2u(self) -> np.ndarray:
        out = np.zeros((self.cfg.num_miot, self.cfg.num_uav))
        for i in range(self.cfg.num_miot):
            for j in range(self.cfg.num_uav):
                loss = channel.path_loss_db(self.nodes.miot_pos[i], self.nodes.uav_pos[j],
                                            self.cfg)
                out[i, j] = channel.m2u_rate(1, loss, self.cfg)
        return out

    def _potential_u2v(self) -> np.ndarray:
        out = np.zeros((self.cfg.num_uav, self.cfg.num_vessel))
        for j in range(self.cfg.num_uav):
            for k in range(self.cfg.num_vessel):
                gain = channel.u2v_gain(self.nodes.uav_pos[j], self.nodes.vessel_pos[k],
                                        self.cfg.ref_gain_db)
                out[j, k] = channel.u2v_rate(1, 1, gain, self.cfg)
        return out

    def view(self) -> SchedulerView:
        return SchedulerView(
            cfg=self.cfg, nodes=self.nodes.copy(), queues=self.queues.copy(),
            tasks=list(self._tasks()),
            miot_backlog=self.ledger.miot_backlog_bits(),
            uav_resident=self.ledger.uav_resident_bits(),
            vessel_resident=self.ledger.vessel_resident_bits(),
            m2u_potential=self._potential_m2u(),
            u2v_potential=self._potential_u2v(),
        )

    # -- dynamics ---------------------------------------------------------------

    def step(self, raw: dict[str, UavAction | VesselAction]):
        """Project raw agent intents and advance one slot."""
        if self.done:
            raise RuntimeError("step called after episode end")
        joint = self.project_action(raw)
        return self.step_joint(joint, _projected=True)

    def step_joint(self, action: JointAction, _projected: bool = False):
        """Advance one slot under an explicit JointAction (baseline path)."""
        if self.done:
            raise RuntimeError("step called after episode end")
        cfg = self.cfg
        violations = queueing.validate_action(action, cfg)
        if violations:
            raise ValueError(f"infeasible action: {violations}")
        tasks = self._tasks()
        rates = channel.build_rate_table(self.nodes, action.offload_o, action.offload_s, cfg)

        summary = self.ledger.advance(self.slot, tasks, action, rates.m2u_rate,
                                      rates.u2v_rate)
        phi = float(summary.phi)
        objective = float(lyapunov.per_slot_objective(
            self.queues, action, rates.m2u_rate, rates.u2v_rate, phi,
            cfg.lyapunov_v, cfg))
        reward = -objective / self.reward_norm

        flows = self._slot_flows(action, rates, tasks)
        q_next = self._advance_queues(flows)
        report = self._drift_report(self.queues, q_next, flows, phi, objective)
        self.drift_reports.append(report)

        self.queues = q_next
        self.records.append(StepRecord(
            slot=self.slot, reward=reward, phi=phi, objective=objective,
            bits_local=summary.bits_local, bits_uav=summary.bits_uav,
            bits_vessel=summary.bits_vessel))
        self.nodes = scenario.advance_positions(self.nodes, cfg, self._mobility_rng)
        self.slot += 1
        self._pending_tasks = None
        self.done = self.slot >= cfg.horizon
        info = {
            "phi": phi, "objective": objective, "joint_action": action,
            "drift_report": report, "slot_summary": summary, "flows": flows,
        }
        return self.observations(), reward, self.done, info

    def _slot_flows(self, action: JointAction, rates: channel.LinkRateTable,
                    tasks: list[Task]) -> lyapunov.SlotFlows:
        cfg = self.cfg
        tau = cfg.slot_len
        c = cfg.cycles_per_bit
        arrivals = np.zeros(cfg.num_miot)
        for task in tasks:
            arrivals[task.origin_miot] += task.data_size
        return lyapunov.SlotFlows(
            miot_service=tau * rates.m2u_rate.sum(axis=1),
            miot_arrival=arrivals,
            uav_service=tau * rates.u2v_rate.sum(axis=1)
            + tau * action.alloc_u.sum(axis=0) / c,
            uav_arrival=tau * rates.m2u_rate.sum(axis=0),
            vessel_service=tau * action.alloc_v.sum(axis=0) / c,
            vessel_arrival=tau * rates.u2v_rate.sum(axis=0),
        )

    def _advance_queues(self, flows: lyapunov.SlotFlows) -> QueueState:
        q = self.queues
        return QueueState(
            q_miot=np.maximum(q.q_miot - flows.miot_service + flows.miot_arrival, 0.0),
            q_uav=np.maximum(q.q_uav - flows.uav_service + flows.uav_arrival, 0.0),
            q_vessel=np.maximum(q.q_vessel - flows.vessel_service + flows.vessel_arrival, 0.0),
            slot=q.slot + 1,
        )

    def _drift_report(self, q_t: QueueState, q_next: QueueState,
                      flows: lyapunov.SlotFlows, phi: float,
                      objective: float) -> lyapunov.DriftReport:
        cfg = self.cfg
        check = lyapunov.bound_check(q_t, q_next, flows, cfg.lyapunov_v, phi,
                                     self.d_const)
        l_t = lyapunov.lyapunov_value(q_t)
        l_next = lyapunov.lyapunov_value(q_next)
        return lyapunov.DriftReport(
            l_t=l_t, l_next=l_next, drift=l_next - l_t,
            penalty=cfg.lyapunov_v * phi, objective=objective,
            d_const=self.d_const,
            bound_rhs=check.aggregate_slack + (l_next - l_t),
            bound_slack=check.aggregate_slack, bound_holds=check.holds)

    # -- export -------------------------------------------------------------------

    def write_trajectory(self, path) -> None:
        """JSON-lines dump: one record per executed step."""
        import json
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps({
                    "slot": r.slot, "reward": r.reward, "phi": r.phi,
                    "objective": r.objective, "bits_local": r.bits_local,
                    "bits_uav": r.bits_uav, "bits_vessel": r.bits_vessel,
                }, sort_keys=True) + "\n")


def default_reward_norm(cfg: SimConfig) -> float:
    """Order-of-magnitude scale of the per-slot objective at nominal load, so
    rewards are O(1). The queue-weighted terms dominate; their scale is the
    square of the offered load per slot."""
    load = cfg.num_miot * cfg.arrival_mean * cfg.task_scale_bits
    return max(1.0, cfg.slot_len * load ** 2)


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.asarray(x, dtype=float)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()
