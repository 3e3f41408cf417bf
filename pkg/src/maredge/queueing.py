"""Backlog evolution, per-task delay accounting, feasibility checks, metrics.

Two accounting systems coexist by design:

* ``QueueState`` follows the literal max() backlog recursions, including
  phantom departures when a drain term exceeds the backlog. That form is
  what the drift analysis is stated for.
* ``TaskLedger`` moves actually-available bits between tiers (FCFS, capped
  at what is present), and is the source of completion/response/edge
  metrics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from maredge.config import SimConfig
from maredge.scenario import Task


@dataclass
class QueueState:
    q_miot: np.ndarray     # (I,) bits
    q_uav: np.ndarray      # (J,) bits
    q_vessel: np.ndarray   # (K,) bits
    slot: int = 0

    @classmethod
    def zeros(cls, cfg: SimConfig) -> "QueueState":
        return cls(np.zeros(cfg.num_miot), np.zeros(cfg.num_uav), np.zeros(cfg.num_vessel), 0)

    def copy(self) -> "QueueState":
        return QueueState(self.q_miot.copy(), self.q_uav.copy(), self.q_vessel.copy(), self.slot)


@dataclass
class JointAction:
    offload_o: np.ndarray   # (I, J) binary
    offload_s: np.ndarray   # (J, K) binary
    alloc_u: np.ndarray     # (I, J) cycles/s
    alloc_v: np.ndarray     # (J, K) cycles/s

    @classmethod
    def zeros(cls, cfg: SimConfig) -> "JointAction":
        I, J, K = cfg.num_miot, cfg.num_uav, cfg.num_vessel
        return cls(np.zeros((I, J)), np.zeros((J, K)), np.zeros((I, J)), np.zeros((J, K)))

    def copy(self) -> "JointAction":
        return JointAction(self.offload_o.copy(), self.offload_s.copy(),
                           self.alloc_u.copy(), self.alloc_v.copy())


_CAP_TOL = 1e-9  # relative slack for capacity boundary comparisons


def validate_action(action: JointAction, cfg: SimConfig,
                    residency: np.ndarray | None = None) -> list[str]:
    """Return a list of violated constraints (empty when feasible).

    ``residency`` is an optional (I, J) boolean mask of MIoT task bits
    resident at each UAV; when given, allocations to non-resident pairs are
    flagged.
    """
    I, J, K = cfg.num_miot, cfg.num_uav, cfg.num_vessel
    O, S, Fu, Fv = action.offload_o, action.offload_s, action.alloc_u, action.alloc_v
    if O.shape != (I, J) or Fu.shape != (I, J) or S.shape != (J, K) or Fv.shape != (J, K):
        raise ValueError(
            f"action dimensions {O.shape}/{S.shape}/{Fu.shape}/{Fv.shape} "
            f"do not match scenario ({I},{J})/({J},{K})"
        )
    out: list[str] = []
    if not np.isin(O, (0, 1)).all():
        out.append("offload-o-nonbinary")
    if not np.isin(S, (0, 1)).all():
        out.append("offload-s-nonbinary")
    for i in np.flatnonzero(O.sum(axis=1) > 1):
        out.append(f"miot-single-uav: miot {i}")
    for j in np.flatnonzero(S.sum(axis=1) > 1):
        out.append(f"uav-single-vessel: uav {j}")
    for k in np.flatnonzero(S.sum(axis=0) > cfg.antenna_limit):
        out.append(f"antenna-limit: vessel {k}")
    if (Fu < 0).any() or (Fv < 0).any():
        out.append("allocation-negative")
    for j in np.flatnonzero(Fu.sum(axis=0) > cfg.uav_cpu * (1 + _CAP_TOL)):
        out.append(f"uav-capacity: uav {j}")
    for k in np.flatnonzero(Fv.sum(axis=0) > cfg.vessel_cpu * (1 + _CAP_TOL)):
        out.append(f"vessel-capacity: vessel {k}")
    if residency is not None:
        active = residency | (O > 0)
        bad = (Fu > 0) & ~active
        for i, j in zip(*np.nonzero(bad)):
            out.append(f"allocation-nonresident: miot {i} uav {j}")
    return out


# ---------------------------------------------------------------------------
# literal backlog recursions


def step_miot_queue(q: float, served_rate: float, arrival: float, tau: float) -> float:
    return max(q - tau * served_rate + arrival, 0.0)


def step_uav_queue(q: float, in_rate: float, out_rate: float,
                   local_bits_processed: float, tau: float) -> float:
    return max(q - tau * out_rate - local_bits_processed + tau * in_rate, 0.0)


def step_vessel_queue(q: float, in_rate: float, bits_processed: float, tau: float) -> float:
    return max(q - bits_processed + tau * in_rate, 0.0)


# ---------------------------------------------------------------------------
# per-task service delays and the slot cost


def uav_task_delay(d: float, c: float, r_m2u: float, f_u: float) -> float:
    if d == 0:
        return 0.0
    if r_m2u <= 0 or f_u <= 0:
        raise ValueError("delay undefined: task not scheduled on this path")
    return d / r_m2u + d * c / f_u


def vessel_task_delay(d: float, c: float, r_m2u: float, r_u2v: float, f_v: float) -> float:
    if d == 0:
        return 0.0
    if r_m2u <= 0 or r_u2v <= 0 or f_v <= 0:
        raise ValueError("delay undefined: task not scheduled on this path")
    return d / r_m2u + d / r_u2v + d * c / f_v


def slot_cost_phi(tasks: list[Task], action: JointAction, m2u: np.ndarray,
                  u2v: np.ndarray) -> float:
    """Sum of service delays actually incurred by this slot's new tasks.

    A task offloaded over a live link is charged its transmission time plus
    one compute term: the UAV term when the UAV allocates cycles to its
    origin, otherwise the vessel relay terms when the UAV forwards to a
    vessel that allocates cycles. Unscheduled tasks are charged nothing this
    slot (they stay queued).
    """
    phi = 0.0
    for task in tasks:
        d = task.data_size
        if d <= 0:
            continue
        i = task.origin_miot
        js = np.flatnonzero(action.offload_o[i])
        if len(js) == 0:
            continue
        j = int(js[0])
        rate = m2u[i, j]
        if rate <= 0:
            continue
        phi += d / rate
        f_u = action.alloc_u[i, j]
        if f_u > 0:
            phi += d * task.cycles_per_bit / f_u
            continue
        ks = np.flatnonzero(action.offload_s[j])
        if len(ks):
            k = int(ks[0])
            f_v = action.alloc_v[j, k]
            if u2v[j, k] > 0 and f_v > 0:
                phi += d / u2v[j, k] + d * task.cycles_per_bit / f_v
    return phi


def average_cost(phi_history) -> float:
    phi_history = list(phi_history)
    if not phi_history:
        raise ValueError("average cost requires at least one recorded slot")
    return float(sum(phi_history)) / len(phi_history)


# ---------------------------------------------------------------------------
# per-task ledger


@dataclass
class TaskRecord:
    task_id: int
    miot: int
    arrival_slot: int
    size_bits: float
    cycles_per_bit: float
    remaining: float
    first_service_slot: int | None = None
    completion_slot: int | None = None
    bits_local: float = 0.0
    bits_uav: float = 0.0
    bits_vessel: float = 0.0


@dataclass
class _StageEntry:
    task_id: int
    origin: int      # MIoT index at UAV stage, UAV index at vessel stage
    bits: float


@dataclass
class SlotSummary:
    slot: int
    phi: float
    bits_local: float
    bits_uav: float
    bits_vessel: float
    completed: int


@dataclass
class Metrics:
    avg_completion: float
    avg_response: float
    edge_pct: float
    completed_tasks: int
    empty: bool = False


class TaskLedger:
    """FCFS bit-level task tracking across the MIoT/UAV/vessel tiers."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.records: list[TaskRecord] = []
        self.miot_queues: list[list[_StageEntry]] = [[] for _ in range(cfg.num_miot)]
        self.uav_queues: list[list[_StageEntry]] = [[] for _ in range(cfg.num_uav)]
        self.vessel_queues: list[list[_StageEntry]] = [[] for _ in range(cfg.num_vessel)]
        self.slot_summaries: list[SlotSummary] = []
        self.phi_history: list[float] = []

    # -- residency views -----------------------------------------------------

    def miot_backlog_bits(self) -> np.ndarray:
        return np.array([sum(e.bits for e in q) for q in self.miot_queues])

    def uav_resident_bits(self) -> np.ndarray:
        """(I, J) bits of MIoT-origin work resident at each UAV."""
        out = np.zeros((self.cfg.num_miot, self.cfg.num_uav))
        for j, q in enumerate(self.uav_queues):
            for e in q:
                out[e.origin, j] += e.bits
        return out

    def vessel_resident_bits(self) -> np.ndarray:
        """(J, K) bits of UAV-origin work resident at each vessel."""
        out = np.zeros((self.cfg.num_uav, self.cfg.num_vessel))
        for k, q in enumerate(self.vessel_queues):
            for e in q:
                out[e.origin, k] += e.bits
        return out

    def residency_mask(self) -> np.ndarray:
        return self.uav_resident_bits() > 0

    # -- slot evolution --------------------------------------------------------

    def advance(self, slot: int, tasks: list[Task], action: JointAction,
                m2u: np.ndarray, u2v: np.ndarray) -> SlotSummary:
        """Apply one slot of service. Drains at the UAV and vessel tiers act
        on start-of-slot contents; freshly transmitted bits land afterwards
        and are served from the next slot on."""
        cfg = self.cfg
        tau = cfg.slot_len
        bits_local = bits_uav = bits_vessel = 0.0
        by_id = {r.task_id: r for r in self.records}

        def mark_service(rec: TaskRecord):
            if rec.first_service_slot is None:
                rec.first_service_slot = slot

        def process(rec: TaskRecord, amount: float, tier: str):
            rec.remaining -= amount
            if tier == "local":
                rec.bits_local += amount
            elif tier == "uav":
                rec.bits_uav += amount
            else:
                rec.bits_vessel += amount
            mark_service(rec)

        # vessel compute (start-of-slot residents)
        for k in range(cfg.num_vessel):
            for j in range(cfg.num_uav):
                budget = tau * action.alloc_v[j, k] / cfg.cycles_per_bit
                if budget <= 0:
                    continue
                done = self._drain(self.vessel_queues[k], budget, origin=j)
                for tid, amt in done:
                    process(by_id[tid], amt, "vessel")
                    bits_vessel += amt

        # UAV compute, then forwarding of unallocated residents
        for j in range(cfg.num_uav):
            for i in range(cfg.num_miot):
                budget = tau * action.alloc_u[i, j] / cfg.cycles_per_bit
                if budget <= 0:
                    continue
                done = self._drain(self.uav_queues[j], budget, origin=i)
                for tid, amt in done:
                    process(by_id[tid], amt, "uav")
                    bits_uav += amt
            ks = np.flatnonzero(action.offload_s[j])
            if len(ks):
                k = int(ks[0])
                budget = tau * u2v[j, k]
                skip = {i for i in range(cfg.num_miot) if action.alloc_u[i, j] > 0}
                moved = self._drain(self.uav_queues[j], budget, exclude_origins=skip)
                for tid, amt in moved:
                    self._enqueue(self.vessel_queues[k], tid, j, amt)

        # new arrivals join their MIoT queue; zero-size tasks finish instantly
        for task in tasks:
            rec = TaskRecord(task_id=len(self.records), miot=task.origin_miot,
                             arrival_slot=slot, size_bits=task.data_size,
                             cycles_per_bit=task.cycles_per_bit,
                             remaining=task.data_size)
            self.records.append(rec)
            by_id[rec.task_id] = rec
            if task.data_size <= 0:
                rec.first_service_slot = slot
                rec.completion_slot = slot
            else:
                self.miot_queues[task.origin_miot].append(
                    _StageEntry(rec.task_id, task.origin_miot, task.data_size))

        # MIoT side: transmit over a live link, else fall back to local compute
        for i in range(cfg.num_miot):
            js = np.flatnonzero(action.offload_o[i])
            j = int(js[0]) if len(js) else None
            if j is not None and m2u[i, j] > 0:
                budget = tau * m2u[i, j]
                moved = self._drain(self.miot_queues[i], budget)
                for tid, amt in moved:
                    mark_service(by_id[tid])
                    self._enqueue(self.uav_queues[j], tid, i, amt)
            elif cfg.miot_local_cpu > 0:
                budget = tau * cfg.miot_local_cpu / cfg.cycles_per_bit
                done = self._drain(self.miot_queues[i], budget)
                for tid, amt in done:
                    process(by_id[tid], amt, "local")
                    bits_local += amt

        completed = 0
        for rec in self.records:
            if rec.completion_slot is None and rec.remaining <= 1e-9:
                rec.remaining = 0.0
                rec.completion_slot = slot
                completed += 1

        phi = slot_cost_phi(tasks, action, m2u, u2v)
        self.phi_history.append(phi)
        summary = SlotSummary(slot=slot, phi=phi, bits_local=bits_local,
                              bits_uav=bits_uav, bits_vessel=bits_vessel,
                              completed=completed)
        self.slot_summaries.append(summary)
        return summary

    @staticmethod
    def _drain(queue: list[_StageEntry], budget: float, origin: int | None = None,
               exclude_origins: set[int] | None = None) -> list[tuple[int, float]]:
        """Take up to ``budget`` bits FCFS from matching entries; returns
        (task_id, bits) chunks removed."""
        taken: list[tuple[int, float]] = []
        remaining_entries: list[_StageEntry] = []
        for entry in queue:
            match = (origin is None or entry.origin == origin) and \
                    (exclude_origins is None or entry.origin not in exclude_origins)
            if budget > 1e-12 and match:
                amt = min(entry.bits, budget)
                budget -= amt
                entry.bits -= amt
                taken.append((entry.task_id, amt))
            if entry.bits > 1e-12:
                remaining_entries.append(entry)
        queue[:] = remaining_entries
        return taken

    @staticmethod
    def _enqueue(queue: list[_StageEntry], task_id: int, origin: int, bits: float):
        for entry in queue:
            if entry.task_id == task_id and entry.origin == origin:
                entry.bits += bits
                return
        queue.append(_StageEntry(task_id, origin, bits))

    # -- reporting -------------------------------------------------------------

    def metrics(self) -> Metrics:
        tau = self.cfg.slot_len
        done = [r for r in self.records if r.completion_slot is not None]
        if not done:
            return Metrics(float("nan"), float("nan"), float("nan"), 0, empty=True)
        completions = []
        responses = []
        for r in done:
            if r.size_bits <= 0:
                completions.append(0.0)
                responses.append(0.0)
            else:
                completions.append((r.completion_slot + 1 - r.arrival_slot) * tau)
                responses.append((r.first_service_slot - r.arrival_slot) * tau)
        total = sum(r.bits_local + r.bits_uav + r.bits_vessel for r in self.records)
        edge = sum(r.bits_uav + r.bits_vessel for r in self.records)
        edge_pct = 100.0 * edge / total if total > 0 else 0.0
        return Metrics(avg_completion=float(np.mean(completions)),
                       avg_response=float(np.mean(responses)),
                       edge_pct=edge_pct, completed_tasks=len(done))

    def write_event_log(self, path) -> None:
        """CSV event log: one row per task with timestamps and tier bits."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task_id", "miot", "arrival_slot", "first_service_slot",
                             "completion_slot", "size_bits", "bits_local", "bits_uav",
                             "bits_vessel"])
            for r in self.records:
                writer.writerow([
                    r.task_id, r.miot, r.arrival_slot,
                    "" if r.first_service_slot is None else r.first_service_slot,
                    "" if r.completion_slot is None else r.completion_slot,
                    f"{r.size_bits:.6f}", f"{r.bits_local:.6f}",
                    f"{r.bits_uav:.6f}", f"{r.bits_vessel:.6f}",
                ])
