"""Non-learning baseline policies and an exhaustive tiny-instance oracle.

All baselines share one slot model: resident work already at a UAV is first
re-routed (compute in place vs forward to a vessel) by completion estimate,
then each MIoT's pending work item is placed. Completion estimates use a
deterministic FCFS convention: queue wait is the node's start-of-slot
resident work at full speed, and the item's own compute uses the node's full
speed. Estimates therefore do not interact across items placed in the same
slot, which is what makes the exhaustive oracle and the greedy policy agree.
All tie-breaks go to the lowest node index.
"""

from __future__ import annotations

import itertools

import numpy as np

from maredge import channel, lyapunov, queueing
from maredge.env import SchedulerView
from maredge.queueing import JointAction

_EPS = 1e-12


def slot_work_items(view: SchedulerView) -> list[tuple[int, float]]:
    """One pending work item per MIoT: this slot's new task, else the queued
    backlog head; MIoTs with no work are skipped."""
    new_bits = np.zeros(view.cfg.num_miot)
    for task in view.tasks:
        new_bits[task.origin_miot] += task.data_size
    items = []
    for i in range(view.cfg.num_miot):
        if new_bits[i] > 0:
            items.append((i, float(new_bits[i])))
        elif view.miot_backlog[i] > 0:
            items.append((i, float(view.miot_backlog[i])))
    return items


class _SlotBuilder:
    """Accumulates routing commitments and emits a feasible JointAction."""

    def __init__(self, view: SchedulerView):
        self.view = view
        cfg = view.cfg
        self.action = JointAction.zeros(cfg)
        self.uav_vessel: dict[int, int] = {}          # committed S row per UAV
        self.vessel_uavs: dict[int, set[int]] = {k: set() for k in range(cfg.num_vessel)}
        self.uav_compute: dict[int, set[int]] = {j: set() for j in range(cfg.num_uav)}
        self.forwarded: set[tuple[int, int]] = set()  # (miot, uav) resident pairs routed on

    def can_link(self, j: int, k: int) -> bool:
        if j in self.uav_vessel and self.uav_vessel[j] != k:
            return False
        if j not in self.vessel_uavs[k] and \
                len(self.vessel_uavs[k]) >= self.view.cfg.antenna_limit:
            return False
        return True

    def link(self, j: int, k: int) -> None:
        assert self.can_link(j, k)
        self.uav_vessel[j] = k
        self.vessel_uavs[k].add(j)
        self.action.offload_s[j, k] = 1.0

    def assign_uav(self, i: int, j: int, new_task: bool) -> None:
        if new_task:
            self.action.offload_o[i, j] = 1.0
        self.uav_compute[j].add(i)

    def assign_vessel(self, i: int, j: int, k: int, new_task: bool) -> None:
        if new_task:
            self.action.offload_o[i, j] = 1.0
        else:
            self.forwarded.add((i, j))
        self.link(j, k)

    def finish(self) -> JointAction:
        view, cfg = self.view, self.view.cfg
        for j in range(cfg.num_uav):
            compute = sorted(
                self.uav_compute[j]
                | {i for i in range(cfg.num_miot)
                   if view.uav_resident[i, j] > 0 and (i, j) not in self.forwarded})
            if compute:
                share = cfg.uav_cpu / len(compute)
                for i in compute:
                    self.action.alloc_u[i, j] = share
        for k in range(cfg.num_vessel):
            origins = sorted(
                {j for j in range(cfg.num_uav) if view.vessel_resident[j, k] > 0}
                | {j for j in range(cfg.num_uav) if self.action.offload_s[j, k] > 0})
            if origins:
                share = cfg.vessel_cpu / len(origins)
                for j in origins:
                    self.action.alloc_v[j, k] = share
        return self.action


# ---------------------------------------------------------------------------
# completion estimates (static per slot, see module docstring)


def node_waits(view: SchedulerView) -> tuple[np.ndarray, np.ndarray]:
    cfg = view.cfg
    wait_u = view.uav_resident.sum(axis=0) * cfg.cycles_per_bit / cfg.uav_cpu
    wait_v = view.vessel_resident.sum(axis=0) * cfg.cycles_per_bit / cfg.vessel_cpu
    return wait_u, wait_v


def uav_estimate(view: SchedulerView, i: int, d: float, j: int,
                 wait_u: np.ndarray) -> float:
    cfg = view.cfg
    return d / view.m2u_potential[i, j] + wait_u[j] + d * cfg.cycles_per_bit / cfg.uav_cpu


def vessel_estimate(view: SchedulerView, i: int, d: float, j: int, k: int,
                    wait_v: np.ndarray) -> float:
    cfg = view.cfg
    return (d / view.m2u_potential[i, j] + d / view.u2v_potential[j, k]
            + wait_v[k] + d * cfg.cycles_per_bit / cfg.vessel_cpu)


def local_estimate(view: SchedulerView, i: int, d: float) -> float:
    cfg = view.cfg
    if cfg.miot_local_cpu <= 0:
        return float("inf")
    wait = view.miot_backlog[i] * cfg.cycles_per_bit / cfg.miot_local_cpu
    return wait + d * cfg.cycles_per_bit / cfg.miot_local_cpu


def best_relay(view: SchedulerView, i: int, k: int, builder: _SlotBuilder) -> int | None:
    """Relay UAV minimizing the two-hop transmission time, honoring existing
    vessel-link commitments; ties go to the lowest index."""
    best_j, best_cost = None, float("inf")
    for j in range(view.cfg.num_uav):
        if not builder.can_link(j, k):
            continue
        cost = 1.0 / view.m2u_potential[i, j] + 1.0 / view.u2v_potential[j, k]
        if cost < best_cost:
            best_j, best_cost = j, cost
    return best_j


def _enumerate_options(view: SchedulerView, i: int, d: float,
                       builder: _SlotBuilder, wait_u, wait_v) -> list[tuple]:
    """Candidate placements as (cost, kind, payload) in tie-break order:
    UAVs by index, vessels by index, local last."""
    options = []
    for j in range(view.cfg.num_uav):
        options.append((uav_estimate(view, i, d, j, wait_u), "uav", j))
    for k in range(view.cfg.num_vessel):
        j = best_relay(view, i, k, builder)
        if j is None:
            continue
        options.append((vessel_estimate(view, i, d, j, k, wait_v), "vessel", (j, k)))
    if view.cfg.miot_local_cpu > 0:
        options.append((local_estimate(view, i, d), "local", None))
    return options


def _apply_option(builder: _SlotBuilder, i: int, option, new_task: bool = True) -> None:
    _, kind, payload = option
    if kind == "uav":
        builder.assign_uav(i, payload, new_task)
    elif kind == "vessel":
        j, k = payload
        builder.assign_vessel(i, j, k, new_task)
    # local: no offloading entry; the MIoT-side fallback CPU serves it


def route_residents(view: SchedulerView, builder: _SlotBuilder) -> None:
    """Re-route resident UAV work: compute in place unless a vessel strictly
    improves the completion estimate."""
    cfg = view.cfg
    wait_u, wait_v = node_waits(view)
    for j in range(cfg.num_uav):
        for i in range(cfg.num_miot):
            d = view.uav_resident[i, j]
            if d <= 0:
                continue
            stay = wait_u[j] + d * cfg.cycles_per_bit / cfg.uav_cpu
            best_k, best_cost = None, stay
            for k in range(cfg.num_vessel):
                if not builder.can_link(j, k):
                    continue
                cost = (d / view.u2v_potential[j, k] + wait_v[k]
                        + d * cfg.cycles_per_bit / cfg.vessel_cpu)
                if cost < best_cost:
                    best_k, best_cost = k, cost
            if best_k is None:
                builder.assign_uav(i, j, new_task=False)
            else:
                builder.assign_vessel(i, j, best_k, new_task=False)


# ---------------------------------------------------------------------------
# policies


def gct_decide(view: SchedulerView, include_wait: bool = True) -> JointAction:
    """Each work item takes the placement with the shortest completion
    estimate; ``include_wait`` toggles the queue-wait term (service time only
    when disabled)."""
    builder = _SlotBuilder(view)
    route_residents(view, builder)
    wait_u, wait_v = node_waits(view)
    if not include_wait:
        wait_u, wait_v = np.zeros_like(wait_u), np.zeros_like(wait_v)
    for i, d in slot_work_items(view):
        options = _enumerate_options(view, i, d, builder, wait_u, wait_v)
        best = min(options, key=lambda opt: opt[0])  # first minimum wins ties
        _apply_option(builder, i, best)
    return builder.finish()


def ph_decide(view: SchedulerView) -> JointAction:
    """Nearest compute node wins, with distance discounted by free CPU.
    Fully loaded nodes are skipped; with no candidate left the task stays
    local."""
    cfg = view.cfg
    builder = _SlotBuilder(view)
    route_residents(view, builder)
    tau = cfg.slot_len
    free_u = cfg.uav_cpu - view.uav_resident.sum(axis=0) * cfg.cycles_per_bit / tau
    free_v = cfg.vessel_cpu - view.vessel_resident.sum(axis=0) * cfg.cycles_per_bit / tau
    for i, _d in slot_work_items(view):
        options = []
        for j in range(cfg.num_uav):
            if free_u[j] <= 0:
                continue
            dist = float(np.linalg.norm(view.nodes.miot_pos[i] - view.nodes.uav_pos[j]))
            options.append((dist / free_u[j], "uav", j))
        for k in range(cfg.num_vessel):
            if free_v[k] <= 0:
                continue
            j = _nearest_relay(view, i, k, builder)
            if j is None:
                continue
            dist = float(np.linalg.norm(view.nodes.miot_pos[i] - view.nodes.uav_pos[j])
                         + np.linalg.norm(view.nodes.uav_pos[j] - view.nodes.vessel_pos[k]))
            options.append((dist / free_v[k], "vessel", (j, k)))
        if not options:
            continue  # stays local
        best = min(options, key=lambda opt: opt[0])
        _apply_option(builder, i, best)
    return builder.finish()


def _nearest_relay(view: SchedulerView, i: int, k: int, builder: _SlotBuilder) -> int | None:
    best_j, best_d = None, float("inf")
    for j in range(view.cfg.num_uav):
        if not builder.can_link(j, k):
            continue
        d = float(np.linalg.norm(view.nodes.miot_pos[i] - view.nodes.uav_pos[j]))
        if d < best_d:
            best_j, best_d = j, d
    return best_j


def clb_decide(view: SchedulerView) -> JointAction:
    """Least normalized load wins; the load estimate is updated after every
    placement within the slot."""
    cfg = view.cfg
    builder = _SlotBuilder(view)
    route_residents(view, builder)
    load_u = view.uav_resident.sum(axis=0) * cfg.cycles_per_bit
    load_v = view.vessel_resident.sum(axis=0) * cfg.cycles_per_bit
    for i, d in slot_work_items(view):
        options = []
        for j in range(cfg.num_uav):
            options.append((load_u[j] / cfg.uav_cpu, "uav", j))
        for k in range(cfg.num_vessel):
            j = _nearest_relay(view, i, k, builder)
            if j is None:
                continue
            options.append((load_v[k] / cfg.vessel_cpu, "vessel", (j, k)))
        if not options:
            continue
        best = min(options, key=lambda opt: opt[0])
        _apply_option(builder, i, best)
        cycles = d * cfg.cycles_per_bit
        if best[1] == "uav":
            load_u[best[2]] += cycles
        else:
            load_v[best[2][1]] += cycles
    return builder.finish()


def ro_decide(view: SchedulerView, rng: np.random.Generator) -> JointAction:
    """Uniform choice among local, each UAV, and each vessel, per work item."""
    cfg = view.cfg
    builder = _SlotBuilder(view)
    route_residents(view, builder)
    for i, _d in slot_work_items(view):
        options: list[tuple] = []
        if cfg.miot_local_cpu > 0:
            options.append((0.0, "local", None))
        for j in range(cfg.num_uav):
            options.append((0.0, "uav", j))
        for k in range(cfg.num_vessel):
            j = _nearest_relay(view, i, k, builder)
            if j is not None:
                options.append((0.0, "vessel", (j, k)))
        choice = options[int(rng.integers(len(options)))]
        _apply_option(builder, i, choice)
    return builder.finish()


# ---------------------------------------------------------------------------
# exhaustive oracle


class InstanceTooLarge(ValueError):
    pass


def brute_force_oracle(view: SchedulerView, objective: str = "completion",
                       levels: int = 5) -> tuple[JointAction, float]:
    """Enumerate every feasible placement (and, for the drift objective,
    every quantized allocation) of this slot's work items; returns the
    minimizer and its cost.

    ``objective``: "completion" sums the shared completion estimates, under
    which allocations do not move the cost; "cost_c" evaluates the per-slot
    drift-plus-penalty objective on the realized action.
    """
    cfg = view.cfg
    if cfg.num_miot > 3 or cfg.num_uav > 2 or cfg.num_vessel > 1:
        raise InstanceTooLarge(
            f"oracle limited to I<=3, J<=2, K<=1; got "
            f"({cfg.num_miot},{cfg.num_uav},{cfg.num_vessel})")
    if objective not in ("completion", "cost_c"):
        raise ValueError(f"unknown objective {objective!r}")

    items = slot_work_items(view)
    base = _SlotBuilder(view)
    route_residents(view, base)
    wait_u, wait_v = node_waits(view)

    choice_sets = []
    for i, d in items:
        opts = _enumerate_options(view, i, d, base, wait_u, wait_v)
        choice_sets.append([(i, opt) for opt in opts])
    if not choice_sets:
        action = base.finish()
        cost = 0.0 if objective == "completion" else _cost_c(view, action)
        return action, cost

    best_action, best_cost = None, float("inf")
    for combo in itertools.product(*choice_sets):
        builder = _SlotBuilder(view)
        route_residents(view, builder)
        ok = True
        total = 0.0
        for i, opt in combo:
            cost, kind, payload = opt
            if kind == "vessel":
                j, k = payload
                if not builder.can_link(j, k):
                    ok = False
                    break
            total += cost
            _apply_option(builder, i, opt)
        if not ok:
            continue
        action = builder.finish()
        if objective == "completion":
            cost_value = total
        else:
            grid = list(_allocation_grid(view, action, levels))
            costs = [_cost_c(view, a) for a in grid]
            idx = int(np.argmin(costs))
            cost_value, action = costs[idx], grid[idx]
        if cost_value < best_cost - _EPS:
            best_cost, best_action = cost_value, action
    return best_action, best_cost


def _cost_c(view: SchedulerView, action: JointAction) -> float:
    cfg = view.cfg
    rates = channel.build_rate_table(view.nodes, action.offload_o, action.offload_s, cfg)
    phi = queueing.slot_cost_phi(view.tasks, action, rates.m2u_rate, rates.u2v_rate)
    return lyapunov.per_slot_objective(view.queues, action, rates.m2u_rate,
                                       rates.u2v_rate, phi, cfg.lyapunov_v, cfg)


def _allocation_grid(view: SchedulerView, action: JointAction, levels: int):
    """Yield the action with UAV allocations on a quantized grid: every
    assignment of level fractions to active origins whose column stays
    within capacity."""
    cfg = view.cfg
    actives = []
    for j in range(cfg.num_uav):
        for i in range(cfg.num_miot):
            if action.alloc_u[i, j] > 0:
                actives.append((i, j))
    if not actives:
        yield action
        return
    for combo in itertools.product(range(1, levels + 1), repeat=len(actives)):
        trial = action.copy()
        for (i, j), lvl in zip(actives, combo):
            trial.alloc_u[i, j] = cfg.uav_cpu * lvl / levels
        if (trial.alloc_u.sum(axis=0) <= cfg.uav_cpu * (1 + _EPS)).all():
            yield trial


POLICIES = {"ph": ph_decide, "gct": gct_decide, "clb": clb_decide}
