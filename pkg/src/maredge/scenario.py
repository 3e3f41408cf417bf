"""Node placement, UAV mobility, and the stochastic task-arrival process."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from maredge.config import SimConfig


@dataclass
class NodeSet:
    """3-D positions of every node; columns are (x, y, z) in meters."""

    miot_pos: np.ndarray    # (I, 3)
    uav_pos: np.ndarray     # (J, 3)
    vessel_pos: np.ndarray  # (K, 3)

    def copy(self) -> "NodeSet":
        return NodeSet(self.miot_pos.copy(), self.uav_pos.copy(), self.vessel_pos.copy())


@dataclass
class Task:
    origin_miot: int
    arrival_slot: int
    data_size: float        # bits
    cycles_per_bit: float


def generate_topology(cfg: SimConfig, rng: np.random.Generator) -> NodeSet:
    """Place nodes uniformly over the area at their tier's fixed height."""
    def place(n: int, height: float) -> np.ndarray:
        xy = rng.uniform(0.0, cfg.area_side, size=(n, 2))
        z = np.full((n, 1), height)
        return np.hstack([xy, z])

    return NodeSet(
        miot_pos=place(cfg.num_miot, cfg.miot_height),
        uav_pos=place(cfg.num_uav, cfg.uav_height),
        vessel_pos=place(cfg.num_vessel, 0.0),
    )


def poisson_quantile(mean: float, q: float) -> int:
    """Smallest n with P(X <= n) >= q for X ~ Poisson(mean)."""
    if mean <= 0:
        return 0
    # direct CDF accumulation; means used here are small (tens)
    pmf = math.exp(-mean)
    cdf = pmf
    n = 0
    while cdf < q:
        n += 1
        pmf *= mean / n
        cdf += pmf
        if n > 10_000_000:  # pragma: no cover - guards pathological means
            break
    return n


def max_arrival_bits(cfg: SimConfig) -> float:
    """Clamp level for task sizes: a high Poisson quantile, in bits."""
    return poisson_quantile(cfg.arrival_mean, cfg.arrival_quantile) * cfg.task_scale_bits


def sample_arrivals(cfg: SimConfig, slot: int, rng: np.random.Generator) -> list[Task]:
    """One task per MIoT; size = Poisson(arrival_mean) scale units, clamped at the
    configured quantile so arrivals are bounded."""
    if not 0 <= slot < cfg.horizon:
        raise ValueError(f"slot {slot} outside horizon {cfg.horizon}")
    cap = poisson_quantile(cfg.arrival_mean, cfg.arrival_quantile)
    counts = rng.poisson(cfg.arrival_mean, size=cfg.num_miot)
    counts = np.minimum(counts, cap)
    return [
        Task(origin_miot=i, arrival_slot=slot,
             data_size=float(counts[i]) * cfg.task_scale_bits,
             cycles_per_bit=cfg.cycles_per_bit)
        for i in range(cfg.num_miot)
    ]


def advance_positions(nodes: NodeSet, cfg: SimConfig, rng: np.random.Generator) -> NodeSet:
    """Random-waypoint step for UAVs; MIoTs and vessels are static.

    Each UAV moves up to uav_speed * slot_len meters along a uniform random
    heading, clamped to the area. Speed 0 disables mobility.
    """
    out = nodes.copy()
    step = cfg.uav_speed * cfg.slot_len
    if step == 0:
        return out
    headings = rng.uniform(0.0, 2.0 * math.pi, size=cfg.num_uav)
    lengths = rng.uniform(0.0, step, size=cfg.num_uav)
    out.uav_pos[:, 0] += lengths * np.cos(headings)
    out.uav_pos[:, 1] += lengths * np.sin(headings)
    out.uav_pos[:, :2] = np.clip(out.uav_pos[:, :2], 0.0, cfg.area_side)
    return out
