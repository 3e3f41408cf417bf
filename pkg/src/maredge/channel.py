"""Air-to-ground and UAV-to-vessel link models: path loss, gains, Shannon rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from maredge.config import SimConfig
from maredge.scenario import NodeSet


@dataclass
class LinkRateTable:
    m2u_rate: np.ndarray    # (I, J) bits/s, gated by the offloading indicators
    u2v_rate: np.ndarray    # (J, K) bits/s, gated and bandwidth-shared
    path_loss: np.ndarray   # (I, J) dB
    u2v_gain: np.ndarray    # (J, K) linear power gain


def elevation_angle(miot: np.ndarray, uav: np.ndarray) -> float:
    """Elevation of the UAV as seen from the MIoT, in radians.

    Uses the two-argument arctangent of (height difference, horizontal
    distance), so a UAV directly overhead yields pi/2.
    """
    dz = abs(float(uav[2]) - float(miot[2]))
    dxy = float(np.hypot(uav[0] - miot[0], uav[1] - miot[1]))
    return float(np.arctan2(dz, dxy))


def path_loss_db(miot: np.ndarray, uav: np.ndarray, cfg: SimConfig) -> float:
    """Sigmoid-blended LoS/NLoS excess loss plus free-space loss, in dB.

    The elevation angle enters the sigmoid in degrees; the free-space term
    uses the 3-D link distance.
    """
    d3 = float(np.linalg.norm(np.asarray(uav, dtype=float) - np.asarray(miot, dtype=float)))
    if d3 == 0.0:
        raise ValueError("path loss undefined for coincident positions")
    gamma_deg = np.degrees(elevation_angle(miot, uav))
    sigmoid = 1.0 + cfg.alpha_env * np.exp(-cfg.beta_env * (gamma_deg - cfg.alpha_env))
    fspl = 20.0 * np.log10(4.0 * np.pi * d3 * cfg.carrier_freq / cfg.light_speed)
    return float((cfg.zeta_los - cfg.zeta_nlos) / sigmoid + fspl + cfg.zeta_nlos)


def m2u_rate(o_ij: int, pathloss_db: float, cfg: SimConfig) -> float:
    """Achievable MIoT->UAV rate in bits/s; zero when the link is not selected.

    The dB loss is converted to a linear power gain and the noise floor from
    dBm to watts before forming the SNR.
    """
    if o_ij not in (0, 1):
        raise ValueError(f"offloading indicator must be 0 or 1, got {o_ij}")
    if o_ij == 0:
        return 0.0
    gain = 10.0 ** (-pathloss_db / 10.0)
    snr = cfg.miot_power * gain / cfg.noise_watts
    return float(cfg.bandwidth * np.log2(1.0 + snr))


def u2v_gain(uav: np.ndarray, vessel: np.ndarray, ref_gain_db: float) -> float:
    """Inverse-square channel power gain referenced to 1 m."""
    d3 = float(np.linalg.norm(np.asarray(uav, dtype=float) - np.asarray(vessel, dtype=float)))
    if d3 == 0.0:
        raise ValueError("channel gain undefined for coincident positions")
    return float(10.0 ** (ref_gain_db / 10.0) * d3 ** -2)


def u2v_rate(s_jk: int, assign_count: int, gain: float, cfg: SimConfig) -> float:
    """UAV->vessel rate in bits/s; the L*B pool splits equally over the
    assign_count UAVs currently attached to the vessel."""
    if s_jk not in (0, 1):
        raise ValueError(f"offloading indicator must be 0 or 1, got {s_jk}")
    if s_jk == 0:
        return 0.0
    if assign_count < 1:
        raise ValueError("assign_count must count the selecting UAV itself")
    share = cfg.num_channels * cfg.uav_bandwidth / assign_count
    snr = cfg.uav_power * gain / cfg.noise_watts
    return float(share * np.log2(1.0 + snr))


def build_rate_table(nodes: NodeSet, offload_o: np.ndarray, offload_s: np.ndarray,
                     cfg: SimConfig) -> LinkRateTable:
    """Evaluate all link rates for one slot under the given offloading matrices."""
    I, J, K = cfg.num_miot, cfg.num_uav, cfg.num_vessel
    loss = np.zeros((I, J))
    m2u = np.zeros((I, J))
    for i in range(I):
        for j in range(J):
            loss[i, j] = path_loss_db(nodes.miot_pos[i], nodes.uav_pos[j], cfg)
            m2u[i, j] = m2u_rate(int(offload_o[i, j]), loss[i, j], cfg)
    gain = np.zeros((J, K))
    u2v = np.zeros((J, K))
    counts = offload_s.sum(axis=0).astype(int)
    for j in range(J):
        for k in range(K):
            gain[j, k] = u2v_gain(nodes.uav_pos[j], nodes.vessel_pos[k], cfg.ref_gain_db)
            if offload_s[j, k]:
                u2v[j, k] = u2v_rate(1, int(counts[k]), gain[j, k], cfg)
    return LinkRateTable(m2u_rate=m2u, u2v_rate=u2v, path_loss=loss, u2v_gain=gain)


def best_m2u_rate(cfg: SimConfig) -> float:
    """Upper bound on any MIoT->UAV rate: UAV directly overhead."""
    miot = np.array([0.0, 0.0, cfg.miot_height])
    uav = np.array([0.0, 0.0, cfg.uav_height])
    return m2u_rate(1, path_loss_db(miot, uav, cfg), cfg)


def best_u2v_rate(cfg: SimConfig) -> float:
    """Upper bound on any single-UAV u2v rate: minimum feasible distance
    (UAV at altitude directly above the vessel), full bandwidth pool."""
    uav = np.array([0.0, 0.0, cfg.uav_height])
    vessel = np.array([0.0, 0.0, 0.0])
    return u2v_rate(1, 1, u2v_gain(uav, vessel, cfg.ref_gain_db), cfg)
