import json

import numpy as np
import pytest

from maredge import lyapunov, queueing
from maredge.config import SimConfig
from maredge.env import MaritimeMecEnv, UavAction, VesselAction, default_reward_norm


def desk_cfg(**kw):
    kw.setdefault("num_miot", 3)
    kw.setdefault("num_uav", 2)
    kw.setdefault("num_vessel", 1)
    kw.setdefault("arrival_mean", 5.0)
    kw.setdefault("horizon", 10)
    return SimConfig(**kw)


def idle_raw(cfg):
    raw = {}
    for j in range(cfg.num_uav):
        raw[f"uav_{j}"] = UavAction(offers=np.zeros(cfg.num_miot),
                                    vessel_choice=0,
                                    alloc=np.zeros(cfg.num_miot))
    for k in range(cfg.num_vessel):
        raw[f"vessel_{k}"] = VesselAction(admit=np.zeros(cfg.num_uav),
                                          alloc=np.zeros(cfg.num_uav))
    return raw


def test_reset_zero_queues_and_determinism():
    cfg = desk_cfg()
    env = MaritimeMecEnv(cfg, seed=3)
    obs = env.reset()
    assert np.all(env.queues.q_miot == 0)
    assert np.all(env.queues.q_uav == 0)
    assert np.all(env.queues.q_vessel == 0)
    env2 = MaritimeMecEnv(cfg, seed=3)
    obs2 = env2.reset()
    for aid in env.agent_ids:
        assert np.array_equal(obs[aid], obs2[aid])


def test_observation_lengths():
    cfg = desk_cfg()
    env = MaritimeMecEnv(cfg, seed=0)
    obs = env.reset()
    # UAV: MIoT positions (3*3) + UAV positions (3*2) + backlogs (3 + 2)
    assert len(obs["uav_0"]) == 9 + 6 + 3 + 2
    # vessel: UAV positions (3*2) + vessel positions (3*1) + backlogs (2 + 1)
    assert len(obs["vessel_0"]) == 6 + 3 + 2 + 1
    assert len(env.global_state_vector()) == 9 + 6 + 3 + 3 + 2 + 1


def test_observations_are_projections():
    cfg = desk_cfg()
    env = MaritimeMecEnv(cfg, seed=1)
    obs = env.observations()
    # corrupting fields a UAV agent does not observe leaves its view unchanged
    env.nodes.vessel_pos += 123.0
    env.queues.q_vessel += 7e6
    assert np.array_equal(env.observations()["uav_0"], obs["uav_0"])
    # and vessel agents ignore MIoT state
    vessel_obs = env.observations()["vessel_0"]
    env.nodes.miot_pos += 9.0
    env.queues.q_miot += 1e6
    assert np.array_equal(env.observations()["vessel_0"], vessel_obs)


def test_action_space_descriptors():
    cfg = desk_cfg(num_vessel=1)
    env = MaritimeMecEnv(cfg, seed=0)
    uav = env.action_space("uav_0")
    assert uav == {"kind": "uav", "offers": 3, "vessel_choices": 2, "alloc": 3}
    vessel = env.action_space("vessel_0")
    assert vessel == {"kind": "vessel", "admit": 2, "alloc": 2}
    with pytest.raises(KeyError):
        env.action_space("uav_99")


def test_project_idle_action():
    cfg = desk_cfg()
    env = MaritimeMecEnv(cfg, seed=0)
    joint = env.project_action(idle_raw(cfg))
    assert np.all(joint.offload_o == 0)
    assert np.all(joint.offload_s == 0)
    assert np.all(joint.alloc_u == 0)
    assert np.all(joint.alloc_v == 0)


def test_project_single_offer_per_miot():
    cfg = desk_cfg()
    env = MaritimeMecEnv(cfg, seed=0)
    raw = idle_raw(cfg)
    raw["uav_0"].offers[:] = 1.0
    raw["uav_1"].offers[:] = 1.0
    joint = env.project_action(raw)
    assert np.all(joint.offload_o.sum(axis=1) == 1)
    # the MIoT picks its best-rate offering UAV
    potential = env._potential_m2u()
    for i in range(3):
        assert joint.offload_o[i, int(np.argmax(potential[i]))] == 1.0


def test_antenna_limit_projection():
    # three UAVs wanting one vessel with a 2-antenna limit: the two with the
    # largest backlogs win, ties to the lowest index
    cfg = SimConfig(num_miot=2, num_uav=3, num_vessel=1, antenna_limit=2,
                    arrival_mean=1.0, horizon=5)
    env = MaritimeMecEnv(cfg, seed=0)
    env.queues.q_uav[:] = [5.0, 1.0, 9.0]
    raw = idle_raw(cfg)
    for j in range(3):
        raw[f"uav_{j}"].vessel_choice = 1
    raw["vessel_0"].admit[:] = 1.0
    joint = env.project_action(raw)
    assert joint.offload_s[:, 0].tolist() == [1.0, 0.0, 1.0]
    assert queueing.validate_action(joint, cfg) == []
    # unadmitted UAVs never connect
    raw["vessel_0"].admit[:] = 0.0
    joint = env.project_action(raw)
    assert np.all(joint.offload_s == 0)


def test_projection_always_feasible():
    cfg = desk_cfg()
    env = MaritimeMecEnv(cfg, seed=4)
    rng = np.random.default_rng(0)
    for _ in range(50):
        raw = idle_raw(cfg)
        for j in range(cfg.num_uav):
            raw[f"uav_{j}"] = UavAction(
                offers=rng.integers(0, 2, size=3).astype(float),
                vessel_choice=int(rng.integers(0, 2)),
                alloc=rng.normal(size=3))
        raw["vessel_0"] = VesselAction(admit=rng.integers(0, 2, size=2).astype(float),
                                       alloc=rng.normal(size=2))
        joint = env.project_action(raw)
        assert queueing.validate_action(joint, cfg,
                                        residency=env.ledger.residency_mask()) == []
        env.step(raw)
        if env.done:
            env.reset()


def test_reward_is_scaled_negated_objective():
    cfg = desk_cfg()
    env = MaritimeMecEnv(cfg, seed=2)
    rng = np.random.default_rng(1)
    for _ in range(5):
        raw = idle_raw(cfg)
        raw["uav_0"].offers[:] = rng.integers(0, 2, size=3).astype(float)
        _, reward, _, info = env.step(raw)
        assert reward * (-env.reward_norm) == pytest.approx(info["objective"], rel=1e-12)


def test_zero_action_zero_arrivals():
    cfg = desk_cfg(arrival_mean=0.0)
    env = MaritimeMecEnv(cfg, seed=0)
    _, reward, _, _ = env.step(idle_raw(cfg))
    assert reward == 0.0
    assert np.all(env.queues.q_miot == 0)
    assert np.all(env.queues.q_uav == 0)
    assert np.all(env.queues.q_vessel == 0)


def test_done_at_horizon_and_step_after_done():
    cfg = desk_cfg(horizon=5)
    env = MaritimeMecEnv(cfg, seed=0)
    done = False
    steps = 0
    while not done:
        _, _, done, _ = env.step(idle_raw(cfg))
        steps += 1
    assert steps == 5
    with pytest.raises(RuntimeError):
        env.step(idle_raw(cfg))


def test_episode_determinism():
    cfg = desk_cfg()
    rewards = []
    for _ in range(2):
        env = MaritimeMecEnv(cfg, seed=11)
        rng = np.random.default_rng(0)
        eps = []
        done = False
        while not done:
            raw = idle_raw(cfg)
            raw["uav_0"].offers[:] = rng.integers(0, 2, size=3).astype(float)
            raw["uav_0"].alloc[:] = rng.normal(size=3)
            _, r, done, _ = env.step(raw)
            eps.append(r)
        rewards.append(eps)
    assert rewards[0] == rewards[1]


def test_reward_norm_default_positive():
    cfg = desk_cfg()
    norm = default_reward_norm(cfg)
    assert norm >= 1.0
    assert default_reward_norm(desk_cfg(arrival_mean=0.0)) == 1.0


def test_trajectory_dump(tmp_path):
    cfg = desk_cfg(horizon=4)
    env = MaritimeMecEnv(cfg, seed=0)
    done = False
    while not done:
        _, _, done, _ = env.step(idle_raw(cfg))
    path = tmp_path / "traj.jsonl"
    env.write_trajectory(path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["slot"] for r in rows] == [0, 1, 2, 3]
    for row, rec in zip(rows, env.records):
        assert row["reward"] == rec.reward
        assert row["phi"] == rec.phi
