"""Demonstration collection: malleable embodiment + scripted human."""

import numpy as np

from . import dataset as ds
from . import sim, tactile
from .seeding import derive_rng


def record_episode(demo_kind, seed, duration=30.0, nuisance_ranges=None,
                   world_cfg=None, sensor_cfg=None, record_raw=True,
                   hand_speed=0.11, place_speed=0.05):
    """One malleable-embodiment demonstration; returns (episode, ok).

    Episodes where the grasp slips are flagged not-ok and get discarded by
    the caller (logged in the dataset manifest).
    """
    cfg = world_cfg or sim.WorldConfig()
    rng = derive_rng(seed, "episode")
    nu = tactile.sample_nuisance(derive_rng(seed, "nuisance"),
                                 ranges=nuisance_ranges, shifted=False)
    grasp_limit = cfg.mu * cfg.grip_force
    if demo_kind.startswith("A"):
        human = sim.HumanAgent("maneuver", seed=seed, duration=duration,
                               speed=hand_speed, slip_aware=True,
                               grasp_limit=grasp_limit)
        scenario = "maneuver"
        start = cfg.start
    else:
        start = (float(rng.uniform(-0.3, 0.3)), float(rng.uniform(-0.05, 0.3)))
        cfg = sim.WorldConfig(**{**cfg.__dict__, "start": start})
        human = sim.HumanAgent("place", seed=seed, start=start, target=cfg.target,
                               speed=place_speed, slip_aware=True,
                               grasp_limit=grasp_limit)
        scenario = "place"

    left, right = tactile.default_pair(sensor_cfg)
    bridge = tactile.TactileBridge(left, right, nu,
                                   noise_seed=derive_rng(seed, "noise").integers(2**31))
    world = sim.World(sim.make_embodiment("malleable"), human, bridge,
                      config=cfg, seed=seed, scenario=scenario,
                      record_raw=record_raw)
    ticks = world.run(duration)
    actual_duration = (len(ticks) - 1) * cfg.control_dt
    ep = ds.episode_from_ticks(
        ticks, cfg.control_dt, actual_duration, demo_kind, seed, "malleable",
        nu.to_json(), status=world.status, completion_t=world.completion_t,
        bound_violation=world.bound_violation)
    ep.validate()
    return ep, not ep.slipped


def collect_demos(demo_kind, n_episodes, seed, duration=30.0, log=None, **kw):
    """Collect n non-slipped episodes; discarded attempts are reported."""
    episodes, discarded = [], []
    attempt = 0
    max_attempts = 3 * n_episodes
    while len(episodes) < n_episodes and attempt < max_attempts:
        ep_seed = derive_rng(seed, "demo", demo_kind, attempt).integers(2**31)
        ep, ok = record_episode(demo_kind, int(ep_seed), duration=duration, **kw)
        attempt += 1
        if ok:
            ep.episode_id = f"ep{len(episodes):04d}"
            episodes.append(ep)
            if log and len(episodes) % 10 == 0:
                log(f"collected {len(episodes)}/{n_episodes} episodes")
        else:
            discarded.append({"seed": int(ep_seed), "status": ep.status})
            if log:
                log(f"discarded a slipped episode (seed {ep_seed})")
    if len(episodes) < n_episodes:
        raise RuntimeError(
            f"could not collect {n_episodes} clean episodes in {max_attempts} tries")
    return episodes, discarded
