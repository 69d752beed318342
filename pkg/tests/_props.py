"""Randomized mini-worlds and the engine invariants checked on them."""

from __future__ import annotations

import random

from mlcasim.core import POLICY_ORDER, RAMP, RoadNetwork
from mlcasim.engine import Simulation
from mlcasim.metrics import aggregate_checkpoints
from mlcasim.scenario import ScenarioConfig


def mini_config(rng: random.Random, null: bool = False) -> ScenarioConfig:
    net = RoadNetwork(mainline_length=3000.0, n_lanes=rng.randint(1, 5), ramp_merge_start=400.0,
                      ramp_accel_len=200.0, ramp_length=150.0)
    if null:
        return ScenarioConfig(network=net, n_background=rng.randint(0, 15), n_tracked=0,
                              background_policy=None, ramp_share=0.0, seed=rng.randrange(2**31),
                              sim_horizon=30.0, demand_window=20.0)
    return ScenarioConfig(
        network=net,
        n_background=rng.randint(0, 15),
        n_tracked=rng.randint(0, 3),
        tracked_policy=rng.choice(POLICY_ORDER),
        background_policy=rng.choice((None,) + POLICY_ORDER),
        ramp_share=rng.random(),
        seed=rng.randrange(2**31),
        sim_horizon=30.0,
        demand_window=20.0,
        tracked_depart_time=rng.uniform(0.0, 5.0),
        tracked_stagger=rng.uniform(1.0, 5.0),
    )


def check_world(cfg: ScenarioConfig, null: bool = False) -> list[str]:
    """Run one mini-world step by step; return a list of broken invariants."""
    sim = Simulation(cfg)
    bad: list[str] = []
    last_pos: dict[int, float] = {}
    n = cfg.network.n_lanes
    while not sim.done:
        sim.step()
        log, w = sim.log, sim.world
        if log.inserted != log.arrived + log.removed + len(w):
            bad.append(f"conservation at step {sim.k}")
        for v in w:
            if v.speed < 0.0:
                bad.append(f"negative speed {v.id}")
            if not (v.lane == RAMP or 0 <= v.lane < n):
                bad.append(f"lane {v.lane} out of range")
            if v.pos < last_pos.get(v.id, -1e18):
                bad.append(f"vehicle {v.id} moved backwards")
            last_pos[v.id] = v.pos
        if bad:
            return bad
    table = aggregate_checkpoints(sim.log, checkpoints=(0.5, 1.0, 2.0, 3.0))
    if any(b < a for a, b in zip(table.counts, table.counts[1:])):
        bad.append("checkpoint table not monotone")
    if null and sim.log.lane_changes:
        bad.append(f"{len(sim.log.lane_changes)} lane changes in the null scenario")
    return bad


def run_suite(n_worlds: int, seed: int = 0) -> tuple[int, list[str]]:
    """Check ``n_worlds`` random mini-worlds (every fourth one a null scenario)."""
    rng = random.Random(seed)
    failures: list[str] = []
    for i in range(n_worlds):
        null = i % 4 == 3
        cfg = mini_config(rng, null)
        failures += [f"world {i}: {msg}" for msg in check_world(cfg, null)]
    return n_worlds, failures
