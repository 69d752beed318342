"""Deterministic per-iteration simulation loop.

Each tick runs, in order: insertion of due vehicles, a frozen snapshot,
lateral decisions in ascending vehicle id, application of lane changes,
longitudinal accelerations, ballistic integration, collision detection and
removal of arrived vehicles.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .core import RAMP, PolicyId, Vehicle, World
from .longitudinal import EMERGENCY_DECEL, idm_accel, integrate, krauss_safe_speed
from .mlca import MLCAInvariantError, MLCAMemory, mlca_decide
from .policies import (
    STAY,
    Action,
    ContinuousMemory,
    LaneChangeDecision,
    Lc2017Memory,
    PolicyMemory,
    advance_lateral,
    continuous_decide,
    idmlc_decide,
    lc2017_decide,
    merge_decide,
    mobil_decide,
    noalg_decide,
)
from .scenario import ScenarioConfig, insert_vehicle, spawn_schedule, stream

REAR_END = "REAR_END"
SIDE_SWIPE = "SIDE_SWIPE"


@dataclass(frozen=True)
class LaneChangeEvent:
    time: float
    vehicle: int
    from_lane: int
    to_lane: int
    pos: float
    odometer: float
    tracked: bool
    phase: str

    def to_line(self) -> str:
        return (f"LANE_CHANGE {self.time!r} {self.vehicle} {self.from_lane} {self.to_lane} "
                f"{self.pos!r} {self.odometer!r} {int(self.tracked)} {self.phase}")


@dataclass(frozen=True)
class CollisionEvent:
    time: float
    rear: int
    front: int
    lane: int
    kind: str
    pos: float
    removed: int

    def to_line(self) -> str:
        return (f"COLLISION {self.time!r} {self.rear} {self.front} {self.lane} "
                f"{self.kind} {self.pos!r} {self.removed}")


@dataclass
class IterationLog:
    seed: int
    policy: Optional[PolicyId]
    n_tracked: int
    tracked_ids: list[int] = field(default_factory=list)
    lane_changes: list[LaneChangeEvent] = field(default_factory=list)
    collisions: list[CollisionEvent] = field(default_factory=list)
    vehicle_counts: list[int] = field(default_factory=list)
    termination: str = ""
    steps: int = 0
    inserted: int = 0
    arrived: int = 0
    removed: int = 0
    deferred: int = 0
    conflicts: int = 0
    pending: int = 0
    violations: list = field(default_factory=list)

    def counted_lane_changes(self) -> list[LaneChangeEvent]:
        """Cruise-phase lane changes of tracked AVs (what the checkpoint tables count)."""
        return [e for e in self.lane_changes if e.tracked and e.phase == "cruise"]

    def to_lines(self) -> list[str]:
        pol = self.policy.value if self.policy else "-"
        lines = [f"ITERATION {self.seed} {pol} {self.n_tracked} "
                 f"tracked={','.join(map(str, self.tracked_ids))}"]
        events = sorted(
            [(e.time, 0, i, e.to_line()) for i, e in enumerate(self.lane_changes)]
            + [(e.time, 1, i, e.to_line()) for i, e in enumerate(self.collisions)])
        lines.extend(line for *_, line in events)
        lines.append(f"END {self.termination} steps={self.steps} inserted={self.inserted} "
                     f"arrived={self.arrived} removed={self.removed} deferred={self.deferred} "
                     f"conflicts={self.conflicts} pending={self.pending}")
        return lines

    def serialize(self) -> str:
        return "".join(line + "\n" for line in self.to_lines())


def detect_collisions(world: World, time: float = 0.0, threshold: float = 0.0) -> list[CollisionEvent]:
    """Collisions in the current (freshly indexed) world.

    A vehicle that entered its lane this step and overlaps a neighbor there
    is a SIDE_SWIPE (the lane changer is removed).  Any other same-lane pair
    whose net gap is ``<= threshold`` is a REAR_END (the rear vehicle is
    removed).
    """
    events: list[CollisionEvent] = []
    swiped: set[int] = set()
    for veh in sorted((v for v in world if v.changed_lane), key=lambda v: v.id):
        for nb, is_lead in ((world.leader(veh, veh.lane), True), (world.follower(veh, veh.lane), False)):
            if nb is None or nb.gap > threshold or nb.id in swiped:
                continue
            rear, front = (veh, nb.vehicle) if is_lead else (nb.vehicle, veh)
            events.append(CollisionEvent(time, rear.id, front.id, veh.lane, SIDE_SWIPE, veh.pos, veh.id))
            swiped.add(veh.id)
            break
    for lane in sorted(world._lanes):
        vehs = [v for v in world.lane_vehicles(lane) if v.id not in swiped]
        for rear, front in zip(vehs, vehs[1:]):
            if front.pos - rear.pos - rear.length <= threshold:
                events.append(CollisionEvent(time, rear.id, front.id, lane, REAR_END, rear.pos, rear.id))
    return events


def _new_memory(veh: Vehicle, cfg: ScenarioConfig):
    pol = veh.policy
    if pol is PolicyId.MLCA:
        return MLCAMemory(cooldown=cfg.policies.mlca.cooldown)
    if pol is PolicyId.LC2017:
        return Lc2017Memory()
    if pol is PolicyId.CONTINUOUS:
        return ContinuousMemory()
    return PolicyMemory()


class Simulation:
    """One iteration; construct, then :meth:`run` (or :meth:`step` repeatedly)."""

    def __init__(self, cfg: ScenarioConfig, policy: Optional[PolicyId] = None, seed: Optional[int] = None,
                 validate: bool = False, schedule=None):
        if policy is not None:
            cfg = cfg.with_(tracked_policy=policy)
        if seed is not None:
            cfg = cfg.with_(seed=seed)
        self.cfg = cfg
        self.validate = validate
        self.world = World(cfg.network)
        self.dt = cfg.dt
        self.k = 0
        sched = spawn_schedule(cfg, stream(cfg.seed, "demand")) if schedule is None else list(schedule)
        self.pending = deque(sched)
        self.deferred: list = []
        self._deferred_once: set[int] = set()
        self.next_id = 0
        self.dawdle = stream(cfg.seed, "dawdling")
        self.log = IterationLog(cfg.seed, cfg.tracked_policy, cfg.n_tracked)
        self.tracked_left = sum(1 for s in sched if s.kind.value == "TRACKED_AV")
        self._ramp_idm: dict[int, object] = {}
        self._mlca_memories: list[MLCAMemory] = []
        self._bg_period = max(1, round(cfg.bg_action_step / cfg.dt))
        self.done = False

    # -- phases ---------------------------------------------------------

    def _insert(self) -> None:
        t = self.world.time
        due = self.deferred
        pending = self.pending
        while pending and pending[0].departTime <= t + 1e-9:
            due.append(pending.popleft())
        if not due:
            return
        still = []
        for spec in due:
            veh = insert_vehicle(self.world, spec, self.next_id, self.cfg)
            if veh is None:
                still.append(spec)
                if id(spec) not in self._deferred_once:
                    self._deferred_once.add(id(spec))
                    self.log.deferred += 1
                continue
            self.next_id += 1
            veh.lc_state = _new_memory(veh, self.cfg)
            if isinstance(veh.lc_state, MLCAMemory):
                self._mlca_memories.append(veh.lc_state)
            self.log.inserted += 1
            if veh.is_tracked:
                self.log.tracked_ids.append(veh.id)
        self.deferred = still

    def _decide(self, veh: Vehicle, lead: Optional[Vehicle]) -> LaneChangeDecision:
        world, pp = self.world, self.cfg.policies
        if veh.phase == "merge":
            return merge_decide(world, veh, pp.merge, veh.lc_state)
        pol = veh.policy
        if pol is None:
            return STAY
        if not veh.is_tracked:
            # background drivers reconsider lanes once per action step, and
            # only with a leader inside their interaction range
            if (self.k + veh.id) % self._bg_period:
                return STAY
            if lead is None or lead.pos - veh.front > self.cfg.bg_lc_range:
                return STAY
        if pol is PolicyId.MLCA:
            return mlca_decide(world, veh, veh.lc_state, pp.mlca, self.validate, self.k)
        if pol is PolicyId.MOBIL:
            return mobil_decide(world, veh, pp.mobil if veh.is_tracked else pp.background, veh.lc_state)
        if pol is PolicyId.LC2017:
            return lc2017_decide(world, veh, pp.lc2017, veh.lc_state)
        if pol is PolicyId.IDM_LC:
            return idmlc_decide(world, veh, pp.idm_lc, veh.lc_state)
        if pol is PolicyId.CONTINUOUS:
            return continuous_decide(world, veh, pp.continuous, veh.lc_state)
        if pol is PolicyId.NONE:
            return noalg_decide(world, veh)
        raise ValueError(f"unknown policy {pol!r}")

    def _commit_lane(self, veh: Vehicle, new_lane: int) -> None:
        net = self.world.network
        old = veh.lane
        phase = veh.phase
        veh.lane = new_lane
        veh.changed_lane = True
        if phase == "merge" and (veh.target_lane is None or new_lane == veh.target_lane):
            veh.phase = "cruise"
        self.log.lane_changes.append(LaneChangeEvent(
            self.world.time, veh.id, old, new_lane, veh.pos, veh.odometer, veh.is_tracked, phase))
        if veh.lc_state is not None:
            veh.lc_state.on_lane_change(self.world.time)
        if not (new_lane == RAMP or 0 <= new_lane < net.n_lanes):
            raise AssertionError(f"vehicle {veh.id} left the road laterally")

    def _apply(self, decisions: list[tuple[Vehicle, LaneChangeDecision]]) -> None:
        # Changes are applied in id order; a change that would land within
        # ``entry_clearance`` of a vehicle that already entered the same lane
        # this step is dropped (two drivers cannot claim one slot).
        width = self.world.network.lane_width
        clearance = self.cfg.entry_clearance
        entered: dict[int, list[Vehicle]] = {}

        def blocked(veh: Vehicle, lane: int) -> bool:
            for other in entered.get(lane, ()):
                if (other.pos - veh.front < clearance and veh.pos - other.front < clearance):
                    return True
            return False

        for veh, dec in decisions:
            act = dec.action
            if act is Action.STAY:
                continue
            if act is Action.LATERAL:
                if dec.lateral_speed == 0.0 and veh.lat_offset == 0.0:
                    continue
                lat, shift = advance_lateral(veh.lat_offset, dec.lateral_speed, self.dt, width)
                if shift and blocked(veh, veh.lane + shift):
                    self.log.conflicts += 1
                    continue
                veh.lat_offset = lat
                if shift:
                    self._commit_lane(veh, veh.lane + shift)
                    entered.setdefault(veh.lane, []).append(veh)
                continue
            target = veh.lane + dec.direction
            if blocked(veh, target):
                self.log.conflicts += 1
                continue
            veh.lat_offset = 0.0
            self._commit_lane(veh, target)
            entered.setdefault(target, []).append(veh)

    def _accel(self, veh: Vehicle, lead: Optional[Vehicle]) -> float:
        net = self.world.network
        gap, v_lead = math.inf, 0.0
        if lead is not None:
            g = lead.pos - veh.front
            if g <= self.world.horizon:
                gap, v_lead = g, lead.speed
        on_ramp = veh.lane == RAMP
        if on_ramp:
            wall = net.merge_end - veh.front
            if wall < gap:
                gap, v_lead = wall, 0.0
        dt = self.dt
        v = veh.speed
        if veh.krauss is None:
            p = veh.idm
            if on_ramp and veh.pos < net.ramp_merge_start and p.v0 > net.ramp_speed_limit:
                p = self._ramp_idm.get(veh.id)
                if p is None:
                    p = self._ramp_idm[veh.id] = veh.idm.with_desired_speed(net.ramp_speed_limit)
            if gap <= 0.0:
                return -EMERGENCY_DECEL
            a = idm_accel(p, v, gap, v_lead, gap != math.inf)
            return a if a > -EMERGENCY_DECEL else -EMERGENCY_DECEL
        kp = veh.krauss
        vmax = veh.desired_speed
        if on_ramp and veh.pos < net.ramp_merge_start:
            vmax = min(vmax, net.ramp_speed_limit)
        v_next = min(v + kp.accel * dt, vmax)
        if gap != math.inf:
            if gap <= 0.0:
                return -EMERGENCY_DECEL
            v_next = min(v_next, krauss_safe_speed(kp, v_lead, max(0.0, gap - kp.min_gap), v))
        v_next -= kp.sigma * kp.accel * dt * veh.accel_noise
        floor = v - EMERGENCY_DECEL * dt
        if v_next < floor:
            v_next = floor
        if v_next < 0.0:
            v_next = 0.0
        return (v_next - v) / dt

    # -- loop -------------------------------------------------------------

    def step(self) -> None:
        world, cfg, log = self.world, self.cfg, self.log
        dt = self.dt
        world.time = self.k * dt
        # (1) insertion
        self._insert()
        # (2) snapshot
        world.reindex()
        vehicles = sorted(world.vehicles.values(), key=lambda v: v.id)
        for veh in vehicles:
            veh.changed_lane = False
        leaders = world.own_leaders()
        # (3) lateral decisions against the frozen snapshot
        decisions = []
        for veh in vehicles:
            try:
                dec = self._decide(veh, leaders[veh.id])
            except MLCAInvariantError as exc:
                log.violations.append((exc.label, exc.record))
                raise
            if dec.action is not Action.STAY:
                decisions.append((veh, dec))
        # (4) apply
        if decisions:
            self._apply(decisions)
            world.reindex()
            if not cfg.accel_from_snapshot:
                leaders = world.own_leaders()
        # (5) longitudinal accelerations
        noise = self.dawdle.random(len(vehicles)) if vehicles else ()
        for veh, u in zip(vehicles, noise):
            veh.accel_noise = float(u)
        accels = [self._accel(veh, leaders[veh.id]) for veh in vehicles]
        # (6) integrate
        for veh, a in zip(vehicles, accels):
            new_v, dpos = integrate(veh.speed, a, dt)
            veh.accel = a
            veh.speed = new_v
            veh.pos += dpos
            veh.odometer += dpos
        world.reindex()
        # (7) collisions
        hits = detect_collisions(world, world.time, cfg.collision_gap)
        for ev in hits:
            if ev.removed in world.vehicles:
                gone = world.remove(ev.removed)
                log.removed += 1
                if gone.is_tracked:
                    self.tracked_left -= 1
        log.collisions.extend(hits)
        # (8) arrivals
        end = world.network.mainline_length
        for veh in vehicles:
            if veh.id in world.vehicles and veh.pos >= end:
                world.remove(veh.id)
                log.arrived += 1
                if veh.is_tracked:
                    self.tracked_left -= 1
        log.vehicle_counts.append(len(world))
        self.k += 1
        log.steps = self.k
        if cfg.n_tracked and self.tracked_left <= 0:
            self._finish("tracked_arrived")
        elif self.k * dt >= cfg.sim_horizon - 1e-9:
            self._finish("horizon")

    def _finish(self, reason: str) -> None:
        self.done = True
        self.log.termination = reason
        self.log.pending = len(self.pending) + len(self.deferred)
        for mem in self._mlca_memories:
            self.log.violations.extend(mem.violations)

    def run(self) -> IterationLog:
        while not self.done:
            self.step()
        return self.log


def run_iteration(scenario: ScenarioConfig, policy: Optional[PolicyId] = None, seed: Optional[int] = None,
                  validate: bool = False) -> IterationLog:
    """Run one seeded iteration and return its event log."""
    return Simulation(scenario, policy, seed, validate).run()
