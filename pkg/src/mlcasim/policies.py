"""Comparison lane-change policies behind one decision type.

Every policy is a function of a frozen world snapshot plus a small
per-vehicle memory object owned by the engine.  Memory objects expose
``on_lane_change(time)`` so the engine can notify them once a lane-index
change has been committed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

from .core import RAMP, Vehicle, World
from .longitudinal import idm_accel

LEFT = 1
RIGHT = -1


class Action(enum.Enum):
    STAY = "Stay"
    CHANGE_LEFT = "ChangeLeft"
    CHANGE_RIGHT = "ChangeRight"
    LATERAL = "LateralStep"


@dataclass(frozen=True)
class LaneChangeDecision:
    action: Action
    lateral_speed: float = 0.0

    @property
    def direction(self) -> int:
        """+1 for a change to the left, -1 to the right, 0 otherwise."""
        if self.action is Action.CHANGE_LEFT:
            return LEFT
        if self.action is Action.CHANGE_RIGHT:
            return RIGHT
        return 0

    def __str__(self) -> str:
        if self.action is Action.LATERAL:
            return f"LateralStep({self.lateral_speed:+g})"
        return self.action.value


STAY = LaneChangeDecision(Action.STAY)
CHANGE_LEFT = LaneChangeDecision(Action.CHANGE_LEFT)
CHANGE_RIGHT = LaneChangeDecision(Action.CHANGE_RIGHT)


def lateral_step(speed: float) -> LaneChangeDecision:
    return LaneChangeDecision(Action.LATERAL, float(speed))


def change_towards(direction: int) -> LaneChangeDecision:
    if direction == LEFT:
        return CHANGE_LEFT
    if direction == RIGHT:
        return CHANGE_RIGHT
    return STAY


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class MobilParams:
    p: float = 0.5
    delta_a_th: float = 0.1
    b_safe: float = 4.0
    a_bias: float = 0.2
    cooldown: float = 5.0

    def __post_init__(self) -> None:
        if self.p < 0 or not self.delta_a_th > 0 or not self.b_safe > 0:
            raise ValueError("MOBIL needs p >= 0, delta_a_th > 0, b_safe > 0")


@dataclass(frozen=True)
class Lc2017Params:
    p: float = 0.5
    speed_gain_th: float = 1.0
    b_safe: float = 4.0
    horizon: float = 5.0
    hysteresis_steps: int = 3
    cooldown: float = 5.0


@dataclass(frozen=True)
class IdmLcParams:
    p: float = 0.1
    delta_a_th: float = 0.1
    b_safe: float = 4.0
    a_bias: float = 0.2
    cooldown: float = 5.0


@dataclass(frozen=True)
class ContinuousParams:
    lateral_speed: float = 0.8
    cooldown: float = 5.0
    mobil: MobilParams = field(default_factory=MobilParams)


@dataclass(frozen=True)
class MergeParams:
    """Gap acceptance used while merging off the ramp and settling into the target lane."""

    g_lead_min: float = 10.0
    g_lag_min: float = 8.0
    b_safe: float = 3.0
    settle_time: float = 3.0


# ---------------------------------------------------------------------------
# per-vehicle memory


@dataclass
class PolicyMemory:
    last_change: float = -math.inf

    def on_lane_change(self, time: float) -> None:
        self.last_change = time

    def cooling(self, time: float, cooldown: float) -> bool:
        return time - self.last_change < cooldown


@dataclass
class Hysteresis:
    """Commit a direction only after it has been desired for ``steps`` consecutive ticks."""

    steps: int = 3
    left: int = 0
    right: int = 0

    def reset(self) -> None:
        self.left = self.right = 0

    def update(self, want_left: bool, want_right: bool) -> int:
        self.left = self.left + 1 if want_left else 0
        self.right = self.right + 1 if want_right else 0
        left_ready = self.left >= self.steps
        right_ready = self.right >= self.steps
        if left_ready and right_ready:
            return LEFT if self.left > self.right else RIGHT
        if left_ready:
            return LEFT
        if right_ready:
            return RIGHT
        return 0


@dataclass
class Lc2017Memory(PolicyMemory):
    hysteresis: Hysteresis = field(default_factory=Hysteresis)

    def on_lane_change(self, time: float) -> None:
        super().on_lane_change(time)
        self.hysteresis.reset()


@dataclass
class ContinuousMemory(PolicyMemory):
    direction: int = 0

    def on_lane_change(self, time: float) -> None:
        super().on_lane_change(time)
        self.direction = 0


# ---------------------------------------------------------------------------
# shared helpers


def _follow_accel(world: World, follower: Vehicle, leader: Optional[Vehicle]) -> float:
    """IDM acceleration of ``follower`` behind ``leader``; -inf when they overlap."""
    p = follower.idm
    if leader is None:
        return idm_accel(p, follower.speed, has_leader=False)
    gap = leader.pos - follower.pos - follower.length
    if gap > world.horizon:
        return idm_accel(p, follower.speed, has_leader=False)
    if gap <= 0.0:
        return -math.inf
    return idm_accel(p, follower.speed, gap, leader.speed)


def _adjacent_target(veh: Vehicle, direction: int, world: World) -> Optional[int]:
    """Mainline lane on the given side, or None when it does not exist."""
    target = veh.lane + direction
    if veh.lane == RAMP or not 0 <= target < world.network.n_lanes:
        return None
    return target


def gap_acceptance(world: World, vehicle: Vehicle, target_lane: int, g_lead_min: float,
                   g_lag_min: float, b_safe: float) -> bool:
    """Whether ``vehicle`` may enter ``target_lane`` right now.

    Requires the lead and lag gaps to meet their minima and the prospective
    new follower's IDM acceleration behind ``vehicle`` to be at least
    ``-b_safe``.  Entering lane 0 from the ramp is only possible inside the
    acceleration lane; mainline vehicles never enter the ramp.

    Raises:
        ValueError: if ``target_lane`` is not adjacent to the current lane.
    """
    if abs(target_lane - vehicle.lane) != 1:
        raise ValueError(f"lane {target_lane} is not adjacent to lane {vehicle.lane}")
    net = world.network
    if target_lane == RAMP or target_lane >= net.n_lanes:
        return False
    if vehicle.lane == RAMP and not (
            vehicle.pos >= net.ramp_merge_start and vehicle.front <= net.merge_end):
        return False
    lead = world.leader(vehicle, target_lane)
    if lead is not None and lead.gap < g_lead_min:
        return False
    lag = world.follower(vehicle, target_lane)
    if lag is None:
        return True
    if lag.gap < g_lag_min:
        return False
    f = lag.vehicle
    return idm_accel(f.idm, f.speed, lag.gap, vehicle.speed) >= -b_safe


@dataclass(frozen=True)
class MobilTerms:
    """Accelerations before/after a hypothetical change (c: self, n: new follower, o: old follower)."""

    a_c: float
    at_c: float
    a_n: float
    at_n: float
    a_o: float
    at_o: float

    def incentive(self, p: float) -> float:
        return self.at_c - self.a_c + p * ((self.at_n - self.a_n) + (self.at_o - self.a_o))


def mobil_terms(world: World, veh: Vehicle, target: int) -> MobilTerms:
    lo = world.leader(veh, veh.lane)
    o = world.follower(veh, veh.lane)
    ln = world.leader(veh, target)
    n = world.follower(veh, target)
    lo_v = lo.vehicle if lo else None
    ln_v = ln.vehicle if ln else None
    a_c = _follow_accel(world, veh, lo_v)
    at_c = _follow_accel(world, veh, ln_v)
    if n is not None:
        a_n = _follow_accel(world, n.vehicle, ln_v)
        at_n = _follow_accel(world, n.vehicle, veh)
    else:
        a_n = at_n = 0.0
    if o is not None:
        a_o = _follow_accel(world, o.vehicle, veh)
        at_o = _follow_accel(world, o.vehicle, lo_v)
    else:
        a_o = at_o = 0.0
    return MobilTerms(a_c, at_c, a_n, at_n, a_o, at_o)


def _pick(left_score: Optional[float], right_score: Optional[float], threshold: float) -> int:
    left_ok = left_score is not None and left_score > threshold
    right_ok = right_score is not None and right_score > threshold
    if left_ok and right_ok:
        return LEFT if left_score > right_score else RIGHT
    if left_ok:
        return LEFT
    if right_ok:
        return RIGHT
    return 0


def mobil_direction(world: World, veh: Vehicle, p: float, delta_a_th: float, b_safe: float,
                    a_bias: float) -> int:
    """MOBIL choice: +1 left, -1 right, 0 stay.

    The keep-right bias is applied as an extra hurdle ``a_bias`` on changes
    to the left, so an empty road never triggers a change.
    """
    scores: dict[int, Optional[float]] = {LEFT: None, RIGHT: None}
    for direction in (LEFT, RIGHT):
        target = _adjacent_target(veh, direction, world)
        if target is None:
            continue
        terms = mobil_terms(world, veh, target)
        if terms.at_n < -b_safe or terms.at_c == -math.inf:
            continue
        score = terms.incentive(p)
        if direction == LEFT:
            score -= a_bias
        scores[direction] = score
    return _pick(scores[LEFT], scores[RIGHT], delta_a_th)


# ---------------------------------------------------------------------------
# policies


def mobil_decide(world: World, vehicle: Vehicle, params: MobilParams,
                 memory: Optional[PolicyMemory] = None) -> LaneChangeDecision:
    if memory is not None and memory.cooling(world.time, params.cooldown):
        return STAY
    direction = mobil_direction(world, vehicle, params.p, params.delta_a_th, params.b_safe,
                                params.a_bias)
    return change_towards(direction)


def anticipated_speed(world: World, veh: Vehicle, leader: Optional[Vehicle], horizon: float) -> float:
    """Speed ``veh`` can sustain over ``horizon`` seconds behind ``leader``."""
    p = veh.idm
    reach = min(p.v0, veh.speed + p.a_max * horizon)
    if leader is None:
        return reach
    gap = leader.pos - veh.pos - veh.length
    if gap > world.horizon:
        return reach
    if gap <= 0.0:
        return 0.0
    # surplus beyond the equilibrium spacing is spent closing in over the horizon
    surplus = gap - p.s0 - leader.speed * p.T
    return min(reach, leader.speed + max(0.0, surplus) / horizon)


def lc2017_incentive(world: World, veh: Vehicle, target: int, params: Lc2017Params) -> Optional[float]:
    """Anticipated-speed gain of moving to ``target`` (m/s), or None when unsafe."""
    lo = world.leader(veh, veh.lane)
    o = world.follower(veh, veh.lane)
    ln = world.leader(veh, target)
    n = world.follower(veh, target)
    lo_v = lo.vehicle if lo else None
    ln_v = ln.vehicle if ln else None
    if ln is not None and ln.gap <= 0.0:
        return None
    if n is not None:
        if n.gap <= 0.0 or _follow_accel(world, n.vehicle, veh) < -params.b_safe:
            return None
    h = params.horizon
    gain = anticipated_speed(world, veh, ln_v, h) - anticipated_speed(world, veh, lo_v, h)
    others = 0.0
    if n is not None:
        others += (anticipated_speed(world, n.vehicle, veh, h)
                   - anticipated_speed(world, n.vehicle, ln_v, h))
    if o is not None:
        others += (anticipated_speed(world, o.vehicle, lo_v, h)
                   - anticipated_speed(world, o.vehicle, veh, h))
    return gain + params.p * others


def lc2017_decide(world: World, vehicle: Vehicle, params: Lc2017Params,
                  memory: Lc2017Memory) -> LaneChangeDecision:
    if memory.cooling(world.time, params.cooldown):
        memory.hysteresis.reset()
        return STAY
    memory.hysteresis.steps = params.hysteresis_steps
    scores: dict[int, Optional[float]] = {LEFT: None, RIGHT: None}
    for direction in (LEFT, RIGHT):
        target = _adjacent_target(vehicle, direction, world)
        if target is not None:
            scores[direction] = lc2017_incentive(world, vehicle, target, params)
    best = _pick(scores[LEFT], scores[RIGHT], params.speed_gain_th)
    return change_towards(memory.hysteresis.update(best == LEFT, best == RIGHT))


def idmlc_decide(world: World, vehicle: Vehicle, params: IdmLcParams,
                 memory: Optional[PolicyMemory] = None) -> LaneChangeDecision:
    """MOBIL incentive plus a time-headway clause against the new leader."""
    if memory is not None and memory.cooling(world.time, params.cooldown):
        return STAY
    scores: dict[int, Optional[float]] = {LEFT: None, RIGHT: None}
    for direction in (LEFT, RIGHT):
        target = _adjacent_target(vehicle, direction, world)
        if target is None:
            continue
        terms = mobil_terms(world, vehicle, target)
        if terms.at_n < -params.b_safe or terms.at_c == -math.inf:
            continue
        ln = world.leader(vehicle, target)
        if ln is not None and vehicle.speed > 0.0 and ln.gap / vehicle.speed <= vehicle.idm.T:
            continue
        score = terms.incentive(params.p)
        if direction == LEFT:
            score -= params.a_bias
        scores[direction] = score
    return change_towards(_pick(scores[LEFT], scores[RIGHT], params.delta_a_th))


def continuous_decide(world: World, vehicle: Vehicle, params: ContinuousParams,
                      memory: ContinuousMemory) -> LaneChangeDecision:
    """Gradual lateral motion driven by MOBIL desire.

    A maneuver starts when MOBIL desires a side, continues while that desire
    persists and aborts (drifting back to the lane center) when it collapses.
    The engine commits the lane index once the lateral offset crosses the
    lane boundary.
    """
    m = params.mobil
    if memory.cooling(world.time, params.cooldown):
        desire = 0
    else:
        desire = mobil_direction(world, vehicle, m.p, m.delta_a_th, m.b_safe, m.a_bias)
    if memory.direction and desire != memory.direction:
        memory.direction = 0
    if not memory.direction and desire:
        memory.direction = desire
    if memory.direction:
        return lateral_step(memory.direction * params.lateral_speed)
    lat = vehicle.lat_offset
    if lat == 0.0:
        return lateral_step(0.0)
    return lateral_step(-math.copysign(params.lateral_speed, lat))


def advance_lateral(lat: float, lateral_speed: float, dt: float, lane_width: float) -> tuple[float, int]:
    """Integrate the lateral offset one step.

    Returns the new offset (relative to the possibly new lane) and the lane
    shift committed by crossing a boundary (+1, -1 or 0).  Motion back toward
    the lane center stops at the center.
    """
    new = lat + lateral_speed * dt
    if lat != 0.0 and lateral_speed != 0.0 and (lat > 0) != (lateral_speed > 0) and (new > 0) != (lat > 0):
        return 0.0, 0
    half = lane_width / 2.0
    if new >= half - 1e-9:
        return new - lane_width, LEFT
    if new <= -half + 1e-9:
        return new + lane_width, RIGHT
    return new, 0


def noalg_decide(world: World, vehicle: Vehicle) -> LaneChangeDecision:
    """Greedy gap chasing with no safety check beyond physical non-overlap.

    Moves to the adjacent lane whose leader gap is strictly larger than the
    current one (absent leaders count as an infinite gap).  Left wins an
    exact left/right tie.
    """
    own = world.leader(vehicle, vehicle.lane)
    own_gap = own.gap if own else math.inf
    best_dir, best_gap = 0, own_gap
    for direction in (LEFT, RIGHT):
        target = _adjacent_target(vehicle, direction, world)
        if target is None:
            continue
        lead = world.leader(vehicle, target)
        lag = world.follower(vehicle, target)
        if (lead is not None and lead.gap <= 0.0) or (lag is not None and lag.gap <= 0.0):
            continue
        gap = lead.gap if lead else math.inf
        if gap > best_gap:
            best_dir, best_gap = direction, gap
    return change_towards(best_dir)


def merge_decide(world: World, vehicle: Vehicle, params: MergeParams,
                 memory: Optional[PolicyMemory] = None) -> LaneChangeDecision:
    """Ramp exit and settling into ``vehicle.target_lane``, shared by every policy."""
    target = 0 if vehicle.lane == RAMP else vehicle.target_lane
    if target is None or target == vehicle.lane:
        return STAY
    if memory is not None and memory.cooling(world.time, params.settle_time):
        return STAY
    direction = LEFT if target > vehicle.lane else RIGHT
    if gap_acceptance(world, vehicle, vehicle.lane + direction, params.g_lead_min,
                      params.g_lag_min, params.b_safe):
        return change_towards(direction)
    return STAY
