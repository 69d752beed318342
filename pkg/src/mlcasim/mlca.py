"""Minimizing-lane-change state machine.

Four states and four Boolean guards:

* ``N`` need to move, ``W`` can wait, ``L`` left side empty, ``R`` right
  side empty.

Losing ``N`` always returns the machine to IDLE.  From IDLE the guards are
tried in the order W, L, R, so whenever waiting is acceptable the vehicle
waits instead of changing lanes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

from .core import RAMP, Vehicle, World
from .policies import (
    CHANGE_LEFT,
    CHANGE_RIGHT,
    LEFT,
    RIGHT,
    STAY,
    LaneChangeDecision,
    PolicyMemory,
    gap_acceptance,
)


class MLCAState(enum.Enum):
    IDLE = "IDLE"
    WAITING = "WAITING"
    MOVING_LEFT = "MOVING_LEFT"
    MOVING_RIGHT = "MOVING_RIGHT"


class MLCASignals(NamedTuple):
    N: bool = False
    W: bool = False
    L: bool = False
    R: bool = False


@dataclass(frozen=True)
class MLCAConfig:
    g_block: float = 50.0
    v_deficit: float = 3.0 / 3.6
    ttc_wait: float = 6.0
    g_lead_min: float = 10.0
    g_lag_min: float = 8.0
    b_safe: float = 3.0
    cooldown: float = 10.0
    mandatory_distance: float = 200.0
    # closing speed used for W: "current" (own speed) or "desired" (speed the AV would drive)
    ttc_speed: str = "current"

    def __post_init__(self) -> None:
        if self.ttc_speed not in ("current", "desired"):
            raise ValueError("MLCAConfig.ttc_speed must be 'current' or 'desired'")
        for name in ("g_block", "v_deficit", "ttc_wait", "g_lead_min", "g_lag_min",
                     "b_safe", "cooldown", "mandatory_distance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"MLCAConfig.{name} must be > 0")


class MLCAInvariantError(AssertionError):
    """Raised in validation mode when a post-transition assertion fails."""

    def __init__(self, label: str, record: dict):
        super().__init__(f"{label}: {record}")
        self.label = label
        self.record = record


ASSERT_STATE_SET = "state ∈ {IDLE, WAITING, MOVING_LEFT, MOVING_RIGHT}"
ASSERT_NOT_N_IDLE = "¬N ⟹ IDLE"
ASSERT_LEFT = "MOVING_LEFT ⟹ N∧L"
ASSERT_RIGHT = "MOVING_RIGHT ⟹ N∧R"

_S = MLCAState


def mlca_step(state: MLCAState, sig: MLCASignals) -> MLCAState:
    n, w, l, r = sig
    if not n:
        return _S.IDLE
    if state is _S.IDLE:
        if w:
            return _S.WAITING
        if l:
            return _S.MOVING_LEFT
        if r:
            return _S.MOVING_RIGHT
        return _S.IDLE
    if state is _S.WAITING:
        return _S.IDLE if (l or r) else _S.WAITING
    if state is _S.MOVING_LEFT:
        return _S.MOVING_LEFT if l else _S.IDLE
    if state is _S.MOVING_RIGHT:
        return _S.MOVING_RIGHT if r else _S.IDLE
    raise TypeError(f"not an MLCAState: {state!r}")


def check_invariants(state_after: object, sig: MLCASignals) -> Optional[str]:
    """Return the label of the first violated assertion, or None if all hold."""
    if not isinstance(state_after, MLCAState):
        return ASSERT_STATE_SET
    if not sig.N and state_after is not _S.IDLE:
        return ASSERT_NOT_N_IDLE
    if state_after is _S.MOVING_LEFT and not (sig.N and sig.L):
        return ASSERT_LEFT
    if state_after is _S.MOVING_RIGHT and not (sig.N and sig.R):
        return ASSERT_RIGHT
    return None


def _vehicle(world: World, vehicle: Union[int, Vehicle]) -> Vehicle:
    return vehicle if isinstance(vehicle, Vehicle) else world.get(vehicle)


def time_to_collision(gap: float, v: float, v_lead: float) -> float:
    closing = v - v_lead
    return gap / closing if closing > 0.0 else math.inf


def derive_signals(world: World, vehicle: Union[int, Vehicle], cfg: MLCAConfig) -> MLCASignals:
    """Compute N/W/L/R for one AV from the current snapshot.

    ``N`` fires behind a close leader that is slower than the AV wishes to
    drive, and unconditionally in the last ``mandatory_distance`` meters of
    the acceleration lane.  ``W`` holds while the time to collision with the
    leader stays above ``ttc_wait`` (never during a mandatory merge).  ``L``
    and ``R`` are gap-acceptance checks for the neighboring lanes.
    """
    veh = _vehicle(world, vehicle)
    net = world.network
    lead = world.leader(veh, veh.lane)
    mandatory = veh.lane == RAMP and net.merge_end - veh.front < cfg.mandatory_distance
    slow_leader = (lead is not None and lead.gap < cfg.g_block
                   and lead.speed < veh.desired_speed - cfg.v_deficit)
    need = slow_leader or mandatory
    own = veh.desired_speed if cfg.ttc_speed == "desired" else veh.speed
    ttc = time_to_collision(lead.gap, own, lead.speed) if lead is not None else math.inf
    wait = need and ttc > cfg.ttc_wait and not mandatory

    def side(direction: int) -> bool:
        target = veh.lane + direction
        if veh.lane == RAMP:
            if direction != LEFT:
                return False
        elif not 0 <= target < net.n_lanes:
            return False
        return gap_acceptance(world, veh, target, cfg.g_lead_min, cfg.g_lag_min, cfg.b_safe)

    return MLCASignals(N=need, W=wait, L=side(LEFT), R=side(RIGHT))


@dataclass
class MLCAMemory(PolicyMemory):
    """Persistent per-vehicle machine state (owned by the engine)."""

    state: MLCAState = MLCAState.IDLE
    cooldown_until: float = -math.inf
    last_signals: MLCASignals = MLCASignals()
    cooldown: float = 10.0
    violations: list = field(default_factory=list)

    def on_lane_change(self, time: float) -> None:
        super().on_lane_change(time)
        self.state = MLCAState.IDLE
        self.cooldown_until = time + self.cooldown


def mlca_decide(world: World, vehicle: Union[int, Vehicle], memory: MLCAMemory, cfg: MLCAConfig,
                validate: bool = False, step: Optional[int] = None) -> LaneChangeDecision:
    """One tick of the machine for one AV.

    During the post-change cooldown ``N`` is masked to false.  Entering
    MOVING_LEFT / MOVING_RIGHT emits the change; the stored state is reset to
    IDLE by :meth:`MLCAMemory.on_lane_change` once the engine commits it.

    Raises:
        MLCAInvariantError: in validation mode when an assertion fails.
    """
    veh = _vehicle(world, vehicle)
    sig = derive_signals(world, veh, cfg)
    if world.time < memory.cooldown_until:
        sig = MLCASignals(False, False, sig.L, sig.R)
    new_state = mlca_step(memory.state, sig)
    label = check_invariants(new_state, sig)
    if label is not None:
        record = {"step": step, "time": world.time, "vehicle": veh.id,
                  "state": getattr(new_state, "value", repr(new_state)), "signals": sig._asdict()}
        memory.violations.append((label, record))
        if validate:
            raise MLCAInvariantError(label, record)
    memory.state = new_state
    memory.last_signals = sig
    if new_state is MLCAState.MOVING_LEFT:
        return CHANGE_LEFT
    if new_state is MLCAState.MOVING_RIGHT:
        return CHANGE_RIGHT
    return STAY


__all__ = [
    "MLCAState", "MLCASignals", "MLCAConfig", "MLCAMemory", "MLCAInvariantError",
    "mlca_step", "check_invariants", "derive_signals", "mlca_decide", "time_to_collision",
    "ASSERT_STATE_SET", "ASSERT_NOT_N_IDLE", "ASSERT_LEFT", "ASSERT_RIGHT",
]
