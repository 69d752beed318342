"""Domain types for vehicles and road geometry plus neighbor/gap queries.

Positions are longitudinal meters from the mainline origin and refer to the
vehicle's *rear* bumper, so the net gap between a follower ``f`` and its
leader ``l`` is ``l.pos - f.pos - f.length``.  Lanes are indexed right to
left (0 = rightmost); the on-ramp / acceleration lane is the pseudo-lane
:data:`RAMP` sitting to the right of lane 0.
"""

from __future__ import annotations

import enum
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Any, Iterator, NamedTuple, Optional

RAMP = -1
NEIGHBOR_HORIZON = 300.0
DEFAULT_LENGTH = 5.0


class ConfigError(ValueError):
    """Invalid scenario, network or harness configuration."""


class UnknownVehicleError(LookupError):
    """A query referenced a vehicle id that is not in the world."""


class VehicleKind(str, enum.Enum):
    TRACKED_AV = "TRACKED_AV"
    BACKGROUND = "BACKGROUND"


class PolicyId(str, enum.Enum):
    """Lane-change policies, declared in the order used by every report."""

    LC2017 = "LC2017"
    MOBIL = "MOBIL"
    IDM_LC = "IDM_LC"
    CONTINUOUS = "CONTINUOUS"
    MLCA = "MLCA"
    NONE = "NONE"

    @classmethod
    def parse(cls, text: str) -> "PolicyId":
        key = text.strip().upper().replace("/", "_").replace("-", "_")
        aliases = {"IDMLC": "IDM_LC", "NOALG": "NONE", "WITHOUT": "NONE"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown policy {text!r}") from None


POLICY_ORDER = tuple(PolicyId)


@dataclass(frozen=True)
class RoadNetwork:
    """Straight multi-lane mainline with one on-ramp joining lane 0.

    The ramp runs from ``ramp_merge_start - ramp_length`` to
    ``ramp_merge_start``; the acceleration lane (where merging into lane 0 is
    allowed) spans ``[ramp_merge_start, ramp_merge_start + ramp_accel_len]``.
    """

    mainline_length: float = 20000.0
    n_lanes: int = 5
    lane_width: float = 3.2
    ramp_merge_start: float = 1000.0
    ramp_accel_len: float = 300.0
    ramp_length: float = 250.0
    highway_speed_limit: float = 80.0 / 3.6
    ramp_speed_limit: float = 45.0 / 3.6

    def __post_init__(self) -> None:
        if self.n_lanes < 1:
            raise ConfigError("n_lanes must be >= 1")
        if self.mainline_length <= 0 or self.lane_width <= 0:
            raise ConfigError("mainline_length and lane_width must be positive")
        if self.ramp_accel_len <= 0 or self.ramp_length < 0:
            raise ConfigError("ramp lengths must be positive")
        if self.ramp_merge_start - self.ramp_length < 0:
            raise ConfigError("ramp starts upstream of the mainline origin")
        if self.ramp_merge_start + self.ramp_accel_len >= self.mainline_length:
            raise ConfigError(
                "acceleration lane end "
                f"{self.ramp_merge_start + self.ramp_accel_len:g} m exceeds the mainline"
            )
        if not 0 < self.ramp_speed_limit < self.highway_speed_limit:
            raise ConfigError("ramp speed limit must be positive and below the highway limit")

    @property
    def ramp_start(self) -> float:
        return self.ramp_merge_start - self.ramp_length

    @property
    def merge_end(self) -> float:
        return self.ramp_merge_start + self.ramp_accel_len

    @property
    def middle_lane(self) -> int:
        return self.n_lanes // 2

    def lane_exists(self, lane: int) -> bool:
        return lane == RAMP or 0 <= lane < self.n_lanes


@dataclass(eq=False)
class Vehicle:
    """Mutable runtime state of one vehicle (the engine owns all mutation)."""

    id: int
    lane: int
    pos: float
    speed: float
    desired_speed: float
    kind: VehicleKind = VehicleKind.BACKGROUND
    policy: Optional[PolicyId] = None
    length: float = DEFAULT_LENGTH
    lat_offset: float = 0.0
    accel: float = 0.0
    odometer: float = 0.0
    depart_time: float = 0.0
    # "merge" until a tracked AV reaches its target lane (ramp vehicles: lane 0)
    phase: str = "cruise"
    target_lane: Optional[int] = None
    last_change_time: float = float("-inf")
    lc_state: Any = None
    idm: Any = None
    krauss: Any = None
    changed_lane: bool = field(default=False, repr=False)
    accel_noise: float = field(default=0.0, repr=False)

    @property
    def on_ramp(self) -> bool:
        return self.lane == RAMP

    @property
    def front(self) -> float:
        return self.pos + self.length

    @property
    def is_tracked(self) -> bool:
        return self.kind is VehicleKind.TRACKED_AV


# Spec-facing alias: the state record of one vehicle.
VehicleState = Vehicle


class Neighbor(NamedTuple):
    """Nearest vehicle ahead/behind in a lane, with the bumper-to-bumper gap."""

    id: int
    gap: float
    speed: float
    vehicle: Vehicle


class World:
    """Vehicles on a road network plus a per-lane index sorted by position.

    Queries read the index built by :meth:`reindex`; the engine calls it once
    the lane assignment of every vehicle is final for the current phase of a
    step, so every query within a phase sees the same frozen snapshot.
    """

    def __init__(self, network: RoadNetwork, horizon: float = NEIGHBOR_HORIZON):
        self.network = network
        self.horizon = horizon
        self.time = 0.0
        self.vehicles: dict[int, Vehicle] = {}
        self._lanes: dict[int, list[Vehicle]] = {}
        self._keys: dict[int, list[tuple[float, int]]] = {}
        self.reindex()

    def __iter__(self) -> Iterator[Vehicle]:
        return iter(self.vehicles.values())

    def __len__(self) -> int:
        return len(self.vehicles)

    def get(self, vid: int) -> Vehicle:
        try:
            return self.vehicles[vid]
        except KeyError:
            raise UnknownVehicleError(f"no vehicle with id {vid}") from None

    def add(self, veh: Vehicle, reindex: bool = True) -> None:
        if veh.id in self.vehicles:
            raise ValueError(f"duplicate vehicle id {veh.id}")
        self.vehicles[veh.id] = veh
        if reindex:
            self.reindex()

    def remove(self, vid: int) -> Vehicle:
        return self.vehicles.pop(vid)

    def reindex(self) -> None:
        lanes: dict[int, list[Vehicle]] = {RAMP: []}
        for lane in range(self.network.n_lanes):
            lanes[lane] = []
        for veh in self.vehicles.values():
            lanes[veh.lane].append(veh)
        keys = {}
        for lane, vehs in lanes.items():
            vehs.sort(key=_sort_key)
            keys[lane] = [(v.pos, v.id) for v in vehs]
        self._lanes = lanes
        self._keys = keys

    def own_leaders(self) -> dict[int, Optional[Vehicle]]:
        """Immediate same-lane leader of every vehicle (no horizon cut)."""
        out: dict[int, Optional[Vehicle]] = {}
        for vehs in self._lanes.values():
            for rear, front in zip(vehs, vehs[1:]):
                out[rear.id] = front
            if vehs:
                out[vehs[-1].id] = None
        return out

    def lane_vehicles(self, lane: int) -> list[Vehicle]:
        """Vehicles in ``lane`` ordered upstream to downstream."""
        return self._lanes.get(lane, [])

    def occupancy(self, lane: int) -> int:
        return len(self._lanes.get(lane, ()))

    def leader(self, veh: Vehicle, lane: int, horizon: Optional[float] = None) -> Optional[Neighbor]:
        keys = self._keys.get(lane)
        if not keys:
            return None
        i = bisect_right(keys, (veh.pos, veh.id))
        vehs = self._lanes[lane]
        if i >= len(vehs):
            return None
        other = vehs[i]
        gap = other.pos - veh.pos - veh.length
        if gap > (self.horizon if horizon is None else horizon):
            return None
        return Neighbor(other.id, gap, other.speed, other)

    def follower(self, veh: Vehicle, lane: int, horizon: Optional[float] = None) -> Optional[Neighbor]:
        keys = self._keys.get(lane)
        if not keys:
            return None
        j = bisect_left(keys, (veh.pos, veh.id)) - 1
        if j < 0:
            return None
        other = self._lanes[lane][j]
        gap = veh.pos - other.pos - other.length
        if gap > (self.horizon if horizon is None else horizon):
            return None
        return Neighbor(other.id, gap, other.speed, other)


def _sort_key(veh: Vehicle) -> tuple[float, int]:
    return (veh.pos, veh.id)


def _check_lane(world: World, lane: int) -> None:
    if not world.network.lane_exists(lane):
        raise ValueError(f"lane {lane} does not exist")


def leader_of(world: World, vehicle: int, lane: int) -> Optional[Neighbor]:
    """Nearest vehicle ahead of ``vehicle`` in ``lane`` within the horizon."""
    veh = world.get(vehicle)
    _check_lane(world, lane)
    return world.leader(veh, lane)


def follower_of(world: World, vehicle: int, lane: int) -> Optional[Neighbor]:
    """Nearest vehicle behind ``vehicle`` in ``lane`` within the horizon."""
    veh = world.get(vehicle)
    _check_lane(world, lane)
    return world.follower(veh, lane)
