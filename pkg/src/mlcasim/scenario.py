"""Road network and traffic demand for the ramp-merge highway experiment.

Background demand is a Poisson stream over the first ``demand_window`` seconds.  Tracked
AVs always enter from the ramp at fixed times and aim for the middle lane.
Insertion attributes use SUMO's names (``departLane``, ``departPos``, ...)
so a schedule can be read next to a SUMO route file.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Optional, Union

import numpy as np

from .core import RAMP, ConfigError, PolicyId, RoadNetwork, Vehicle, VehicleKind, World
from .longitudinal import IdmParams, KraussParams
from .mlca import MLCAConfig
from .policies import ContinuousParams, IdmLcParams, Lc2017Params, MergeParams, MobilParams

MAINLINE = "mainline"
RAMP_EDGE = "ramp"
MAINLINE_END = "mainline-end"

KMH = 1.0 / 3.6


@dataclass(frozen=True)
class PolicyParams:
    """Named parameter block for every policy plus the shared merge controller."""

    mlca: MLCAConfig = field(default_factory=lambda: MLCAConfig(ttc_speed="desired", ttc_wait=30.0))
    mobil: MobilParams = field(default_factory=MobilParams)
    lc2017: Lc2017Params = field(default_factory=Lc2017Params)
    idm_lc: IdmLcParams = field(default_factory=IdmLcParams)
    continuous: ContinuousParams = field(default_factory=ContinuousParams)
    merge: MergeParams = field(default_factory=MergeParams)
    background: MobilParams = field(default_factory=MobilParams)


@dataclass(frozen=True)
class ScenarioConfig:
    n_background: int = 100
    n_tracked: int = 1
    tracked_policy: Optional[PolicyId] = PolicyId.MLCA
    # lateral policy of background traffic; None keeps every background vehicle in its lane
    background_policy: Optional[PolicyId] = PolicyId.MOBIL
    ramp_share: float = 0.15
    seed: int = 0
    sim_horizon: float = 1800.0
    # background arrivals are spread over this window (None: the whole horizon)
    demand_window: Optional[float] = 300.0
    dt: float = 0.25
    network: RoadNetwork = field(default_factory=RoadNetwork)
    bg_speed_min: float = 60.0 * KMH
    bg_speed_max: float = 90.0 * KMH
    # uniform on [0, bg_depart_span * mainline_length]; 0 inserts everything at the origin
    bg_depart_span: float = 0.0
    tracked_speed: Optional[float] = None
    tracked_depart_time: float = 60.0
    tracked_stagger: float = 15.0
    # background interaction radius for lane-change evaluation (m)
    bg_lc_range: float = 100.0
    # background lateral decisions happen once per action step (s), staggered by id
    bg_action_step: float = 1.0
    idm: IdmParams = field(default_factory=IdmParams)
    krauss: KraussParams = field(default_factory=KraussParams)
    policies: PolicyParams = field(default_factory=PolicyParams)
    # net gap (m) at or below which two vehicles count as having collided
    collision_gap: float = 0.25
    # followers react to this step's lane changes one step late (the frozen snapshot)
    accel_from_snapshot: bool = True
    # minimum spacing between two vehicles entering the same lane in one step (m)
    entry_clearance: float = 10.0

    def __post_init__(self) -> None:
        if self.n_background < 0:
            raise ConfigError("n_background must be >= 0")
        if self.n_tracked < 0:
            raise ConfigError("n_tracked must be >= 0")
        if not 0.0 <= self.ramp_share <= 1.0:
            raise ConfigError("ramp_share must lie in [0, 1]")
        if not (self.sim_horizon > 0 and self.dt > 0):
            raise ConfigError("sim_horizon and dt must be positive")
        if not 0 < self.bg_speed_min <= self.bg_speed_max:
            raise ConfigError("background speed range is empty")
        if not 0.0 <= self.bg_depart_span < 1.0:
            raise ConfigError("bg_depart_span must lie in [0, 1)")

    @property
    def av_speed(self) -> float:
        return self.tracked_speed if self.tracked_speed is not None else self.network.highway_speed_limit

    def with_(self, **changes: Any) -> "ScenarioConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class InsertionSpec:
    departTime: float
    kind: VehicleKind
    policy: Optional[PolicyId]
    desiredSpeed: float
    departEdge: str = MAINLINE
    departLane: Union[int, str] = "free"
    departPos: Union[float, str] = "base"
    departPosLat: float = 0.0
    arrivalEdge: str = MAINLINE_END
    arrivalLane: Optional[int] = None
    arrivalPos: Optional[float] = None

    def to_json(self) -> str:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["policy"] = self.policy.value if self.policy else None
        return json.dumps(d, sort_keys=True)


def build_network(cfg: Union[ScenarioConfig, dict, None] = None, **overrides: Any) -> RoadNetwork:
    """Default 20 km / 5-lane network with optional field overrides.

    Raises:
        ConfigError: unknown override keys or a geometry that violates the
            network invariants.
    """
    if isinstance(cfg, ScenarioConfig):
        base = cfg.network
        extra: dict = {}
    else:
        base = RoadNetwork()
        extra = dict(cfg or {})
    extra.update(overrides)
    known = {f.name for f in fields(RoadNetwork)}
    bad = sorted(set(extra) - known)
    if bad:
        raise ConfigError(f"unknown network keys: {', '.join(bad)}")
    return replace(base, **extra) if extra else base


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent named RNG substream for one iteration seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),)))


def spawn_schedule(cfg: ScenarioConfig, rng: Optional[np.random.Generator] = None) -> list[InsertionSpec]:
    """Ordered insertion list for one iteration (sorted by departTime, stable)."""
    if rng is None:
        rng = stream(cfg.seed, "demand")
    net = cfg.network
    specs: list[InsertionSpec] = []
    n = cfg.n_background
    if n:
        window = cfg.demand_window if cfg.demand_window is not None else cfg.sim_horizon
        gaps = rng.exponential(window / n, size=n)
        times = np.cumsum(gaps)
        ramp_draw = rng.random(n)
        speeds = rng.uniform(cfg.bg_speed_min, cfg.bg_speed_max, size=n)
        pos_draw = rng.random(n)
        for i in range(n):
            on_ramp = ramp_draw[i] < cfg.ramp_share
            if on_ramp:
                depart_pos: Union[float, str] = "base"
            elif cfg.bg_depart_span > 0:
                depart_pos = round(float(pos_draw[i]) * cfg.bg_depart_span * net.mainline_length, 3)
            else:
                depart_pos = "base"
            specs.append(InsertionSpec(
                departTime=round(float(times[i]), 6),
                kind=VehicleKind.BACKGROUND,
                policy=cfg.background_policy,
                desiredSpeed=float(speeds[i]),
                departEdge=RAMP_EDGE if on_ramp else MAINLINE,
                departLane=RAMP if on_ramp else "free",
                departPos=depart_pos,
            ))
    for k in range(cfg.n_tracked):
        specs.append(InsertionSpec(
            departTime=cfg.tracked_depart_time + k * cfg.tracked_stagger,
            kind=VehicleKind.TRACKED_AV,
            policy=cfg.tracked_policy,
            desiredSpeed=cfg.av_speed,
            departEdge=RAMP_EDGE,
            departLane=RAMP,
            departPos="base",
        ))
    specs.sort(key=lambda s: s.departTime)
    return specs


def serialize_schedule(specs: list[InsertionSpec]) -> str:
    return "".join(s.to_json() + "\n" for s in specs)


def _depart_position(spec: InsertionSpec, net: RoadNetwork) -> float:
    if spec.departPos == "base":
        return net.ramp_start if spec.departEdge == RAMP_EDGE else 0.0
    if isinstance(spec.departPos, str):
        raise ConfigError(f"unsupported departPos {spec.departPos!r}")
    pos = float(spec.departPos)
    lo, hi = (net.ramp_start, net.merge_end) if spec.departEdge == RAMP_EDGE else (0.0, net.mainline_length)
    if not lo <= pos < hi:
        raise ConfigError(f"departPos {pos} outside the {spec.departEdge} edge")
    return pos


def _gap_ok(world: World, probe: Vehicle, lane: int, idm: IdmParams) -> bool:
    lead = world.leader(probe, lane)
    if lead is not None and lead.gap < idm.s0 + probe.speed * idm.T:
        return False
    lag = world.follower(probe, lane)
    if lag is not None and lag.gap < idm.s0 + lag.speed * idm.T:
        return False
    return True


def insert_vehicle(world: World, spec: InsertionSpec, vid: int, cfg: ScenarioConfig) -> Optional[Vehicle]:
    """Place the vehicle described by ``spec`` if its insertion gap is safe.

    ``departLane="free"`` tries mainline lanes from least to most occupied
    (ties to the right).  Returns the new vehicle, or None when insertion is
    deferred to a later step.

    Raises:
        ConfigError: malformed edge, lane or position.
    """
    net = world.network
    if spec.departEdge not in (MAINLINE, RAMP_EDGE):
        raise ConfigError(f"unknown departEdge {spec.departEdge!r}")
    pos = _depart_position(spec, net)
    if spec.departEdge == RAMP_EDGE:
        if spec.departLane not in (RAMP, "free"):
            raise ConfigError("ramp vehicles depart on the ramp lane")
        lanes = [RAMP]
        speed = min(spec.desiredSpeed, net.ramp_speed_limit)
    else:
        if spec.departLane == "free":
            lanes = sorted(range(net.n_lanes), key=lambda ln: (world.occupancy(ln), ln))
        elif isinstance(spec.departLane, int) and 0 <= spec.departLane < net.n_lanes:
            lanes = [spec.departLane]
        else:
            raise ConfigError(f"invalid departLane {spec.departLane!r}")
        speed = spec.desiredSpeed
    half = net.lane_width / 2.0
    if not -half <= spec.departPosLat <= half:
        raise ConfigError("departPosLat outside the lane")
    tracked = spec.kind is VehicleKind.TRACKED_AV
    for lane in lanes:
        probe = Vehicle(id=vid, lane=lane, pos=pos, speed=speed, desired_speed=spec.desiredSpeed,
                        kind=spec.kind, policy=spec.policy, lat_offset=spec.departPosLat,
                        depart_time=world.time)
        if not _gap_ok(world, probe, lane, cfg.idm):
            continue
        probe.idm = cfg.idm.with_desired_speed(spec.desiredSpeed)
        if not tracked:
            probe.krauss = cfg.krauss
        if lane == RAMP:
            probe.phase = "merge"
            probe.target_lane = net.middle_lane if tracked else 0
        elif tracked and lane != net.middle_lane:
            probe.phase = "merge"
            probe.target_lane = net.middle_lane
        world.add(probe)
        return probe
    return None


__all__ = [
    "PolicyParams", "ScenarioConfig", "InsertionSpec", "build_network", "spawn_schedule",
    "serialize_schedule", "insert_vehicle", "stream", "MAINLINE", "RAMP_EDGE", "KMH",
]
