"""Car-following models and the kinematic update shared by every vehicle."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

EMERGENCY_DECEL = 9.0


@dataclass(frozen=True)
class IdmParams:
    a_max: float = 1.5
    b_comf: float = 2.0
    v0: float = 80.0 / 3.6
    T: float = 1.5
    s0: float = 2.0
    delta: float = 4.0

    def __post_init__(self) -> None:
        for name in ("a_max", "b_comf", "v0", "T", "s0", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"IdmParams.{name} must be > 0")

    def with_desired_speed(self, v0: float) -> "IdmParams":
        return replace(self, v0=v0)


@dataclass(frozen=True)
class KraussParams:
    b: float = 4.5
    tau: float = 1.0
    sigma: float = 0.2
    accel: float = 2.6
    min_gap: float = 2.5

    def __post_init__(self) -> None:
        if not (self.b > 0 and self.tau > 0 and self.accel > 0):
            raise ValueError("KraussParams b, tau and accel must be > 0")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("KraussParams.sigma must lie in [0, 1]")


def desired_gap(p: IdmParams, v: float, v_lead: float) -> float:
    """Dynamic desired gap s* of the IDM."""
    return p.s0 + v * p.T + v * (v - v_lead) / (2.0 * math.sqrt(p.a_max * p.b_comf))


def idm_accel(p: IdmParams, v: float, gap: float = math.inf, v_lead: float = 0.0,
              has_leader: bool = True) -> float:
    """IDM acceleration.

    ``has_leader=False`` (or an infinite gap) drops the interaction term.

    Raises:
        ValueError: if a leader is present and ``gap <= 0``; callers are
            expected to have detected the collision before asking.
    """
    free = 1.0 - (v / p.v0) ** p.delta
    if not has_leader or gap == math.inf:
        return p.a_max * free
    if gap <= 0.0:
        raise ValueError(f"IDM undefined for non-positive gap {gap!r}")
    s_star = p.s0 + v * p.T + v * (v - v_lead) / (2.0 * math.sqrt(p.a_max * p.b_comf))
    return p.a_max * (free - (s_star / gap) ** 2)


def krauss_safe_speed(p: KraussParams, v_lead: float, gap: float, v: float = 0.0) -> float:
    """Krauss collision-free speed, clamped at zero.

    ``v_safe = v_lead + (gap - v_lead*tau) / ((v + v_lead)/(2b) + tau)`` where
    ``v`` is the follower's own speed.  With ``v = 0`` this reduces to the
    leader-only form ``v_lead + (gap - v_lead*tau) / (v_lead/(2b) + tau)``.
    """
    if gap < 0.0:
        raise ValueError(f"gap must be >= 0, got {gap!r}")
    vs = v_lead + (gap - v_lead * p.tau) / ((v + v_lead) / (2.0 * p.b) + p.tau)
    return vs if vs > 0.0 else 0.0


def integrate(v: float, a: float, dt: float) -> tuple[float, float]:
    """Ballistic update returning ``(new_v, delta_pos)``; speed never goes negative."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    new_v = v + a * dt
    if new_v < 0.0:
        new_v = 0.0
    return new_v, 0.5 * (v + new_v) * dt
