"""The Intelligent Driver Model longitudinal controller.

Used both by simulated agents and by the planner's proposal-speed policy.
The acceleration law is the standard published form with acceleration
exponent 4; the comfortable deceleration is soft, with a hard emergency
clamp at twice its value to keep braking bounded as the gap collapses.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .geometry import PathPack
from .scenario import AgentState, BehaviorParams, DEFAULT_LANE_WIDTH

EMERGENCY_FACTOR = 2.0


@dataclass(frozen=True)
class LeadObservation:
    """What a follower knows about its lead vehicle."""

    gap: float            # m, bumper-to-bumper along the follower's path
    approach_rate: float  # m/s, follower speed minus lead speed
    exists: bool = True

    def __post_init__(self):
        if self.exists and not self.gap > 0:
            raise ValueError("lead gap must be positive")


NO_LEAD = LeadObservation(gap=1.0, approach_rate=0.0, exists=False)


def idm_acceleration(v: float, lead: LeadObservation,
                     params: BehaviorParams) -> float:
    """IDM acceleration for a vehicle at speed ``v``.

    a = a_max * (1 - (v/v0)^4 - (s*/s)^2)  with
    s* = s0 + max(0, v*T + v*dv / (2*sqrt(a_max*b)));
    the interaction term vanishes without a lead.  The result is clamped to
    [-2*b, a_max].
    """
    v0 = params.target_velocity
    q = v / v0
    q2 = q * q
    q4 = q2 * q2
    base = 1.0 - q4
    if lead.exists:
        inv2rab = 0.5 / np.sqrt(params.max_acceleration
                                * params.max_deceleration)
        inter = v * params.headway_time + (v * lead.approach_rate) * inv2rab
        if inter < 0.0:
            inter = 0.0
        sstar = params.min_gap + inter
        r = sstar / lead.gap
        term = r * r
    else:
        term = 0.0
    a = params.max_acceleration * (base - term)
    emergency = EMERGENCY_FACTOR * params.max_deceleration
    if a < -emergency:
        a = -emergency
    if a > params.max_acceleration:
        a = params.max_acceleration
    return float(a)


def step_agent(state: AgentState, accel: float, dt: float, pack: PathPack,
               path_index: int) -> AgentState:
    """Semi-implicit Euler step along the agent's path.

    Speed updates first and is floored at zero (no reversing); progress then
    advances by the new speed and is clamped to the path end.  The pose is
    re-interpolated on the path.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    v1 = state.speed + accel * dt
    if v1 < 0.0:
        v1 = 0.0
    s1 = state.path_progress + v1 * dt
    end = pack.length(path_index)
    if s1 >= end:
        s1 = end
    x, y, heading = pack.position_at(path_index, s1)
    return replace(state, x=x, y=y, heading=heading, speed=v1,
                   path_progress=s1)


def find_lead(agent: AgentState, others: list[AgentState], pack: PathPack,
              index: dict[str, int],
              lane_width: float = DEFAULT_LANE_WIDTH) -> LeadObservation:
    """Nearest agent ahead of ``agent`` along its own path.

    Candidates are agents whose center projects onto the path within half a
    lane width laterally, strictly ahead, and within 100 m longitudinally.
    The gap is bumper-to-bumper (center separation minus both half lengths),
    floored at a small positive value so a just-touching configuration still
    yields a valid observation.
    """
    i = index[agent.agent_id]
    half = 0.5 * lane_width
    hw2 = half * half
    s_i = agent.path_progress
    best_ds = np.inf
    best = None
    for other in others:
        if other.agent_id == agent.agent_id:
            continue
        s_j, d2 = kernels.project_polyline(
            pack.pts[i], pack.cum[i], pack.seglen[i], int(pack.npts[i]),
            other.x, other.y)
        ds = s_j - s_i
        if d2 <= hw2 and 0.0 < ds <= kernels.LEAD_RANGE and ds < best_ds:
            best_ds = ds
            best = other
    if best is None:
        return NO_LEAD
    gap = best_ds - 0.5 * agent.length - 0.5 * best.length
    if gap < kernels.GAP_FLOOR:
        gap = kernels.GAP_FLOOR
    return LeadObservation(gap=float(gap),
                           approach_rate=float(agent.speed - best.speed))
