"""Rollout engines forecasting all non-ego agents over a horizon.

Two engines share one controller implementation (the kernels used by the
idm module): a reactive engine in which every agent follows the IDM under a
given parameter vector, and a non-reactive constant-velocity engine in which
agents coast along their paths.  Traces are array-backed; ``frames`` offers
the per-frame agent-state view.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .geometry import PathPack
from .scenario import (AgentState, BehaviorParams, DEFAULT_LANE_WIDTH,
                       DrivingLog)

CONSTANT_VELOCITY = "constant_velocity"
REACTIVE = "reactive"


@dataclass(frozen=True)
class EgoPlan:
    """A scripted ego trajectory that reactive agents respond to."""

    xy: np.ndarray       # (T,2)
    speed: np.ndarray    # (T,)
    heading: np.ndarray  # (T,)
    length: float
    width: float

    @staticmethod
    def from_states(states: Sequence[AgentState]) -> "EgoPlan":
        return EgoPlan(
            xy=np.array([[s.x, s.y] for s in states]),
            speed=np.array([s.speed for s in states]),
            heading=np.array([s.heading for s in states]),
            length=states[0].length, width=states[0].width)

    @property
    def horizon(self) -> int:
        return self.xy.shape[0]


@dataclass(frozen=True)
class RolloutTrace:
    """Simulated states of all non-ego agents over a horizon.

    Frame 0 equals the initial condition; ``engine`` records which rollout
    produced it and ``params_used`` the behavior parameters (None for the
    constant-velocity engine).
    """

    dt: float
    horizon: int
    agent_ids: tuple[str, ...]
    engine: str
    params_used: BehaviorParams | None
    xy: np.ndarray        # (M,T,2)
    speed: np.ndarray     # (M,T)
    heading: np.ndarray   # (M,T)
    progress: np.ndarray  # (M,T)
    lengths: np.ndarray   # (M,)
    widths: np.ndarray    # (M,)

    @property
    def frames(self) -> tuple[tuple[AgentState, ...], ...]:
        out = []
        for t in range(self.horizon):
            out.append(tuple(
                AgentState(agent_id=aid, x=float(self.xy[i, t, 0]),
                           y=float(self.xy[i, t, 1]),
                           heading=float(self.heading[i, t]),
                           speed=float(self.speed[i, t]),
                           length=float(self.lengths[i]),
                           width=float(self.widths[i]),
                           path_progress=float(self.progress[i, t]))
                for i, aid in enumerate(self.agent_ids)))
        return tuple(out)


def _subset_pack(pack: PathPack, rows: list[int]):
    return (np.ascontiguousarray(pack.pts[rows]),
            np.ascontiguousarray(pack.cum[rows]),
            np.ascontiguousarray(pack.seglen[rows]),
            np.ascontiguousarray(pack.lim[rows]),
            np.ascontiguousarray(pack.npts[rows]))


def rollout_reactive(initial: Sequence[AgentState], pack: PathPack,
                     index: dict[str, int], ego_plan: EgoPlan | None,
                     params: BehaviorParams, horizon: int, dt: float,
                     lane_width: float = DEFAULT_LANE_WIDTH) -> RolloutTrace:
    """Unroll every agent in ``initial`` under the IDM with ``params``.

    At each frame an agent reacts to the nearest body ahead on its path,
    where the candidate set includes the other simulated agents and, when
    given, the scripted ego at its planned pose.  ``ego_plan`` must cover
    exactly ``horizon`` frames.
    """
    if ego_plan is not None and ego_plan.horizon != horizon:
        raise ValueError("ego plan must cover exactly the rollout horizon")
    rows = [index[s.agent_id] for s in initial]
    pts, cum, seglen, lim, npts = _subset_pack(pack, rows)
    if ego_plan is not None:
        scr_xy = ego_plan.xy[None, :, :]
        scr_speed = ego_plan.speed[None, :]
        half = np.concatenate([[0.5 * ego_plan.length],
                               [0.5 * s.length for s in initial]])
    else:
        scr_xy = np.zeros((0, horizon, 2))
        scr_speed = np.zeros((0, horizon))
        half = np.array([0.5 * s.length for s in initial])
    prog0 = np.array([s.path_progress for s in initial])
    speed0 = np.array([s.speed for s in initial])

    xy, speed, prog, heading = kernels.reactive_rollout(
        pts, cum, seglen, lim, npts, scr_xy, scr_speed, prog0, speed0,
        half, params.as_array(), 1.0, lane_width, horizon, dt)
    return RolloutTrace(
        dt=dt, horizon=horizon,
        agent_ids=tuple(s.agent_id for s in initial),
        engine=REACTIVE, params_used=params,
        xy=xy, speed=speed, heading=heading, progress=prog,
        lengths=np.array([s.length for s in initial]),
        widths=np.array([s.width for s in initial]))


def rollout_constant_velocity(initial: Sequence[AgentState], pack: PathPack,
                              index: dict[str, int], horizon: int,
                              dt: float) -> RolloutTrace:
    """World-on-rails: each agent coasts along its path at its initial speed."""
    rows = [index[s.agent_id] for s in initial]
    pts, cum, seglen, _, npts = _subset_pack(pack, rows)
    prog0 = np.array([s.path_progress for s in initial])
    speed0 = np.array([s.speed for s in initial])
    xy, speed, prog, heading = kernels.cv_rollout(
        pts, cum, seglen, npts, prog0, speed0, horizon, dt)
    return RolloutTrace(
        dt=dt, horizon=horizon,
        agent_ids=tuple(s.agent_id for s in initial),
        engine=CONSTANT_VELOCITY, params_used=None,
        xy=xy, speed=speed, heading=heading, progress=prog,
        lengths=np.array([s.length for s in initial]),
        widths=np.array([s.width for s in initial]))


def trace_distance(sim: RolloutTrace, log: DrivingLog) -> float:
    """Sum of squared per-frame per-agent position errors against a log.

    Only agents present in both the trace and the log's non-ego set
    contribute; an agent missing from a log frame contributes zero for that
    frame.
    """
    if sim.dt != log.dt:
        raise ValueError(f"dt mismatch: trace {sim.dt} vs log {log.dt}")
    if sim.horizon != log.horizon:
        raise ValueError(
            f"horizon mismatch: trace {sim.horizon} vs log {log.horizon}")
    log_ids = {aid: k for k, aid in enumerate(log.agent_ids)
               if aid != log.ego_id}
    total = 0.0
    for i, aid in enumerate(sim.agent_ids):
        if aid not in log_ids:
            continue
        k = log_ids[aid]
        ref = np.array([[frame[k].x, frame[k].y] for frame in log.frames])
        d = sim.xy[i] - ref
        total += float(np.sum(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]))
    return total


def calibration_inputs(log: DrivingLog):
    """Kernel-ready arrays for re-simulating a log's non-ego agents.

    Returns a dict with the non-ego path arrays, initial state, the replayed
    ego trajectory, body half-lengths (ego first) and the logged non-ego
    positions plus presence mask, in stable agent-table order.
    """
    pack, index = log.paths()
    non_ego = [m for m in log.agents if m.agent_id != log.ego_id]
    rows = [index[m.agent_id] for m in non_ego]
    pts, cum, seglen, lim, npts = _subset_pack(pack, rows)

    ego_states = log.states_of(log.ego_id)
    ego = EgoPlan.from_states(ego_states)
    col = {aid: k for k, aid in enumerate(log.agent_ids)}
    M, T = len(non_ego), log.horizon
    log_xy = np.zeros((M, T, 2))
    prog0 = np.zeros(M)
    speed0 = np.zeros(M)
    for i, m in enumerate(non_ego):
        k = col[m.agent_id]
        for t, frame in enumerate(log.frames):
            log_xy[i, t, 0] = frame[k].x
            log_xy[i, t, 1] = frame[k].y
        prog0[i] = log.frames[0][k].path_progress
        speed0[i] = log.frames[0][k].speed
    half = np.concatenate([[0.5 * ego.length],
                           [0.5 * m.length for m in non_ego]])
    return {
        "agent_ids": tuple(m.agent_id for m in non_ego),
        "pts": pts, "cum": cum, "seglen": seglen, "lim": lim, "npts": npts,
        "scr_xy": ego.xy[None, :, :], "scr_speed": ego.speed[None, :],
        "prog0": prog0, "speed0": speed0, "half": half,
        "log_xy": log_xy, "present": np.ones((M, T), dtype=np.uint8),
        "horizon": T, "dt": log.dt,
    }
