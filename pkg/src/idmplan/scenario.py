"""Domain types, log file I/O and the synthetic scenario generator.

A driving log couples a lane graph with per-frame agent states.  Logs are
stored as line-oriented JSON (one header line, one line per frame) with keys
in a fixed order and floats at 6 decimal places, so that saving is canonical
and byte-stable.  The generator plants a behavior archetype: every agent,
including the ego, is rolled out by the IDM controller under the archetype's
parameters along lane-chain routes, which makes the generating parameters
recoverable from the log by grid search.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import kernels
from .geometry import (PathPack, build_path_pack, cumulative_lengths,
                       dedup_points, resample_polyline)

DEFAULT_LANE_WIDTH = 3.5
DEFAULT_SPEED_LIMIT = 10.0


class LogError(ValueError):
    """Base class for log parsing / invariant failures."""


class LogParseError(LogError):
    pass


class LogInvariantError(LogError):
    pass


class PlacementError(RuntimeError):
    """Raised when no feasible initial agent placement is found."""


# ---------------------------------------------------------------------------
# behavior parameters


@dataclass(frozen=True)
class BehaviorParams:
    """The five longitudinal control parameters of the IDM."""

    target_velocity: float   # m/s
    min_gap: float           # m
    headway_time: float      # s
    max_acceleration: float  # m/s^2
    max_deceleration: float  # m/s^2 (comfortable; emergency clamp is 2x)

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not v > 0:
                raise ValueError(f"{name} must be strictly positive, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.target_velocity, self.min_gap,
                         self.headway_time, self.max_acceleration,
                         self.max_deceleration])

    @staticmethod
    def from_array(a: Sequence[float]) -> "BehaviorParams":
        return BehaviorParams(*(float(x) for x in a))


#: Reference archetypes used to seed the synthetic cities.
ARCHETYPES: dict[str, BehaviorParams] = {
    "PIT": BehaviorParams(10.0, 2.0, 0.5, 1.5, 3.0),
    "BOS": BehaviorParams(10.0, 1.0, 1.5, 2.0, 3.5),
    "SIN": BehaviorParams(10.0, 2.5, 1.5, 2.0, 1.0),
    "LAS": BehaviorParams(10.0, 1.0, 0.5, 1.5, 0.5),
}

DEFAULT_PARAMS = BehaviorParams(10.0, 1.0, 1.5, 1.0, 2.0)


# ---------------------------------------------------------------------------
# lane graph


@dataclass(frozen=True, eq=False)
class LaneSegment:
    seg_id: str
    centerline: np.ndarray          # (N,2) m
    speed_limit: float              # m/s
    successors: tuple[str, ...] = ()
    left: str | None = None
    right: str | None = None

    def __eq__(self, other):
        return (isinstance(other, LaneSegment)
                and self.seg_id == other.seg_id
                and self.speed_limit == other.speed_limit
                and self.successors == other.successors
                and self.left == other.left
                and self.right == other.right
                and np.array_equal(self.centerline, other.centerline))

    @property
    def length(self) -> float:
        return float(cumulative_lengths(self.centerline)[-1])


@dataclass(frozen=True, eq=False)
class LaneGraph:
    nodes: tuple[LaneSegment, ...]
    goal_segment: str

    def __eq__(self, other):
        return (isinstance(other, LaneGraph)
                and self.goal_segment == other.goal_segment
                and self.nodes == other.nodes)

    def __post_init__(self):
        ids = [n.seg_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise LogInvariantError("duplicate segment id")
        known = set(ids)
        for n in self.nodes:
            for ref in list(n.successors) + [n.left, n.right]:
                if ref is not None and ref not in known:
                    raise LogInvariantError(
                        f"segment {n.seg_id} references unknown segment {ref}")
            if len(n.centerline) < 2:
                raise LogInvariantError(
                    f"segment {n.seg_id} centerline has fewer than 2 points")
            d = np.sqrt(((n.centerline[1:] - n.centerline[:-1]) ** 2).sum(axis=1))
            if np.any(d <= 0):
                raise LogInvariantError(
                    f"segment {n.seg_id} has duplicate consecutive points")
        if self.goal_segment not in known:
            raise LogInvariantError("goal_segment not present in graph")

    def segment(self, seg_id: str) -> LaneSegment:
        for n in self.nodes:
            if n.seg_id == seg_id:
                return n
        raise KeyError(seg_id)

    def nearest_segment(self, x: float, y: float) -> tuple[str, float, float]:
        """Segment whose centerline is closest to (x, y) -> (id, s, dist)."""
        best = None
        for n in self.nodes:
            pts = n.centerline
            cum = cumulative_lengths(pts)
            seglen = np.concatenate([cum[1:] - cum[:-1], [1.0]])
            s, d2 = kernels.project_polyline(pts, cum, seglen, len(pts), x, y)
            if best is None or d2 < best[2]:
                best = (n.seg_id, float(s), float(d2))
        if best is None:
            raise LogInvariantError("empty lane graph")
        return best[0], best[1], float(np.sqrt(best[2]))

    def all_segment_arrays(self):
        """Flat (ax, ay, bx, by) arrays over every centerline segment."""
        a, b = [], []
        for n in self.nodes:
            a.append(n.centerline[:-1])
            b.append(n.centerline[1:])
        a = np.concatenate(a)
        b = np.concatenate(b)
        return (np.ascontiguousarray(a[:, 0]), np.ascontiguousarray(a[:, 1]),
                np.ascontiguousarray(b[:, 0]), np.ascontiguousarray(b[:, 1]))


def path_from_route(graph: LaneGraph, route: Sequence[str],
                    end: float | None = None):
    """Concatenate segment centerlines along ``route``.

    Returns (points (N,2), per-point speed limit (N,)).  The limit entry at
    index ``k`` governs the span between points ``k`` and ``k+1``; joints
    carry the limit of the segment that begins there.  ``end`` truncates the
    path at that arclength (an agent whose road ends there, e.g. a parked
    vehicle).
    """
    pts_parts: list[np.ndarray] = []
    lim_parts: list[np.ndarray] = []
    for seg_id in route:
        seg = graph.segment(seg_id)
        pts = seg.centerline
        if pts_parts and np.hypot(*(pts[0] - pts_parts[-1][-1])) <= 1e-9:
            # shared joint point: keep it with the new segment's limit
            pts_parts[-1] = pts_parts[-1][:-1]
            lim_parts[-1] = lim_parts[-1][:-1]
        pts_parts.append(pts)
        lim_parts.append(np.full(len(pts), seg.speed_limit))
    points = np.concatenate(pts_parts)
    limits = np.concatenate(lim_parts)
    if end is not None:
        points, limits = _truncate_path(points, limits, end)
    return points, limits


def _truncate_path(points: np.ndarray, limits: np.ndarray, end: float):
    cum = cumulative_lengths(points)
    if end >= cum[-1] - 1e-9:
        return points, limits
    end = max(end, 1.0)  # keep a usable path
    k = int(np.clip(np.searchsorted(cum, end, side="right") - 1,
                    0, len(points) - 2))
    t = (end - cum[k]) / (cum[k + 1] - cum[k])
    p_end = points[k] + t * (points[k + 1] - points[k])
    if np.hypot(*(p_end - points[k])) <= 1e-9:
        return points[: k + 1], limits[: k + 1]
    return (np.vstack([points[: k + 1], p_end]),
            np.concatenate([limits[: k + 1], [limits[k]]]))


# ---------------------------------------------------------------------------
# agents and logs


@dataclass(frozen=True)
class AgentState:
    agent_id: str
    x: float
    y: float
    heading: float
    speed: float
    length: float
    width: float
    path_progress: float

    def __post_init__(self):
        if self.speed < 0:
            raise LogInvariantError("speed must be non-negative")
        if not (self.length > 0 and self.width > 0):
            raise LogInvariantError("agent dimensions must be positive")

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.heading)


@dataclass(frozen=True)
class AgentMeta:
    agent_id: str
    length: float
    width: float
    route: tuple[str, ...] | None = None
    route_end: float | None = None  # arclength where the agent's road ends


@dataclass(frozen=True, eq=False)
class DrivingLog:
    scenario_id: str
    city_tag: str
    lane_graph: LaneGraph
    dt: float
    ego_id: str
    agents: tuple[AgentMeta, ...]
    frames: tuple[tuple[AgentState, ...], ...]

    def __eq__(self, other):
        return (isinstance(other, DrivingLog)
                and self.scenario_id == other.scenario_id
                and self.city_tag == other.city_tag
                and self.dt == other.dt
                and self.ego_id == other.ego_id
                and self.agents == other.agents
                and self.frames == other.frames
                and self.lane_graph == other.lane_graph)

    def __post_init__(self):
        if self.dt <= 0:
            raise LogInvariantError("dt must be positive")
        if len(self.frames) == 0:
            raise LogInvariantError("empty log")
        ids = [m.agent_id for m in self.agents]
        if self.ego_id not in ids:
            raise LogInvariantError("ego agent missing from agent table")
        expected = tuple(ids)
        for t, frame in enumerate(self.frames):
            got = tuple(s.agent_id for s in frame)
            if got != expected:
                raise LogInvariantError(f"unstable agent id at frame {t}")

    @property
    def horizon(self) -> int:
        return len(self.frames)

    @property
    def agent_ids(self) -> tuple[str, ...]:
        return tuple(m.agent_id for m in self.agents)

    def meta(self, agent_id: str) -> AgentMeta:
        for m in self.agents:
            if m.agent_id == agent_id:
                return m
        raise KeyError(agent_id)

    def states_of(self, agent_id: str) -> tuple[AgentState, ...]:
        idx = self.agent_ids.index(agent_id)
        return tuple(frame[idx] for frame in self.frames)

    def paths(self) -> tuple[PathPack, dict[str, int]]:
        """Per-agent spatial paths in agent-table order.

        Agents with a stored route follow the exact lane-chain geometry; the
        rest fall back to their logged trajectory resampled at 0.5 m (the
        re-simulation substrate when no route is available).
        """
        entries = []
        for m in self.agents:
            if m.route:
                entries.append(path_from_route(self.lane_graph, m.route,
                                               m.route_end))
            else:
                entries.append(_path_from_states(self, m.agent_id))
        pack = build_path_pack(entries)
        index = {m.agent_id: i for i, m in enumerate(self.agents)}
        return pack, index


def _path_from_states(log: DrivingLog, agent_id: str):
    states = log.states_of(agent_id)
    pts = dedup_points(np.array([[s.x, s.y] for s in states]), tol=1e-6)
    if len(pts) < 2:
        s0 = states[0]
        ahead = np.array([s0.x + np.cos(s0.heading), s0.y + np.sin(s0.heading)])
        pts = np.vstack([pts[0], ahead])
    else:
        pts = resample_polyline(pts, 0.5)
    limits = np.empty(len(pts))
    for k, p in enumerate(pts):
        seg_id, _, _ = log.lane_graph.nearest_segment(p[0], p[1])
        limits[k] = log.lane_graph.segment(seg_id).speed_limit
    return pts, limits


# ---------------------------------------------------------------------------
# canonical serialization


def q6(x: float) -> float:
    """Quantize to the canonical 6-decimal file precision."""
    return float(format(float(x), ".6f"))


def _f(x: float) -> str:
    return format(float(x), ".6f")


def _dump_graph(graph: LaneGraph) -> str:
    nodes = []
    for n in graph.nodes:
        pts = ",".join(f"[{_f(p[0])},{_f(p[1])}]" for p in n.centerline)
        succ = ",".join(json.dumps(s) for s in n.successors)
        left = json.dumps(n.left) if n.left is not None else "null"
        right = json.dumps(n.right) if n.right is not None else "null"
        nodes.append('{"id":%s,"speed_limit":%s,"successors":[%s],'
                     '"left":%s,"right":%s,"centerline":[%s]}'
                     % (json.dumps(n.seg_id), _f(n.speed_limit), succ,
                        left, right, pts))
    return '{"goal_segment":%s,"nodes":[%s]}' % (
        json.dumps(graph.goal_segment), ",".join(nodes))


def save_log(log: DrivingLog, path) -> None:
    """Write a log in the canonical line-oriented JSON format.

    Two saves of the same log are byte-identical; see docs/log_format.md.
    """
    agents = []
    for m in log.agents:
        route = ("[" + ",".join(json.dumps(s) for s in m.route) + "]"
                 if m.route else "null")
        route_end = _f(m.route_end) if m.route_end is not None else "null"
        agents.append('{"id":%s,"length":%s,"width":%s,"route":%s,'
                      '"route_end":%s}'
                      % (json.dumps(m.agent_id), _f(m.length), _f(m.width),
                         route, route_end))
    header = ('{"scenario_id":%s,"city_tag":%s,"dt":%s,"horizon":%d,'
              '"ego_id":%s,"agents":[%s],"lane_graph":%s}'
              % (json.dumps(log.scenario_id), json.dumps(log.city_tag),
                 _f(log.dt), log.horizon, json.dumps(log.ego_id),
                 ",".join(agents), _dump_graph(log.lane_graph)))
    lines = [header]
    for t, frame in enumerate(log.frames):
        states = ",".join(
            '{"id":%s,"x":%s,"y":%s,"heading":%s,"speed":%s}'
            % (json.dumps(s.agent_id), _f(s.x), _f(s.y), _f(s.heading),
               _f(s.speed))
            for s in frame)
        lines.append('{"frame":%d,"states":[%s]}' % (t, states))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_graph(obj, line: int) -> LaneGraph:
    try:
        nodes = tuple(
            LaneSegment(seg_id=n["id"],
                        centerline=np.array(n["centerline"], dtype=float),
                        speed_limit=float(n["speed_limit"]),
                        successors=tuple(n["successors"]),
                        left=n.get("left"),
                        right=n.get("right"))
            for n in obj["nodes"])
        return LaneGraph(nodes=nodes, goal_segment=obj["goal_segment"])
    except KeyError as e:
        raise LogParseError(f"line {line}: lane_graph missing field {e}") from e


def load_log(path) -> DrivingLog:
    """Parse and validate a log file; raises LogParseError/LogInvariantError."""
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()
    if not raw_lines:
        raise LogParseError("line 1: empty file")

    def parse(line_no: int, text: str):
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise LogParseError(f"line {line_no}: invalid JSON ({e.msg})") from e

    head = parse(1, raw_lines[0])
    for fieldname in ("scenario_id", "city_tag", "dt", "horizon", "ego_id",
                      "agents", "lane_graph"):
        if fieldname not in head:
            raise LogParseError(f"line 1: missing field '{fieldname}'")
    dt = float(head["dt"])
    if dt <= 0:
        raise LogInvariantError("dt must be positive")
    graph = _parse_graph(head["lane_graph"], 1)
    metas = []
    for a in head["agents"]:
        route = tuple(a["route"]) if a.get("route") else None
        route_end = (float(a["route_end"])
                     if a.get("route_end") is not None else None)
        metas.append(AgentMeta(agent_id=a["id"], length=float(a["length"]),
                               width=float(a["width"]), route=route,
                               route_end=route_end))
    metas = tuple(metas)
    horizon = int(head["horizon"])

    frame_lines = raw_lines[1:]
    if len(frame_lines) == 0:
        raise LogInvariantError("empty log")
    if len(frame_lines) != horizon:
        raise LogInvariantError(
            f"horizon mismatch: header says {horizon}, "
            f"found {len(frame_lines)} frames")

    raw_frames = []
    expected = tuple(m.agent_id for m in metas)
    for t, text in enumerate(frame_lines):
        obj = parse(t + 2, text)
        if "states" not in obj:
            raise LogParseError(f"line {t + 2}: missing field 'states'")
        got = tuple(s["id"] for s in obj["states"])
        if got != expected:
            raise LogInvariantError(f"unstable agent id at frame {t}")
        raw_frames.append(obj["states"])

    return _assemble_log(head["scenario_id"], head["city_tag"], graph, dt,
                         head["ego_id"], metas, raw_frames)


def _assemble_log(scenario_id, city_tag, graph, dt, ego_id, metas,
                  raw_frames) -> DrivingLog:
    """Build a DrivingLog from parsed per-frame dicts, deriving progress."""
    probe = DrivingLog(
        scenario_id=scenario_id, city_tag=city_tag, lane_graph=graph, dt=dt,
        ego_id=ego_id, agents=metas,
        frames=tuple(
            tuple(AgentState(agent_id=s["id"], x=float(s["x"]),
                             y=float(s["y"]), heading=float(s["heading"]),
                             speed=float(s["speed"]), length=m.length,
                             width=m.width, path_progress=0.0)
                  for s, m in zip(frame, metas))
            for frame in raw_frames))
    pack, index = probe.paths()
    frames = []
    for frame in probe.frames:
        states = []
        for s in frame:
            i = index[s.agent_id]
            prog, dist = pack.project(i, s.x, s.y)
            if dist > 1e-6:
                raise LogInvariantError(
                    f"agent {s.agent_id} pose is {dist:.2e} m off its path")
            states.append(replace(s, path_progress=prog))
        frames.append(tuple(states))
    return replace(probe, frames=tuple(frames))


# ---------------------------------------------------------------------------
# lane-graph templates


def _cut_chain(lane_name: str, centerline: np.ndarray, limits_fn, cuts):
    """Cut one lane centerline into chained segments at given arclengths."""
    cum = cumulative_lengths(centerline)
    total = cum[-1]
    marks = sorted({0.0, total} | {c for c in cuts if 0.0 < c < total})
    segs = []
    for k in range(len(marks) - 1):
        s0, s1 = marks[k], marks[k + 1]
        inner = centerline[(cum > s0 + 1e-9) & (cum < s1 - 1e-9)]
        p0 = _interp_at(centerline, cum, s0)
        p1 = _interp_at(centerline, cum, s1)
        pts = dedup_points(np.vstack([p0, inner, p1]), tol=1e-9)
        mid = 0.5 * (s0 + s1)
        segs.append(LaneSegment(
            seg_id=f"{lane_name}.{k}", centerline=pts,
            speed_limit=limits_fn(mid)))
    return segs


def _interp_at(pts, cum, s):
    k = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(pts) - 2))
    t = (s - cum[k]) / (cum[k + 1] - cum[k])
    return pts[k] + t * (pts[k + 1] - pts[k])


def _link_chain(segs):
    out = []
    for k, s in enumerate(segs):
        succ = (segs[k + 1].seg_id,) if k + 1 < len(segs) else ()
        out.append(replace(s, successors=succ))
    return out


def _straight_lane(y: float, length: float) -> np.ndarray:
    n = int(round(length))
    xs = np.linspace(0.0, length, n + 1)
    return np.stack([xs, np.full(n + 1, y)], axis=1)


def _curve_lane(offset: float, leg: float, radius: float) -> np.ndarray:
    """Straight entry, a quarter turn to the left, straight exit."""
    r = radius - offset
    entry = _straight_lane(offset, leg)
    n_arc = max(int(round(r * np.pi / 2)), 8)
    cx, cy = leg, offset + r
    ang = np.linspace(0.0, np.pi / 2, n_arc + 1)
    arc = np.stack([cx + r * np.sin(ang), cy - r * np.cos(ang)], axis=1)
    exit_pts = np.stack([np.full(int(leg) + 1, cx + r),
                         cy + np.linspace(0.0, leg, int(leg) + 1)], axis=1)
    return dedup_points(np.vstack([entry, arc[1:], exit_pts[1:]]), tol=1e-9)


def _merge_lane_b(join_x: float, y_off: float, taper: float) -> np.ndarray:
    straight = _straight_lane(y_off, join_x - taper)
    n = int(round(taper))
    xs = np.linspace(join_x - taper, join_x, n + 1)
    t = (xs - (join_x - taper)) / taper
    ys = y_off * 0.5 * (1 + np.cos(np.pi * t))
    ramp = np.stack([xs, ys], axis=1)
    return dedup_points(np.vstack([straight, ramp[1:]]), tol=1e-9)


@dataclass(frozen=True)
class GeneratorConfig:
    """Settings for :func:`generate_scenario`."""

    template: str = "straight"       # straight | curve | merge
    scene: str = "queue"             # queue | dissolve | cutin | flow
    n_agents: int = 8                # non-ego agents
    horizon: int = 150
    dt: float = 0.1
    lane_width: float = DEFAULT_LANE_WIDTH
    speed_limit: float = DEFAULT_SPEED_LIMIT
    queue_position: float = 0.55     # parked-front location, x chain length
    length: float = 400.0            # straight-template lane length
    curve_leg: float = 200.0
    curve_radius: float = 60.0
    speed_range: tuple[float, float] = (0.5, 1.0)   # x target_velocity
    gap_range_pad: tuple[float, float] = (2.0, 30.0)  # min_gap + pad .. max
    cutin_gap: tuple[float, float] = (12.0, 18.0)
    cutin_speed: tuple[float, float] = (2.0, 4.0)
    max_attempts: int = 100


def _build_template(cfg: GeneratorConfig):
    """Returns (graph, per-lane chains of seg ids, ego chain, adj start cap)."""
    lanes = []
    if cfg.template == "straight":
        for k, name in enumerate(["A", "B", "C"]):
            lanes.append((name, _straight_lane(k * cfg.lane_width, cfg.length)))
        frac_cuts = (1 / 3, 2 / 3)
    elif cfg.template == "curve":
        lanes.append(("A", _curve_lane(0.0, cfg.curve_leg, cfg.curve_radius)))
        lanes.append(("B", _curve_lane(cfg.lane_width, cfg.curve_leg,
                                       cfg.curve_radius)))
        frac_cuts = (1 / 3, 2 / 3)
    elif cfg.template == "merge":
        join_x = 150.0
        a_pts = _straight_lane(0.0, cfg.length)
        b_pts = _merge_lane_b(join_x, cfg.lane_width, 50.0)
        a_segs = _link_chain(_cut_chain("A", a_pts,
                                        lambda s: cfg.speed_limit,
                                        [join_x, 275.0]))
        b_segs = _cut_chain("B", b_pts, lambda s: cfg.speed_limit, [])
        target = next(s.seg_id for s in a_segs
                      if abs(s.centerline[0][0] - join_x) < 1e-6)
        b_segs = [replace(b_segs[k],
                          successors=((b_segs[k + 1].seg_id,)
                                      if k + 1 < len(b_segs) else (target,)))
                  for k in range(len(b_segs))]
        a_ids = [s.seg_id for s in a_segs]
        chains = [a_ids,
                  [s.seg_id for s in b_segs] + a_ids[a_ids.index(target):]]
        join_len = sum(s.length for s in b_segs)
        graph = LaneGraph(nodes=tuple(a_segs + b_segs),
                          goal_segment=a_segs[-1].seg_id)
        return graph, chains, 0, join_len - 15.0
    else:
        raise ValueError(f"unknown template {cfg.template!r}")

    per_lane = []
    all_segs: list[LaneSegment] = []
    for name, center in lanes:
        total = cumulative_lengths(center)[-1]
        cuts = [f * total for f in frac_cuts]
        per_lane.append(_link_chain(_cut_chain(
            name, center, lambda s: cfg.speed_limit, cuts)))
    n_pieces = min(len(p) for p in per_lane)
    linked = []
    for li, segs in enumerate(per_lane):
        row = []
        for k, s in enumerate(segs):
            left = per_lane[li + 1][k].seg_id if (li + 1 < len(per_lane)
                                                  and k < n_pieces) else None
            right = per_lane[li - 1][k].seg_id if (li - 1 >= 0
                                                   and k < n_pieces) else None
            row.append(replace(s, left=left, right=right))
        linked.append(row)
        all_segs.extend(row)
    chains = [[s.seg_id for s in row] for row in linked]
    graph = LaneGraph(nodes=tuple(all_segs), goal_segment=linked[0][-1].seg_id)
    return graph, chains, 0, None


# ---------------------------------------------------------------------------
# scenario generation


EGO_DIMS = (4.5, 2.0)
AGENT_DIMS = (4.5, 2.0)


def _safe_speed_cap(gap: float, lead_floor: float,
                    params: BehaviorParams) -> float:
    """Upper bound on a follower's initial speed that its braking can honor.

    Budgeted against the comfortable deceleration: the controller plans its
    approach around that value and only exceeds it reactively, so a
    kinematic bound at full emergency braking would still overshoot.
    """
    slack = max(gap - params.min_gap, 0.1)
    return lead_floor + 0.6 * np.sqrt(2.0 * params.max_deceleration * slack)


def generate_scenario(archetype: BehaviorParams, seed: int,
                      config: GeneratorConfig | None = None,
                      city_tag: str = "SYN") -> DrivingLog:
    """Generate a log whose agents (ego included) follow ``archetype``.

    Deterministic in (archetype, seed, config).  Raises PlacementError when
    no collision-free placement is found within ``config.max_attempts``.
    """
    cfg = config or GeneratorConfig()
    rng = np.random.default_rng(seed)
    for _ in range(cfg.max_attempts):
        log = _try_generate(archetype, rng, cfg, city_tag, seed)
        if log is not None:
            return log
    raise PlacementError(
        f"no feasible placement for seed {seed} after {cfg.max_attempts} attempts")


def _try_generate(params, rng, cfg, city_tag, seed):
    graph, chains, ego_chain, adj_cap = _build_template(cfg)

    # body 0 is the ego; remaining bodies are the non-ego agents
    names = ["ego"] + [f"a{k}" for k in range(cfg.n_agents)]

    u_gap = rng.uniform(0.0, 1.0, size=cfg.n_agents + 1)
    u_spd = rng.uniform(0.0, 1.0, size=cfg.n_agents + 1)
    u_aux = rng.uniform(0.0, 1.0, size=4)
    lo, hi = cfg.speed_range
    raw_speed = (lo + (hi - lo) * u_spd) * params.target_velocity
    gaps = (params.min_gap + cfg.gap_range_pad[0]
            + u_gap * (cfg.gap_range_pad[1] - params.min_gap
                       - cfg.gap_range_pad[0]))

    half_len = 0.5 * AGENT_DIMS[0]
    # placements: name -> (arclength, speed, chain index, road end or None)
    placements: dict[str, tuple] = {}
    if cfg.scene == "cutin":
        slow_gap = cfg.cutin_gap[0] + u_gap[0] * (cfg.cutin_gap[1]
                                                  - cfg.cutin_gap[0])
        slow_speed = cfg.cutin_speed[0] + u_spd[0] * (cfg.cutin_speed[1]
                                                      - cfg.cutin_speed[0])
        s_ego = 40.0
        ego_speed = min(raw_speed[0],
                        _safe_speed_cap(slow_gap, slow_speed, params))
        placements["ego"] = (s_ego, ego_speed, 0, None)
        placements["a0"] = (s_ego + slow_gap + 2 * half_len, slow_speed, 0,
                            None)
        # a normal platoon flows on the neighbor lane
        if cfg.n_agents >= 2:
            lane = min(1, len(chains) - 1)
            chain_len = _chain_length(graph, chains[lane])
            reach = cfg.horizon * cfg.dt * cfg.speed_limit + 10.0
            s_adj = min(0.75 * chain_len, chain_len - reach)
            prev = raw_speed[1]
            placements["a1"] = (s_adj, prev, lane, None)
            for k in range(2, cfg.n_agents):
                gap = gaps[k]
                s_adj = s_adj - gap - 2 * half_len
                v = min(raw_speed[k], _safe_speed_cap(gap, prev, params))
                placements[f"a{k}"] = (s_adj, v, lane, None)
                prev = v
    elif cfg.scene == "dissolve":
        # a standing queue whose head drives off at t=0: start-up wave,
        # acceleration to cruise, equilibrium following.  Safe for every
        # archetype (agents only ever open gaps).
        n_adj = cfg.n_agents // 4 if len(chains) > 1 else 0
        n_main = cfg.n_agents - n_adj
        front_s = cfg.queue_position * _chain_length(graph, chains[ego_chain])
        queue_gaps = params.min_gap + 0.5 + 2.5 * u_gap
        placements["a0"] = (front_s, 0.0, ego_chain, None)
        s = front_s - queue_gaps[0] - 2 * half_len
        placements["ego"] = (s, 0.0, ego_chain, None)
        for k in range(1, n_main):
            s = s - queue_gaps[k] - 2 * half_len
            placements[f"a{k}"] = (s, 0.0, ego_chain, None)
        if n_adj > 0:
            adj_chain = (ego_chain + 1) % len(chains)
            s_adj = front_s if adj_cap is None else min(front_s, adj_cap)
            s_adj -= 10.0 * u_aux[0]
            for j in range(n_adj):
                k = n_main + j
                placements[f"a{k}"] = (s_adj, 0.0, adj_chain, None)
                s_adj = s_adj - queue_gaps[k] - 2 * half_len
    else:
        # A parked vehicle heads the queue; the ego sits right behind it and
        # the remaining agents trail the ego.  A minority forms a second
        # queue on a neighbor lane.
        n_adj = cfg.n_agents // 4 if len(chains) > 1 else 0
        n_main = cfg.n_agents - n_adj
        parked = cfg.scene == "queue"
        front_s = cfg.queue_position * _chain_length(graph, chains[ego_chain])
        front_speed = 0.0 if parked else raw_speed[1]
        lead_floor = 0.0 if parked else front_speed
        placements["a0"] = (front_s, front_speed, ego_chain,
                            front_s if parked else None)
        s = front_s - gaps[0] - 2 * half_len
        ego_speed = min(raw_speed[0],
                        _safe_speed_cap(gaps[0], lead_floor, params))
        placements["ego"] = (s, ego_speed, ego_chain, None)
        for k in range(1, n_main):
            gap = gaps[k]
            s = s - gap - 2 * half_len
            v = min(raw_speed[k + 1],
                    _safe_speed_cap(gap, lead_floor, params))
            placements[f"a{k}"] = (s, v, ego_chain, None)
        if n_adj > 0:
            adj_chain = (ego_chain + 1) % len(chains)
            s_adj = front_s if adj_cap is None else min(front_s, adj_cap)
            s_adj -= 10.0 * u_aux[0]
            placements[f"a{n_main}"] = (
                s_adj, 0.0 if parked else raw_speed[n_main + 1], adj_chain,
                s_adj if parked else None)
            for j in range(1, n_adj):
                k = n_main + j
                gap = gaps[k]
                s_adj = s_adj - gap - 2 * half_len
                v = min(raw_speed[k + 1],
                        _safe_speed_cap(gap, lead_floor, params))
                placements[f"a{k}"] = (s_adj, v, adj_chain, None)

    # reject placements that fall off the chain start
    for name, (s, v, lane, end) in placements.items():
        if s < 2.0:
            return None

    chain_routes = [tuple(c) for c in chains]
    paths = []
    metas = []
    starts: list[float] = []
    speeds: list[float] = []
    for name in names:
        s, v, lane, end = placements[name]
        end = q6(end) if end is not None else None
        routes = chain_routes[lane]
        pts, lims = path_from_route(graph, routes, end)
        paths.append((pts, lims))
        dims = EGO_DIMS if name == "ego" else AGENT_DIMS
        metas.append(AgentMeta(agent_id=name, length=dims[0], width=dims[1],
                               route=routes, route_end=end))
        starts.append(min(s, cumulative_lengths(pts)[-1]))
        speeds.append(v)

    pack = build_path_pack(paths)
    prog0 = np.array(starts)
    speed0 = np.array(speeds)
    half = np.array([0.5 * m.length for m in metas])

    out_xy, out_speed, out_prog, out_heading = kernels.reactive_rollout(
        pack.pts, pack.cum, pack.seglen, pack.lim, pack.npts,
        np.zeros((0, cfg.horizon, 2)), np.zeros((0, cfg.horizon)),
        prog0, speed0, half, params.as_array(), 1.0, cfg.lane_width,
        cfg.horizon, cfg.dt)

    if _any_footprint_overlap(out_xy, out_heading, metas):
        return None

    raw_frames = []
    for t in range(cfg.horizon):
        frame = []
        for i, m in enumerate(metas):
            frame.append({"id": m.agent_id,
                          "x": q6(out_xy[i, t, 0]),
                          "y": q6(out_xy[i, t, 1]),
                          "heading": q6(out_heading[i, t]),
                          "speed": q6(out_speed[i, t])})
        raw_frames.append(frame)

    scenario_id = f"{city_tag}-{cfg.scene}-{cfg.template}-{seed:05d}"
    return _assemble_log(scenario_id, city_tag, graph, cfg.dt, "ego",
                         tuple(metas), raw_frames)


def _chain_length(graph: LaneGraph, chain) -> float:
    return sum(graph.segment(s).length for s in chain)


def _any_footprint_overlap(xy, heading, metas) -> bool:
    """Axis-aligned footprint overlap among any agent pair, any frame."""
    M, T, _ = xy.shape
    hx = np.abs(np.cos(heading))
    hy = np.abs(np.sin(heading))
    half_l = np.array([0.5 * m.length for m in metas])[:, None]
    half_w = np.array([0.5 * m.width for m in metas])[:, None]
    ex = half_l * hx + half_w * hy
    ey = half_l * hy + half_w * hx
    for i in range(M):
        for j in range(i + 1, M):
            dx = np.abs(xy[i, :, 0] - xy[j, :, 0])
            dy = np.abs(xy[i, :, 1] - xy[j, :, 1])
            if np.any((dx <= ex[i] + ex[j]) & (dy <= ey[i] + ey[j])):
                return True
    return False


# ---------------------------------------------------------------------------
# min-gap statistics

GAP_HIST_RANGE = (0.0, 50.0)
GAP_HIST_WIDTH = 1.0


def min_gap_series(log: DrivingLog) -> np.ndarray:
    """Per-frame bumper-to-bumper gap between the ego and its lead agent.

    Frames with no lead within the search range are omitted.
    """
    from . import idm

    pack, index = log.paths()
    gaps = []
    for frame in log.frames:
        ego = next(s for s in frame if s.agent_id == log.ego_id)
        others = [s for s in frame if s.agent_id != log.ego_id]
        lead = idm.find_lead(ego, others, pack, index,
                             lane_width=DEFAULT_LANE_WIDTH)
        if lead.exists:
            gaps.append(lead.gap)
    return np.array(gaps)


def min_gap_stats(log: DrivingLog) -> np.ndarray:
    """Histogram of ego-lead gaps: 1 m buckets over [0, 50) -> (50,) counts."""
    gaps = min_gap_series(log)
    lo, hi = GAP_HIST_RANGE
    edges = np.arange(lo, hi + GAP_HIST_WIDTH, GAP_HIST_WIDTH)
    counts, _ = np.histogram(gaps, bins=edges)
    return counts
