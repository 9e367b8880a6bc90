"""Behavior-parameter fitting by exhaustive grid search, plus K-means
clustering of per-log fits into behavior archetypes.

The fit re-simulates a log's non-ego agents (ego replayed from the log) at
every grid point and keeps the parameter vector minimizing the summed squared
position error.  The target velocity is fixed at 10 m/s: it is not a
distinguishing quantity between driving styles here, the lane speed limit
caps it anyway.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .scenario import (BehaviorParams, DEFAULT_LANE_WIDTH, DrivingLog, q6, _f)
from .worldmodel import calibration_inputs


@dataclass(frozen=True)
class ParameterGrid:
    """Candidate values per searched dimension; target velocity is fixed."""

    theta0: float = 10.0
    min_gap: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
    headway_time: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0)
    max_acceleration: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5)
    max_deceleration: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5,
                                           4.0)

    def __post_init__(self):
        for name in ("min_gap", "headway_time", "max_acceleration",
                     "max_deceleration"):
            vals = getattr(self, name)
            if any(v <= 0 for v in vals):
                raise ValueError(f"{name} candidates must be positive")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} candidates must be strictly increasing")

    @property
    def size(self) -> int:
        return (len(self.min_gap) * len(self.headway_time)
                * len(self.max_acceleration) * len(self.max_deceleration))

    def points(self) -> np.ndarray:
        """All grid points as a (G,5) array in lexicographic candidate order."""
        out = np.empty((self.size, 5))
        g = 0
        for s0 in self.min_gap:
            for th in self.headway_time:
                for am in self.max_acceleration:
                    for bd in self.max_deceleration:
                        out[g] = (self.theta0, s0, th, am, bd)
                        g += 1
        return out


DEFAULT_GRID = ParameterGrid()


def grid_objective(log: DrivingLog, grid: ParameterGrid,
                   lane_width: float = DEFAULT_LANE_WIDTH) -> np.ndarray:
    """Trace distance of one log at every grid point -> (G,) array."""
    inp = calibration_inputs(log)
    return kernels.grid_distance(
        inp["pts"], inp["cum"], inp["seglen"], inp["lim"], inp["npts"],
        inp["scr_xy"], inp["scr_speed"], inp["prog0"], inp["speed0"],
        inp["half"], grid.points(), lane_width, inp["horizon"], inp["dt"],
        inp["log_xy"], inp["present"])


def fit_parameters(logs: Sequence[DrivingLog],
                   grid: ParameterGrid = DEFAULT_GRID,
                   lane_width: float = DEFAULT_LANE_WIDTH
                   ) -> tuple[BehaviorParams, float]:
    """Exhaustive grid search minimizing the summed trace distance.

    Ties resolve to the lexicographically first grid point.
    """
    if len(logs) == 0:
        raise ValueError("empty log list")
    total = np.zeros(grid.size)
    for log in logs:
        total += grid_objective(log, grid, lane_width)
    best = int(np.argmin(total))
    return BehaviorParams.from_array(grid.points()[best]), float(total[best])


@dataclass(frozen=True)
class LogFit:
    log_id: str
    city_tag: str
    params: BehaviorParams
    objective: float


def fit_per_log(corpus: Sequence[DrivingLog],
                grid: ParameterGrid = DEFAULT_GRID,
                jobs: int | None = None,
                lane_width: float = DEFAULT_LANE_WIDTH) -> list[LogFit]:
    """Independent :func:`fit_parameters` per log; parallel across logs."""

    def one(log: DrivingLog) -> LogFit:
        try:
            params, obj = fit_parameters([log], grid, lane_width)
        except Exception as e:
            raise RuntimeError(f"fit failed for log {log.scenario_id}") from e
        return LogFit(log_id=log.scenario_id, city_tag=log.city_tag,
                      params=params, objective=obj)

    if jobs is None or jobs <= 1 or len(corpus) <= 1:
        return [one(log) for log in corpus]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, corpus))


def save_fits(fits: Sequence[LogFit], path) -> None:
    lines = []
    for f in fits:
        theta = ",".join(_f(v) for v in f.params.as_array())
        lines.append('{"log_id":%s,"city_tag":%s,"theta":[%s],"objective":%s}'
                     % (json.dumps(f.log_id), json.dumps(f.city_tag), theta,
                        _f(f.objective)))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def load_fits(path) -> list[LogFit]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh.read().splitlines():
            obj = json.loads(line)
            out.append(LogFit(log_id=obj["log_id"], city_tag=obj["city_tag"],
                              params=BehaviorParams.from_array(obj["theta"]),
                              objective=float(obj["objective"])))
    return out


# ---------------------------------------------------------------------------
# K-means over fitted parameter vectors


@dataclass(frozen=True)
class ClusterModel:
    """K-means centroids over standardized parameter vectors."""

    k: int
    centroids: tuple[BehaviorParams, ...]
    mean: np.ndarray                 # (5,) standardization offsets
    std: np.ndarray                  # (5,) standardization scales
    assignments: tuple[int, ...]     # one cluster per training fit
    inertia_history: tuple[float, ...] = field(default=())

    def standardized_centroids(self) -> np.ndarray:
        c = np.array([p.as_array() for p in self.centroids])
        return (c - self.mean) / self.std


def _standardize(X: np.ndarray):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return (X - mean) / std, mean, std


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator):
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = X[first]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = X[idx]
        d2 = np.minimum(d2, ((X - centroids[j]) ** 2).sum(axis=1))
    return centroids


def cluster_behaviors(fits: Sequence[BehaviorParams], k: int,
                      seed: int, max_iter: int = 100,
                      tol: float = 1e-6) -> ClusterModel:
    """Seeded K-means (k-means++ init) over standardized parameter vectors.

    Inputs are canonically pre-sorted so the result does not depend on their
    order; assignments are reported in the original order.  Lloyd iterations
    stop when no centroid moves more than ``tol``.
    """
    if len(fits) < k:
        raise ValueError(f"need at least k={k} fits, got {len(fits)}")
    raw = np.array([p.as_array() for p in fits])
    order = np.lexsort(raw.T[::-1])   # canonical order, original indices
    X, mean, std = _standardize(raw)
    Xs = X[order]
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(Xs, k, rng)

    inertia_history = []
    labels = np.zeros(len(Xs), dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((Xs[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        inertia_history.append(float(d2[np.arange(len(Xs)), labels].sum()))
        new_centroids = centroids.copy()
        for j in range(k):
            members = Xs[labels == j]
            if len(members) > 0:
                new_centroids[j] = members.mean(axis=0)
            else:
                # re-seat an empty cluster on the worst-explained point
                far = int(np.argmax(d2[np.arange(len(Xs)), labels]))
                new_centroids[j] = Xs[far]
        move = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if move <= tol:
            break
    d2 = ((Xs[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    inertia_history.append(float(d2[np.arange(len(Xs)), labels].sum()))

    # map assignments back to the caller's input order
    assignments = np.empty(len(fits), dtype=np.int64)
    assignments[order] = labels
    de_std = centroids * std + mean
    return ClusterModel(
        k=k,
        centroids=tuple(BehaviorParams.from_array(c) for c in de_std),
        mean=mean, std=std,
        assignments=tuple(int(a) for a in assignments),
        inertia_history=tuple(inertia_history))


def assign_cluster(model: ClusterModel, params: BehaviorParams) -> int:
    """Nearest centroid in standardized space; ties go to the lower index."""
    x = (params.as_array() - model.mean) / model.std
    d2 = ((model.standardized_centroids() - x) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def save_clusters(model: ClusterModel, path) -> None:
    cents = ",".join("[" + ",".join(_f(v) for v in c.as_array()) + "]"
                     for c in model.centroids)
    obj = ('{"k":%d,"mean":[%s],"std":[%s],"centroids":[%s],'
           '"assignments":[%s]}'
           % (model.k,
              ",".join(_f(v) for v in model.mean),
              ",".join(_f(v) for v in model.std),
              cents,
              ",".join(str(a) for a in model.assignments)))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(obj + "\n")


def load_clusters(path) -> ClusterModel:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.loads(fh.read())
    return ClusterModel(
        k=int(obj["k"]),
        centroids=tuple(BehaviorParams.from_array(c)
                        for c in obj["centroids"]),
        mean=np.array(obj["mean"]), std=np.array(obj["std"]),
        assignments=tuple(int(a) for a in obj["assignments"]))
