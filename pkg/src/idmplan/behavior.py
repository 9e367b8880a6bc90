"""Behavior classification from two seconds of observed scene history.

A fixed 22-dimensional feature vector summarizes nearby-agent kinematics and
local map context; a small two-layer perceptron trained with softmax
cross-entropy predicts which behavior cluster the scene belongs to.  The
predicted cluster's centroid parameterizes the planner's reactive world
model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import idm
from .calibrate import ClusterModel
from .geometry import polyline_curvature
from .scenario import (BehaviorParams, DEFAULT_LANE_WIDTH, DrivingLog, _f)

CONTEXT_RADIUS = 100.0      # m around the ego
WINDOW_FRAMES = 20          # two seconds at 10 Hz
GAP_SENTINEL = 100.0        # m, reported when an agent has no lead
HEADWAY_CAP = 10.0          # s
N_FEATURES = 22

FEATURE_NAMES = tuple(
    f"{stat}_{agg}" for stat in ("mean_speed", "max_abs_accel", "mean_gap",
                                 "min_gap", "mean_headway", "approach_var")
    for agg in ("mean", "min", "max")
) + ("lane_count", "mean_speed_limit", "mean_curvature", "agent_count")


def features_from_frames(frames, graph, ego_id: str, pack, index,
                         dt: float) -> np.ndarray:
    """22-vector of scene statistics over an observed frame window.

    Per-agent statistics are computed for every non-ego agent within
    CONTEXT_RADIUS of the ego at the window's last frame, then aggregated by
    (mean, min, max); map scalars describe the lane graph within the same
    radius.  Needs at least two frames for finite differences.
    """
    if len(frames) < 2:
        raise ValueError("feature window needs at least 2 frames")
    last = frames[-1]
    ego_last = next(s for s in last if s.agent_id == ego_id)

    # the ego's own history counts as one observed agent
    near_ids = [s.agent_id for s in last
                if np.hypot(s.x - ego_last.x,
                            s.y - ego_last.y) <= CONTEXT_RADIUS]

    per_agent = []
    for aid in near_ids:
        speeds = []
        gaps = []
        headways = []
        rates = []
        for f in frames:
            me = next(s for s in f if s.agent_id == aid)
            others = [s for s in f if s.agent_id != aid]
            speeds.append(me.speed)
            lead = idm.find_lead(me, others, pack, index,
                                 lane_width=DEFAULT_LANE_WIDTH)
            if lead.exists:
                gaps.append(lead.gap)
                headways.append(min(lead.gap / max(me.speed, 1e-9),
                                    HEADWAY_CAP))
                rates.append(lead.approach_rate)
            else:
                gaps.append(GAP_SENTINEL)
                headways.append(HEADWAY_CAP)
                rates.append(0.0)
        speeds = np.array(speeds)
        if len(speeds) >= 3:
            accel = (speeds[2:] - speeds[:-2]) / (2.0 * dt)
            max_abs_accel = float(np.max(np.abs(accel)))
        else:
            max_abs_accel = 0.0
        per_agent.append([float(np.mean(speeds)), max_abs_accel,
                          float(np.mean(gaps)), float(np.min(gaps)),
                          float(np.mean(headways)), float(np.var(rates))])

    if per_agent:
        stats = np.array(per_agent)
        agg = np.stack([stats.mean(axis=0), stats.min(axis=0),
                        stats.max(axis=0)], axis=1).reshape(-1)
    else:
        sentinel = np.array([0.0, 0.0, GAP_SENTINEL, GAP_SENTINEL,
                             HEADWAY_CAP, 0.0])
        agg = np.repeat(sentinel, 3)

    near_segs = []
    for node in graph.nodes:
        d = np.hypot(node.centerline[:, 0] - ego_last.x,
                     node.centerline[:, 1] - ego_last.y)
        if np.min(d) <= CONTEXT_RADIUS:
            near_segs.append(node)
    if near_segs:
        lane_count = float(len(near_segs))
        mean_limit = float(np.mean([n.speed_limit for n in near_segs]))
        mean_curv = float(np.mean([polyline_curvature(n.centerline)
                                   for n in near_segs]))
    else:
        lane_count = mean_limit = mean_curv = 0.0

    out = np.concatenate([agg, [lane_count, mean_limit, mean_curv,
                                float(len(near_ids))]])
    assert out.shape == (N_FEATURES,)
    return out


def extract_features(log: DrivingLog, start: int = 0,
                     window: int = WINDOW_FRAMES,
                     paths=None) -> np.ndarray:
    """Features for a window of a driving log (see features_from_frames)."""
    pack, index = paths if paths is not None else log.paths()
    return features_from_frames(log.frames[start:start + window],
                                log.lane_graph, log.ego_id, pack, index,
                                log.dt)


def build_dataset(corpus, label_of, stride: int = 30):
    """(features, labels, log_ids) over sliding windows of each log.

    ``label_of`` maps a scenario_id to its behavior-cluster label; logs
    without a label are skipped.
    """
    feats = []
    labels = []
    ids = []
    for log in corpus:
        if log.scenario_id not in label_of:
            continue
        paths = log.paths()
        for start in window_starts(log.horizon, stride=stride):
            feats.append(extract_features(log, start=start, paths=paths))
            labels.append(label_of[log.scenario_id])
            ids.append(log.scenario_id)
    return np.array(feats), np.array(labels, dtype=np.int64), ids


def window_starts(horizon: int, window: int = WINDOW_FRAMES,
                  stride: int = 30) -> list[int]:
    """Training window offsets covering a log's full horizon."""
    return list(range(0, max(horizon - window + 1, 1), stride))


# ---------------------------------------------------------------------------
# the classifier


@dataclass(frozen=True)
class BehaviorClassifier:
    """Two-layer perceptron: N_FEATURES -> hidden ReLU -> K logits."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    k: int
    metadata: dict

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]


def _forward(w1, b1, w2, b2, x):
    z1 = x @ w1 + b1
    h = np.maximum(z1, 0.0)
    logits = h @ w2 + b2
    return z1, h, logits


def _softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(w1, b1, w2, b2, x, y, k):
    """Mean cross-entropy and its gradients for one batch."""
    n = x.shape[0]
    z1, h, logits = _forward(w1, b1, w2, b2, x)
    p = _softmax(logits)
    eps = 1e-12
    loss = float(-np.mean(np.log(p[np.arange(n), y] + eps)))
    dlogits = p.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dw2 = h.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dh = dlogits @ w2.T
    dh[z1 <= 0.0] = 0.0
    dw1 = x.T @ dh
    db1 = dh.sum(axis=0)
    return loss, (dw1, db1, dw2, db2)


def train_classifier(features: np.ndarray, labels: np.ndarray, k: int,
                     seed: int, epochs: int = 10,
                     learning_rate: float = 5e-5, batch_size: int = 32,
                     hidden: int = 64) -> BehaviorClassifier:
    """Mini-batch Adam training with a K-way softmax loss.

    Weights start uniform in +-sqrt(6/(fan_in+fan_out)); inputs are
    standardized with constants stored on the model.  Deterministic in
    (dataset order, seed).
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("empty or malformed dataset")
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"label out of range [0, {k})")

    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    sigma = np.where(sigma < 1e-12, 1.0, sigma)
    xs = (x - mu) / sigma

    rng = np.random.default_rng(seed)
    d = x.shape[1]
    lim1 = np.sqrt(6.0 / (d + hidden))
    lim2 = np.sqrt(6.0 / (hidden + k))
    w1 = rng.uniform(-lim1, lim1, size=(d, hidden))
    b1 = np.zeros(hidden)
    w2 = rng.uniform(-lim2, lim2, size=(hidden, k))
    b2 = np.zeros(k)

    params = [w1, b1, w2, b2]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    epoch_losses = []
    n = len(xs)
    for _ in range(epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for b0 in range(0, n, batch_size):
            idx = perm[b0:b0 + batch_size]
            loss, grads = loss_and_grads(params[0], params[1], params[2],
                                         params[3], xs[idx], y[idx], k)
            batch_losses.append(loss)
            step += 1
            for j, g in enumerate(grads):
                m[j] = beta1 * m[j] + (1 - beta1) * g
                v[j] = beta2 * v[j] + (1 - beta2) * (g * g)
                mhat = m[j] / (1 - beta1 ** step)
                vhat = v[j] / (1 - beta2 ** step)
                params[j] = params[j] - learning_rate * mhat / (np.sqrt(vhat)
                                                                + eps)
        epoch_losses.append(float(np.mean(batch_losses)))

    return BehaviorClassifier(
        w1=params[0], b1=params[1], w2=params[2], b2=params[3],
        mu=mu, sigma=sigma, k=k,
        metadata={"epochs": epochs, "learning_rate": learning_rate,
                  "batch_size": batch_size, "seed": seed, "hidden": hidden,
                  "loss_history": tuple(epoch_losses)})


def predict_proba(clf: BehaviorClassifier, features: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(features, dtype=float))
    xs = (x - clf.mu) / clf.sigma
    _, _, logits = _forward(clf.w1, clf.b1, clf.w2, clf.b2, xs)
    return _softmax(logits)


def predict_label(clf: BehaviorClassifier, features: np.ndarray) -> int:
    return int(np.argmax(predict_proba(clf, features)[0]))


def predict_behavior(clf: BehaviorClassifier, features: np.ndarray,
                     clusters: ClusterModel) -> BehaviorParams:
    """Centroid of the most probable behavior cluster."""
    if clf.k != clusters.k:
        raise ValueError(f"classifier K={clf.k} does not match "
                         f"cluster model K={clusters.k}")
    return clusters.centroids[predict_label(clf, features)]


def accuracy(clf: BehaviorClassifier, features: np.ndarray,
             labels: np.ndarray) -> float:
    pred = np.argmax(predict_proba(clf, features), axis=1)
    return float(np.mean(pred == np.asarray(labels)))


def save_classifier(clf: BehaviorClassifier, path) -> None:
    def arr(a):
        return "[" + ",".join(_f(v) for v in np.asarray(a).reshape(-1)) + "]"

    meta = dict(clf.metadata)
    meta["loss_history"] = [round(float(v), 6)
                            for v in meta.get("loss_history", ())]
    obj = ('{"k":%d,"hidden":%d,"n_features":%d,"mu":%s,"sigma":%s,'
           '"w1":%s,"b1":%s,"w2":%s,"b2":%s,"metadata":%s}'
           % (clf.k, clf.hidden, clf.w1.shape[0], arr(clf.mu),
              arr(clf.sigma), arr(clf.w1), arr(clf.b1), arr(clf.w2),
              arr(clf.b2), json.dumps(meta, sort_keys=True)))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(obj + "\n")


def load_classifier(path) -> BehaviorClassifier:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.loads(fh.read())
    d = int(obj["n_features"])
    hidden = int(obj["hidden"])
    k = int(obj["k"])
    return BehaviorClassifier(
        w1=np.array(obj["w1"]).reshape(d, hidden),
        b1=np.array(obj["b1"]),
        w2=np.array(obj["w2"]).reshape(hidden, k),
        b2=np.array(obj["b2"]),
        mu=np.array(obj["mu"]), sigma=np.array(obj["sigma"]),
        k=k, metadata=obj.get("metadata", {}))
