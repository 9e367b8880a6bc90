"""Vectorized numpy implementations of the hot simulation kernels.

This is the fallback backend used when numba is unavailable or disabled via
the ``IDMPLAN_NUMBA`` environment flag.  Every function here has a scalar-loop
twin in :mod:`idmplan.kernels.jitted`; the two backends are kept
operation-for-operation identical so that simulated trajectories match
bit-for-bit regardless of which one is active.

Array conventions (float64 unless noted):

* paths are padded per-agent polylines: ``pts (M, L, 2)``, cumulative
  arclength ``cum (M, L)``, per-segment length ``seglen (M, L)``, per-segment
  speed limit ``lim (M, L)`` and point counts ``npts (M,) int64``.
* bodies are ordered scripted-first: indices ``0..S-1`` are scripted
  (pre-computed trajectories, e.g. a replayed ego), ``S..S+M-1`` are the
  simulated agents.
"""

from __future__ import annotations

import numpy as np

GAP_FLOOR = 0.01     # m, lower bound for bumper-to-bumper gaps fed to the controller
LEAD_RANGE = 100.0   # m, longitudinal lead-search range
HINT_RADIUS = 8      # segments scanned around a cached projection index


def _project_window(pts_i, cum_i, seglen_i, nseg, x, y, hint, radius):
    """Project points onto one polyline, scanning a window around ``hint``.

    ``x, y, hint`` are (G,) state across G parallel rollouts.  Returns
    ``(s, d2, k_best)``: arclength of the closest point, squared distance to
    it, and the winning segment index (the new hint).
    """
    width = 2 * radius + 1
    k0 = np.maximum(hint - radius, 0)
    k1 = np.minimum(hint + radius + 1, nseg)
    idx = k0[:, None] + np.arange(width, dtype=np.int64)[None, :]
    valid = idx < k1[:, None]
    idx = np.minimum(idx, nseg - 1)

    ax = pts_i[idx, 0]
    ay = pts_i[idx, 1]
    bx = pts_i[idx + 1, 0]
    by = pts_i[idx + 1, 1]
    dx = bx - ax
    dy = by - ay
    px = x[:, None] - ax
    py = y[:, None] - ay
    seg2 = dx * dx + dy * dy
    t = (px * dx + py * dy) / seg2
    t = np.minimum(np.maximum(t, 0.0), 1.0)
    ex = px - t * dx
    ey = py - t * dy
    d2 = ex * ex + ey * ey
    d2 = np.where(valid, d2, np.inf)

    col = np.argmin(d2, axis=1)
    rows = np.arange(idx.shape[0])
    k_best = idx[rows, col]
    t_best = t[rows, col]
    s = cum_i[k_best] + t_best * seglen_i[k_best]
    return s, d2[rows, col], k_best


def _walk_forward(cum_i, nseg, s, k):
    """Advance segment indices so that ``cum[k] <= s < cum[k+1]`` (monotone)."""
    while True:
        can = (k + 1 < nseg) & (cum_i[np.minimum(k + 1, nseg)] <= s)
        if not np.any(can):
            return k
        k = np.where(can, k + 1, k)


def _interp_on_path(pts_i, cum_i, seglen_i, k, s):
    t = (s - cum_i[k]) / seglen_i[k]
    ax = pts_i[k, 0]
    ay = pts_i[k, 1]
    dx = pts_i[k + 1, 0] - ax
    dy = pts_i[k + 1, 1] - ay
    x = ax + t * dx
    y = ay + t * dy
    heading = np.arctan2(dy, dx)
    return x, y, heading


def _idm_accel(v, v0, gap, dv, has_lead, th1, th2, th3, inv2rab, emerg):
    q = v / v0
    q2 = q * q
    q4 = q2 * q2
    base = 1.0 - q4
    t1 = v * th2
    t2 = v * dv
    inter = t1 + t2 * inv2rab
    inter = np.maximum(inter, 0.0)
    sstar = th1 + inter
    r = sstar / gap
    term = r * r
    term = np.where(has_lead, term, 0.0)
    a = th3 * (base - term)
    a = np.maximum(a, -emerg)
    a = np.minimum(a, th3)
    return a


def _batched_rollout(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                     prog0, speed0, half_len, thetas, v0_scale, lane_width,
                     horizon, dt, log_xy=None, log_present=None,
                     record=None):
    """Shared reactive-rollout engine, batched over G parameter vectors.

    When ``log_xy`` is given, accumulates the squared position error of every
    simulated agent against it and returns a (G,) distance vector.  When
    ``record`` is given (a dict of output arrays, G must be 1), fills the
    trace arrays instead.
    """
    S = scr_xy.shape[0]
    M = prog0.shape[0]
    B = S + M
    G = thetas.shape[0]
    half = 0.5 * lane_width
    hw2 = half * half

    th0 = thetas[:, 0]
    th1 = thetas[:, 1]
    th2 = thetas[:, 2]
    th3 = thetas[:, 3]
    th4 = thetas[:, 4]
    inv2rab = 0.5 / np.sqrt(th3 * th4)
    emerg = 2.0 * th4

    prog = np.repeat(prog0[None, :], G, axis=0)
    speed = np.repeat(speed0[None, :], G, axis=0)
    self_k = np.zeros((G, M), dtype=np.int64)
    pair_k = np.zeros((G, M, B), dtype=np.int64)
    first = True

    cur_x = np.empty((G, M))
    cur_y = np.empty((G, M))
    accel = np.empty((G, M))
    dist = np.zeros(G)

    for t in range(horizon):
        for i in range(M):
            nseg = npts[i] - 1
            self_k[:, i] = _walk_forward(cum[i], nseg, prog[:, i], self_k[:, i])
            x, y, heading = _interp_on_path(pts[i], cum[i], seglen[i],
                                            self_k[:, i], prog[:, i])
            cur_x[:, i] = x
            cur_y[:, i] = y
            if record is not None:
                record["xy"][i, t, 0] = x[0]
                record["xy"][i, t, 1] = y[0]
                record["heading"][i, t] = heading[0]
                record["speed"][i, t] = speed[0, i]
                record["prog"][i, t] = prog[0, i]
            if log_xy is not None and log_present[i, t]:
                ddx = cur_x[:, i] - log_xy[i, t, 0]
                ddy = cur_y[:, i] - log_xy[i, t, 1]
                dist += ddx * ddx + ddy * ddy

        if t == horizon - 1:
            break

        for i in range(M):
            nseg = npts[i] - 1
            radius = nseg if first else HINT_RADIUS
            body_i = S + i
            s_i = prog[:, i]
            best_ds = np.full(G, np.inf)
            best_v = np.zeros(G)
            best_hl = np.zeros(G)
            found = np.zeros(G, dtype=bool)
            for j in range(B):
                if j == body_i:
                    continue
                if j < S:
                    bx = np.full(G, scr_xy[j, t, 0])
                    by = np.full(G, scr_xy[j, t, 1])
                    bv = np.full(G, scr_speed[j, t])
                else:
                    bx = cur_x[:, j - S]
                    by = cur_y[:, j - S]
                    bv = speed[:, j - S]
                s_j, d2, pair_k[:, i, j] = _project_window(
                    pts[i], cum[i], seglen[i], nseg, bx, by,
                    pair_k[:, i, j], radius)
                ds = s_j - s_i
                ok = (d2 <= hw2) & (ds > 0.0) & (ds <= LEAD_RANGE)
                better = ok & (ds < best_ds)
                best_ds = np.where(better, ds, best_ds)
                best_v = np.where(better, bv, best_v)
                best_hl = np.where(better, half_len[j], best_hl)
                found = found | better

            gap = best_ds - half_len[body_i] - best_hl
            gap = np.maximum(gap, GAP_FLOOR)
            gap = np.where(found, gap, 1.0)  # unused when no lead
            dv = speed[:, i] - best_v
            lim_i = lim[i][self_k[:, i]]
            v0 = v0_scale * np.minimum(th0, lim_i)
            accel[:, i] = _idm_accel(speed[:, i], v0, gap, dv, found,
                                     th1, th2, th3, inv2rab, emerg)
        first = False

        for i in range(M):
            v1 = speed[:, i] + accel[:, i] * dt
            v1 = np.maximum(v1, 0.0)
            s1 = prog[:, i] + v1 * dt
            send = cum[i, npts[i] - 1]
            at_end = s1 >= send
            s1 = np.where(at_end, send, s1)
            v1 = np.where(at_end, 0.0, v1)
            speed[:, i] = v1
            prog[:, i] = s1

    return dist


def reactive_rollout(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                     prog0, speed0, half_len, theta, v0_scale, lane_width,
                     horizon, dt):
    """Roll out all simulated agents under one IDM parameter vector.

    Returns ``(xy (M,T,2), speed (M,T), prog (M,T), heading (M,T))``.
    """
    M = prog0.shape[0]
    record = {
        "xy": np.zeros((M, horizon, 2)),
        "speed": np.zeros((M, horizon)),
        "prog": np.zeros((M, horizon)),
        "heading": np.zeros((M, horizon)),
    }
    _batched_rollout(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                     prog0, speed0, half_len, theta[None, :], v0_scale,
                     lane_width, horizon, dt, record=record)
    return record["xy"], record["speed"], record["prog"], record["heading"]


def grid_distance(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                  prog0, speed0, half_len, thetas, lane_width,
                  horizon, dt, log_xy, log_present):
    """Squared trace distance against a log for every row of ``thetas``."""
    return _batched_rollout(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                            prog0, speed0, half_len, thetas, 1.0, lane_width,
                            horizon, dt, log_xy=log_xy, log_present=log_present)


def cv_rollout(pts, cum, seglen, npts, prog0, speed0, horizon, dt):
    """Constant-velocity rollout: every agent keeps its initial speed."""
    M = prog0.shape[0]
    out_xy = np.zeros((M, horizon, 2))
    out_speed = np.zeros((M, horizon))
    out_prog = np.zeros((M, horizon))
    out_heading = np.zeros((M, horizon))
    for i in range(M):
        nseg = npts[i] - 1
        send = cum[i, npts[i] - 1]
        s = prog0[i]
        v = speed0[i]
        k = np.zeros(1, dtype=np.int64)
        for t in range(horizon):
            k = _walk_forward(cum[i], nseg, np.array([s]), k)
            x, y, heading = _interp_on_path(pts[i], cum[i], seglen[i],
                                            k, np.array([s]))
            out_xy[i, t, 0] = x[0]
            out_xy[i, t, 1] = y[0]
            out_heading[i, t] = heading[0]
            out_speed[i, t] = v
            out_prog[i, t] = s
            s1 = s + v * dt
            if s1 >= send:
                s1 = send
                v = 0.0
            s = s1
    return out_xy, out_speed, out_prog, out_heading


def project_polyline(pts_i, cum_i, seglen_i, npts_i, x, y):
    """Full-scan projection of one point onto one polyline -> (s, d2)."""
    nseg = npts_i - 1
    s, d2, _ = _project_window(pts_i, cum_i, seglen_i, nseg,
                               np.array([x]), np.array([y]),
                               np.zeros(1, dtype=np.int64), int(nseg))
    return s[0], d2[0]


def polyline_progress(pts_i, cum_i, seglen_i, npts_i, xy):
    """Arclength of each (T,2) point projected onto one polyline."""
    nseg = npts_i - 1
    T = xy.shape[0]
    out = np.empty(T)
    hint = np.zeros(1, dtype=np.int64)
    radius = int(nseg)
    for t in range(T):
        s, _, k = _project_window(pts_i, cum_i, seglen_i, nseg,
                                  xy[t, 0:1], xy[t, 1:2], hint, radius)
        out[t] = s[0]
        hint = k
        radius = HINT_RADIUS
    return out


def _sat_terms(c1x, c1y, h1, hl1, hw1, c2x, c2y, h2, hl2, hw2):
    """Vectorized separating-axis test; returns a boolean 'overlap' array."""
    ux1 = np.cos(h1)
    uy1 = np.sin(h1)
    ux2 = np.cos(h2)
    uy2 = np.sin(h2)
    dx = c2x - c1x
    dy = c2y - c1y
    sep = np.zeros(np.broadcast(c1x, c2x).shape, dtype=bool)
    for ax, ay in ((ux1, uy1), (-uy1, ux1), (ux2, uy2), (-uy2, ux2)):
        dist = np.abs(dx * ax + dy * ay)
        e1 = hl1 * np.abs(ax * ux1 + ay * uy1) + hw1 * np.abs(ax * (-uy1) + ay * ux1)
        e2 = hl2 * np.abs(ax * ux2 + ay * uy2) + hw2 * np.abs(ax * (-uy2) + ay * ux2)
        sep = sep | (dist > e1 + e2)
    return ~sep


def collision_mask(ego_xy, ego_h, ego_hl, ego_hw, ag_xy, ag_h, ag_hl, ag_hw):
    """Per-frame flag: ego footprint overlaps any agent footprint."""
    T = ego_xy.shape[0]
    if ag_xy.shape[0] == 0:
        return np.zeros(T, dtype=np.uint8)
    overlap = _sat_terms(ego_xy[None, :, 0], ego_xy[None, :, 1], ego_h[None, :],
                         ego_hl, ego_hw,
                         ag_xy[:, :, 0], ag_xy[:, :, 1], ag_h,
                         ag_hl[:, None], ag_hw[:, None])
    return overlap.any(axis=0).astype(np.uint8)


def ttc_ok_mask(ego_xy, ego_h, ego_speed, ego_hl, ego_hw,
                ag_xy, ag_h, ag_speed, ag_hl, ag_hw, n_sub, sub_dt):
    """Per-frame flag: constant-velocity projection stays collision-free."""
    T = ego_xy.shape[0]
    ok = np.ones(T, dtype=np.uint8)
    if ag_xy.shape[0] == 0:
        return ok
    e_cx = np.cos(ego_h) * ego_speed
    e_cy = np.sin(ego_h) * ego_speed
    a_cx = np.cos(ag_h) * ag_speed
    a_cy = np.sin(ag_h) * ag_speed
    hit = np.zeros(T, dtype=bool)
    for k in range(1, n_sub + 1):
        tau = k * sub_dt
        overlap = _sat_terms(ego_xy[None, :, 0] + e_cx[None, :] * tau,
                             ego_xy[None, :, 1] + e_cy[None, :] * tau,
                             ego_h[None, :], ego_hl, ego_hw,
                             ag_xy[:, :, 0] + a_cx * tau,
                             ag_xy[:, :, 1] + a_cy * tau,
                             ag_h, ag_hl[:, None], ag_hw[:, None])
        hit = hit | overlap.any(axis=0)
    return (~hit).astype(np.uint8)


def drivable_ok_mask(xy, seg_ax, seg_ay, seg_bx, seg_by, max_d2):
    """Per-frame flag: point within sqrt(max_d2) of any lane segment."""
    dx = seg_bx - seg_ax
    dy = seg_by - seg_ay
    seg2 = dx * dx + dy * dy
    px = xy[:, 0][:, None] - seg_ax[None, :]
    py = xy[:, 1][:, None] - seg_ay[None, :]
    t = (px * dx[None, :] + py * dy[None, :]) / seg2[None, :]
    t = np.minimum(np.maximum(t, 0.0), 1.0)
    ex = px - t * dx[None, :]
    ey = py - t * dy[None, :]
    d2 = ex * ex + ey * ey
    return (d2.min(axis=1) <= max_d2).astype(np.uint8)
