"""Numba-jitted scalar-loop implementations of the hot simulation kernels.

Operation-for-operation mirror of :mod:`idmplan.kernels.pure`: the same
floating-point expression trees evaluated in the same order, so both backends
produce bit-identical rollouts.  See pure.py for the array conventions.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

GAP_FLOOR = 0.01
LEAD_RANGE = 100.0
HINT_RADIUS = 8

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def _project_window_s(pts_i, cum_i, seglen_i, nseg, x, y, hint, radius):
    k0 = hint - radius
    if k0 < 0:
        k0 = 0
    k1 = hint + radius + 1
    if k1 > nseg:
        k1 = nseg
    best_d2 = np.inf
    best_k = k0
    best_t = 0.0
    for k in range(k0, k1):
        ax = pts_i[k, 0]
        ay = pts_i[k, 1]
        dx = pts_i[k + 1, 0] - ax
        dy = pts_i[k + 1, 1] - ay
        px = x - ax
        py = y - ay
        seg2 = dx * dx + dy * dy
        t = (px * dx + py * dy) / seg2
        if t < 0.0:
            t = 0.0
        if t > 1.0:
            t = 1.0
        ex = px - t * dx
        ey = py - t * dy
        d2 = ex * ex + ey * ey
        if d2 < best_d2:
            best_d2 = d2
            best_k = k
            best_t = t
    s = cum_i[best_k] + best_t * seglen_i[best_k]
    return s, best_d2, best_k


@njit(**_JIT)
def _walk_forward_s(cum_i, nseg, s, k):
    while k + 1 < nseg and cum_i[k + 1] <= s:
        k += 1
    return k


@njit(**_JIT)
def _idm_accel_s(v, v0, gap, dv, has_lead, th1, th2, th3, inv2rab, emerg):
    q = v / v0
    q2 = q * q
    q4 = q2 * q2
    base = 1.0 - q4
    if has_lead:
        t1 = v * th2
        t2 = v * dv
        inter = t1 + t2 * inv2rab
        if inter < 0.0:
            inter = 0.0
        sstar = th1 + inter
        r = sstar / gap
        term = r * r
    else:
        term = 0.0
    a = th3 * (base - term)
    if a < -emerg:
        a = -emerg
    if a > th3:
        a = th3
    return a


@njit(**_JIT)
def _rollout_core(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                  prog0, speed0, half_len, theta, v0_scale, lane_width,
                  horizon, dt, out_xy, out_speed, out_prog, out_heading,
                  want_trace, log_xy, log_present, want_dist):
    S = scr_xy.shape[0]
    M = prog0.shape[0]
    B = S + M
    half = 0.5 * lane_width
    hw2 = half * half

    th0 = theta[0]
    th1 = theta[1]
    th2 = theta[2]
    th3 = theta[3]
    th4 = theta[4]
    inv2rab = 0.5 / np.sqrt(th3 * th4)
    emerg = 2.0 * th4

    prog = prog0.copy()
    speed = speed0.copy()
    self_k = np.zeros(M, dtype=np.int64)
    pair_k = np.zeros((M, B), dtype=np.int64)
    cur_x = np.empty(M)
    cur_y = np.empty(M)
    accel = np.empty(M)
    dist = 0.0
    first = True

    for t in range(horizon):
        for i in range(M):
            nseg = npts[i] - 1
            k = _walk_forward_s(cum[i], nseg, prog[i], self_k[i])
            self_k[i] = k
            tt = (prog[i] - cum[i, k]) / seglen[i, k]
            ax = pts[i, k, 0]
            ay = pts[i, k, 1]
            dx = pts[i, k + 1, 0] - ax
            dy = pts[i, k + 1, 1] - ay
            x = ax + tt * dx
            y = ay + tt * dy
            cur_x[i] = x
            cur_y[i] = y
            if want_trace:
                out_xy[i, t, 0] = x
                out_xy[i, t, 1] = y
                out_heading[i, t] = math.atan2(dy, dx)
                out_speed[i, t] = speed[i]
                out_prog[i, t] = prog[i]
            if want_dist and log_present[i, t]:
                ddx = x - log_xy[i, t, 0]
                ddy = y - log_xy[i, t, 1]
                dist += ddx * ddx + ddy * ddy

        if t == horizon - 1:
            break

        for i in range(M):
            nseg = npts[i] - 1
            body_i = S + i
            s_i = prog[i]
            best_ds = np.inf
            best_v = 0.0
            best_hl = 0.0
            found = False
            radius = nseg if first else HINT_RADIUS
            for j in range(B):
                if j == body_i:
                    continue
                if j < S:
                    bx = scr_xy[j, t, 0]
                    by = scr_xy[j, t, 1]
                    bv = scr_speed[j, t]
                else:
                    bx = cur_x[j - S]
                    by = cur_y[j - S]
                    bv = speed[j - S]
                s_j, d2, kbest = _project_window_s(pts[i], cum[i], seglen[i],
                                                   nseg, bx, by,
                                                   pair_k[i, j], radius)
                pair_k[i, j] = kbest
                ds = s_j - s_i
                if d2 <= hw2 and ds > 0.0 and ds <= LEAD_RANGE and ds < best_ds:
                    best_ds = ds
                    best_v = bv
                    best_hl = half_len[j]
                    found = True

            if found:
                gap = best_ds - half_len[body_i] - best_hl
                if gap < GAP_FLOOR:
                    gap = GAP_FLOOR
            else:
                gap = 1.0
            dv = speed[i] - best_v
            lim_i = lim[i, self_k[i]]
            v0m = th0 if th0 < lim_i else lim_i
            v0 = v0_scale * v0m
            accel[i] = _idm_accel_s(speed[i], v0, gap, dv, found,
                                    th1, th2, th3, inv2rab, emerg)
        first = False

        for i in range(M):
            v1 = speed[i] + accel[i] * dt
            if v1 < 0.0:
                v1 = 0.0
            s1 = prog[i] + v1 * dt
            send = cum[i, npts[i] - 1]
            if s1 >= send:
                s1 = send
                v1 = 0.0
            speed[i] = v1
            prog[i] = s1

    return dist


@njit(**_JIT)
def _reactive_rollout_jit(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                          prog0, speed0, half_len, theta, v0_scale,
                          lane_width, horizon, dt):
    M = prog0.shape[0]
    out_xy = np.zeros((M, horizon, 2))
    out_speed = np.zeros((M, horizon))
    out_prog = np.zeros((M, horizon))
    out_heading = np.zeros((M, horizon))
    dummy_log = np.zeros((M, 1, 2))
    dummy_present = np.zeros((M, 1), dtype=np.uint8)
    _rollout_core(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                  prog0, speed0, half_len, theta, v0_scale, lane_width,
                  horizon, dt, out_xy, out_speed, out_prog, out_heading,
                  True, dummy_log, dummy_present, False)
    return out_xy, out_speed, out_prog, out_heading


def reactive_rollout(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                     prog0, speed0, half_len, theta, v0_scale, lane_width,
                     horizon, dt):
    return _reactive_rollout_jit(pts, cum, seglen, lim, npts, scr_xy,
                                 scr_speed, prog0, speed0, half_len, theta,
                                 v0_scale, lane_width, horizon, dt)


@njit(**_JIT)
def _grid_distance_jit(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                       prog0, speed0, half_len, thetas, lane_width,
                       horizon, dt, log_xy, log_present):
    G = thetas.shape[0]
    M = prog0.shape[0]
    out = np.empty(G)
    dummy = np.zeros((M, 1))
    dummy3 = np.zeros((M, 1, 2))
    for g in range(G):
        out[g] = _rollout_core(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                               prog0, speed0, half_len, thetas[g], 1.0,
                               lane_width, horizon, dt, dummy3, dummy,
                               dummy, dummy, False, log_xy, log_present, True)
    return out


def grid_distance(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                  prog0, speed0, half_len, thetas, lane_width,
                  horizon, dt, log_xy, log_present):
    return _grid_distance_jit(pts, cum, seglen, lim, npts, scr_xy, scr_speed,
                              prog0, speed0, half_len, thetas, lane_width,
                              horizon, dt, log_xy, log_present)


@njit(**_JIT)
def _cv_rollout_jit(pts, cum, seglen, npts, prog0, speed0, horizon, dt):
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
        k = 0
        for t in range(horizon):
            k = _walk_forward_s(cum[i], nseg, s, k)
            tt = (s - cum[i, k]) / seglen[i, k]
            ax = pts[i, k, 0]
            ay = pts[i, k, 1]
            dx = pts[i, k + 1, 0] - ax
            dy = pts[i, k + 1, 1] - ay
            out_xy[i, t, 0] = ax + tt * dx
            out_xy[i, t, 1] = ay + tt * dy
            out_heading[i, t] = math.atan2(dy, dx)
            out_speed[i, t] = v
            out_prog[i, t] = s
            s1 = s + v * dt
            if s1 >= send:
                s1 = send
                v = 0.0
            s = s1
    return out_xy, out_speed, out_prog, out_heading


def cv_rollout(pts, cum, seglen, npts, prog0, speed0, horizon, dt):
    return _cv_rollout_jit(pts, cum, seglen, npts, prog0, speed0, horizon, dt)


@njit(**_JIT)
def _project_polyline_jit(pts_i, cum_i, seglen_i, npts_i, x, y):
    nseg = npts_i - 1
    return _project_window_s(pts_i, cum_i, seglen_i, nseg, x, y, 0, nseg)


def project_polyline(pts_i, cum_i, seglen_i, npts_i, x, y):
    s, d2, _ = _project_polyline_jit(pts_i, cum_i, seglen_i, npts_i, x, y)
    return s, d2


@njit(**_JIT)
def _polyline_progress_jit(pts_i, cum_i, seglen_i, npts_i, xy):
    nseg = npts_i - 1
    T = xy.shape[0]
    out = np.empty(T)
    hint = 0
    radius = nseg
    for t in range(T):
        s, _, k = _project_window_s(pts_i, cum_i, seglen_i, nseg,
                                    xy[t, 0], xy[t, 1], hint, radius)
        out[t] = s
        hint = k
        radius = HINT_RADIUS
    return out


def polyline_progress(pts_i, cum_i, seglen_i, npts_i, xy):
    return _polyline_progress_jit(pts_i, cum_i, seglen_i, npts_i, xy)


@njit(**_JIT)
def _rect_overlap_s(c1x, c1y, h1, hl1, hw1, c2x, c2y, h2, hl2, hw2):
    ux1 = math.cos(h1)
    uy1 = math.sin(h1)
    ux2 = math.cos(h2)
    uy2 = math.sin(h2)
    dx = c2x - c1x
    dy = c2y - c1y
    for n in range(4):
        if n == 0:
            ax, ay = ux1, uy1
        elif n == 1:
            ax, ay = -uy1, ux1
        elif n == 2:
            ax, ay = ux2, uy2
        else:
            ax, ay = -uy2, ux2
        dist = abs(dx * ax + dy * ay)
        e1 = hl1 * abs(ax * ux1 + ay * uy1) + hw1 * abs(ax * (-uy1) + ay * ux1)
        e2 = hl2 * abs(ax * ux2 + ay * uy2) + hw2 * abs(ax * (-uy2) + ay * ux2)
        if dist > e1 + e2:
            return False
    return True


@njit(**_JIT)
def _collision_mask_jit(ego_xy, ego_h, ego_hl, ego_hw, ag_xy, ag_h, ag_hl, ag_hw):
    T = ego_xy.shape[0]
    M = ag_xy.shape[0]
    out = np.zeros(T, dtype=np.uint8)
    for t in range(T):
        for m in range(M):
            if _rect_overlap_s(ego_xy[t, 0], ego_xy[t, 1], ego_h[t],
                               ego_hl, ego_hw,
                               ag_xy[m, t, 0], ag_xy[m, t, 1], ag_h[m, t],
                               ag_hl[m], ag_hw[m]):
                out[t] = 1
                break
    return out


def collision_mask(ego_xy, ego_h, ego_hl, ego_hw, ag_xy, ag_h, ag_hl, ag_hw):
    return _collision_mask_jit(ego_xy, ego_h, ego_hl, ego_hw,
                               ag_xy, ag_h, ag_hl, ag_hw)


@njit(**_JIT)
def _ttc_ok_mask_jit(ego_xy, ego_h, ego_speed, ego_hl, ego_hw,
                     ag_xy, ag_h, ag_speed, ag_hl, ag_hw, n_sub, sub_dt):
    T = ego_xy.shape[0]
    M = ag_xy.shape[0]
    out = np.ones(T, dtype=np.uint8)
    for t in range(T):
        ecx = math.cos(ego_h[t]) * ego_speed[t]
        ecy = math.sin(ego_h[t]) * ego_speed[t]
        hit = False
        for k in range(1, n_sub + 1):
            tau = k * sub_dt
            ex = ego_xy[t, 0] + ecx * tau
            ey = ego_xy[t, 1] + ecy * tau
            for m in range(M):
                acx = math.cos(ag_h[m, t]) * ag_speed[m, t]
                acy = math.sin(ag_h[m, t]) * ag_speed[m, t]
                if _rect_overlap_s(ex, ey, ego_h[t], ego_hl, ego_hw,
                                   ag_xy[m, t, 0] + acx * tau,
                                   ag_xy[m, t, 1] + acy * tau,
                                   ag_h[m, t], ag_hl[m], ag_hw[m]):
                    hit = True
                    break
            if hit:
                break
        if hit:
            out[t] = 0
    return out


def ttc_ok_mask(ego_xy, ego_h, ego_speed, ego_hl, ego_hw,
                ag_xy, ag_h, ag_speed, ag_hl, ag_hw, n_sub, sub_dt):
    return _ttc_ok_mask_jit(ego_xy, ego_h, ego_speed, ego_hl, ego_hw,
                            ag_xy, ag_h, ag_speed, ag_hl, ag_hw,
                            n_sub, sub_dt)


@njit(**_JIT)
def _drivable_ok_mask_jit(xy, seg_ax, seg_ay, seg_bx, seg_by, max_d2):
    T = xy.shape[0]
    Q = seg_ax.shape[0]
    out = np.zeros(T, dtype=np.uint8)
    for t in range(T):
        x = xy[t, 0]
        y = xy[t, 1]
        for q in range(Q):
            dx = seg_bx[q] - seg_ax[q]
            dy = seg_by[q] - seg_ay[q]
            seg2 = dx * dx + dy * dy
            px = x - seg_ax[q]
            py = y - seg_ay[q]
            tt = (px * dx + py * dy) / seg2
            if tt < 0.0:
                tt = 0.0
            if tt > 1.0:
                tt = 1.0
            ex = px - tt * dx
            ey = py - tt * dy
            d2 = ex * ex + ey * ey
            if d2 <= max_d2:
                out[t] = 1
                break
    return out


def drivable_ok_mask(xy, seg_ax, seg_ay, seg_bx, seg_by, max_d2):
    return _drivable_ok_mask_jit(xy, seg_ax, seg_ay, seg_bx, seg_by, max_d2)
