"""Polyline utilities shared by the scenario generator and the planner.

These run once per scenario or per plan step (not per simulation frame), so
they are plain numpy with no jitted twin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


def cumulative_lengths(pts: np.ndarray) -> np.ndarray:
    """Cumulative arclength along a (N,2) polyline, starting at 0."""
    d = np.sqrt(((pts[1:] - pts[:-1]) ** 2).sum(axis=1))
    return np.concatenate([[0.0], np.cumsum(d)])


def dedup_points(pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Drop consecutive points closer than ``tol``."""
    keep = [0]
    for k in range(1, len(pts)):
        if np.hypot(*(pts[k] - pts[keep[-1]])) > tol:
            keep.append(k)
    return pts[keep]


def resample_polyline(pts: np.ndarray, spacing: float) -> np.ndarray:
    """Resample a polyline at fixed arclength spacing, keeping the endpoint."""
    cum = cumulative_lengths(pts)
    total = cum[-1]
    n = max(int(np.floor(total / spacing)), 1)
    marks = np.arange(n + 1) * spacing
    if total - marks[-1] > 1e-9:
        marks = np.concatenate([marks, [total]])
    else:
        marks[-1] = total
    seg = np.clip(np.searchsorted(cum, marks, side="right") - 1, 0, len(pts) - 2)
    seglen = cum[seg + 1] - cum[seg]
    t = (marks - cum[seg]) / seglen
    return pts[seg] + t[:, None] * (pts[seg + 1] - pts[seg])


def offset_polyline(pts: np.ndarray, offset: float) -> np.ndarray:
    """Shift a polyline laterally by ``offset`` meters (left positive)."""
    d = pts[1:] - pts[:-1]
    seg_n = np.stack([-d[:, 1], d[:, 0]], axis=1)
    seg_n /= np.linalg.norm(seg_n, axis=1, keepdims=True)
    normals = np.empty_like(pts)
    normals[0] = seg_n[0]
    normals[-1] = seg_n[-1]
    if len(pts) > 2:
        mid = seg_n[:-1] + seg_n[1:]
        norms = np.linalg.norm(mid, axis=1, keepdims=True)
        norms[norms < 1e-12] = 1.0
        normals[1:-1] = mid / norms
    return pts + offset * normals


def polyline_curvature(pts: np.ndarray) -> float:
    """Mean absolute discrete curvature (heading change per arclength)."""
    if len(pts) < 3:
        return 0.0
    d = pts[1:] - pts[:-1]
    headings = np.arctan2(d[:, 1], d[:, 0])
    dh = np.diff(headings)
    dh = np.arctan2(np.sin(dh), np.cos(dh))
    ds = 0.5 * (np.sqrt((d[:-1] ** 2).sum(axis=1)) + np.sqrt((d[1:] ** 2).sum(axis=1)))
    ds[ds < 1e-12] = 1e-12
    return float(np.mean(np.abs(dh / ds)))


@dataclass(frozen=True)
class PathPack:
    """Padded per-agent path arrays in the layout the kernels expect."""

    pts: np.ndarray      # (M, L, 2)
    cum: np.ndarray      # (M, L)
    seglen: np.ndarray   # (M, L)
    lim: np.ndarray      # (M, L)
    npts: np.ndarray     # (M,) int64

    @property
    def n_paths(self) -> int:
        return self.pts.shape[0]

    def length(self, i: int) -> float:
        return float(self.cum[i, self.npts[i] - 1])

    def single(self, i: int) -> tuple:
        """Raw arrays for path ``i`` (convenience for scalar kernels)."""
        return (self.pts[i], self.cum[i], self.seglen[i], int(self.npts[i]))

    def position_at(self, i: int, s: float) -> tuple[float, float, float]:
        """Interpolate (x, y, heading) at arclength ``s`` on path ``i``."""
        n = int(self.npts[i])
        cum = self.cum[i, :n]
        k = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, n - 2))
        t = (s - cum[k]) / self.seglen[i, k]
        a = self.pts[i, k]
        d = self.pts[i, k + 1] - a
        return (a[0] + t * d[0], a[1] + t * d[1], float(np.arctan2(d[1], d[0])))

    def limit_at(self, i: int, s: float) -> float:
        n = int(self.npts[i])
        cum = self.cum[i, :n]
        k = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, n - 2))
        return float(self.lim[i, k])

    def project(self, i: int, x: float, y: float) -> tuple[float, float]:
        """Project a point onto path ``i`` -> (arclength, distance)."""
        s, d2 = kernels.project_polyline(self.pts[i], self.cum[i],
                                         self.seglen[i], int(self.npts[i]),
                                         x, y)
        return float(s), float(np.sqrt(d2))


def build_path_pack(paths: list[tuple[np.ndarray, np.ndarray]]) -> PathPack:
    """Pack a list of (points (N,2), per-segment speed limit (N,)) paths.

    The limit array is per-point; entry ``k`` governs the span between points
    ``k`` and ``k+1`` (the final entry is padding).
    """
    M = len(paths)
    L = max((len(p) for p, _ in paths), default=2)
    L = max(L, 2)
    pts = np.zeros((M, L, 2))
    cum = np.zeros((M, L))
    seglen = np.zeros((M, L))
    lim = np.full((M, L), np.inf)
    npts = np.zeros(M, dtype=np.int64)
    for i, (p, v) in enumerate(paths):
        n = len(p)
        if n < 2:
            raise ValueError("path needs at least 2 points")
        pts[i, :n] = p
        c = cumulative_lengths(p)
        cum[i, :n] = c
        cum[i, n:] = c[-1]
        seglen[i, : n - 1] = c[1:] - c[:-1]
        seglen[i, n - 1 :] = 1.0  # padding; never dereferenced for valid s
        lim[i, :n] = v
        npts[i] = n
    return PathPack(pts=pts, cum=cum, seglen=seglen, lim=lim, npts=npts)
