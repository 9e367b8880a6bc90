"""Numeric kernel backend selection.

The hot inner loops (reactive rollouts, grid-search evaluation, footprint
geometry) exist twice: as numba ``@njit`` scalar loops
(:mod:`idmplan.kernels.jitted`) and as vectorized numpy fallbacks
(:mod:`idmplan.kernels.pure`).  Both produce bit-identical trajectories; the
jitted backend is simply much faster (see ``benchmarks/compare_backends.py``).

Selection is controlled by the ``IDMPLAN_NUMBA`` environment variable read at
import time:

* unset / ``1`` / ``on``: use numba when importable, else fall back to numpy;
* ``0`` / ``off`` / ``false``: force the pure-numpy backend.
"""

from __future__ import annotations

import importlib
import os
import warnings

from . import pure

GAP_FLOOR = pure.GAP_FLOOR
LEAD_RANGE = pure.LEAD_RANGE


def _numba_requested() -> bool:
    raw = os.environ.get("IDMPLAN_NUMBA", "").strip().lower()
    return raw not in ("0", "off", "false", "no")


jitted = None
if _numba_requested():
    try:
        jitted = importlib.import_module(".jitted", __name__)
    except ImportError:  # pragma: no cover - exercised only without numba
        warnings.warn("numba unavailable; falling back to the pure-numpy "
                      "kernel backend", RuntimeWarning)
        jitted = None

if jitted is not None:
    BACKEND = "numba"
    _impl = jitted
else:
    BACKEND = "numpy"
    _impl = pure

reactive_rollout = _impl.reactive_rollout
grid_distance = _impl.grid_distance
cv_rollout = _impl.cv_rollout
project_polyline = _impl.project_polyline
polyline_progress = _impl.polyline_progress
collision_mask = _impl.collision_mask
ttc_ok_mask = _impl.ttc_ok_mask
drivable_ok_mask = _impl.drivable_ok_mask

__all__ = [
    "BACKEND",
    "GAP_FLOOR",
    "LEAD_RANGE",
    "reactive_rollout",
    "grid_distance",
    "cv_rollout",
    "project_polyline",
    "polyline_progress",
    "collision_mask",
    "ttc_ok_mask",
    "drivable_ok_mask",
    "pure",
    "jitted",
]
