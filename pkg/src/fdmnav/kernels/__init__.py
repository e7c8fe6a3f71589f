"""Hot kernels with a compiled core and a pure-numpy fallback.

The compiled extension is preferred when importable; set FDMNAV_KERNELS to
``reference`` or ``compiled`` to force a backend (the latter raises if the
extension is missing).
"""

import os

from . import reference

_forced = os.environ.get("FDMNAV_KERNELS", "").strip().lower()

if _forced == "reference":
    _impl = reference
    BACKEND = "reference"
else:
    try:
        from . import _compiled as _impl
        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        _impl = reference
        BACKEND = "reference"

raycast_ranges = _impl.raycast_ranges
rect_hits = _impl.rect_hits
points_hit = _impl.points_hit
dtw_cost_steps = _impl.dtw_cost_steps
approx_rollout = _impl.approx_rollout

# numpy's SIMD tanh beats a scalar expf loop for the elementwise LSTM stage
# (see kernels.benchmark), so the reference wins unless compiled is forced.
lstm_gates = _impl.lstm_gates if _forced == "compiled" else reference.lstm_gates

__all__ = [
    "BACKEND",
    "raycast_ranges",
    "rect_hits",
    "points_hit",
    "dtw_cost_steps",
    "lstm_gates",
    "approx_rollout",
]
