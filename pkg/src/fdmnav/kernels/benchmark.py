"""Benchmark the compiled kernel backend against the numpy reference.

Run with ``python -m fdmnav.kernels.benchmark``.
"""

from __future__ import annotations

import time

import numpy as np

from . import reference


def _load_compiled():
    try:
        from . import _compiled
        return _compiled
    except ImportError:
        return None


def _time(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def make_cases(rng):
    circles = np.column_stack([rng.uniform(-10, 10, 40), rng.uniform(-10, 10, 40), rng.uniform(0.2, 1.0, 40)])
    boxes = np.column_stack([rng.uniform(-10, 10, 20), rng.uniform(-10, 10, 20), rng.uniform(0.2, 1.0, 20), rng.uniform(0.2, 1.0, 20)])
    segments = np.array([[-12.0, -12.0, 12.0, -12.0], [12.0, -12.0, 12.0, 12.0]])
    angles = np.linspace(0, 2 * np.pi, 360, endpoint=False)
    poses = np.column_stack([rng.uniform(-10, 10, 2000), rng.uniform(-10, 10, 2000), rng.uniform(-3, 3, 2000)])
    paths = rng.normal(size=(1024, 12, 2)).cumsum(axis=1)
    ref_path = rng.normal(size=(12, 2)).cumsum(axis=0)
    z = rng.normal(size=(1500, 4 * 64)).astype(np.float32)
    c = rng.normal(size=(1500, 64)).astype(np.float32)
    cmds = rng.uniform(-1, 1, size=(256, 12, 3))
    return {
        "raycast_ranges(360 beams)": ("raycast_ranges", (0.5, 0.5, 0.3, angles, 10.0, circles, boxes, segments)),
        "rect_hits(2000 poses)": ("rect_hits", (poses, 0.5, 0.3, circles, boxes, segments)),
        "points_hit(2000 pts)": ("points_hit", (poses[:, :2], 0.59, circles, boxes, segments)),
        "dtw(1024x12 vs 12)": ("dtw_cost_steps", (paths, ref_path)),
        "lstm_gates(1500x256)": ("lstm_gates", (z, c)),
        "approx_rollout(256x12x10)": ("approx_rollout", (np.zeros(3), cmds, 10, 0.05, 0.5, 0.3, circles, boxes, segments)),
    }


def main():
    rng = np.random.default_rng(0)
    compiled = _load_compiled()
    cases = make_cases(rng)
    print(f"{'kernel':<28} {'reference':>12} {'compiled':>12} {'speedup':>9}")
    for label, (name, args) in cases.items():
        t_ref = _time(getattr(reference, name), *args)
        if compiled is None:
            print(f"{label:<28} {t_ref:>10.2f}ms {'n/a':>12}")
            continue
        t_c = _time(getattr(compiled, name), *args)
        print(f"{label:<28} {t_ref:>10.2f}ms {t_c:>10.2f}ms {t_ref / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
