"""Pure-numpy backend for the hot kernels.

Semantics are the contract: the compiled backend in ``_compiled.pyx`` must
match these functions (same tie-breaking, same integration order). Geometry
uses closed sets: tangency counts as a hit.

Shape conventions (float64 unless noted):
  circles  (C, 3)  [cx, cy, r]
  boxes    (B, 4)  [cx, cy, hx, hy], axis-aligned
  segments (S, 4)  [x1, y1, x2, y2]
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def _empty2(a, width):
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(0, width) if a.size == 0 else a


def raycast_ranges(px, py, yaw, angles, max_range, circles, boxes, segments):
    """True (noiseless) range per beam, capped at max_range.

    Beam i points at world angle ``yaw + angles[i]``. A sensor origin inside
    an obstacle returns 0 for every beam that hits it.
    """
    angles = np.asarray(angles, dtype=np.float64)
    circles = _empty2(circles, 3)
    boxes = _empty2(boxes, 4)
    segments = _empty2(segments, 4)
    n = angles.shape[0]
    dx = np.cos(yaw + angles)
    dy = np.sin(yaw + angles)
    best = np.full(n, float(max_range))

    if circles.shape[0]:
        mx = px - circles[:, 0]          # (C,)
        my = py - circles[:, 1]
        c0 = mx * mx + my * my - circles[:, 2] ** 2
        b = dx[:, None] * mx[None, :] + dy[:, None] * my[None, :]   # (n, C)
        disc = b * b - c0[None, :]
        with np.errstate(invalid="ignore"):
            t = -b - np.sqrt(np.maximum(disc, 0.0))
        t = np.where((disc >= 0.0) & (t >= 0.0), t, np.inf)
        t = np.where(c0[None, :] <= 0.0, 0.0, t)   # origin inside the circle
        best = np.minimum(best, t.min(axis=1))

    if boxes.shape[0]:
        lo_x = boxes[:, 0] - boxes[:, 2]
        hi_x = boxes[:, 0] + boxes[:, 2]
        lo_y = boxes[:, 1] - boxes[:, 3]
        hi_y = boxes[:, 1] + boxes[:, 3]
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_dx = 1.0 / dx
            inv_dy = 1.0 / dy
            tx1 = (lo_x[None, :] - px) * inv_dx[:, None]
            tx2 = (hi_x[None, :] - px) * inv_dx[:, None]
            ty1 = (lo_y[None, :] - py) * inv_dy[:, None]
            ty2 = (hi_y[None, :] - py) * inv_dy[:, None]
        # Degenerate directions: the ray is parallel to the slab; inside -> (-inf, inf).
        para_x = np.abs(dx) < _EPS
        in_x = (px >= lo_x[None, :]) & (px <= hi_x[None, :])
        tx_min = np.where(para_x[:, None], np.where(in_x, -np.inf, np.inf), np.minimum(tx1, tx2))
        tx_max = np.where(para_x[:, None], np.where(in_x, np.inf, -np.inf), np.maximum(tx1, tx2))
        para_y = np.abs(dy) < _EPS
        in_y = (py >= lo_y[None, :]) & (py <= hi_y[None, :])
        ty_min = np.where(para_y[:, None], np.where(in_y, -np.inf, np.inf), np.minimum(ty1, ty2))
        ty_max = np.where(para_y[:, None], np.where(in_y, np.inf, -np.inf), np.maximum(ty1, ty2))
        tmin = np.maximum(tx_min, ty_min)
        tmax = np.minimum(tx_max, ty_max)
        hit = (tmax >= tmin) & (tmax >= 0.0)
        t = np.where(hit, np.maximum(tmin, 0.0), np.inf)
        best = np.minimum(best, t.min(axis=1))

    if segments.shape[0]:
        rx = segments[:, 2] - segments[:, 0]
        ry = segments[:, 3] - segments[:, 1]
        qx = segments[:, 0] - px
        qy = segments[:, 1] - py
        denom = dx[:, None] * ry[None, :] - dy[:, None] * rx[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (qx[None, :] * ry[None, :] - qy[None, :] * rx[None, :]) / denom
            u = (qx[None, :] * dy[:, None] - qy[None, :] * dx[:, None]) / denom
        ok = (np.abs(denom) >= _EPS) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
        t = np.where(ok, t, np.inf)
        best = np.minimum(best, t.min(axis=1))

    return np.minimum(best, float(max_range))


def rect_hits(poses, half_x, half_y, circles, boxes, segments):
    """Whether the oriented rectangle at each pose touches any obstacle.

    poses: (P, 3) [x, y, yaw]; the rectangle has half-extents (half_x, half_y)
    along the body axes.
    """
    poses = np.asarray(poses, dtype=np.float64).reshape(-1, 3)
    circles = _empty2(circles, 3)
    boxes = _empty2(boxes, 4)
    segments = _empty2(segments, 4)
    p = poses.shape[0]
    hit = np.zeros(p, dtype=bool)
    c = np.cos(poses[:, 2])
    s = np.sin(poses[:, 2])

    if circles.shape[0]:
        ox = circles[None, :, 0] - poses[:, None, 0]
        oy = circles[None, :, 1] - poses[:, None, 1]
        lx = c[:, None] * ox + s[:, None] * oy
        ly = -s[:, None] * ox + c[:, None] * oy
        ex = np.abs(lx) - half_x
        ey = np.abs(ly) - half_y
        dx = np.maximum(ex, 0.0)
        dy = np.maximum(ey, 0.0)
        hit |= np.any(dx * dx + dy * dy <= circles[None, :, 2] ** 2, axis=1)

    if boxes.shape[0]:
        tx = boxes[None, :, 0] - poses[:, None, 0]
        ty = boxes[None, :, 1] - poses[:, None, 1]
        bx = boxes[None, :, 2]
        by = boxes[None, :, 3]
        ac = np.abs(c)[:, None]
        asn = np.abs(s)[:, None]
        # separating-axis test on world x, world y, body u, body v
        sep = np.abs(tx) > half_x * ac + half_y * asn + bx
        sep |= np.abs(ty) > half_x * asn + half_y * ac + by
        sep |= np.abs(c[:, None] * tx + s[:, None] * ty) > half_x + bx * ac + by * asn
        sep |= np.abs(-s[:, None] * tx + c[:, None] * ty) > half_y + bx * asn + by * ac
        hit |= np.any(~sep, axis=1)

    if segments.shape[0]:
        # endpoints in each rect frame, then Liang-Barsky clip against the AABB
        e1x = segments[None, :, 0] - poses[:, None, 0]
        e1y = segments[None, :, 1] - poses[:, None, 1]
        e2x = segments[None, :, 2] - poses[:, None, 0]
        e2y = segments[None, :, 3] - poses[:, None, 1]
        ax = c[:, None] * e1x + s[:, None] * e1y
        ay = -s[:, None] * e1x + c[:, None] * e1y
        bx2 = c[:, None] * e2x + s[:, None] * e2y
        by2 = -s[:, None] * e2x + c[:, None] * e2y
        hit |= np.any(_segment_aabb_overlap(ax, ay, bx2, by2, half_x, half_y), axis=1)

    return hit


def _segment_aabb_overlap(ax, ay, bx, by, hx, hy):
    """Closed-set overlap of segments (a->b) with the AABB [-hx,hx]x[-hy,hy]."""
    dx = bx - ax
    dy = by - ay
    t0 = np.zeros_like(ax)
    t1 = np.ones_like(ax)
    ok = np.ones(ax.shape, dtype=bool)
    for p, q in (
        (-dx, ax + hx),   # left:   -dx*t <= ax + hx
        (dx, hx - ax),    # right
        (-dy, ay + hy),   # bottom
        (dy, hy - ay),    # top
    ):
        para = np.abs(p) < _EPS
        ok &= ~(para & (q < 0.0))
        r = q / np.where(para, 1.0, p)
        enter = (p < 0.0) & ~para
        leave = (p > 0.0) & ~para
        t0 = np.where(enter, np.maximum(t0, r), t0)
        t1 = np.where(leave, np.minimum(t1, r), t1)
    return ok & (t0 <= t1)


def points_hit(points, inflate, circles, boxes, segments):
    """Whether a disc of radius `inflate` at each point touches any obstacle."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    circles = _empty2(circles, 3)
    boxes = _empty2(boxes, 4)
    segments = _empty2(segments, 4)
    hit = np.zeros(pts.shape[0], dtype=bool)

    if circles.shape[0]:
        d2 = (pts[:, None, 0] - circles[None, :, 0]) ** 2 + (pts[:, None, 1] - circles[None, :, 1]) ** 2
        hit |= np.any(d2 <= (circles[None, :, 2] + inflate) ** 2, axis=1)

    if boxes.shape[0]:
        ex = np.abs(pts[:, None, 0] - boxes[None, :, 0]) - boxes[None, :, 2]
        ey = np.abs(pts[:, None, 1] - boxes[None, :, 1]) - boxes[None, :, 3]
        dx = np.maximum(ex, 0.0)
        dy = np.maximum(ey, 0.0)
        hit |= np.any(dx * dx + dy * dy <= inflate * inflate, axis=1)

    if segments.shape[0]:
        ax = segments[None, :, 0]
        ay = segments[None, :, 1]
        dx = segments[None, :, 2] - ax
        dy = segments[None, :, 3] - ay
        len2 = np.maximum(dx * dx + dy * dy, _EPS)
        t = np.clip(((pts[:, None, 0] - ax) * dx + (pts[:, None, 1] - ay) * dy) / len2, 0.0, 1.0)
        ex = pts[:, None, 0] - (ax + t * dx)
        ey = pts[:, None, 1] - (ay + t * dy)
        hit |= np.any(ex * ex + ey * ey <= inflate * inflate, axis=1)

    return hit


def dtw_cost_steps(paths, ref):
    """Batched DTW against one reference series.

    paths: (N, T, 2), ref: (M, 2). Returns (cost (N,), steps (N,)) where cost
    is the minimal cumulative Euclidean distance over boundary-aligned
    monotone alignments (match/insert/delete) and steps is the number of
    aligned pairs on the optimal path (ties prefer match, then the
    path-advancing move).
    """
    paths = np.asarray(paths, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    n, t, _ = paths.shape
    m = ref.shape[0]
    d = np.sqrt(
        (paths[:, :, None, 0] - ref[None, None, :, 0]) ** 2
        + (paths[:, :, None, 1] - ref[None, None, :, 1]) ** 2
    )  # (N, T, M)
    cost = np.empty((n, t, m))
    steps = np.empty((n, t, m), dtype=np.int64)
    cost[:, 0, 0] = d[:, 0, 0]
    steps[:, 0, 0] = 1
    for j in range(1, m):
        cost[:, 0, j] = cost[:, 0, j - 1] + d[:, 0, j]
        steps[:, 0, j] = j + 1
    for i in range(1, t):
        cost[:, i, 0] = cost[:, i - 1, 0] + d[:, i, 0]
        steps[:, i, 0] = i + 1
        for j in range(1, m):
            diag = cost[:, i - 1, j - 1]
            up = cost[:, i - 1, j]
            left = cost[:, i, j - 1]
            best = np.minimum(np.minimum(diag, up), left)
            st = np.where(
                diag <= best,
                steps[:, i - 1, j - 1],
                np.where(up <= best, steps[:, i - 1, j], steps[:, i, j - 1]),
            )
            cost[:, i, j] = best + d[:, i, j]
            steps[:, i, j] = st + 1
    return cost[:, t - 1, m - 1], steps[:, t - 1, m - 1]


def lstm_gates(z, c_prev):
    """Fused LSTM cell elementwise stage.

    z: (N, 4H) pre-activations ordered [input, forget, cell, output];
    c_prev: (N, H). Returns (h, c) float32.
    """
    z = np.asarray(z, dtype=np.float32)
    c_prev = np.asarray(c_prev, dtype=np.float32)
    h = c_prev.shape[1]
    # sigmoid via tanh: one vectorized transcendental per gate
    i = 0.5 * (1.0 + np.tanh(0.5 * z[:, :h]))
    f = 0.5 * (1.0 + np.tanh(0.5 * z[:, h:2 * h]))
    g = np.tanh(z[:, 2 * h:3 * h])
    o = 0.5 * (1.0 + np.tanh(0.5 * z[:, 3 * h:]))
    c = f * c_prev + i * g
    return (o * np.tanh(c)).astype(np.float32), c.astype(np.float32)


def approx_rollout(pose0, cmds, substeps, dt, half_x, half_y, circles, boxes, segments):
    """Perfect-tracking rollout with exact geometric collision checks.

    Integrates each command sequence from `pose0` with a body-frame Euler step
    of `dt` (`substeps` per command), checking the rectangular footprint after
    every substep. On first contact the pose freezes and the collision flag
    stays 1. Returns body-frame coordinates relative to `pose0` at each
    command boundary: (xs, ys, ps) each (N, H) float32.
    """
    pose0 = np.asarray(pose0, dtype=np.float64)
    cmds = np.asarray(cmds, dtype=np.float64)
    n, horizon, _ = cmds.shape
    x = np.full(n, pose0[0])
    y = np.full(n, pose0[1])
    yaw = np.full(n, pose0[2])
    collided = np.zeros(n, dtype=bool)
    c0, s0 = np.cos(pose0[2]), np.sin(pose0[2])
    xs = np.empty((n, horizon), dtype=np.float32)
    ys = np.empty((n, horizon), dtype=np.float32)
    ps = np.empty((n, horizon), dtype=np.float32)

    for k in range(horizon):
        vf = cmds[:, k, 0]
        vl = cmds[:, k, 1]
        wz = cmds[:, k, 2]
        for _ in range(substeps):
            live = ~collided
            if not np.any(live):
                break
            cy = np.cos(yaw[live])
            sy = np.sin(yaw[live])
            x[live] += dt * (vf[live] * cy - vl[live] * sy)
            y[live] += dt * (vf[live] * sy + vl[live] * cy)
            yaw[live] += dt * wz[live]
            poses = np.stack([x[live], y[live], yaw[live]], axis=1)
            collided[live] |= rect_hits(poses, half_x, half_y, circles, boxes, segments)
        dxw = x - pose0[0]
        dyw = y - pose0[1]
        xs[:, k] = c0 * dxw + s0 * dyw
        ys[:, k] = -s0 * dxw + c0 * dyw
        ps[:, k] = collided.astype(np.float32)
    return xs, ys, ps
