# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled backend for the hot kernels.

Must match fdmnav.kernels.reference semantics (same tie-breaking, same
integration order); the test suite asserts parity between the backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, fabs, expf

cnp.import_array()

cdef double _EPS = 1e-12
cdef double _INF = 1e300


cdef inline double _ray_circle(double px, double py, double dx, double dy,
                               double cx, double cy, double r) nogil:
    cdef double mx = px - cx
    cdef double my = py - cy
    cdef double c0 = mx * mx + my * my - r * r
    cdef double b = dx * mx + dy * my
    cdef double disc, t
    if c0 <= 0.0:
        return 0.0
    disc = b * b - c0
    if disc < 0.0:
        return _INF
    t = -b - sqrt(disc)
    if t >= 0.0:
        return t
    return _INF


cdef inline double _ray_box(double px, double py, double dx, double dy,
                            double lo_x, double hi_x, double lo_y, double hi_y) nogil:
    cdef double tx_min, tx_max, ty_min, ty_max, t1, t2, tmin, tmax
    if fabs(dx) < _EPS:
        if px >= lo_x and px <= hi_x:
            tx_min = -_INF
            tx_max = _INF
        else:
            return _INF
    else:
        t1 = (lo_x - px) / dx
        t2 = (hi_x - px) / dx
        tx_min = t1 if t1 < t2 else t2
        tx_max = t2 if t1 < t2 else t1
    if fabs(dy) < _EPS:
        if py >= lo_y and py <= hi_y:
            ty_min = -_INF
            ty_max = _INF
        else:
            return _INF
    else:
        t1 = (lo_y - py) / dy
        t2 = (hi_y - py) / dy
        ty_min = t1 if t1 < t2 else t2
        ty_max = t2 if t1 < t2 else t1
    tmin = tx_min if tx_min > ty_min else ty_min
    tmax = tx_max if tx_max < ty_max else ty_max
    if tmax < tmin or tmax < 0.0:
        return _INF
    return tmin if tmin > 0.0 else 0.0


cdef inline double _ray_segment(double px, double py, double dx, double dy,
                                double x1, double y1, double x2, double y2) nogil:
    cdef double rx = x2 - x1
    cdef double ry = y2 - y1
    cdef double qx = x1 - px
    cdef double qy = y1 - py
    cdef double denom = dx * ry - dy * rx
    cdef double t, u
    if fabs(denom) < _EPS:
        return _INF
    t = (qx * ry - qy * rx) / denom
    u = (qx * dy - qy * dx) / denom
    if t >= 0.0 and u >= 0.0 and u <= 1.0:
        return t
    return _INF


def raycast_ranges(double px, double py, double yaw, angles, double max_range,
                   circles, boxes, segments):
    cdef double[:] ang = np.ascontiguousarray(angles, dtype=np.float64)
    cdef double[:, :] cir = np.ascontiguousarray(circles, dtype=np.float64).reshape(-1, 3)
    cdef double[:, :] box = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    cdef double[:, :] seg = np.ascontiguousarray(segments, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t n = ang.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[:] out = out_arr
    cdef Py_ssize_t i, j
    cdef double dx, dy, best, t
    with nogil:
        for i in range(n):
            dx = cos(yaw + ang[i])
            dy = sin(yaw + ang[i])
            best = max_range
            for j in range(cir.shape[0]):
                t = _ray_circle(px, py, dx, dy, cir[j, 0], cir[j, 1], cir[j, 2])
                if t < best:
                    best = t
            for j in range(box.shape[0]):
                t = _ray_box(px, py, dx, dy,
                             box[j, 0] - box[j, 2], box[j, 0] + box[j, 2],
                             box[j, 1] - box[j, 3], box[j, 1] + box[j, 3])
                if t < best:
                    best = t
            for j in range(seg.shape[0]):
                t = _ray_segment(px, py, dx, dy, seg[j, 0], seg[j, 1], seg[j, 2], seg[j, 3])
                if t < best:
                    best = t
            out[i] = best
    return out_arr


cdef inline bint _rect_circle(double x, double y, double c, double s,
                              double hx, double hy,
                              double cx, double cy, double r) nogil:
    cdef double ox = cx - x
    cdef double oy = cy - y
    cdef double lx = c * ox + s * oy
    cdef double ly = -s * ox + c * oy
    cdef double ex = fabs(lx) - hx
    cdef double ey = fabs(ly) - hy
    cdef double dx = ex if ex > 0.0 else 0.0
    cdef double dy = ey if ey > 0.0 else 0.0
    return dx * dx + dy * dy <= r * r


cdef inline bint _rect_box(double x, double y, double c, double s,
                           double hx, double hy,
                           double bxc, double byc, double bx, double by) nogil:
    cdef double tx = bxc - x
    cdef double ty = byc - y
    cdef double ac = fabs(c)
    cdef double asn = fabs(s)
    if fabs(tx) > hx * ac + hy * asn + bx:
        return False
    if fabs(ty) > hx * asn + hy * ac + by:
        return False
    if fabs(c * tx + s * ty) > hx + bx * ac + by * asn:
        return False
    if fabs(-s * tx + c * ty) > hy + bx * asn + by * ac:
        return False
    return True


cdef inline bint _rect_segment(double x, double y, double c, double s,
                               double hx, double hy,
                               double x1, double y1, double x2, double y2) nogil:
    # endpoints into the rect frame, Liang-Barsky clip against [-hx,hx]x[-hy,hy]
    cdef double e1x = x1 - x
    cdef double e1y = y1 - y
    cdef double e2x = x2 - x
    cdef double e2y = y2 - y
    cdef double ax = c * e1x + s * e1y
    cdef double ay = -s * e1x + c * e1y
    cdef double bx = c * e2x + s * e2y
    cdef double by = -s * e2x + c * e2y
    cdef double dx = bx - ax
    cdef double dy = by - ay
    cdef double t0 = 0.0
    cdef double t1 = 1.0
    cdef double p, q, r
    cdef int k
    for k in range(4):
        if k == 0:
            p = -dx; q = ax + hx
        elif k == 1:
            p = dx; q = hx - ax
        elif k == 2:
            p = -dy; q = ay + hy
        else:
            p = dy; q = hy - ay
        if fabs(p) < _EPS:
            if q < 0.0:
                return False
        else:
            r = q / p
            if p < 0.0:
                if r > t0:
                    t0 = r
            else:
                if r < t1:
                    t1 = r
    return t0 <= t1


cdef inline bint _rect_hit_one(double x, double y, double yaw,
                               double hx, double hy,
                               double[:, :] cir, double[:, :] box, double[:, :] seg) nogil:
    cdef double c = cos(yaw)
    cdef double s = sin(yaw)
    cdef Py_ssize_t j
    for j in range(cir.shape[0]):
        if _rect_circle(x, y, c, s, hx, hy, cir[j, 0], cir[j, 1], cir[j, 2]):
            return True
    for j in range(box.shape[0]):
        if _rect_box(x, y, c, s, hx, hy, box[j, 0], box[j, 1], box[j, 2], box[j, 3]):
            return True
    for j in range(seg.shape[0]):
        if _rect_segment(x, y, c, s, hx, hy, seg[j, 0], seg[j, 1], seg[j, 2], seg[j, 3]):
            return True
    return False


def rect_hits(poses, double half_x, double half_y, circles, boxes, segments):
    cdef double[:, :] ps = np.ascontiguousarray(poses, dtype=np.float64).reshape(-1, 3)
    cdef double[:, :] cir = np.ascontiguousarray(circles, dtype=np.float64).reshape(-1, 3)
    cdef double[:, :] box = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    cdef double[:, :] seg = np.ascontiguousarray(segments, dtype=np.float64).reshape(-1, 4)
    out_arr = np.zeros(ps.shape[0], dtype=bool)
    cdef cnp.uint8_t[:] out = out_arr.view(np.uint8)
    cdef Py_ssize_t i
    with nogil:
        for i in range(ps.shape[0]):
            out[i] = _rect_hit_one(ps[i, 0], ps[i, 1], ps[i, 2], half_x, half_y, cir, box, seg)
    return out_arr


def points_hit(points, double inflate, circles, boxes, segments):
    cdef double[:, :] pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    cdef double[:, :] cir = np.ascontiguousarray(circles, dtype=np.float64).reshape(-1, 3)
    cdef double[:, :] box = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    cdef double[:, :] seg = np.ascontiguousarray(segments, dtype=np.float64).reshape(-1, 4)
    out_arr = np.zeros(pts.shape[0], dtype=bool)
    cdef cnp.uint8_t[:] out = out_arr.view(np.uint8)
    cdef Py_ssize_t i, j
    cdef double x, y, d2, rr, ex, ey, dx, dy, ax, ay, len2, t
    cdef bint hit
    with nogil:
        for i in range(pts.shape[0]):
            x = pts[i, 0]
            y = pts[i, 1]
            hit = False
            for j in range(cir.shape[0]):
                d2 = (x - cir[j, 0]) ** 2 + (y - cir[j, 1]) ** 2
                rr = cir[j, 2] + inflate
                if d2 <= rr * rr:
                    hit = True
                    break
            if not hit:
                for j in range(box.shape[0]):
                    ex = fabs(x - box[j, 0]) - box[j, 2]
                    ey = fabs(y - box[j, 1]) - box[j, 3]
                    dx = ex if ex > 0.0 else 0.0
                    dy = ey if ey > 0.0 else 0.0
                    if dx * dx + dy * dy <= inflate * inflate:
                        hit = True
                        break
            if not hit:
                for j in range(seg.shape[0]):
                    ax = seg[j, 0]
                    ay = seg[j, 1]
                    dx = seg[j, 2] - ax
                    dy = seg[j, 3] - ay
                    len2 = dx * dx + dy * dy
                    if len2 < _EPS:
                        len2 = _EPS
                    t = ((x - ax) * dx + (y - ay) * dy) / len2
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                    ex = x - (ax + t * dx)
                    ey = y - (ay + t * dy)
                    if ex * ex + ey * ey <= inflate * inflate:
                        hit = True
                        break
            out[i] = hit
    return out_arr


def dtw_cost_steps(paths, ref):
    cdef double[:, :, :] p = np.ascontiguousarray(paths, dtype=np.float64)
    cdef double[:, :] r = np.ascontiguousarray(ref, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t t = p.shape[1]
    cdef Py_ssize_t m = r.shape[0]
    cost_arr = np.empty(n, dtype=np.float64)
    steps_arr = np.empty(n, dtype=np.int64)
    cdef double[:] cost_out = cost_arr
    cdef cnp.int64_t[:] steps_out = steps_arr
    buf_c = np.empty((t, m), dtype=np.float64)
    buf_s = np.empty((t, m), dtype=np.int64)
    cdef double[:, :] dc = buf_c
    cdef cnp.int64_t[:, :] ds = buf_s
    cdef Py_ssize_t k, i, j
    cdef double dx, dy, d, diag, up, left, best
    cdef cnp.int64_t st
    with nogil:
        for k in range(n):
            for i in range(t):
                for j in range(m):
                    dx = p[k, i, 0] - r[j, 0]
                    dy = p[k, i, 1] - r[j, 1]
                    d = sqrt(dx * dx + dy * dy)
                    if i == 0 and j == 0:
                        dc[0, 0] = d
                        ds[0, 0] = 1
                    elif i == 0:
                        dc[0, j] = dc[0, j - 1] + d
                        ds[0, j] = j + 1
                    elif j == 0:
                        dc[i, 0] = dc[i - 1, 0] + d
                        ds[i, 0] = i + 1
                    else:
                        diag = dc[i - 1, j - 1]
                        up = dc[i - 1, j]
                        left = dc[i, j - 1]
                        best = diag
                        if up < best:
                            best = up
                        if left < best:
                            best = left
                        if diag <= best:
                            st = ds[i - 1, j - 1]
                        elif up <= best:
                            st = ds[i - 1, j]
                        else:
                            st = ds[i, j - 1]
                        dc[i, j] = best + d
                        ds[i, j] = st + 1
            cost_out[k] = dc[t - 1, m - 1]
            steps_out[k] = ds[t - 1, m - 1]
    return cost_arr, steps_arr


def lstm_gates(z, c_prev):
    """Fused LSTM elementwise stage; same tanh-based sigmoid as the reference."""
    cdef float[:, :] zv = np.ascontiguousarray(z, dtype=np.float32)
    cdef float[:, :] cp = np.ascontiguousarray(c_prev, dtype=np.float32)
    cdef Py_ssize_t n = cp.shape[0]
    cdef Py_ssize_t h = cp.shape[1]
    h_arr = np.empty((n, h), dtype=np.float32)
    c_arr = np.empty((n, h), dtype=np.float32)
    cdef float[:, :] hv = h_arr
    cdef float[:, :] cv = c_arr
    cdef Py_ssize_t i, j
    cdef float gi, gf, gg, go, cc
    cdef float one = 1.0
    cdef float two = 2.0
    with nogil:
        for i in range(n):
            for j in range(h):
                gi = one / (one + expf(-zv[i, j]))
                gf = one / (one + expf(-zv[i, h + j]))
                gg = two / (one + expf(-two * zv[i, 2 * h + j])) - one
                go = one / (one + expf(-zv[i, 3 * h + j]))
                cc = gf * cp[i, j] + gi * gg
                cv[i, j] = cc
                hv[i, j] = go * (two / (one + expf(-two * cc)) - one)
    return h_arr, c_arr


def approx_rollout(pose0, cmds, int substeps, double dt, double half_x, double half_y,
                   circles, boxes, segments):
    cdef double[:] p0 = np.ascontiguousarray(pose0, dtype=np.float64)
    cdef double[:, :, :] cs = np.ascontiguousarray(cmds, dtype=np.float64)
    cdef double[:, :] cir = np.ascontiguousarray(circles, dtype=np.float64).reshape(-1, 3)
    cdef double[:, :] box = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    cdef double[:, :] seg = np.ascontiguousarray(segments, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t n = cs.shape[0]
    cdef Py_ssize_t horizon = cs.shape[1]
    xs_arr = np.empty((n, horizon), dtype=np.float32)
    ys_arr = np.empty((n, horizon), dtype=np.float32)
    ps_arr = np.empty((n, horizon), dtype=np.float32)
    cdef float[:, :] xs = xs_arr
    cdef float[:, :] ys = ys_arr
    cdef float[:, :] ps = ps_arr
    cdef double c0 = cos(p0[2])
    cdef double s0 = sin(p0[2])
    cdef Py_ssize_t i, k, st
    cdef double x, y, yaw, vf, vl, wz, cy, sy, dxw, dyw
    cdef bint collided
    with nogil:
        for i in range(n):
            x = p0[0]
            y = p0[1]
            yaw = p0[2]
            collided = False
            for k in range(horizon):
                vf = cs[i, k, 0]
                vl = cs[i, k, 1]
                wz = cs[i, k, 2]
                for st in range(substeps):
                    if collided:
                        break
                    cy = cos(yaw)
                    sy = sin(yaw)
                    x = x + dt * (vf * cy - vl * sy)
                    y = y + dt * (vf * sy + vl * cy)
                    yaw = yaw + dt * wz
                    collided = _rect_hit_one(x, y, yaw, half_x, half_y, cir, box, seg)
                dxw = x - p0[0]
                dyw = y - p0[1]
                xs[i, k] = <float>(c0 * dxw + s0 * dyw)
                ys[i, k] = <float>(-s0 * dxw + c0 * dyw)
                ps[i, k] = 1.0 if collided else 0.0
    return xs_arr, ys_arr, ps_arr
