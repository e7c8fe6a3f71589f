"""Backend parity (compiled vs numpy reference) and geometry oracles."""

import numpy as np
import pytest

from fdmnav.kernels import reference as ref

compiled = pytest.importorskip("fdmnav.kernels._compiled")


def random_scene(rng, n_circles=12, n_boxes=8, n_segments=6):
    circles = np.column_stack([
        rng.uniform(-8, 8, n_circles), rng.uniform(-8, 8, n_circles),
        rng.uniform(0.1, 1.2, n_circles),
    ])
    boxes = np.column_stack([
        rng.uniform(-8, 8, n_boxes), rng.uniform(-8, 8, n_boxes),
        rng.uniform(0.1, 1.2, n_boxes), rng.uniform(0.1, 1.2, n_boxes),
    ])
    a = rng.uniform(-8, 8, (n_segments, 2))
    b = a + rng.uniform(-4, 4, (n_segments, 2))
    segments = np.column_stack([a, b])
    return circles, boxes, segments


@pytest.mark.parametrize("seed", range(5))
def test_raycast_parity(seed):
    rng = np.random.default_rng(seed)
    circles, boxes, segments = random_scene(rng)
    angles = rng.uniform(0, 2 * np.pi, 256)
    px, py, yaw = rng.uniform(-5, 5, 3)
    a = ref.raycast_ranges(px, py, yaw, angles, 10.0, circles, boxes, segments)
    b = compiled.raycast_ranges(px, py, yaw, angles, 10.0, circles, boxes, segments)
    np.testing.assert_allclose(a, b, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_rect_and_points_parity(seed):
    rng = np.random.default_rng(100 + seed)
    circles, boxes, segments = random_scene(rng)
    poses = np.column_stack([rng.uniform(-9, 9, 500), rng.uniform(-9, 9, 500),
                             rng.uniform(-4, 4, 500)])
    a = ref.rect_hits(poses, 0.5, 0.3, circles, boxes, segments)
    b = compiled.rect_hits(poses, 0.5, 0.3, circles, boxes, segments)
    np.testing.assert_array_equal(a, b)
    a = ref.points_hit(poses[:, :2], 0.59, circles, boxes, segments)
    b = compiled.points_hit(poses[:, :2], 0.59, circles, boxes, segments)
    np.testing.assert_array_equal(a, b)


def test_dtw_parity():
    rng = np.random.default_rng(7)
    paths = rng.normal(size=(200, 9, 2)).cumsum(axis=1)
    ref_path = rng.normal(size=(7, 2)).cumsum(axis=0)
    c1, s1 = ref.dtw_cost_steps(paths, ref_path)
    c2, s2 = compiled.dtw_cost_steps(paths, ref_path)
    np.testing.assert_allclose(c1, c2, atol=1e-9)
    np.testing.assert_array_equal(s1, s2)


def test_lstm_gates_parity():
    rng = np.random.default_rng(8)
    z = rng.normal(scale=2.0, size=(64, 4 * 32)).astype(np.float32)
    c = rng.normal(size=(64, 32)).astype(np.float32)
    h1, c1 = ref.lstm_gates(z, c)
    h2, c2 = compiled.lstm_gates(z, c)
    np.testing.assert_allclose(h1, h2, atol=2e-6)
    np.testing.assert_allclose(c1, c2, atol=2e-6)


def test_approx_rollout_parity():
    rng = np.random.default_rng(9)
    circles, boxes, segments = random_scene(rng)
    cmds = rng.uniform(-1, 1, size=(64, 12, 3))
    pose0 = np.array([0.3, -0.2, 0.4])
    r1 = ref.approx_rollout(pose0, cmds, 10, 0.05, 0.5, 0.3, circles, boxes, segments)
    r2 = compiled.approx_rollout(pose0, cmds, 10, 0.05, 0.5, 0.3, circles, boxes, segments)
    for a, b in zip(r1, r2):
        np.testing.assert_allclose(a, b, atol=1e-5)


# --- oracles ---------------------------------------------------------------


def test_ray_hits_circle_exact():
    circles = np.array([[3.0, 0.0, 1.0]])
    none = np.zeros((0, 4))
    r = ref.raycast_ranges(0, 0, 0, np.array([0.0]), 10.0, circles, none, none)
    assert r[0] == pytest.approx(2.0, abs=1e-12)


def test_ray_inside_circle_is_zero():
    circles = np.array([[0.0, 0.0, 1.0]])
    none = np.zeros((0, 4))
    r = ref.raycast_ranges(0, 0, 0, np.array([1.3]), 10.0, circles, none, none)
    assert r[0] == 0.0


def test_ray_box_and_segment():
    boxes = np.array([[4.0, 0.0, 1.0, 1.0]])
    segs = np.array([[2.0, -1.0, 2.0, 1.0]])
    r = ref.raycast_ranges(0, 0, 0, np.array([0.0]), 10.0, np.zeros((0, 3)), boxes, np.zeros((0, 4)))
    assert r[0] == pytest.approx(3.0, abs=1e-12)
    r = ref.raycast_ranges(0, 0, 0, np.array([0.0]), 10.0, np.zeros((0, 3)), np.zeros((0, 4)), segs)
    assert r[0] == pytest.approx(2.0, abs=1e-12)
    # pointing away: full range
    r = ref.raycast_ranges(0, 0, np.pi, np.array([0.0]), 10.0, np.zeros((0, 3)), boxes, segs)
    assert r[0] == 10.0


def _sample_oracle(pose, hx, hy, circles, boxes, segments, n=100):
    """Dense-sampling collision oracle: rect sample points inside obstacles, or
    obstacle boundary samples inside the rect."""
    xs = np.linspace(-hx, hx, n)
    ys = np.linspace(-hy, hy, int(n * hy / hx) + 2)
    gx, gy = np.meshgrid(xs, ys)
    local = np.column_stack([gx.ravel(), gy.ravel()])
    c, s = np.cos(pose[2]), np.sin(pose[2])
    world = np.column_stack([
        pose[0] + c * local[:, 0] - s * local[:, 1],
        pose[1] + s * local[:, 0] + c * local[:, 1],
    ])
    if ref.points_hit(world, 0.0, circles, boxes, segments).any():
        return True
    # obstacle boundary points inside the rect
    t = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    pts = [np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)]) for cx, cy, r in circles]
    for cx, cy, bx, by in boxes:
        e = np.linspace(-1, 1, 200)
        pts.append(np.column_stack([cx + bx * e, np.full_like(e, cy - by)]))
        pts.append(np.column_stack([cx + bx * e, np.full_like(e, cy + by)]))
        pts.append(np.column_stack([np.full_like(e, cx - bx), cy + by * e]))
        pts.append(np.column_stack([np.full_like(e, cx + bx), cy + by * e]))
    for x1, y1, x2, y2 in segments:
        e = np.linspace(0, 1, 400)[:, None]
        pts.append(np.array([[x1, y1]]) * (1 - e) + np.array([[x2, y2]]) * e)
    if not pts:
        return False
    pts = np.vstack(pts)
    d = pts - pose[:2]
    lx = c * d[:, 0] + s * d[:, 1]
    ly = -s * d[:, 0] + c * d[:, 1]
    return bool(np.any((np.abs(lx) <= hx) & (np.abs(ly) <= hy)))


def test_rect_hits_matches_sampling_oracle():
    rng = np.random.default_rng(42)
    circles, boxes, segments = random_scene(rng, 6, 4, 3)
    poses = np.column_stack([rng.uniform(-9, 9, 1000), rng.uniform(-9, 9, 1000),
                             rng.uniform(-4, 4, 1000)])
    got = ref.rect_hits(poses, 0.5, 0.3, circles, boxes, segments)
    for i in range(poses.shape[0]):
        want = _sample_oracle(poses[i], 0.5, 0.3, circles, boxes, segments)
        assert got[i] == want, f"pose {poses[i]} exact={got[i]} oracle={want}"
