"""Planar poses, frame transforms, and polyline utilities.

Everything in the stack is 2D: poses are (x, y, yaw), paths are (N, 2)
arrays of world- or body-frame coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    return math.pi - (math.pi - a) % TWO_PI


@dataclass(frozen=True)
class Pose2:
    """Planar rigid-body pose. yaw is normalized to (-pi, pi] on construction."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.yaw)):
            raise ValueError(f"non-finite pose ({self.x}, {self.y}, {self.yaw})")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def compose(self, other: "Pose2") -> "Pose2":
        """Pose of `other` (given in this pose's frame) expressed in the parent frame."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.yaw + other.yaw,
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw], dtype=np.float64)


def as_polyline(points) -> np.ndarray:
    """Validate and return an (N, 2) float64 polyline."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1 and pts.size == 2:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise ValueError(f"polyline must be (N, 2) with N >= 1, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("polyline contains non-finite coordinates")
    return pts


def world_to_local(pose: Pose2, points) -> np.ndarray:
    """Express world-frame points in the frame attached at `pose`."""
    pts = as_polyline(points)
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    dx = pts[:, 0] - pose.x
    dy = pts[:, 1] - pose.y
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=1)


def local_to_world(pose: Pose2, points) -> np.ndarray:
    """Inverse of :func:`world_to_local`."""
    pts = as_polyline(points)
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    return np.stack(
        [pose.x + c * pts[:, 0] - s * pts[:, 1], pose.y + s * pts[:, 0] + c * pts[:, 1]],
        axis=1,
    )


def arc_lengths(points) -> np.ndarray:
    """Cumulative arc length at each node, starting at 0."""
    pts = as_polyline(points)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_polyline(points, n_nodes: int) -> np.ndarray:
    """Resample to `n_nodes` arc-length-equidistant nodes (endpoints kept).

    A zero-length input (single node, or coincident nodes) is tiled.
    """
    pts = as_polyline(points)
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    s = arc_lengths(pts)
    total = s[-1]
    if total <= 0.0:
        return np.tile(pts[-1], (n_nodes, 1))
    target = np.linspace(0.0, total, n_nodes)
    x = np.interp(target, s, pts[:, 0])
    y = np.interp(target, s, pts[:, 1])
    return np.stack([x, y], axis=1)


def project_to_polyline(points, query_xy) -> tuple[int, float, np.ndarray, float]:
    """Closest point on a polyline to `query_xy`.

    Returns (segment index, parameter in [0, 1], closest point, arc length at
    the closest point). Distance ties are broken toward the later segment so a
    tracker keeps making progress along the path.
    """
    pts = as_polyline(points)
    q = np.asarray(query_xy, dtype=np.float64)
    if pts.shape[0] == 1:
        return 0, 0.0, pts[0].copy(), 0.0
    a = pts[:-1]
    d = pts[1:] - a
    seg_len2 = np.einsum("ij,ij->i", d, d)
    t = np.einsum("ij,ij->i", q[None, :] - a, d) / np.maximum(seg_len2, 1e-300)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * d
    dist2 = np.einsum("ij,ij->i", proj - q[None, :], proj - q[None, :])
    best = dist2.shape[0] - 1 - int(np.argmin(dist2[::-1]))  # last index of the minimum
    s = arc_lengths(pts)
    arc = s[best] + t[best] * math.sqrt(seg_len2[best])
    return best, float(t[best]), proj[best], float(arc)


def slice_by_arc_length(points, start_arc: float, length: float) -> np.ndarray:
    """Sub-polyline from arc length `start_arc` extending `length` (clipped at the end)."""
    pts = as_polyline(points)
    s = arc_lengths(pts)
    total = s[-1]
    a0 = min(max(start_arc, 0.0), total)
    a1 = min(a0 + max(length, 0.0), total)
    xs = np.interp([a0, a1], s, pts[:, 0])
    ys = np.interp([a0, a1], s, pts[:, 1])
    inner = (s > a0) & (s < a1)
    mid = pts[inner]
    return np.vstack([[xs[0], ys[0]], mid, [xs[1], ys[1]]])
