"""Global path planning with a bounding-circle robot model.

An anytime RRT* with informed (ellipsoidal) sampling after the first
solution. The returned path keeps at least the robot's bounding radius of
clearance, validated by dense sampling along every segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .env import BOUNDING_RADIUS, Environment
from .geom import (Pose2, arc_lengths, as_polyline, project_to_polyline,
                   resample_polyline, slice_by_arc_length, world_to_local)

SEGMENT_CHECK_SPACING = 0.05  # meters between clearance samples on a segment


class PlanningFailed(RuntimeError):
    """No collision-free path was found within the budget."""


@dataclass
class PlannerStats:
    iterations: int = 0
    cost: float = math.inf
    cost_trace: list = field(default_factory=list)


@dataclass
class GlobalPath:
    nodes: np.ndarray          # (N, 2) world frame, start first
    stats: PlannerStats

    @property
    def cost(self) -> float:
        return float(arc_lengths(self.nodes)[-1])

    def to_json_list(self):
        return self.nodes.tolist()


def _point_free(env: Environment, pts, radius: float) -> np.ndarray:
    return ~kernels.points_hit(np.asarray(pts, dtype=np.float64).reshape(-1, 2),
                               radius, env.circles, env.boxes, env.walls)


def segment_free(env: Environment, a, b, radius: float) -> bool:
    """Dense clearance check along a segment, endpoints included."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = max(int(math.ceil(np.linalg.norm(b - a) / SEGMENT_CHECK_SPACING)), 1)
    t = np.linspace(0.0, 1.0, n + 1)
    pts = a[None, :] * (1 - t[:, None]) + b[None, :] * t[:, None]
    return bool(np.all(_point_free(env, pts, radius)))


def validate_path(env: Environment, nodes, radius: float) -> bool:
    nodes = as_polyline(nodes)
    return all(segment_free(env, nodes[i], nodes[i + 1], radius)
               for i in range(len(nodes) - 1))


def _informed_sample(rng, start, goal, c_best):
    """Uniform sample from the ellipse with foci start/goal and major axis c_best."""
    c_min = float(np.linalg.norm(goal - start))
    center = (start + goal) / 2.0
    theta = math.atan2(goal[1] - start[1], goal[0] - start[0])
    r1 = c_best / 2.0
    r2 = math.sqrt(max(c_best * c_best - c_min * c_min, 1e-12)) / 2.0
    ang = rng.uniform(0.0, 2.0 * math.pi)
    rad = math.sqrt(rng.uniform(0.0, 1.0))
    ex = rad * math.cos(ang) * r1
    ey = rad * math.sin(ang) * r2
    c, s = math.cos(theta), math.sin(theta)
    return np.array([center[0] + c * ex - s * ey, center[1] + s * ex + c * ey])


def plan(env: Environment, start, goal, robot_radius: float = BOUNDING_RADIUS,
         max_iterations: int = 3000, step_size: float = 0.8,
         seed: int = 0) -> GlobalPath:
    """Anytime informed RRT*. Raises ValueError for colliding endpoints and
    PlanningFailed when no path is found within the iteration budget."""
    start = np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    free = _point_free(env, np.stack([start, goal]), robot_radius)
    if not free[0]:
        raise ValueError("start position is in collision under the inflated robot model")
    if not free[1]:
        raise ValueError("goal position is in collision under the inflated robot model")

    stats = PlannerStats()
    if segment_free(env, start, goal, robot_radius):
        stats.cost = float(np.linalg.norm(goal - start))
        stats.cost_trace.append(stats.cost)
        return GlobalPath(np.stack([start, goal]), stats)

    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = env.bounds
    cap = max_iterations + 2
    pts = np.empty((cap, 2))
    parent = np.full(cap, -1, dtype=np.int64)
    cost = np.full(cap, np.inf)
    pts[0] = start
    cost[0] = 0.0
    n = 1
    goal_parent = -1
    best_cost = math.inf

    for it in range(max_iterations):
        stats.iterations = it + 1
        if rng.uniform() < 0.05:
            target = goal
        elif math.isfinite(best_cost):
            for _ in range(32):
                target = _informed_sample(rng, start, goal, best_cost)
                if xmin <= target[0] <= xmax and ymin <= target[1] <= ymax:
                    break
        else:
            target = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])

        d2 = np.einsum("ij,ij->i", pts[:n] - target, pts[:n] - target)
        nearest = int(np.argmin(d2))
        dist = math.sqrt(d2[nearest])
        if dist < 1e-9:
            continue
        new = pts[nearest] + (target - pts[nearest]) * min(step_size / dist, 1.0)
        if not _point_free(env, new[None, :], robot_radius)[0]:
            continue
        if not segment_free(env, pts[nearest], new, robot_radius):
            continue

        # choose the cheapest collision-free parent in the shrinking neighborhood
        r_n = max(step_size, min(3.0, 12.0 * math.sqrt(math.log(n + 1) / (n + 1))))
        nd2 = np.einsum("ij,ij->i", pts[:n] - new, pts[:n] - new)
        neighbors = np.flatnonzero(nd2 <= r_n * r_n)
        best_parent = nearest
        best_c = cost[nearest] + float(np.linalg.norm(new - pts[nearest]))
        for j in neighbors:
            c = cost[j] + math.sqrt(nd2[j])
            if c < best_c and segment_free(env, pts[j], new, robot_radius):
                best_parent = int(j)
                best_c = c
        idx = n
        pts[idx] = new
        parent[idx] = best_parent
        cost[idx] = best_c
        n += 1

        # rewire neighbors through the new node
        for j in neighbors:
            c = best_c + math.sqrt(nd2[j])
            if c < cost[j] and segment_free(env, new, pts[j], robot_radius):
                parent[j] = idx
                cost[j] = c

        # try to connect to the goal
        gd = float(np.linalg.norm(goal - new))
        if gd <= step_size * 1.5 and segment_free(env, new, goal, robot_radius):
            if best_c + gd < best_cost:
                best_cost = best_c + gd
                goal_parent = idx
        stats.cost_trace.append(best_cost)

    if goal_parent < 0:
        raise PlanningFailed(
            f"no path from {start.tolist()} to {goal.tolist()} in {max_iterations} iterations")

    chain = [goal]
    node = goal_parent
    while node >= 0:
        chain.append(pts[node])
        node = parent[node]
    nodes = np.array(chain[::-1])
    nodes = _shortcut(env, nodes, robot_radius, rng)
    stats.cost = float(arc_lengths(nodes)[-1])
    stats.cost_trace.append(stats.cost)
    return GlobalPath(nodes, stats)


def _shortcut(env: Environment, nodes: np.ndarray, radius: float,
              rng: np.random.Generator) -> np.ndarray:
    """Greedy skip-ahead smoothing; keeps the clearance guarantee."""
    out = [nodes[0]]
    i = 0
    while i < len(nodes) - 1:
        j = len(nodes) - 1
        while j > i + 1 and not segment_free(env, nodes[i], nodes[j], radius):
            j -= 1
        out.append(nodes[j])
        i = j
    return np.array(out)


WAYPOINT_LOOKAHEAD = 4.8   # meters of global path handed to the local planner
WAYPOINT_NODES = 12


def truncate_waypoints(path: GlobalPath | np.ndarray, robot_pose: Pose2,
                       lookahead: float = WAYPOINT_LOOKAHEAD,
                       n_nodes: int = WAYPOINT_NODES) -> np.ndarray:
    """The waypoint trajectory: the path segment from the closest point to the
    robot extending `lookahead` meters of arc (clipped at the goal), in the
    robot's local frame, resampled to `n_nodes` arc-equidistant nodes."""
    nodes = path.nodes if isinstance(path, GlobalPath) else as_polyline(path)
    _, _, _, arc = project_to_polyline(nodes, (robot_pose.x, robot_pose.y))
    sub = slice_by_arc_length(nodes, arc, lookahead)
    local = world_to_local(robot_pose, sub)
    return resample_polyline(local, n_nodes)
