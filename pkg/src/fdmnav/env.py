"""Procedural obstacle environments, exact collision queries, and 2D lidar.

Two environment families are generated: open fields (a full grid of
obstacles) and cross-shaped corridors (obstacles only inside the cross, solid
walls around it). Each grid cell holds one obstacle whose in-cell offset is
drawn from U(center_randomness, grid_size - center_randomness) per axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import kernels
from .geom import Pose2

OPEN_FIELD = "open_field"
CROSS_CORRIDOR = "cross_corridor"

# Table of sampling ranges for random environment generation.
PARAM_RANGES = {
    "cylinder_radius": (0.05, 1.0),
    "box_side": (0.1, 2.0),
    "grid_size": (2.3, 5.0),
    "center_randomness": (0.1, 0.9),
    "corridor_width": (2.0, 6.0),
    "corridor_length": (8.0, 30.0),
}


@dataclass
class EnvParams:
    env_type: str = OPEN_FIELD
    obstacle_kind: str = "cylinder"
    cylinder_radius: float = 0.5
    box_side: float = 1.0
    grid_size: float = 4.0
    center_randomness: float = 0.5
    corridor_width: float = 4.0
    corridor_length: float = 20.0
    seed: int = 0
    # grid extent of the open field (the corridor derives its grid from
    # corridor_length / grid_size)
    cells_x: int = 5
    cells_y: int = 5

    def validate(self):
        if self.env_type not in (OPEN_FIELD, CROSS_CORRIDOR):
            raise ValueError(f"env_type must be one of {OPEN_FIELD}/{CROSS_CORRIDOR}, got {self.env_type!r}")
        if self.obstacle_kind not in ("cylinder", "box"):
            raise ValueError(f"obstacle_kind must be cylinder or box, got {self.obstacle_kind!r}")
        for name in ("cylinder_radius", "box_side", "grid_size", "corridor_width", "corridor_length"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.center_randomness < 0:
            raise ValueError("center_randomness must be >= 0")
        if self.grid_size < 2 * self.center_randomness:
            raise ValueError("grid_size must be >= 2 * center_randomness")
        if self.cells_x < 1 or self.cells_y < 1:
            raise ValueError("cells_x and cells_y must be >= 1")
        return self


def sample_env_params(rng: np.random.Generator, env_type: str, obstacle_kind: str,
                      seed: int, **overrides) -> EnvParams:
    """Draw generation parameters from the standard sampling ranges."""
    p = EnvParams(
        env_type=env_type,
        obstacle_kind=obstacle_kind,
        cylinder_radius=rng.uniform(*PARAM_RANGES["cylinder_radius"]),
        box_side=rng.uniform(*PARAM_RANGES["box_side"]),
        grid_size=rng.uniform(*PARAM_RANGES["grid_size"]),
        center_randomness=rng.uniform(*PARAM_RANGES["center_randomness"]),
        corridor_width=rng.uniform(*PARAM_RANGES["corridor_width"]),
        corridor_length=rng.uniform(*PARAM_RANGES["corridor_length"]),
        seed=seed,
    )
    for k, v in overrides.items():
        setattr(p, k, v)
    return p.validate()


@dataclass
class Environment:
    """Immutable obstacle world. circles (C,3), boxes (B,4), walls (S,4)."""

    circles: np.ndarray
    boxes: np.ndarray
    walls: np.ndarray
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    params: EnvParams | None = None

    def obstacle_count(self) -> int:
        return self.circles.shape[0] + self.boxes.shape[0]

    def with_extra(self, circles=None, boxes=None) -> "Environment":
        """A copy with additional obstacles (used for unexpected-obstacle tests)."""
        c = self.circles if circles is None else np.vstack([self.circles.reshape(-1, 3), np.asarray(circles, dtype=np.float64).reshape(-1, 3)])
        b = self.boxes if boxes is None else np.vstack([self.boxes.reshape(-1, 4), np.asarray(boxes, dtype=np.float64).reshape(-1, 4)])
        return Environment(c, b, self.walls, self.bounds, self.params)

    def to_json(self) -> str:
        doc = {
            "circles": self.circles.reshape(-1, 3).tolist(),
            "boxes": self.boxes.reshape(-1, 4).tolist(),
            "walls": self.walls.reshape(-1, 4).tolist(),
            "bounds": list(self.bounds),
            "params": asdict(self.params) if self.params else None,
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Environment":
        doc = json.loads(text)
        params = EnvParams(**doc["params"]) if doc.get("params") else None
        return Environment(
            np.asarray(doc["circles"], dtype=np.float64).reshape(-1, 3),
            np.asarray(doc["boxes"], dtype=np.float64).reshape(-1, 4),
            np.asarray(doc["walls"], dtype=np.float64).reshape(-1, 4),
            tuple(doc["bounds"]),
            params,
        )


EMPTY = Environment(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 4)), (-50.0, -50.0, 50.0, 50.0))


def _place_in_cells(rng, origins, params: EnvParams):
    """One obstacle per cell, offset ~ U(c, g - c) per axis inside the cell."""
    g = params.grid_size
    c = params.center_randomness
    n = origins.shape[0]
    offsets = rng.uniform(c, g - c, size=(n, 2))
    centers = origins + offsets
    if params.obstacle_kind == "cylinder":
        circles = np.column_stack([centers, np.full(n, params.cylinder_radius)])
        boxes = np.zeros((0, 4))
    else:
        half = params.box_side / 2.0
        boxes = np.column_stack([centers, np.full(n, half), np.full(n, half)])
        circles = np.zeros((0, 3))
    return circles, boxes


def generate_environment(params: EnvParams) -> Environment:
    """Deterministic (seeded) environment from generation parameters."""
    params.validate()
    rng = np.random.default_rng(params.seed)
    g = params.grid_size

    if params.env_type == OPEN_FIELD:
        ox, oy = np.meshgrid(np.arange(params.cells_x) * g, np.arange(params.cells_y) * g)
        origins = np.column_stack([ox.ravel(), oy.ravel()])
        circles, boxes = _place_in_cells(rng, origins, params)
        bounds = (0.0, 0.0, params.cells_x * g, params.cells_y * g)
        return Environment(circles, boxes, np.zeros((0, 4)), bounds, params)

    # Cross corridor: two orthogonal corridors of width w crossing at the
    # origin, each arm of half-length L/2, with solid walls on the outline.
    w = params.corridor_width / 2.0
    length = params.corridor_length / 2.0
    if w >= length:
        raise ValueError("corridor_width must be smaller than corridor_length")
    walls = np.array([
        # right arm (top and bottom walls, end cap)
        [w, w, length, w], [w, -w, length, -w], [length, -w, length, w],
        # left arm
        [-w, w, -length, w], [-w, -w, -length, -w], [-length, -w, -length, w],
        # top arm
        [w, w, w, length], [-w, w, -w, length], [-w, length, w, length],
        # bottom arm
        [w, -w, w, -length], [-w, -w, -w, -length], [-w, -length, w, -length],
    ], dtype=np.float64)
    # grid covering the bounding square, keep cells whose obstacle lands
    # inside the cross free region
    n_cells = max(int(math.floor(2 * length / g)), 1)
    coords = -length + np.arange(n_cells) * g
    ox, oy = np.meshgrid(coords, coords)
    origins = np.column_stack([ox.ravel(), oy.ravel()])
    circles, boxes = _place_in_cells(rng, origins, params)
    centers = circles[:, :2] if params.obstacle_kind == "cylinder" else boxes[:, :2]
    inside = (np.abs(centers[:, 0]) < w) | (np.abs(centers[:, 1]) < w)
    inside &= (np.abs(centers[:, 0]) < length) & (np.abs(centers[:, 1]) < length)
    circles = circles[inside] if params.obstacle_kind == "cylinder" else circles
    boxes = boxes[inside] if params.obstacle_kind == "box" else boxes
    bounds = (-length, -length, length, length)
    return Environment(circles, boxes, walls, bounds, params)


# Robot footprint: a 1.0 m x 0.6 m rectangle (half-extents below).
FOOTPRINT_HALF_X = 0.5
FOOTPRINT_HALF_Y = 0.3
# Minimal bounding circle of the footprint (half-diagonal 0.583), rounded up;
# used by the global planner.
BOUNDING_RADIUS = 0.59


def footprint_collides(env: Environment, pose: Pose2,
                       half_x: float = FOOTPRINT_HALF_X,
                       half_y: float = FOOTPRINT_HALF_Y) -> bool:
    """Exact oriented-rectangle test against all obstacles and walls (closed sets)."""
    if half_x <= 0 or half_y <= 0:
        raise ValueError("footprint half-extents must be positive")
    hits = kernels.rect_hits(
        np.array([[pose.x, pose.y, pose.yaw]]), half_x, half_y,
        env.circles, env.boxes, env.walls,
    )
    return bool(hits[0])


@dataclass
class LidarConfig:
    beam_count: int = 360
    max_range: float = 10.0
    noise_std: float = 0.2
    # sensor sits behind the body origin
    mount_offset: Pose2 = field(default_factory=lambda: Pose2(-0.3, 0.0, 0.0))

    def validate(self):
        if self.beam_count < 1:
            raise ValueError("beam_count must be >= 1")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        return self

    def angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.beam_count) / self.beam_count


def raycast(env: Environment, sensor_pose: Pose2, cfg: LidarConfig,
            rng: np.random.Generator) -> np.ndarray:
    """Noisy normalized scan in [0, 1]. Beam i points at angle 2*pi*i/beam_count
    in the sensor frame."""
    cfg.validate()
    true_ranges = kernels.raycast_ranges(
        sensor_pose.x, sensor_pose.y, sensor_pose.yaw, cfg.angles(),
        cfg.max_range, env.circles, env.boxes, env.walls,
    )
    if cfg.noise_std > 0:
        true_ranges = true_ranges + rng.normal(0.0, cfg.noise_std, cfg.beam_count)
    return np.clip(true_ranges / cfg.max_range, 0.0, 1.0)
