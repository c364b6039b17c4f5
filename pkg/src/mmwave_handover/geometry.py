"""Zone geometry, BS placement and slot-sampled UE trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KMH_TO_MS = 1000.0 / 3600.0

DEFAULT_BS_HEIGHT_M = 10.0
DEFAULT_UE_HEIGHT_M = 1.5

# Probability per slot of drawing a fresh random heading.
TURN_PROBABILITY = 0.05


class ConfigError(ValueError):
    """A scenario configuration value is invalid or inconsistent."""


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float


def distance_3d(a: Point3, b: Point3) -> float:
    """Euclidean distance between two points in meters."""
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


@dataclass(frozen=True)
class Zone:
    """Rectangular service area [0, width] x [0, depth] with fixed BS sites."""

    width: float
    depth: float
    bs_positions: tuple[Point3, ...]

    def __post_init__(self):
        if self.width <= 0 or self.depth <= 0:
            raise ConfigError("zone dimensions must be positive")
        for p in self.bs_positions:
            if not self.contains(p):
                raise ConfigError(f"BS position {p} outside zone")

    @property
    def n_bs(self) -> int:
        return len(self.bs_positions)

    def contains(self, p: Point3) -> bool:
        return 0.0 <= p.x <= self.width and 0.0 <= p.y <= self.depth


@dataclass
class Trajectory:
    """Per-slot UE positions; consecutive points are one slot step apart."""

    ue_id: int
    speed_kmh: float
    positions: list[Point3]


def generate_trajectory(
    seed,
    speed_kmh: float,
    zone: Zone,
    duration_s: float,
    slot_s: float,
    ue_id: int = 0,
    ue_height_m: float = DEFAULT_UE_HEIGHT_M,
) -> Trajectory:
    """Random-waypoint-style path: straight motion with specular wall bounces.

    The heading is re-randomized with a small per-slot probability; every
    consecutive pair of points is exactly ``speed * slot`` apart in the
    plane (a bounce changes direction, never step length).
    """
    if duration_s <= 0 or slot_s <= 0 or speed_kmh <= 0:
        raise ConfigError("duration, slot and speed must be positive")
    step = speed_kmh * KMH_TO_MS * slot_s
    # One flipped step must always stay inside; needs half-zone headroom.
    if step > min(zone.width, zone.depth) / 2.0:
        raise ConfigError(
            f"zone too small to hold one step: step {step:.3f} m "
            f"vs zone {zone.width:.1f} x {zone.depth:.1f} m"
        )
    rng = np.random.default_rng(seed)
    n_steps = int(math.floor(duration_s / slot_s))
    x = rng.uniform(0.0, zone.width)
    y = rng.uniform(0.0, zone.depth)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    points = [Point3(x, y, ue_height_m)]
    for _ in range(n_steps):
        if rng.random() < TURN_PROBABILITY:
            heading = rng.uniform(0.0, 2.0 * math.pi)
        dx = step * math.cos(heading)
        dy = step * math.sin(heading)
        # Specular bounce: flip the offending component; the step length
        # |(dx, dy)| is unchanged and the flipped step lands inside because
        # step <= half the zone extent.
        if x + dx < 0.0 or x + dx > zone.width:
            dx = -dx
        if y + dy < 0.0 or y + dy > zone.depth:
            dy = -dy
        x += dx
        y += dy
        heading = math.atan2(dy, dx)
        points.append(Point3(x, y, ue_height_m))
    return Trajectory(ue_id=ue_id, speed_kmh=speed_kmh, positions=points)


def default_bs_grid(zone_width: float, zone_depth: float,
                    height_m: float = DEFAULT_BS_HEIGHT_M) -> tuple[Point3, ...]:
    """Four BSs at the quadrant centers of the zone."""
    return (
        Point3(zone_width * 0.25, zone_depth * 0.25, height_m),
        Point3(zone_width * 0.75, zone_depth * 0.25, height_m),
        Point3(zone_width * 0.25, zone_depth * 0.75, height_m),
        Point3(zone_width * 0.75, zone_depth * 0.75, height_m),
    )
