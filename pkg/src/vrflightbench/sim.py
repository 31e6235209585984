"""Deterministic fixed-timestep drone kinematics plus task geometry predicates.

The vehicle is a velocity-tracked point with a small axis-aligned body box.
Frame convention: x forward, y right, z up, ground plane at z = 0.  All
stepping is closed-form per tick, so identical inputs reproduce identical
float sequences bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .tasks import TaskInstance


class InvariantViolation(ValueError):
    """A state, config, or input broke a structural invariant."""


@dataclass(frozen=True)
class Vec3:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scale(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


ZERO = Vec3(0.0, 0.0, 0.0)

# Body box half extents: 0.18 m x 0.18 m footprint, 0.05 m assumed height.
DRONE_HALF_HEIGHT = 0.025
# Square cross-section of the door-frame border beams, meters.
FRAME_BORDER = 0.05

WEATHER_TAGS = ("sunshine", "rain", "fog")


@dataclass(frozen=True)
class DroneState:
    """One kinematic sample: time, position, velocity, acceleration, collision flag."""

    t: float = 0.0
    pos: Vec3 = ZERO
    vel: Vec3 = ZERO
    acc: Vec3 = ZERO
    collided: bool = False

    def is_finite(self) -> bool:
        return (
            math.isfinite(self.t)
            and self.pos.is_finite()
            and self.vel.is_finite()
            and self.acc.is_finite()
        )


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.010          # tick length, s
    tau: float = 0.3           # velocity time constant, s
    v_max: float = 2.0         # command speed cap, m/s
    landing_alt: float = 0.05  # landed when at or below, m
    landing_speed: float = 0.25  # landed when at or below, m/s
    drone_half_extent: float = 0.09  # half of the 0.18 m body width, m

    def __post_init__(self) -> None:
        if not (self.dt > 0 and self.tau > 0 and self.v_max > 0):
            raise InvariantViolation("dt, tau, and v_max must be positive")
        if self.drone_half_extent <= 0:
            raise InvariantViolation("drone_half_extent must be positive")


@dataclass(frozen=True)
class EnvironmentParams:
    wind: Vec3 = ZERO
    weather_tag: str = "sunshine"  # rendering only, never touches kinematics

    def __post_init__(self) -> None:
        if not self.wind.is_finite():
            raise InvariantViolation("wind must be finite")
        if self.weather_tag not in WEATHER_TAGS:
            raise InvariantViolation(f"unknown weather_tag {self.weather_tag!r}")


@dataclass(frozen=True)
class WorldScene:
    """Static scene: fixed first-person camera plus two orientation landmarks."""

    camera_pos: Vec3 = Vec3(0.0, 0.0, 1.65)
    camera_fov_deg: float = 90.0
    landmarks: tuple = (
        ("triangular_pyramid", Vec3(4.0, -2.5, 0.0)),
        ("cube", Vec3(4.0, 2.5, 0.0)),
    )
    task: Optional["TaskInstance"] = None


def step(state: DroneState, cmd_vel: Vec3, env: EnvironmentParams, cfg: SimConfig) -> DroneState:
    """Advance one tick of first-order velocity tracking.

    With a = exp(-dt/tau):  vel' = a*vel + (1-a)*(cmd + wind), pos' = pos + vel'*dt.
    Ground contact clamps z to 0 and zeroes the vertical velocity (no bounce).
    The reported acc is exactly (vel' - vel)/dt so logged accelerations are the
    finite difference of logged velocities.
    """
    if not state.is_finite():
        raise InvariantViolation("non-finite drone state")
    if not cmd_vel.is_finite():
        raise InvariantViolation("non-finite commanded velocity")

    alpha = math.exp(-cfg.dt / cfg.tau)
    beta = 1.0 - alpha
    vx = alpha * state.vel.x + beta * (cmd_vel.x + env.wind.x)
    vy = alpha * state.vel.y + beta * (cmd_vel.y + env.wind.y)
    vz = alpha * state.vel.z + beta * (cmd_vel.z + env.wind.z)

    px = state.pos.x + vx * cfg.dt
    py = state.pos.y + vy * cfg.dt
    pz = state.pos.z + vz * cfg.dt
    if pz < 0.0:
        pz = 0.0
        if vz < 0.0:
            vz = 0.0

    vel = Vec3(vx, vy, vz)
    acc = Vec3(
        (vel.x - state.vel.x) / cfg.dt,
        (vel.y - state.vel.y) / cfg.dt,
        (vel.z - state.vel.z) / cfg.dt,
    )
    return DroneState(t=state.t + cfg.dt, pos=Vec3(px, py, pz), vel=vel, acc=acc)


def check_crossing_trigger(
    prev: DroneState, curr: DroneState, task: "TaskInstance", cfg: SimConfig
) -> bool:
    """True iff the drone center crossed the frame plane through the shrunk opening.

    The opening is shrunk by drone_half_extent on both lateral axes so a pass
    that would scrape the border does not count as a success.
    """
    plane_x = task.target_center.x
    prev_off = prev.pos.x - plane_x
    curr_off = curr.pos.x - plane_x
    crossed = (prev_off < 0.0 and curr_off >= 0.0) or (prev_off > 0.0 and curr_off <= 0.0)
    if not crossed or prev_off == curr_off:
        return False

    # Interpolated point where the center pierces the plane.
    t = prev_off / (prev_off - curr_off)
    cy = prev.pos.y + t * (curr.pos.y - prev.pos.y)
    cz = prev.pos.z + t * (curr.pos.z - prev.pos.z)
    half = task.width / 2.0 - cfg.drone_half_extent
    if half <= 0.0:
        return False
    return abs(cy - task.target_center.y) < half and abs(cz - task.target_center.z) < half


def check_landing(state: DroneState, task: "TaskInstance", cfg: SimConfig) -> bool:
    """True iff the drone sits slow and low over the landing plate."""
    if state.pos.z > cfg.landing_alt:
        return False
    if state.vel.norm() > cfg.landing_speed:
        return False
    half = task.width / 2.0
    return (
        abs(state.pos.x - task.target_center.x) <= half
        and abs(state.pos.y - task.target_center.y) <= half
    )


def _frame_beams(task: "TaskInstance") -> list[tuple[float, float, float, float, float, float]]:
    """Axis-aligned boxes tiling the door-frame border around the opening.

    Returned as (min_x, max_x, min_y, max_y, min_z, max_z).  Side beams span
    the full outer height so the four boxes tile the border exactly once.
    """
    cx, cy, cz = task.target_center.as_tuple()
    half = task.width / 2.0
    outer = half + FRAME_BORDER
    x0, x1 = cx - FRAME_BORDER / 2.0, cx + FRAME_BORDER / 2.0
    return [
        (x0, x1, cy - outer, cy - half, cz - outer, cz + outer),  # left
        (x0, x1, cy + half, cy + outer, cz - outer, cz + outer),  # right
        (x0, x1, cy - half, cy + half, cz - outer, cz - half),    # bottom
        (x0, x1, cy - half, cy + half, cz + half, cz + outer),    # top
    ]


def detect_collision(
    prev: DroneState, curr: DroneState, task: "TaskInstance", cfg: SimConfig
) -> Optional[Vec3]:
    """Body-box vs frame-border overlap test at curr.

    Returns the point on the border closest to the drone center when the
    boxes overlap, else None.  Only the crossing frame is solid; the pointing
    plate is flush with the ground.
    """
    he = cfg.drone_half_extent
    px, py, pz = curr.pos.as_tuple()
    dmin = (px - he, py - he, pz - DRONE_HALF_HEIGHT)
    dmax = (px + he, py + he, pz + DRONE_HALF_HEIGHT)

    hit = False
    best: Optional[Vec3] = None
    best_d = math.inf
    for box in _frame_beams(task):
        (x0, x1, y0, y1, z0, z1) = box
        if dmax[0] >= x0 and dmin[0] <= x1 and dmax[1] >= y0 and dmin[1] <= y1 \
                and dmax[2] >= z0 and dmin[2] <= z1:
            hit = True
        point, dist = _closest_surface_point(box, px, py, pz)
        if dist < best_d:
            best_d = dist
            best = point
    return best if hit else None


def _closest_surface_point(
    box: tuple[float, float, float, float, float, float], px: float, py: float, pz: float
) -> tuple[Vec3, float]:
    """Nearest point on the box surface; a center inside the box snaps to the
    nearest face."""
    (x0, x1, y0, y1, z0, z1) = box
    qx = min(max(px, x0), x1)
    qy = min(max(py, y0), y1)
    qz = min(max(pz, z0), z1)
    if (qx, qy, qz) != (px, py, pz):
        dist = math.sqrt((qx - px) ** 2 + (qy - py) ** 2 + (qz - pz) ** 2)
        return Vec3(qx, qy, qz), dist
    # Interior: pick the face with the smallest penetration depth.
    faces = (
        (px - x0, Vec3(x0, py, pz)),
        (x1 - px, Vec3(x1, py, pz)),
        (py - y0, Vec3(px, y0, pz)),
        (y1 - py, Vec3(px, y1, pz)),
        (pz - z0, Vec3(px, py, z0)),
        (z1 - pz, Vec3(px, py, z1)),
    )
    depth, point = min(faces, key=lambda f: f[0])
    return point, depth


def advance(
    prev: DroneState,
    cmd_vel: Vec3,
    task: "TaskInstance",
    env: EnvironmentParams,
    cfg: SimConfig,
) -> tuple[DroneState, Optional[Vec3]]:
    """One runner tick: step the kinematics, then flag frame contact.

    This is the single routine both the live runner and the log replayer use,
    which is what makes regenerated trajectories bit-identical.
    """
    nxt = step(prev, cmd_vel, env, cfg)
    contact = None
    if task.condition.kind == "crossing":
        contact = detect_collision(prev, nxt, task, cfg)
        if contact is not None:
            nxt = replace(nxt, collided=True)
    return nxt, contact
