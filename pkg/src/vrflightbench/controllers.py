"""Input-to-velocity mappings for the two studied interfaces, a keyboard
fallback, and a proportional bot pilot for headless runs."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .sim import DroneState, Vec3, ZERO
from .tasks import KIND_CROSSING, TaskInstance

# Below this force level the one-handed interface commands a hover.
PRESSURE_HOVER_THRESHOLD = 0.02

# Keyboard keys are held at half scale per axis.
KEYBOARD_SCALE = 0.5

PAD_IDS = ("left", "right", "mono")


@dataclass(frozen=True)
class TouchSample:
    """One pad sample: position in [-1, 1]^2 about the pad midpoint, plus force."""

    pad_id: str
    u: float = 0.0
    v: float = 0.0
    pressure: float = 0.0
    active: bool = True

    def __post_init__(self) -> None:
        if self.pad_id not in PAD_IDS:
            raise ValueError(f"unknown pad_id {self.pad_id!r}")
        if self.u * self.u + self.v * self.v > 2.0 + 1e-12:
            raise ValueError("touch point outside pad")
        if not 0.0 <= self.pressure <= 1.0:
            raise ValueError("pressure outside [0, 1]")
        if not self.active and self.pressure != 0.0:
            raise ValueError("inactive sample must carry zero pressure")


IDLE_LEFT = TouchSample(pad_id="left", active=False)
IDLE_RIGHT = TouchSample(pad_id="right", active=False)


@dataclass(frozen=True)
class AdapterConfig:
    s_max: float = 2.0       # speed at full deflection / full force, m/s
    deadzone: float = 0.1    # normalized radius around each pad midpoint
    yaw_rate_max: float = math.pi / 2.0  # rad/s at full deflection

    def __post_init__(self) -> None:
        if not 0.0 <= self.deadzone < 1.0:
            raise ValueError("deadzone must be in [0, 1)")
        if self.s_max <= 0.0:
            raise ValueError("s_max must be positive")


def _radial_scale(r: float, deadzone: float) -> float:
    return max(r - deadzone, 0.0) / (1.0 - deadzone)


def _axis_scale(x: float, deadzone: float) -> float:
    return math.copysign(_radial_scale(abs(x), deadzone), x)


def _clamp_speed(v: Vec3, s_max: float) -> Vec3:
    speed = v.norm()
    if speed <= s_max or speed == 0.0:
        return v
    return v.scale(s_max / speed)


def two_button_map(
    left: TouchSample, right: TouchSample, cfg: AdapterConfig = AdapterConfig()
) -> tuple[Vec3, float]:
    """Baseline two-pad mapping: speed grows with distance from each pad midpoint.

    Right pad drives the horizontal plane (u -> vx, v -> vy), the left pad's
    vertical axis drives climb and its horizontal axis the yaw rate (which the
    kinematics ignore).  An inactive pad contributes nothing; the combined
    command is capped at s_max.
    """
    vx = vy = vz = 0.0
    yaw_rate = 0.0
    if right.active:
        r = math.hypot(right.u, right.v)
        scale = _radial_scale(r, cfg.deadzone)
        if r > 0.0 and scale > 0.0:
            vx = cfg.s_max * scale * right.u / r
            vy = cfg.s_max * scale * right.v / r
    if left.active:
        vz = cfg.s_max * _axis_scale(left.v, cfg.deadzone)
        yaw_rate = cfg.yaw_rate_max * _axis_scale(left.u, cfg.deadzone)
    return _clamp_speed(Vec3(vx, vy, vz), cfg.s_max), yaw_rate


def one_handed_map(
    mono: TouchSample, mode: str = "horizontal", cfg: AdapterConfig = AdapterConfig()
) -> Vec3:
    """One-handed mapping: thumb position sets direction, force sets speed.

    Pad-up means forward in horizontal mode and up in vertical mode; pad-right
    is rightward in both.  Force below the hover threshold commands zero.
    """
    if mode not in ("horizontal", "vertical"):
        raise ValueError(f"unknown one-handed mode {mode!r}")
    if not mono.active or mono.pressure < PRESSURE_HOVER_THRESHOLD:
        return ZERO
    r = math.hypot(mono.u, mono.v)
    if r == 0.0:
        return ZERO
    speed = cfg.s_max * mono.pressure
    along = speed * mono.v / r   # pad vertical axis
    across = speed * mono.u / r  # pad horizontal axis
    if mode == "horizontal":
        return Vec3(along, across, 0.0)
    return Vec3(0.0, across, along)


def keyboard_map(keys_down: set[str], cfg: AdapterConfig = AdapterConfig()) -> Vec3:
    """Fixed-speed key mapping; opposing keys cancel."""
    speed = KEYBOARD_SCALE * cfg.s_max
    return Vec3(
        speed * (("forward" in keys_down) - ("back" in keys_down)),
        speed * (("right" in keys_down) - ("left" in keys_down)),
        speed * (("up" in keys_down) - ("down" in keys_down)),
    )


@dataclass(frozen=True)
class BotGains:
    kp: float = 1.2               # 1/s
    descend_speed: float = 0.4    # m/s
    waypoint_tolerance: float = 0.1  # m

    def __post_init__(self) -> None:
        if min(self.kp, self.descend_speed, self.waypoint_tolerance) <= 0.0:
            raise ValueError("bot gains must be positive")


class BotPilot:
    """Deterministic proportional pursuit pilot, one instance per trial.

    Crossing: chase the frame center, and once near it (or already at the
    plane) aim half a meter past the opening so the plane actually gets
    crossed; go idle once the plane is reached.  Pointing: chase a hover point
    above the plate, then latch into a descent with proportional centering
    until the landing predicate fires.
    """

    PASS_THROUGH = 0.5  # m past the frame plane / above the plate center

    def __init__(self, task: TaskInstance, gains: BotGains = BotGains(), s_max: float = 2.0):
        self.task = task
        self.gains = gains
        self.s_max = s_max
        self._committed = False  # crossing: aiming past the plane / pointing: descending

    def step(self, state: DroneState) -> Vec3:
        if self.task.condition.kind == KIND_CROSSING:
            return self._step_crossing(state)
        return self._step_pointing(state)

    def _pursue(self, pos: Vec3, target: Vec3) -> Vec3:
        return _clamp_speed((target - pos).scale(self.gains.kp), self.s_max)

    def _step_crossing(self, state: DroneState) -> Vec3:
        center = self.task.target_center
        if state.pos.x >= center.x:
            return ZERO  # at or past the plane: trial is over
        if not self._committed and (center - state.pos).norm() <= self.gains.waypoint_tolerance:
            self._committed = True
        target = Vec3(center.x + self.PASS_THROUGH, center.y, center.z) if self._committed else center
        return self._pursue(state.pos, target)

    def _step_pointing(self, state: DroneState) -> Vec3:
        center = self.task.target_center
        ex = center.x - state.pos.x
        ey = center.y - state.pos.y
        if not self._committed and math.hypot(ex, ey) <= self.gains.waypoint_tolerance:
            self._committed = True
        if self._committed:
            cmd = Vec3(self.gains.kp * ex, self.gains.kp * ey, -self.gains.descend_speed)
            return _clamp_speed(cmd, self.s_max)
        hover = Vec3(center.x, center.y, center.z + self.PASS_THROUGH)
        return self._pursue(state.pos, hover)
