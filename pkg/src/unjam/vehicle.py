"""Kinematic bicycle model with actuation limits.

State lives at the rear axle: (x, y, heading, speed). Controls are
(accel, steer) and are saturated, never rejected, so samplers can perturb
them freely. The batched kernels below are what the controllers actually
call; the scalar functions are the same math on single states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import OrientedRectangle, wrap_angle

STOPPED_SPEED = 0.05  # [m/s] |speed| below this counts as standing still


@dataclass(frozen=True)
class VehicleState:
    """Rear-axle pose plus signed longitudinal speed."""

    x: float
    y: float
    heading: float
    speed: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading, self.speed])


@dataclass(frozen=True)
class ControlInput:
    """Longitudinal acceleration [m/s^2] and front-wheel angle [rad]."""

    accel: float
    steer: float

    def as_array(self) -> np.ndarray:
        return np.array([self.accel, self.steer])


@dataclass(frozen=True)
class VehicleParams:
    """Geometry and actuation limits.

    The body rectangle is centered on the wheelbase midpoint, so the
    footprint extends (body_length - wheelbase) / 2 beyond each axle.
    max_speed_change_per_step is the comfort bound used by the velocity
    rule, not a dynamics limit: max_accel * dt may exceed it.
    """

    wheelbase: float = 2.5
    body_length: float = 4.5
    body_width: float = 1.8
    max_speed: float = 8.0
    min_speed: float = -2.0
    max_steer: float = 0.55
    max_accel: float = 4.0
    max_speed_change_per_step: float = 0.3

    def __post_init__(self):
        if not (self.wheelbase > 0 and self.body_length > 0 and self.body_width > 0):
            raise ValueError("vehicle dimensions must be positive")
        if not 0.0 < self.max_steer < math.pi / 2:
            raise ValueError("max_steer must lie in (0, pi/2)")
        if not self.min_speed <= 0.0 <= self.max_speed:
            raise ValueError("speed range must straddle zero")

    @staticmethod
    def road_car() -> "VehicleParams":
        """Compact-car preset for the road-scale scenarios."""
        return VehicleParams()

    @staticmethod
    def scaled_car() -> "VehicleParams":
        """1/10-scale preset for the narrow_front / boxed_in scenarios."""
        return VehicleParams(
            wheelbase=0.3,
            body_length=0.44,
            body_width=0.28,
            max_speed=1.5,
            min_speed=-0.5,
            max_steer=0.42,
            max_accel=1.5,
            max_speed_change_per_step=0.12,
        )


@dataclass
class Trajectory:
    """A rolled-out state sequence with the controls that produced it."""

    states: list
    controls: list
    dt: float

    def __post_init__(self):
        if len(self.states) < 1:
            raise ValueError("trajectory needs at least one state")
        if len(self.controls) != len(self.states) - 1:
            raise ValueError("need exactly len(states) - 1 controls")

    def __len__(self) -> int:
        return len(self.states)

    def as_array(self) -> np.ndarray:
        """States stacked as an (N, 4) array of [x, y, heading, speed]."""
        return np.array([[s.x, s.y, s.heading, s.speed] for s in self.states])

    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.dt


def step(
    state: VehicleState, u: ControlInput, params: VehicleParams, dt: float
) -> VehicleState:
    """Advance one Euler step of the rear-axle bicycle model.

    Args:
        state: current state; all fields must be finite.
        u: commanded (accel, steer); saturated to the actuation limits.
        params: vehicle geometry and limits.
        dt: step length in seconds, > 0.

    Returns:
        The successor state with heading wrapped to (-pi, pi] and speed
        clamped to [min_speed, max_speed].
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    vals = (state.x, state.y, state.heading, state.speed, u.accel, u.steer)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("non-finite state or control field")
    a = min(max(u.accel, -params.max_accel), params.max_accel)
    d = min(max(u.steer, -params.max_steer), params.max_steer)
    x = state.x + state.speed * math.cos(state.heading) * dt
    y = state.y + state.speed * math.sin(state.heading) * dt
    heading = wrap_angle(state.heading + state.speed / params.wheelbase * math.tan(d) * dt)
    speed = min(max(state.speed + a * dt, params.min_speed), params.max_speed)
    return VehicleState(x, y, heading, speed)


def rollout(
    start: VehicleState, controls, params: VehicleParams, dt: float
) -> Trajectory:
    """Fold `step` over a control sequence.

    Args:
        start: initial state.
        controls: non-empty sequence of ControlInput.
        params: vehicle parameters.
        dt: step length.

    Returns:
        Trajectory with len(controls) + 1 states.
    """
    controls = list(controls)
    if not controls:
        raise ValueError("empty control sequence")
    states = [start]
    for u in controls:
        states.append(step(states[-1], u, params, dt))
    return Trajectory(states=states, controls=controls, dt=dt)


def footprint(state: VehicleState, params: VehicleParams) -> OrientedRectangle:
    """Body rectangle of the vehicle at a state.

    The rectangle is body_length x body_width, centered half a wheelbase
    ahead of the rear axle (symmetric overhangs), rotated by heading.
    """
    off = 0.5 * params.wheelbase
    return OrientedRectangle(
        cx=state.x + off * math.cos(state.heading),
        cy=state.y + off * math.sin(state.heading),
        heading=state.heading,
        length=params.body_length,
        width=params.body_width,
    )


def footprint_poses(states: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Map (N, >=3) state rows to (N, 3) body-center poses."""
    states = np.atleast_2d(states)
    off = 0.5 * params.wheelbase
    out = np.empty((states.shape[0], 3))
    out[:, 0] = states[:, 0] + off * np.cos(states[:, 2])
    out[:, 1] = states[:, 1] + off * np.sin(states[:, 2])
    out[:, 2] = states[:, 2]
    return out


def step_batch(
    states: np.ndarray, controls: np.ndarray, params: VehicleParams, dt: float
) -> np.ndarray:
    """Vectorized step: (N, 4) states x (N, 2) controls -> (N, 4)."""
    a = np.clip(controls[:, 0], -params.max_accel, params.max_accel)
    d = np.clip(controls[:, 1], -params.max_steer, params.max_steer)
    v = states[:, 3]
    out = np.empty_like(states)
    out[:, 0] = states[:, 0] + v * np.cos(states[:, 2]) * dt
    out[:, 1] = states[:, 1] + v * np.sin(states[:, 2]) * dt
    out[:, 2] = wrap_angle(states[:, 2] + v / params.wheelbase * np.tan(d) * dt)
    out[:, 3] = np.clip(v + a * dt, params.min_speed, params.max_speed)
    return out


def rollout_batch(
    start: np.ndarray, controls: np.ndarray, params: VehicleParams, dt: float
) -> np.ndarray:
    """Roll out K control sequences from one start state.

    Args:
        start: (4,) initial [x, y, heading, speed].
        controls: (K, T, 2) accel/steer sequences.
        params: vehicle parameters.
        dt: step length.

    Returns:
        (K, T + 1, 4) state array; [:, 0] is the start state broadcast.
    """
    k, t, _ = controls.shape
    out = np.empty((k, t + 1, 4))
    out[:, 0] = start
    for i in range(t):
        out[:, i + 1] = step_batch(out[:, i], controls[:, i], params, dt)
    return out
