"""Bicycle-model dynamics, actuation saturation, and footprint geometry."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from unjam.vehicle import (
    ControlInput,
    Trajectory,
    VehicleParams,
    VehicleState,
    footprint,
    rollout,
    rollout_batch,
    step,
    step_batch,
)

P = VehicleParams.road_car()

speeds = st.floats(P.min_speed, P.max_speed)
accels = st.floats(-6.0, 6.0)  # deliberately beyond max_accel
steers = st.floats(-1.0, 1.0)  # beyond max_steer
headings = st.floats(-np.pi, np.pi)


def test_step_straight_line():
    s = step(VehicleState(0, 0, 0, 1.0), ControlInput(0, 0), P, 0.1)
    assert (s.x, s.y, s.heading, s.speed) == pytest.approx((0.1, 0, 0, 1.0))


def test_step_zero_speed_steer_does_nothing():
    s = step(VehicleState(0, 0, 0, 0.0), ControlInput(0, 0.35), P, 0.1)
    assert (s.x, s.y, s.heading, s.speed) == pytest.approx((0, 0, 0, 0))


def test_step_heading_increment():
    s = step(VehicleState(0, 0, 0, 2.0), ControlInput(0, 0.2), P, 0.1)
    assert s.heading == pytest.approx(2.0 / 2.5 * math.tan(0.2) * 0.1, abs=1e-12)


def test_turning_radius_against_circle_fit():
    # constant steer traces a circle of radius wheelbase / tan(steer)
    delta, v, dt = 0.2, 2.0, 0.1
    state = VehicleState(0, 0, 0, v)
    pts = []
    for _ in range(5000):
        state = step(state, ControlInput(0.0, delta), P, dt)
        pts.append((state.x, state.y))
    pts = np.array(pts)
    center = pts.mean(axis=0)
    radii = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1])
    expected = P.wheelbase / math.tan(delta)
    assert radii.mean() == pytest.approx(expected, rel=1e-2)
    assert radii.std() < 0.01 * expected


def test_step_rejects_non_finite():
    with pytest.raises(ValueError):
        step(VehicleState(np.nan, 0, 0, 0), ControlInput(0, 0), P, 0.1)
    with pytest.raises(ValueError):
        step(VehicleState(0, 0, 0, 1), ControlInput(np.inf, 0), P, 0.1)
    with pytest.raises(ValueError):
        step(VehicleState(0, 0, 0, 1), ControlInput(0, 0), P, 0.0)


def test_step_saturates_controls():
    hot = step(VehicleState(0, 0, 0, 1.0), ControlInput(99.0, 9.0), P, 0.1)
    clamped = step(
        VehicleState(0, 0, 0, 1.0), ControlInput(P.max_accel, P.max_steer), P, 0.1
    )
    assert (hot.x, hot.y, hot.heading, hot.speed) == (
        clamped.x, clamped.y, clamped.heading, clamped.speed,
    )


@given(st.floats(-20, 20), st.floats(-20, 20), headings, speeds, accels, steers)
def test_step_speed_clamp_and_heading_wrap(x, y, heading, speed, accel, steer):
    s = step(VehicleState(x, y, heading, speed), ControlInput(accel, steer), P, 0.1)
    assert P.min_speed - 1e-12 <= s.speed <= P.max_speed + 1e-12
    assert abs(s.speed - speed) <= P.max_accel * 0.1 + 1e-12
    assert -np.pi < s.heading <= np.pi + 1e-12


@given(headings, st.floats(-1.7, 1.7), st.floats(-1.5, 1.5), st.floats(-0.5, 0.5))
def test_step_reverse_mirror_undo(heading, speed, accel, steer):
    """Mirroring speed and re-applying the same control retraces the step.

    From the successor with speed negated, one step with the same
    (accel, steer) lands back at the start pose with speed -v0, up to
    the Euler discretization error, which is O(dt^2).
    """
    dt = 0.1
    s0 = VehicleState(0.0, 0.0, heading, speed)
    # stay clear of the speed clamps: both v1 and its negation must fit,
    # and min_speed is much tighter than max_speed
    limit = -P.min_speed - 0.1
    if not (abs(speed) <= limit and abs(speed + accel * dt) <= limit):
        return
    s1 = step(s0, ControlInput(accel, steer), P, dt)
    mirrored = VehicleState(s1.x, s1.y, s1.heading, -s1.speed)
    s2 = step(mirrored, ControlInput(accel, steer), P, dt)
    tol = 10 * dt * dt
    assert s2.x == pytest.approx(s0.x, abs=tol)
    assert s2.y == pytest.approx(s0.y, abs=tol)
    assert s2.heading == pytest.approx(s0.heading, abs=tol)
    assert s2.speed == pytest.approx(-s0.speed, abs=1e-12)


def test_rollout_straight_and_length():
    tr = rollout(VehicleState(0, 0, 0, 1.0), [ControlInput(0, 0)] * 50, P, 0.1)
    assert len(tr) == 51
    assert tr.states[-1].x == pytest.approx(5.0, abs=1e-12)
    assert tr.states[-1].y == 0.0


def test_rollout_empty_controls_rejected():
    with pytest.raises(ValueError):
        rollout(VehicleState(0, 0, 0, 1.0), [], P, 0.1)


def test_rollout_constant_steer_heading_sweep():
    n, v, delta, dt = 100, 2.0, 0.2, 0.1
    tr = rollout(VehicleState(0, 0, 0, v), [ControlInput(0, delta)] * n, P, dt)
    expected = n * (v / P.wheelbase) * math.tan(delta) * dt
    expected = (expected + np.pi) % (2 * np.pi) - np.pi
    assert tr.states[-1].heading == pytest.approx(expected, abs=1e-9)


def test_trajectory_resimulates_exactly():
    rng = np.random.default_rng(3)
    controls = [
        ControlInput(a, d)
        for a, d in zip(rng.uniform(-3, 3, 40), rng.uniform(-0.5, 0.5, 40))
    ]
    tr = rollout(VehicleState(1, -2, 0.3, 1.5), controls, P, 0.1)
    for s, u, s_next in zip(tr.states, tr.controls, tr.states[1:]):
        r = step(s, u, P, tr.dt)
        assert abs(r.x - s_next.x) <= 1e-9
        assert abs(r.y - s_next.y) <= 1e-9
        assert abs(r.heading - s_next.heading) <= 1e-9
        assert abs(r.speed - s_next.speed) <= 1e-9


def test_trajectory_validates_lengths():
    with pytest.raises(ValueError):
        Trajectory(states=[], controls=[], dt=0.1)
    with pytest.raises(ValueError):
        Trajectory(
            states=[VehicleState(0, 0, 0, 0)], controls=[ControlInput(0, 0)], dt=0.1
        )


def test_footprint_axis_aligned():
    rect = footprint(VehicleState(0, 0, 0, 0), P)
    # body is centered on the wheelbase midpoint, ahead of the rear axle
    assert rect.cx == pytest.approx(P.wheelbase / 2)
    assert rect.cy == 0.0
    c = rect.corners()
    assert c[:, 0].max() == pytest.approx(P.wheelbase / 2 + P.body_length / 2)
    assert c[:, 1].max() == pytest.approx(P.body_width / 2)


def test_footprint_rotated_by_rotation_matrix():
    h = np.pi / 4
    rect = footprint(VehicleState(1.0, 2.0, h, 0), P)
    assert rect.heading == h
    assert rect.cx == pytest.approx(1.0 + P.wheelbase / 2 * np.cos(h))
    assert rect.cy == pytest.approx(2.0 + P.wheelbase / 2 * np.sin(h))


def test_params_validation():
    with pytest.raises(ValueError):
        VehicleParams(wheelbase=-1.0)
    with pytest.raises(ValueError):
        VehicleParams(max_steer=2.0)
    with pytest.raises(ValueError):
        VehicleParams(min_speed=0.5)


def test_step_batch_matches_scalar():
    rng = np.random.default_rng(11)
    states = np.column_stack(
        [
            rng.uniform(-5, 5, 64),
            rng.uniform(-5, 5, 64),
            rng.uniform(-np.pi, np.pi, 64),
            rng.uniform(P.min_speed, P.max_speed, 64),
        ]
    )
    controls = np.column_stack(
        [rng.uniform(-6, 6, 64), rng.uniform(-1, 1, 64)]
    )
    out = step_batch(states, controls, P, 0.1)
    for i in range(64):
        s = step(
            VehicleState(*states[i]),
            ControlInput(controls[i, 0], controls[i, 1]),
            P,
            0.1,
        )
        assert out[i] == pytest.approx([s.x, s.y, s.heading, s.speed], abs=1e-12)


def test_rollout_batch_matches_scalar_rollout():
    rng = np.random.default_rng(12)
    controls = rng.uniform(-1, 1, size=(5, 30, 2))
    start = VehicleState(0.5, -0.5, 0.2, 1.0)
    batch = rollout_batch(start.as_array(), controls, P, 0.1)
    assert batch.shape == (5, 31, 4)
    for k in range(5):
        tr = rollout(
            start, [ControlInput(a, d) for a, d in controls[k]], P, 0.1
        )
        assert batch[k] == pytest.approx(tr.as_array(), abs=1e-12)
