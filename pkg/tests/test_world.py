"""World queries: clearance, collision, lane containment, oncoming occupancy."""

import numpy as np
import pytest
from shapely.geometry import Polygon

from unjam.geometry import poses_rect_signed
from unjam.vehicle import VehicleParams, VehicleState, footprint, footprint_poses
from unjam.world import (
    GoalRegion,
    LaneSegment,
    Obstacle,
    RuleParams,
    Scenario,
    ScenarioError,
    batch_in_corridor,
    batch_min_obstacle_distance,
    batch_road_contained,
    in_collision,
    min_obstacle_distance,
    obstacle_route_intervals,
    oncoming_lane_free,
)

P = VehicleParams.road_car()


def straight_lane(y=0.0, width=3.5, direction="ego_direction", id="lane"):
    return LaneSegment(
        np.array([[-30.0, y], [30.0, y]]), width, direction, id
    )


def simple_scenario(obstacles, lanes=None, goal_x=25.0):
    return Scenario(
        lanes=lanes or [straight_lane()],
        obstacles=obstacles,
        ego_start=VehicleState(-20.0, 0.0, 0.0, 0.0),
        goal=GoalRegion((goal_x, 0.0), 1.0),
        vehicle_params=P,
    )


def test_min_distance_no_obstacles_is_sentinel():
    sc = simple_scenario([])
    assert min_obstacle_distance(VehicleState(0, 0, 0, 0), sc) == float("inf")
    out = batch_min_obstacle_distance(np.zeros((3, 4)), sc, cap=7.0)
    assert out == pytest.approx([7.0, 7.0, 7.0])


def test_min_distance_matches_shapely():
    ob = Obstacle((6.0, 0.4), 0.3, 4.2, 1.7)
    sc = simple_scenario([ob])
    state = VehicleState(0.0, -0.2, 0.1, 0.0)
    d = min_obstacle_distance(state, sc)
    ego = Polygon(footprint(state, P).corners())
    other = Polygon(ob.rect.corners())
    assert d == pytest.approx(ego.distance(other), abs=1e-9)


def test_batch_min_distance_matches_per_obstacle_min(rng):
    obstacles = [
        Obstacle(tuple(rng.uniform(-8, 8, 2)), rng.uniform(-3, 3), 3.0, 1.5, f"ob{i}")
        for i in range(6)
    ]
    sc = simple_scenario(obstacles)
    states = np.column_stack(
        [
            rng.uniform(-10, 10, 50),
            rng.uniform(-4, 4, 50),
            rng.uniform(-np.pi, np.pi, 50),
            np.zeros(50),
        ]
    )
    got = batch_min_obstacle_distance(states, sc)
    poses = footprint_poses(states, P)
    expected = np.min(
        np.stack(
            [
                poses_rect_signed(poses, P.body_length, P.body_width, ob.rect)
                for ob in obstacles
            ]
        ),
        axis=0,
    )
    np.testing.assert_allclose(got, expected, atol=1e-9)


def test_batch_min_distance_cap_semantics(rng):
    obstacles = [Obstacle((5.0, 0.0), 0.0, 4.0, 1.8)]
    sc = simple_scenario(obstacles)
    states = np.column_stack(
        [
            rng.uniform(-15, 15, 80),
            rng.uniform(-3, 3, 80),
            rng.uniform(-np.pi, np.pi, 80),
            np.zeros(80),
        ]
    )
    exact = batch_min_obstacle_distance(states, sc)
    capped = batch_min_obstacle_distance(states, sc, cap=2.0)
    np.testing.assert_allclose(capped, np.minimum(exact, 2.0), atol=1e-9)


def test_in_collision_boundary_touch_is_free():
    # obstacle right edge at x = 3.0; ego front bumper exactly there
    ob = Obstacle((5.0, 0.0), 0.0, 4.0, 1.8)
    sc = simple_scenario([ob])
    front = P.wheelbase / 2 + P.body_length / 2
    touching = VehicleState(3.0 - front, 0.0, 0.0, 0.0)
    assert min_obstacle_distance(touching, sc) == pytest.approx(0.0, abs=1e-12)
    assert not in_collision(touching, sc)
    assert in_collision(VehicleState(3.0 - front + 0.02, 0.0, 0.0, 0.0), sc)


def test_in_collision_off_road():
    sc = simple_scenario([])
    assert not in_collision(VehicleState(0.0, 0.0, 0.0, 0.0), sc)
    # half the footprint past the lane edge
    assert in_collision(VehicleState(0.0, 2.5, 0.0, 0.0), sc)


def test_batch_road_contained_corners_matter():
    sc = simple_scenario([])
    # lane half-width 1.75, body half-width 0.9: center fits until 0.85
    states = np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.8, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
        ]
    )
    got = batch_road_contained(states, sc)
    assert got.tolist() == [True, True, False]


def test_batch_in_corridor():
    lanes = [straight_lane(), straight_lane(y=3.5, direction="oncoming", id="onc")]
    # corridor = within half-width of the centerline polyline, so the lane
    # ends carry rounded caps: (31, 0) is 1.0 from the last vertex
    pts = np.array([[0.0, 0.0], [0.0, 3.5], [0.0, 1.74], [0.0, 5.3], [31.0, 0.0]])
    got = batch_in_corridor(pts, lanes)
    assert got.tolist() == [True, True, True, False, True]
    assert not batch_in_corridor(np.array([[32.0, 0.0]]), lanes)[0]


def test_goal_region_heading_gate():
    g = GoalRegion((0.0, 0.0), 1.0, target_heading=np.pi / 2, heading_tolerance=0.3)
    assert g.contains(VehicleState(0.5, 0.0, np.pi / 2 + 0.2, 0.0))
    assert not g.contains(VehicleState(0.5, 0.0, np.pi / 2 + 0.5, 0.0))
    assert not g.contains(VehicleState(1.5, 0.0, np.pi / 2, 0.0))
    free = GoalRegion((0.0, 0.0), 1.0)
    assert free.contains(VehicleState(0.0, 0.9, -3.0, 0.0))


def test_scenario_validate_rejects_bad_layouts():
    blocking = Obstacle((-20.0, 0.0), 0.0, 4.0, 1.8)
    with pytest.raises(ScenarioError, match="in collision"):
        simple_scenario([blocking]).validate()
    swallowing_goal = Obstacle((25.0, 0.0), 0.0, 4.0, 1.8)
    with pytest.raises(ScenarioError, match="goal center"):
        simple_scenario([swallowing_goal]).validate()


def test_lane_validation():
    with pytest.raises(ScenarioError):
        LaneSegment(np.array([[0.0, 0.0]]), 3.5)
    with pytest.raises(ScenarioError):
        LaneSegment(np.array([[0.0, 0.0], [0.0, 0.0]]), 3.5)
    with pytest.raises(ScenarioError):
        LaneSegment(np.array([[0.0, 0.0], [1.0, 0.0]]), -1.0)
    with pytest.raises(ScenarioError):
        LaneSegment(np.array([[0.0, 0.0], [1.0, 0.0]]), 3.5, direction="sideways")


def test_oncoming_lane_free_vacuous_without_oncoming():
    sc = simple_scenario([Obstacle((5.0, 0.0), 0.0, 4.0, 1.8)])
    route = np.array([[-30.0, 0.0], [30.0, 0.0]])
    assert oncoming_lane_free(sc, route, 0.0, 60.0)


def test_oncoming_occupancy_uses_obstacle_center():
    lanes = [straight_lane(), straight_lane(y=3.5, direction="oncoming", id="onc")]
    route = np.array([[-30.0, 0.0], [30.0, 0.0]])
    # center in the oncoming corridor: occupies it
    sc = simple_scenario([Obstacle((0.0, 3.0), 0.0, 4.0, 1.8)], lanes=lanes)
    intervals = obstacle_route_intervals(sc, route)
    assert intervals[0][2] is True
    assert not oncoming_lane_free(sc, route, 25.0, 35.0)
    assert oncoming_lane_free(sc, route, 0.0, 20.0)  # interval ends before it
    # corner pokes across the lane boundary but the center stays in the
    # ego lane: not oncoming traffic
    sc2 = simple_scenario([Obstacle((0.0, 1.6), 0.0, 4.0, 1.8)], lanes=lanes)
    assert obstacle_route_intervals(sc2, route)[0][2] is False
    assert oncoming_lane_free(sc2, route, 0.0, 60.0)


def test_rule_params_defaults():
    r = RuleParams()
    assert r.d_safe == 0.5
    assert r.dv_max is None  # falls back to the vehicle comfort bound
    assert r.stop_hold == 3.0
