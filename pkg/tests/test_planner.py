import numpy as np
import pytest

from conftest import dijkstra_path_cost
from voxbridge.esdf import IndexBox, build
from voxbridge.occupancy import VoxelSnapshot
from voxbridge.planner import (
    REPULSION_WEIGHT,
    SOFT_CLEARANCE,
    GoalUnknown,
    PlanRequest,
    Trajectory,
    Unreachable,
    effective_clearance,
    make_trajectory,
    plan,
    smooth,
)

RES = 0.1


def scenario(occupied, shape, unknown=()):
    """ESDF plus known-free mask for a small dense grid starting at index 0."""
    occupied = np.asarray(occupied, dtype=np.int64).reshape(-1, 3)
    region = IndexBox((0, 0, 0), tuple(s - 1 for s in shape))
    snap = VoxelSnapshot(resolution=RES, occupied=occupied, revision=1)
    esdf = build(snap, region, d_max=2.0)
    known_free = np.ones(shape, dtype=bool)
    for v in occupied:
        known_free[tuple(v)] = False
    for v in unknown:
        known_free[tuple(v)] = False
    return esdf, known_free


def center(cell):
    return (np.asarray(cell, dtype=float) + 0.5) * RES


def path_cost(traj: Trajectory, esdf) -> float:
    """Recompute the graph cost of an unsmoothed plan from its cell path."""
    cells = np.floor(traj.waypoints / RES).astype(np.int64)
    total = 0.0
    for a, b in zip(cells[:-1], cells[1:]):
        step = float(np.linalg.norm(b - a)) * RES
        soft = SOFT_CLEARANCE - esdf.values[tuple(b)]
        total += step + (REPULSION_WEIGHT * soft * step if soft > 0 else 0.0)
    return total


class TestBasics:
    def test_same_point_single_waypoint(self):
        esdf, free = scenario([], (10, 10, 10))
        p = center((3, 3, 3))
        traj = plan(PlanRequest(p, p, 0.0, esdf, free))
        assert len(traj.waypoints) == 1
        assert traj.total_length == 0.0

    def test_same_cell_two_waypoints(self):
        esdf, free = scenario([], (10, 10, 10))
        traj = plan(PlanRequest(center((3, 3, 3)), center((3, 3, 3)) + 0.03, 0.0, esdf, free))
        assert len(traj.waypoints) == 2
        assert np.allclose(traj.end, center((3, 3, 3)) + 0.03)

    def test_start_untraversable_raises(self):
        esdf, free = scenario([[0, 0, 0]], (6, 6, 6))
        with pytest.raises(Unreachable):
            plan(PlanRequest(center((0, 0, 0)), center((4, 4, 4)), 0.0, esdf, free))

    def test_timestamps_constant_speed(self):
        esdf, free = scenario([], (10, 10, 10))
        traj = plan(PlanRequest(center((1, 1, 1)), center((8, 1, 1)), 0.0, esdf, free, speed=0.5))
        assert traj.duration == pytest.approx(traj.total_length / 0.5)
        assert np.all(np.diff(traj.timestamps) > 0)


class TestEmptyGrid:
    def test_diagonal_within_five_percent_of_straight_line(self):
        esdf, free = scenario([], (10, 10, 10))
        start, goal = center((1, 1, 1)), center((8, 8, 8))
        traj = smooth(plan(PlanRequest(start, goal, 0.0, esdf, free)), esdf, 0.0)
        straight = float(np.linalg.norm(goal - start))
        assert np.allclose(traj.waypoints[0], start)
        assert np.allclose(traj.end, goal)
        assert traj.total_length <= straight * 1.05

    def test_axis_run_is_straight(self):
        esdf, free = scenario([], (12, 6, 6))
        start, goal = center((1, 2, 2)), center((10, 2, 2))
        traj = smooth(plan(PlanRequest(start, goal, 0.0, esdf, free)), esdf, 0.0)
        assert traj.total_length == pytest.approx(np.linalg.norm(goal - start))


class TestOptimality:
    def test_wall_with_hole_matches_dijkstra(self):
        shape = (11, 11, 11)
        occ = [
            (5, y, z)
            for y in range(11)
            for z in range(11)
            if not (4 <= y <= 6 and 4 <= z <= 6)
        ]
        esdf, free = scenario(occ, shape)
        start_cell, goal_cell = (1, 5, 5), (9, 5, 5)
        traj = plan(PlanRequest(center(start_cell), center(goal_cell), 0.0, esdf, free))
        # route must thread the hole, not clip the wall plane
        xs = traj.waypoints[:, 0]
        crossing = traj.waypoints[(xs > 0.5) & (xs < 0.6)]
        assert len(crossing) > 0

        eff = effective_clearance(0.0, RES)
        trav = free & (esdf.values >= eff)
        want = dijkstra_path_cost(
            trav, esdf.values, start_cell, goal_cell, RES, SOFT_CLEARANCE, REPULSION_WEIGHT
        )
        assert want is not None
        assert path_cost(traj, esdf) == pytest.approx(want, abs=1e-9)

    def test_random_worlds_match_dijkstra(self, rng):
        for _ in range(15):
            shape = (9, 9, 9)
            occ = rng.integers(0, 9, (int(rng.integers(3, 12)), 3))
            esdf, free = scenario(occ, shape)
            eff = effective_clearance(0.0, RES)
            trav = free & (esdf.values >= eff)
            cells = np.argwhere(trav)
            if len(cells) < 2:
                continue
            s = tuple(cells[int(rng.integers(len(cells)))])
            g = tuple(cells[int(rng.integers(len(cells)))])
            want = dijkstra_path_cost(
                trav, esdf.values, s, g, RES, SOFT_CLEARANCE, REPULSION_WEIGHT
            )
            try:
                traj = plan(PlanRequest(center(s), center(g), 0.0, esdf, free))
            except Unreachable:
                assert want is None
                continue
            assert want is not None
            assert path_cost(traj, esdf) == pytest.approx(want, abs=1e-9)


class TestGoalHandling:
    def test_occupied_goal_snaps_nearby(self):
        esdf, free = scenario([[5, 5, 5]], (10, 10, 10))
        goal = center((5, 5, 5))
        traj = plan(PlanRequest(center((1, 1, 1)), goal, 0.0, esdf, free))
        assert not traj.partial
        assert np.linalg.norm(traj.end - goal) <= 1.0

    def test_occupied_goal_beyond_snap_radius_raises(self):
        # a solid 5^3 block; goal dead center, snap radius tiny
        occ = [(x, y, z) for x in range(4, 9) for y in range(4, 9) for z in range(4, 9)]
        esdf, free = scenario(occ, (13, 13, 13))
        with pytest.raises(Unreachable):
            plan(
                PlanRequest(
                    center((1, 1, 1)), center((6, 6, 6)), 0.0, esdf, free, snap_radius=0.05
                )
            )

    def test_unknown_goal_gives_partial_frontier_hop(self):
        shape = (10, 10, 10)
        unknown = [(x, y, z) for x in range(6, 10) for y in range(10) for z in range(10)]
        esdf, free = scenario([], shape, unknown=unknown)
        goal = center((8, 5, 5))
        traj = plan(PlanRequest(center((1, 5, 5)), goal, 0.0, esdf, free))
        assert traj.partial
        assert np.allclose(traj.goal, goal)
        # hop ends at the known/unknown boundary, short of the goal
        assert traj.end[0] < 0.6 + 1e-9

    def test_sealed_off_goal_unreachable(self):
        shape = (11, 7, 7)
        occ = [(5, y, z) for y in range(7) for z in range(7)]  # solid wall
        esdf, free = scenario(occ, shape)
        with pytest.raises(Unreachable):
            plan(PlanRequest(center((1, 3, 3)), center((9, 3, 3)), 0.0, esdf, free))


class TestSmoothing:
    def test_never_lengthens_and_keeps_endpoints(self, rng):
        for _ in range(10):
            occ = rng.integers(0, 12, (8, 3))
            esdf, free = scenario(occ, (12, 12, 12))
            eff = effective_clearance(0.0, RES)
            cells = np.argwhere(free & (esdf.values >= eff))
            s = tuple(cells[int(rng.integers(len(cells)))])
            g = tuple(cells[int(rng.integers(len(cells)))])
            try:
                traj = plan(PlanRequest(center(s), center(g), 0.0, esdf, free))
            except Unreachable:
                continue
            out = smooth(traj, esdf, 0.0)
            assert out.total_length <= traj.total_length + 1e-12
            assert np.allclose(out.waypoints[0], traj.waypoints[0])
            assert np.allclose(out.end, traj.end)

    def test_samples_keep_clearance(self, rng):
        clearance = 0.1
        occ = [(6, y, z) for y in range(13) for z in range(13) if not (4 <= y <= 8 and 4 <= z <= 8)]
        esdf, free = scenario(occ, (13, 13, 13))
        traj = smooth(
            plan(PlanRequest(center((1, 6, 6)), center((11, 6, 6)), clearance, esdf, free)),
            esdf,
            clearance,
        )
        for a, b in zip(traj.waypoints[:-1], traj.waypoints[1:]):
            n = max(2, int(np.ceil(np.linalg.norm(b - a) / (RES / 2))) + 1)
            pts = a + np.linspace(0, 1, n)[:, None] * (b - a)
            assert np.all(esdf.distance_at_points(pts) >= clearance)

    def test_two_waypoints_passthrough(self):
        esdf, _ = scenario([], (5, 5, 5))
        traj = make_trajectory([center((1, 1, 1)), center((3, 3, 3))], 1.0)
        assert smooth(traj, esdf, 0.0) is traj


def test_goal_unknown_exception_exists():
    assert issubclass(GoalUnknown, RuntimeError)
