import json

import numpy as np
import pytest

from voxbridge.world import Box, WorldFileError, WorldModel, load_world, ray_ranges


@pytest.fixture
def simple_world():
    return WorldModel(
        bounds=Box(np.zeros(3), np.array([5.0, 6.0, 3.0])),
        obstacles=(Box(np.array([2.0, 2.0, 0.0]), np.array([2.5, 2.5, 2.0])),),
    )


def test_load_json(tmp_path, simple_world):
    p = tmp_path / "w.json"
    p.write_text(json.dumps(simple_world.to_dict()))
    w = load_world(p)
    assert np.allclose(w.bounds.hi, [5, 6, 3])
    assert len(w.obstacles) == 1


def test_load_yaml(tmp_path):
    p = tmp_path / "w.yaml"
    p.write_text("bounds: {min: [0,0,0], max: [1,1,1]}\nobstacles: []\n")
    w = load_world(p)
    assert np.allclose(w.bounds.hi, [1, 1, 1])


def test_bad_world_rejected(tmp_path):
    p = tmp_path / "w.json"
    p.write_text("{not json")
    with pytest.raises(WorldFileError):
        load_world(p)
    p.write_text(json.dumps({"bounds": {"min": [0, 0, 0], "max": [0, 1, 1]}}))
    with pytest.raises(WorldFileError):
        load_world(p)


def test_obstacle_outside_bounds_rejected():
    with pytest.raises(WorldFileError):
        WorldModel(
            bounds=Box(np.zeros(3), np.ones(3)),
            obstacles=(Box(np.array([5.0, 5, 5]), np.array([6.0, 6, 6])),),
        )


def test_box_distance():
    b = Box(np.zeros(3), np.ones(3))
    assert b.distance([0.5, 0.5, 0.5]) == 0.0
    assert b.distance([2.0, 0.5, 0.5]) == pytest.approx(1.0)
    assert b.distance([2.0, 2.0, 0.5]) == pytest.approx(np.sqrt(2))


def test_ray_hits_wall(simple_world):
    r = ray_ranges([1.0, 2.25, 1.0], np.array([[1.0, 0.0, 0.0]]), simple_world.obstacles, 4.0)
    assert r[0] == pytest.approx(1.0)


def test_ray_miss_returns_max_range(simple_world):
    r = ray_ranges([1.0, 2.25, 1.0], np.array([[-1.0, 0.0, 0.0]]), simple_world.obstacles, 4.0)
    assert r[0] == 4.0


def test_ray_ranges_match_slab_oracle(rng):
    obstacles = []
    for _ in range(6):
        lo = rng.uniform(0, 4, 3)
        obstacles.append(Box(lo, lo + rng.uniform(0.2, 1.5, 3)))
    max_range = 4.0

    def slab_one(origin, d):
        best = max_range
        for b in obstacles:
            tmin, tmax = -np.inf, np.inf
            ok = True
            for a in range(3):
                if d[a] == 0.0:
                    if not (b.lo[a] <= origin[a] <= b.hi[a]):
                        ok = False
                        break
                else:
                    t1 = (b.lo[a] - origin[a]) / d[a]
                    t2 = (b.hi[a] - origin[a]) / d[a]
                    tmin = max(tmin, min(t1, t2))
                    tmax = min(tmax, max(t1, t2))
            if not ok or tmax < tmin or tmax < 0:
                continue
            best = min(best, max(tmin, 0.0))
        return best

    for _ in range(100):
        origin = rng.uniform(0.2, 4.8, 3)
        dirs = rng.normal(size=(16, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        got = ray_ranges(origin, dirs, obstacles, max_range)
        want = [slab_one(origin, d) for d in dirs]
        assert np.allclose(got, want, atol=1e-9)
