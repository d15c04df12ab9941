import json

import numpy as np
import pytest

from occufield.geometry import Pose, Vec3, scene_from_dict

MID_Z = 1.5


def _perimeter(w, h):
    return [[[0, 0], [w, 0]], [[w, 0], [w, h]], [[w, h], [0, h]], [[0, h], [0, 0]]]


def one_room_dict(tau=0.25):
    return {
        "bounds": {"min": [0, 0], "max": [6, 4], "z": [0, 3]},
        "walls": _perimeter(6, 4),
        "source": [1.0, 2.0, MID_Z],
        "tau": tau,
    }


def two_room_dict(tau=0.25):
    """6 x 4 m box split at x = 3 by a wall with a 0.8 m door gap."""
    return {
        "bounds": {"min": [0, 0], "max": [6, 4], "z": [0, 3]},
        "walls": _perimeter(6, 4) + [[[3, 0], [3, 1.6]], [[3, 2.4], [3, 4]]],
        "source": [1.0, 2.0, MID_Z],
        "tau": tau,
    }


def three_room_dict(tau=0.25):
    """9 x 4 m box with two gapped dividers at x = 3 and x = 6."""
    return {
        "bounds": {"min": [0, 0], "max": [9, 4], "z": [0, 3]},
        "walls": _perimeter(9, 4)
        + [[[3, 0], [3, 1.6]], [[3, 2.4], [3, 4]],
           [[6, 0], [6, 1.6]], [[6, 2.4], [6, 4]]],
        "source": [1.0, 2.0, MID_Z],
        "tau": tau,
    }


def wall_free_dict(size=40.0, tau=0.25):
    return {
        "bounds": {"min": [0, 0], "max": [size, size], "z": [0, 3]},
        "walls": [],
        "source": [size / 2, size / 2, MID_Z],
        "tau": tau,
    }


@pytest.fixture
def one_room_scene():
    return scene_from_dict(one_room_dict())


@pytest.fixture
def two_room_scene():
    return scene_from_dict(two_room_dict())


@pytest.fixture
def three_room_scene():
    return scene_from_dict(three_room_dict())


@pytest.fixture
def wall_free_scene():
    return scene_from_dict(wall_free_dict())


@pytest.fixture
def scene_file(tmp_path):
    def _write(data, name="scene.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return _write


def random_point_inside(rng, scene, margin=0.05):
    b = scene.bounds
    return Vec3(
        rng.uniform(b.min_xy[0] + margin, b.max_xy[0] - margin),
        rng.uniform(b.min_xy[1] + margin, b.max_xy[1] - margin),
        rng.uniform(b.z_range[0] + margin, b.z_range[1] - margin),
    )


def random_pose(rng, scene, margin=0.3):
    p = random_point_inside(rng, scene, margin)
    ang = rng.uniform(0, 2 * np.pi)
    return Pose(position=p, gaze=Vec3(np.cos(ang), np.sin(ang), 0.0))
