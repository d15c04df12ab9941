import json
import math

import numpy as np
import pytest

from occufield.errors import SceneParseError, SceneValidationError
from occufield.geometry import (
    Pose,
    Vec3,
    WallSegment,
    count_occlusions,
    count_occlusions_many,
    count_occlusions_oracle,
    load_scene,
    scene_from_dict,
)

from conftest import one_room_dict, three_room_dict, two_room_dict, random_point_inside


class TestSceneLoading:
    def test_one_room_round_trip(self, scene_file):
        scene = load_scene(scene_file(one_room_dict()))
        assert len(scene.walls) == 4
        assert scene.tau == 0.25
        assert scene.to_dict()["walls"] == one_room_dict()["walls"]

    def test_two_room_seven_segments(self, scene_file):
        data = two_room_dict()
        # extra interior stub brings the segment count to seven
        data["walls"].append([[4.5, 0.0], [4.5, 0.8]])
        scene = load_scene(scene_file(data))
        assert len(scene.walls) == 7

    def test_tau_out_of_range(self, scene_file):
        data = one_room_dict(tau=1.5)
        with pytest.raises(SceneValidationError, match="tau out of range"):
            load_scene(scene_file(data))

    def test_source_outside_bounds(self, scene_file):
        data = one_room_dict()
        data["source"] = [7.0, 2.0, 1.5]
        with pytest.raises(SceneValidationError, match="source outside bounds"):
            load_scene(scene_file(data))

    def test_wall_endpoint_outside_bounds(self, scene_file):
        data = one_room_dict()
        data["walls"].append([[1, 1], [8, 1]])
        with pytest.raises(SceneValidationError, match="wall 4 endpoint"):
            load_scene(scene_file(data))

    def test_degenerate_wall(self):
        with pytest.raises(SceneValidationError, match="degenerate wall"):
            WallSegment(a=(1.0, 1.0), b=(1.0, 1.0))

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(SceneParseError, match="not valid JSON"):
            load_scene(path)

    def test_missing_field(self, scene_file):
        data = one_room_dict()
        del data["source"]
        with pytest.raises(SceneParseError, match="malformed scene"):
            load_scene(scene_file(data))


class TestPose:
    def test_vertical_gaze_rejected(self):
        with pytest.raises(SceneValidationError, match="vertical"):
            Pose(position=Vec3(1, 1, 1), gaze=Vec3(0, 0, 1))

    def test_non_unit_gaze_rejected(self):
        with pytest.raises(SceneValidationError, match="unit"):
            Pose(position=Vec3(1, 1, 1), gaze=Vec3(1, 1, 0))

    def test_dict_round_trip(self):
        pose = Pose(position=Vec3(1, 2, 1.5), gaze=Vec3(0, 1, 0))
        assert Pose.from_dict(pose.to_dict()) == pose


class TestOcclusionCounting:
    def test_same_room(self, two_room_scene):
        p = Vec3(2.0, 3.0, 1.5)
        assert count_occlusions(p, two_room_scene.source, two_room_scene) == 0

    def test_single_crossing(self, two_room_scene):
        p = Vec3(5.0, 0.5, 1.5)  # solid part of the divider lies in between
        assert count_occlusions(p, two_room_scene.source, two_room_scene) == 1

    def test_through_door_gap(self, two_room_scene):
        p = Vec3(5.0, 2.0, 1.5)  # straight line passes the 1.6..2.4 m opening
        assert count_occlusions(p, two_room_scene.source, two_room_scene) == 0

    def test_oracle_matches_on_examples(self, two_room_scene):
        for p in (Vec3(2, 3, 1.5), Vec3(5, 0.5, 1.5), Vec3(5, 2, 1.5)):
            assert count_occlusions(p, two_room_scene.source, two_room_scene) == \
                count_occlusions_oracle(p, two_room_scene.source, two_room_scene)

    def test_degenerate_query_raises(self, two_room_scene):
        p = Vec3(2, 2, 1.5)
        with pytest.raises(ValueError, match="degenerate"):
            count_occlusions(p, p, two_room_scene)
        with pytest.raises(ValueError, match="degenerate"):
            count_occlusions_oracle(p, p, two_room_scene)

    def test_pure_vertical_query(self, two_room_scene):
        a = Vec3(2.0, 2.0, 0.5)
        b = Vec3(2.0, 2.0, 2.5)
        assert count_occlusions(a, b, two_room_scene) == 0

    def test_symmetry(self, three_room_scene):
        rng = np.random.default_rng(7)
        for _ in range(200):
            p = random_point_inside(rng, three_room_scene)
            q = random_point_inside(rng, three_room_scene)
            assert count_occlusions(p, q, three_room_scene) == \
                count_occlusions(q, p, three_room_scene)

    def test_translation_invariance(self):
        rng = np.random.default_rng(8)
        base = three_room_dict()
        for _ in range(50):
            dx, dy = rng.uniform(-20, 20, 2)
            moved = three_room_dict()
            moved["bounds"]["min"] = [0 + dx, 0 + dy]
            moved["bounds"]["max"] = [9 + dx, 4 + dy]
            moved["walls"] = [[[a[0] + dx, a[1] + dy], [b[0] + dx, b[1] + dy]]
                              for a, b in base["walls"]]
            moved["source"] = [1 + dx, 2 + dy, 1.5]
            s0 = scene_from_dict(base)
            s1 = scene_from_dict(moved)
            p = random_point_inside(rng, s0)
            p_moved = Vec3(p.x + dx, p.y + dy, p.z)
            assert count_occlusions(p, s0.source, s0) == \
                count_occlusions(p_moved, s1.source, s1)

    def test_monotone_composition(self):
        rng = np.random.default_rng(9)
        data = three_room_dict()
        walls_a = data["walls"][:6]
        walls_b = data["walls"][6:]
        for _ in range(100):
            sa = dict(data, walls=walls_a)
            sb = dict(data, walls=walls_b)
            sab = dict(data, walls=walls_a + walls_b)
            s_a, s_b, s_ab = (scene_from_dict(d) for d in (sa, sb, sab))
            p = random_point_inside(rng, s_ab)
            q = random_point_inside(rng, s_ab)
            assert count_occlusions(p, q, s_ab) == \
                count_occlusions(p, q, s_a) + count_occlusions(p, q, s_b)

    def test_fuzz_oracle_agreement(self, three_room_scene):
        rng = np.random.default_rng(10)
        for _ in range(2000):
            p = random_point_inside(rng, three_room_scene, margin=0.01)
            q = random_point_inside(rng, three_room_scene, margin=0.01)
            assert count_occlusions(p, q, three_room_scene) == \
                count_occlusions_oracle(p, q, three_room_scene)

    def test_collinear_grazing_agreement(self, two_room_scene):
        # wall endpoint (3, 1.6) exactly on the query's supporting line
        p = Vec3(1.0, 1.6, 1.5)
        q = Vec3(5.0, 1.6, 1.5)
        n_param = count_occlusions(p, q, two_room_scene)
        n_oracle = count_occlusions_oracle(p, q, two_room_scene)
        assert n_param == n_oracle
        # grazing along the wall's own line: touches both divider pieces
        r = Vec3(3.0, 0.5, 1.5)
        s = Vec3(3.0, 3.5, 1.5)
        assert count_occlusions(r, s, two_room_scene) == \
            count_occlusions_oracle(r, s, two_room_scene) == 0

    def test_batch_matches_scalar(self, three_room_scene):
        rng = np.random.default_rng(11)
        pts = np.column_stack([
            rng.uniform(0.05, 8.95, 500),
            rng.uniform(0.05, 3.95, 500),
        ])
        batch = count_occlusions_many(pts, three_room_scene.source, three_room_scene)
        for (x, y), n in zip(pts, batch):
            assert count_occlusions(Vec3(x, y, 1.5), three_room_scene.source,
                                    three_room_scene) == n
