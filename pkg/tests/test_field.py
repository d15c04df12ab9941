import math

import numpy as np
import pytest

from occufield.errors import ConfigurationError
from occufield.field import (
    FieldParams,
    compute_normalization,
    export_heatmap,
    FieldGrid,
    load_grid,
    prior_normalized,
    prior_raw,
    rasterize_field,
    save_grid,
)
from occufield.geometry import Vec3, count_occlusions_many, scene_from_dict

from conftest import two_room_dict, wall_free_dict


def occluded_cell_mask(scene, params):
    """Boolean grid marking cells with at least one wall between them and the source."""
    grid = rasterize_field(scene, params)
    xs = grid.origin[0] + (np.arange(grid.width) + 0.5) * grid.cell_size
    ys = grid.origin[1] + (np.arange(grid.height) + 0.5) * grid.cell_size
    gx, gy = np.meshgrid(np.clip(xs, *[scene.bounds.min_xy[0], scene.bounds.max_xy[0]]),
                         np.clip(ys, *[scene.bounds.min_xy[1], scene.bounds.max_xy[1]]))
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    n = count_occlusions_many(pts, scene.source, scene)
    return n.reshape(grid.height, grid.width) >= 1


class TestPriorRaw:
    def test_unit_distance_free_field(self, wall_free_scene):
        src = wall_free_scene.source
        p = Vec3(src.x + 1.0, src.y, src.z)
        assert prior_raw(p, wall_free_scene) == pytest.approx(1.0 / (4 * math.pi), rel=1e-12)

    def test_inverse_square_quarter(self, wall_free_scene):
        src = wall_free_scene.source
        e1 = prior_raw(Vec3(src.x + 1.0, src.y, src.z), wall_free_scene)
        e2 = prior_raw(Vec3(src.x + 2.0, src.y, src.z), wall_free_scene)
        assert abs(e2 * 4.0 - e1) / e1 < 1e-12

    def test_two_walls_tau_squared(self, scene_file):
        data = two_room_dict()
        # second divider right behind the first, both fully occluding at y=0.5
        data["walls"].append([[3.2, 0.0], [3.2, 1.6]])
        scene = scene_from_dict(data)
        p = Vec3(5.0, 0.5, 1.5)
        d = math.dist((p.x, p.y, p.z), (1.0, 2.0, 1.5))
        expected = 0.25**2 / (4 * math.pi * d * d)
        assert prior_raw(p, scene) == pytest.approx(expected, rel=1e-12)

    def test_outside_bounds_raises(self, two_room_scene):
        with pytest.raises(ValueError, match="outside bounds"):
            prior_raw(Vec3(10.0, 2.0, 1.5), two_room_scene)

    def test_tau_zero_occluded_is_zero(self, scene_file):
        scene = scene_from_dict(two_room_dict(tau=0.0))
        assert prior_raw(Vec3(5.0, 0.5, 1.5), scene) == 0.0

    def test_strictly_decreasing_in_distance_and_walls(self, two_room_scene):
        src = two_room_scene.source
        e_near = prior_raw(Vec3(src.x + 0.5, src.y, src.z), two_room_scene)
        e_far = prior_raw(Vec3(src.x + 1.5, src.y, src.z), two_room_scene)
        assert e_near > e_far
        # same distance, occluded vs not
        e_clear = prior_raw(Vec3(5.0, 2.0, 1.5), two_room_scene)
        d_clear = math.dist((5.0, 2.0, 1.5), (src.x, src.y, src.z))
        # pick an occluded point at the same distance from the source
        p_occ = Vec3(5.0, 0.5, 1.5)
        d_occ = math.dist((p_occ.x, p_occ.y, p_occ.z), (src.x, src.y, src.z))
        e_occ = prior_raw(p_occ, two_room_scene)
        assert e_occ * d_occ**2 < e_clear * d_clear**2


class TestPriorNormalized:
    def test_clamp_point_is_one(self, two_room_scene):
        src = two_room_scene.source
        p = Vec3(src.x + 0.05, src.y, src.z)  # inside the 0.1 m clamp radius
        assert prior_normalized(p, two_room_scene) == 1.0

    def test_farthest_occluded_corner_is_zero(self, two_room_scene):
        # the far corner (6, 4, 0) sits behind the divider, n = n_max = 1
        assert prior_normalized(Vec3(6.0, 4.0, 0.0), two_room_scene) == pytest.approx(0.0, abs=1e-12)

    def test_monotone_decrease_along_ray(self, one_room_scene):
        src = one_room_scene.source
        radii = np.linspace(0.3, 2.8, 40)
        values = [prior_normalized(Vec3(src.x + r, src.y, src.z), one_room_scene)
                  for r in radii]
        assert all(0.0 < v < 1.0 for v in values)
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_normalization_is_cached_and_consistent(self, two_room_scene):
        params = FieldParams()
        norm = compute_normalization(two_room_scene, params)
        assert norm.n_max == 1
        assert norm.e_max == pytest.approx(1.0 / (4 * math.pi * 0.01), rel=1e-12)
        d_max = max(math.dist((x, y, z), (1, 2, 1.5))
                    for x in (0, 6) for y in (0, 4) for z in (0, 3))
        assert norm.d_max == pytest.approx(d_max, rel=1e-15)
        assert norm.e_min == pytest.approx(0.25 / (4 * math.pi * d_max**2), rel=1e-12)

    def test_degenerate_normalization_raises(self):
        tiny = {
            "bounds": {"min": [0, 0], "max": [0.05, 0.05], "z": [0, 0.05]},
            "walls": [],
            "source": [0.025, 0.025, 0.025],
            "tau": 0.25,
        }
        scene = scene_from_dict(tiny)
        with pytest.raises(ConfigurationError, match="degenerate normalization"):
            prior_normalized(Vec3(0.01, 0.01, 0.02), scene)


class TestRasterize:
    def test_all_cells_in_unit_interval(self, two_room_scene):
        grid = rasterize_field(two_room_scene)
        assert grid.values.shape == (grid.height, grid.width)
        assert np.all(grid.values >= 0.0) and np.all(grid.values <= 1.0)

    def test_grid_matches_point_calls(self, two_room_scene):
        params = FieldParams(grid_resolution=2.0)
        grid = rasterize_field(two_room_scene, params)
        z = two_room_scene.bounds.mid_height
        for iy in range(0, grid.height, 3):
            for ix in range(0, grid.width, 3):
                x = grid.origin[0] + (ix + 0.5) * grid.cell_size
                y = grid.origin[1] + (iy + 0.5) * grid.cell_size
                direct = prior_normalized(Vec3(x, y, z), two_room_scene, params)
                assert grid.values[iy, ix] == direct

    def test_tau_one_matches_pure_distance(self):
        walled = scene_from_dict(two_room_dict(tau=1.0))
        bare = scene_from_dict(dict(two_room_dict(tau=1.0), walls=[]))
        g_walled = rasterize_field(walled)
        g_bare = rasterize_field(bare)
        np.testing.assert_allclose(g_walled.values, g_bare.values, atol=1e-12)

    def test_tau_zero_blanks_occluded_room(self):
        scene = scene_from_dict(two_room_dict(tau=0.0))
        params = FieldParams()
        grid = rasterize_field(scene, params)
        occluded = occluded_cell_mask(scene, params)
        assert occluded.any()
        assert np.all(grid.values[occluded] == 0.0)
        assert np.all(grid.values[~occluded] > 0.0)

    def test_radial_symmetry_without_walls(self, wall_free_scene):
        grid = rasterize_field(wall_free_scene, FieldParams(grid_resolution=1.0))
        # source sits at the center: mirror the grid in x and in y
        np.testing.assert_allclose(grid.values, grid.values[::-1, :], atol=1e-9)
        np.testing.assert_allclose(grid.values, grid.values[:, ::-1], atol=1e-9)


class TestTauSweep:
    def test_occluded_cells_dominance(self):
        params = FieldParams()
        taus = [1.0, 0.5, 0.25, 0.0]
        grids = []
        for tau in taus:
            scene = scene_from_dict(two_room_dict(tau=tau))
            grids.append(rasterize_field(scene, params).values)
        occluded = occluded_cell_mask(scene_from_dict(two_room_dict()), params)
        for hi, lo in zip(grids, grids[1:]):
            assert np.all(hi[occluded] > lo[occluded])
        means = [g[occluded].mean() for g in grids]
        assert all(a > b for a, b in zip(means, means[1:]))


class TestHeatmapExport:
    def test_constant_half_rounds_up(self, tmp_path):
        grid = FieldGrid(origin=(0, 0), cell_size=1.0, width=3, height=2,
                         values=np.full((2, 3), 0.5))
        path = export_heatmap(grid, tmp_path / "half.pgm")
        data = path.read_bytes()
        assert data.startswith(b"P5\n3 2\n255\n")
        assert set(data[len(b"P5\n3 2\n255\n"):]) == {128}

    def test_two_by_two_endpoints(self, tmp_path):
        grid = FieldGrid(origin=(0, 0), cell_size=1.0, width=2, height=2,
                         values=np.array([[0.0, 1.0], [1.0, 0.0]]))
        path = export_heatmap(grid, tmp_path / "corners.pgm")
        assert path.read_bytes().endswith(bytes([0, 255, 255, 0]))

    def test_sweep_darkens_occluded_room(self, tmp_path):
        params = FieldParams()
        occluded = occluded_cell_mask(scene_from_dict(two_room_dict()), params)
        header = len(b"P5\n24 16\n255\n")
        means = []
        for tau in (1.0, 0.5, 0.25, 0.0):
            scene = scene_from_dict(two_room_dict(tau=tau))
            grid = rasterize_field(scene, params)
            path = export_heatmap(grid, tmp_path / f"tau{tau}.pgm")
            pixels = np.frombuffer(path.read_bytes()[header:], dtype=np.uint8)
            means.append(pixels.reshape(grid.height, grid.width)[occluded].mean())
        assert all(a > b for a, b in zip(means, means[1:]))


class TestGridDump:
    def test_round_trip(self, tmp_path, two_room_scene):
        grid = rasterize_field(two_room_scene)
        save_grid(grid, tmp_path / "grid")
        loaded = load_grid(tmp_path / "grid")
        assert loaded.width == grid.width and loaded.height == grid.height
        assert loaded.origin == grid.origin
        np.testing.assert_allclose(loaded.values, grid.values, atol=1e-7)
