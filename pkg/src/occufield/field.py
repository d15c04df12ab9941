"""Distance- and occlusion-aware sound prior over a scene.

The raw prior at a point combines free-field inverse-square attenuation
with a per-wall transmission factor: E = tau**n / (4*pi*d**2), where n is
the mid-height wall count between the point and the source. Values are
reported on a log scale normalized to [0, 1] between the scene's loudest
reachable value (at the clamp distance ``d_floor``, unoccluded) and its
quietest one (at the maximum source distance behind the scene's realized
maximum wall count).
"""

from dataclasses import dataclass
from functools import lru_cache
import math
from pathlib import Path

import numpy as np

from . import binio
from .errors import ConfigurationError
from .geometry import count_occlusions, count_occlusions_many

LOG_4PI = math.log(4.0 * math.pi)


@dataclass(frozen=True)
class FieldParams:
    """Evaluation parameters for the prior.

    ``tau=None`` uses the scene's own transmission coefficient; a float
    overrides it (used by the tau-sweep renderer). ``d_floor`` clamps the
    inverse-square singularity near the source. ``grid_resolution`` is in
    cells per meter and also fixes the grid on which the realized maximum
    occlusion count is measured.
    """

    tau: float | None = None
    d_floor: float = 0.1
    grid_resolution: float = 4.0

    def __post_init__(self):
        if self.tau is not None and not 0.0 <= self.tau <= 1.0:
            raise ConfigurationError("tau out of range [0, 1]")
        if self.d_floor <= 0.0:
            raise ConfigurationError("d_floor must be positive")
        if self.grid_resolution <= 0.0:
            raise ConfigurationError("grid_resolution must be positive")


@dataclass
class FieldGrid:
    """Normalized prior rasterized at mid-height cell centers.

    ``values[iy, ix]`` corresponds to the cell center at
    ``origin + ((ix + 0.5) * cell_size, (iy + 0.5) * cell_size)``.
    """

    origin: tuple
    cell_size: float
    width: int
    height: int
    values: np.ndarray


@dataclass(frozen=True)
class FieldNormalization:
    """Scene-dependent endpoints of the log-scale normalization."""

    tau: float
    e_max: float
    e_min: float
    ln_e_max: float
    ln_e_min: float
    n_max: int
    d_max: float


def resolve_tau(scene, params):
    return scene.tau if params.tau is None else params.tau


def _grid_shape(scene, params):
    bounds = scene.bounds
    cell = 1.0 / params.grid_resolution
    width = max(1, math.ceil((bounds.max_xy[0] - bounds.min_xy[0]) * params.grid_resolution))
    height = max(1, math.ceil((bounds.max_xy[1] - bounds.min_xy[1]) * params.grid_resolution))
    return width, height, cell


def _grid_centers(scene, params):
    """Cell-center coordinates clipped into bounds (edge cells may overshoot)."""
    bounds = scene.bounds
    width, height, cell = _grid_shape(scene, params)
    xs = bounds.min_xy[0] + (np.arange(width) + 0.5) * cell
    ys = bounds.min_xy[1] + (np.arange(height) + 0.5) * cell
    xs = np.clip(xs, bounds.min_xy[0], bounds.max_xy[0])
    ys = np.clip(ys, bounds.min_xy[1], bounds.max_xy[1])
    gx, gy = np.meshgrid(xs, ys)  # shape (height, width)
    return gx, gy, width, height, cell


@lru_cache(maxsize=32)
def compute_normalization(scene, params):
    """Normalization endpoints: loudest clamp value vs quietest realizable value.

    The maximum occlusion count is the realized maximum over the
    mid-height rasterization grid. When tau is zero the quiet endpoint
    uses n = 0, since occluded points short-circuit to zero anyway and a
    zero endpoint would collapse the log range.
    """
    tau = resolve_tau(scene, params)
    bounds = scene.bounds
    corners = [
        (x, y, z)
        for x in (bounds.min_xy[0], bounds.max_xy[0])
        for y in (bounds.min_xy[1], bounds.max_xy[1])
        for z in bounds.z_range
    ]
    src = scene.source.as_array()
    d_max = max(math.dist(c, src) for c in corners)

    gx, gy, _, _, _ = _grid_centers(scene, params)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    n_max = int(count_occlusions_many(pts, scene.source, scene).max()) if scene.walls else 0

    ln_e_max = -LOG_4PI - 2.0 * math.log(params.d_floor)
    n_for_min = 0 if tau == 0.0 else n_max
    d_for_min = max(d_max, params.d_floor)
    ln_e_min = -LOG_4PI - 2.0 * math.log(d_for_min) + n_for_min * (math.log(tau) if tau > 0 else 0.0)
    if not ln_e_max > ln_e_min:
        raise ConfigurationError(
            "degenerate normalization: maximum and minimum prior coincide "
            f"(d_floor={params.d_floor}, d_max={d_max}, n_max={n_max})"
        )
    return FieldNormalization(
        tau=tau,
        e_max=math.exp(ln_e_max),
        e_min=math.exp(ln_e_min),
        ln_e_max=ln_e_max,
        ln_e_min=ln_e_min,
        n_max=n_max,
        d_max=d_max,
    )


def prior_raw(p, scene, params=FieldParams()):
    """Raw prior E = tau**n / (4*pi*max(d, d_floor)**2) at a point inside bounds."""
    if not scene.bounds.contains(p):
        raise ValueError("point outside bounds")
    tau = resolve_tau(scene, params)
    d = math.dist((p.x, p.y, p.z), (scene.source.x, scene.source.y, scene.source.z))
    d_eff = max(d, params.d_floor)
    n = 0 if d < 1e-9 else count_occlusions(p, scene.source, scene)
    return (tau**n) / (4.0 * math.pi * d_eff * d_eff)


def prior_at_points(points, scene, params=FieldParams(), out_of_bounds="zero"):
    """Normalized prior for an (N, 3) array of points.

    Out-of-bounds points yield 0 when ``out_of_bounds == "zero"`` (the
    local-field convention) and raise otherwise.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    bounds = scene.bounds
    inside = (
        (pts[:, 0] >= bounds.min_xy[0])
        & (pts[:, 0] <= bounds.max_xy[0])
        & (pts[:, 1] >= bounds.min_xy[1])
        & (pts[:, 1] <= bounds.max_xy[1])
        & (pts[:, 2] >= bounds.z_range[0])
        & (pts[:, 2] <= bounds.z_range[1])
    )
    if out_of_bounds == "raise" and not inside.all():
        raise ValueError("point outside bounds")

    norm = compute_normalization(scene, params)
    tau = norm.tau
    src = scene.source.as_array()
    d = np.linalg.norm(pts - src[None, :], axis=1)
    d_eff = np.maximum(d, params.d_floor)
    n = count_occlusions_many(pts[:, :2], scene.source, scene)
    # points exactly at the source have no lateral traversal
    n[d < 1e-9] = 0

    ln_e = -LOG_4PI - 2.0 * np.log(d_eff)
    if tau > 0.0:
        ln_e = ln_e + n * math.log(tau)
    values = (ln_e - norm.ln_e_min) / (norm.ln_e_max - norm.ln_e_min)
    values = np.clip(values, 0.0, 1.0)
    if tau == 0.0:
        values[n >= 1] = 0.0
    values[~inside] = 0.0
    return values


def prior_normalized(p, scene, params=FieldParams()):
    """Normalized prior in [0, 1] at a single point (raises outside bounds)."""
    pts = np.array([[p.x, p.y, p.z]], dtype=float)
    return float(prior_at_points(pts, scene, params, out_of_bounds="raise")[0])


def rasterize_field(scene, params=FieldParams()):
    """Sample the normalized prior at mid-height cell centers over the bounds."""
    gx, gy, width, height, cell = _grid_centers(scene, params)
    z = scene.bounds.mid_height
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)])
    values = prior_at_points(pts, scene, params).reshape(height, width)
    return FieldGrid(
        origin=(scene.bounds.min_xy[0], scene.bounds.min_xy[1]),
        cell_size=cell,
        width=width,
        height=height,
        values=values,
    )


def export_heatmap(grid, path):
    """Write the grid as an 8-bit binary PGM (P5), 0 -> black, 1 -> white.

    Quantization is round-half-up; rows are written in array order.
    """
    path = Path(path)
    pixels = np.floor(grid.values * 255.0 + 0.5)
    pixels = np.clip(pixels, 0, 255).astype(np.uint8)
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    path.write_bytes(header + pixels.tobytes())
    return path


def save_grid(grid, stem):
    """Dump grid values (float32 LE row-major) with the JSON sidecar."""
    return binio.write_f32(
        stem,
        grid.values,
        meta={
            "origin": list(grid.origin),
            "cell_size": grid.cell_size,
            "width": grid.width,
            "height": grid.height,
        },
    )


def load_grid(stem):
    values, meta = binio.read_f32(stem)
    return FieldGrid(
        origin=tuple(meta["origin"]),
        cell_size=meta["cell_size"],
        width=meta["width"],
        height=meta["height"],
        values=values,
    )
