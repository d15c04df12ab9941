"""Scene layout and mid-height wall occlusion queries.

A scene is an axis-aligned room box plus a list of wall segments drawn in
the horizontal plane at the middle height of the room. Occlusion between
two 3D points is the number of wall segments properly crossed by the 2D
projection of the connecting segment; z is ignored by convention.

Crossing tie-break rule used by every implementation here: a wall is
counted iff the query segment strictly changes side of the wall's
supporting line and the crossing point lies within the wall's closed
extent. Endpoint touches that do not change side count as zero. All
epsilon comparisons happen in coordinates scaled by the scene's bounds
diagonal so the rule is scale-free.
"""

from dataclasses import dataclass
from functools import lru_cache
import json
import math
from pathlib import Path

import numpy as np

from .errors import SceneParseError, SceneValidationError

EPS = 1e-9


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise SceneValidationError("Vec3 components must be finite")

    def as_array(self):
        return np.array([self.x, self.y, self.z], dtype=float)

    @property
    def xy(self):
        return (self.x, self.y)


def _norm3(v):
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


@dataclass(frozen=True)
class Pose:
    """Receiver position plus unit gaze direction.

    The gaze may not be parallel to the vertical axis; the horizontal
    component is needed to derive the two ear directions.
    """

    position: Vec3
    gaze: Vec3

    def __post_init__(self):
        g = (self.gaze.x, self.gaze.y, self.gaze.z)
        if abs(_norm3(g) - 1.0) > 1e-9:
            raise SceneValidationError("gaze must be a unit vector")
        if math.hypot(g[0], g[1]) < 1e-12:
            raise SceneValidationError("gaze must not be parallel to the vertical axis")

    def to_dict(self):
        return {
            "position": [self.position.x, self.position.y, self.position.z],
            "gaze": [self.gaze.x, self.gaze.y, self.gaze.z],
        }

    @staticmethod
    def from_dict(d):
        return Pose(position=Vec3(*d["position"]), gaze=Vec3(*d["gaze"]))


@dataclass(frozen=True)
class WallSegment:
    """Wall footprint at mid-height: a 2D segment in meters."""

    a: tuple
    b: tuple

    def __post_init__(self):
        ax, ay = self.a
        bx, by = self.b
        if math.hypot(bx - ax, by - ay) <= 1e-6:
            raise SceneValidationError("degenerate wall (endpoints closer than 1e-6 m)")


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned room box: 2D rectangle plus a z range."""

    min_xy: tuple
    max_xy: tuple
    z_range: tuple

    def __post_init__(self):
        if not (self.min_xy[0] < self.max_xy[0] and self.min_xy[1] < self.max_xy[1]):
            raise SceneValidationError("bounds rectangle is empty")
        if not self.z_range[0] < self.z_range[1]:
            raise SceneValidationError("bounds z range is empty")

    def contains_xy(self, x, y):
        return (
            self.min_xy[0] <= x <= self.max_xy[0]
            and self.min_xy[1] <= y <= self.max_xy[1]
        )

    def contains(self, p):
        return self.contains_xy(p.x, p.y) and self.z_range[0] <= p.z <= self.z_range[1]

    @property
    def diagonal(self):
        dx = self.max_xy[0] - self.min_xy[0]
        dy = self.max_xy[1] - self.min_xy[1]
        return math.hypot(dx, dy)

    @property
    def mid_height(self):
        return 0.5 * (self.z_range[0] + self.z_range[1])


@dataclass(frozen=True)
class SceneLayout:
    """Immutable scene: bounds, mid-height walls, source position, transmission."""

    bounds: Bounds
    walls: tuple
    source: Vec3
    tau: float

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise SceneValidationError("tau out of range [0, 1]")
        if not self.bounds.contains(self.source):
            raise SceneValidationError("source outside bounds")
        for i, w in enumerate(self.walls):
            for pt in (w.a, w.b):
                if not self.bounds.contains_xy(pt[0], pt[1]):
                    raise SceneValidationError(f"wall {i} endpoint outside bounds")

    def to_dict(self):
        return {
            "bounds": {
                "min": list(self.bounds.min_xy),
                "max": list(self.bounds.max_xy),
                "z": list(self.bounds.z_range),
            },
            "walls": [[list(w.a), list(w.b)] for w in self.walls],
            "source": [self.source.x, self.source.y, self.source.z],
            "tau": self.tau,
        }


def scene_from_dict(data):
    """Build a validated SceneLayout from the scene-file dictionary."""
    try:
        bounds = Bounds(
            min_xy=tuple(float(v) for v in data["bounds"]["min"]),
            max_xy=tuple(float(v) for v in data["bounds"]["max"]),
            z_range=tuple(float(v) for v in data["bounds"]["z"]),
        )
        walls = tuple(
            WallSegment(a=(float(w[0][0]), float(w[0][1])), b=(float(w[1][0]), float(w[1][1])))
            for w in data["walls"]
        )
        source = Vec3(*(float(v) for v in data["source"]))
        tau = float(data["tau"])
    except SceneValidationError:
        raise
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise SceneParseError(f"malformed scene data: {exc}") from exc
    return SceneLayout(bounds=bounds, walls=walls, source=source, tau=tau)


def load_scene(path):
    """Load and validate a scene JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise SceneParseError(f"cannot read scene file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SceneParseError(f"scene file is not valid JSON: {exc}") from exc
    return scene_from_dict(data)


@lru_cache(maxsize=32)
def _walls_array(scene):
    """Wall endpoints as float arrays (M,2) scaled to normalized units."""
    scale = 1.0 / scene.bounds.diagonal
    a = np.array([w.a for w in scene.walls], dtype=float).reshape(-1, 2) * scale
    b = np.array([w.b for w in scene.walls], dtype=float).reshape(-1, 2) * scale
    return a, b, scale


def _check_query(p, q):
    d = math.sqrt((p.x - q.x) ** 2 + (p.y - q.y) ** 2 + (p.z - q.z) ** 2)
    if d < 1e-9:
        raise ValueError("degenerate occlusion query (p == q)")


def count_occlusions(p, q, scene):
    """Number of walls properly crossed by the 2D projection of segment (p, q).

    Parametric implementation: solves for the intersection parameters and
    applies the shared tie-break rule (strict side change of the wall's
    supporting line, crossing within the wall's closed extent).
    """
    _check_query(p, q)
    wa, wb, scale = _walls_array(scene)
    if wa.shape[0] == 0:
        return 0
    px, py = p.x * scale, p.y * scale
    qx, qy = q.x * scale, q.y * scale
    dx, dy = qx - px, qy - py
    if math.hypot(dx, dy) < EPS:
        return 0  # mid-height convention: purely vertical query traverses nothing
    count = 0
    for (ax, ay), (bx, by) in zip(wa, wb):
        ex, ey = bx - ax, by - ay
        denom = dx * ey - dy * ex
        if abs(denom) <= EPS:
            continue  # parallel or collinear: no strict side change
        # t along the query, u along the wall
        t = ((ax - px) * ey - (ay - py) * ex) / denom
        u = ((ax - px) * dy - (ay - py) * dx) / denom
        if EPS < t < 1.0 - EPS and -EPS <= u <= 1.0 + EPS:
            count += 1
    return count


def _sign_eps(v):
    if v > EPS:
        return 1
    if v < -EPS:
        return -1
    return 0


def count_occlusions_oracle(p, q, scene):
    """Independent crossing counter using signed-orientation predicates only.

    Same contract and tie-break rule as :func:`count_occlusions` but with
    no parametric division: the query must strictly straddle the wall's
    supporting line, and the wall endpoints must not lie strictly on the
    same side of the query's supporting line (closed wall extent).
    """
    _check_query(p, q)
    wa, wb, scale = _walls_array(scene)
    if wa.shape[0] == 0:
        return 0
    px, py = p.x * scale, p.y * scale
    qx, qy = q.x * scale, q.y * scale
    if math.hypot(qx - px, qy - py) < EPS:
        return 0
    count = 0
    for (ax, ay), (bx, by) in zip(wa, wb):
        o_p = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        o_q = (bx - ax) * (qy - ay) - (by - ay) * (qx - ax)
        if _sign_eps(o_p) * _sign_eps(o_q) != -1:
            continue
        o_a = (qx - px) * (ay - py) - (qy - py) * (ax - px)
        o_b = (qx - px) * (by - py) - (qy - py) * (bx - px)
        if _sign_eps(o_a) * _sign_eps(o_b) <= 0:
            count += 1
    return count


def count_occlusions_many(points_xy, q, scene):
    """Vectorized :func:`count_occlusions` for N 2D points against one endpoint.

    ``points_xy`` is an (N, 2) array in meters; ``q`` is the shared far
    endpoint (typically the source). Returns an (N,) int array with the
    same tie-break semantics as the scalar implementation.
    """
    wa, wb, scale = _walls_array(scene)
    pts = np.asarray(points_xy, dtype=float) * scale
    n = pts.shape[0]
    if wa.shape[0] == 0:
        return np.zeros(n, dtype=int)
    qx, qy = q.x * scale, q.y * scale
    dx = qx - pts[:, 0]
    dy = qy - pts[:, 1]
    ex = (wb[:, 0] - wa[:, 0])[None, :]
    ey = (wb[:, 1] - wa[:, 1])[None, :]
    denom = dx[:, None] * ey - dy[:, None] * ex
    rx = wa[None, :, 0] - pts[:, 0, None]
    ry = wa[None, :, 1] - pts[:, 1, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rx * ey - ry * ex) / denom
        u = (rx * dy[:, None] - ry * dx[:, None]) / denom
    ok = np.abs(denom) > EPS
    ok &= (t > EPS) & (t < 1.0 - EPS)
    ok &= (u >= -EPS) & (u <= 1.0 + EPS)
    counts = ok.sum(axis=1).astype(int)
    degenerate = np.hypot(dx, dy) < EPS
    counts[degenerate] = 0
    return counts
