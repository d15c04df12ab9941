"""Direction-resolved local sound features around a receiver.

A deterministic golden-spiral lattice of G unit directions is cast from
the receiver; each ray is sampled at H radii and the normalized prior is
averaged with exponential distance weights, giving a G-vector of local
sound intensity. Fixed left/right ear directions derived from the gaze
turn that vector into per-ear features through cosine attention.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import binio
from .errors import ConfigurationError
from .field import FieldParams, prior_at_points

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class LocalFieldConfig:
    """Lattice size G, samples per ray H, and the radial sampling range."""

    G: int = 1024
    H: int = 10
    r_min: float = 0.01
    r_max: float = 1.0

    def __post_init__(self):
        if self.G < 4:
            raise ConfigurationError("G must be at least 4")
        if self.H < 1:
            raise ConfigurationError("H must be at least 1")
        if not 0.0 < self.r_min < self.r_max:
            raise ConfigurationError("require 0 < r_min < r_max")


def fibonacci_directions(count):
    """Deterministic near-uniform unit directions from the golden-spiral lattice.

    Point k of G uses z = 1 - (2k + 1)/G and azimuth 2*pi*k/phi with phi
    the golden ratio. Returns a (G, 3) array of unit vectors.
    """
    if count < 4:
        raise ConfigurationError("G must be at least 4")
    k = np.arange(count, dtype=float)
    z = 1.0 - (2.0 * k + 1.0) / count
    azimuth = 2.0 * np.pi * k / GOLDEN_RATIO
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.column_stack([rho * np.cos(azimuth), rho * np.sin(azimuth), z])


def ray_radii(cfg):
    """H uniformly spaced radii in [r_min, r_max]; H = 1 degenerates to r_min."""
    if cfg.H == 1:
        return np.array([cfg.r_min])
    return cfg.r_min + (np.arange(cfg.H) / (cfg.H - 1)) * (cfg.r_max - cfg.r_min)


def sample_local_field(pose, scene, lf_cfg=LocalFieldConfig(), field_params=FieldParams()):
    """Distance-weighted mean of the normalized prior along each lattice ray.

    Returns a (G,) vector in [0, 1]. Sample points outside the scene
    bounds contribute zero but stay in the weight denominator, so the
    normalization is independent of the pose.
    """
    if not scene.bounds.contains(pose.position):
        raise ValueError("receiver outside bounds")
    dirs = fibonacci_directions(lf_cfg.G)
    radii = ray_radii(lf_cfg)
    weights = np.exp(-radii)
    center = pose.position.as_array()
    # points[g, i] = center + radii[i] * dirs[g]
    pts = center[None, None, :] + radii[None, :, None] * dirs[:, None, :]
    values = prior_at_points(pts.reshape(-1, 3), scene, field_params)
    values = values.reshape(lf_cfg.G, len(radii))
    return values @ weights / weights.sum()


def ear_directions(pose):
    """Unit left/right ear directions: horizontal normals to the gaze.

    Left is vertical-up cross gaze; right is its exact negation.
    """
    gx, gy = pose.gaze.x, pose.gaze.y
    h = math.hypot(gx, gy)
    if h < 1e-12:
        raise ValueError("vertical gaze has no defined ear directions")
    left = np.array([-gy / h, gx / h, 0.0])
    return left, -left


def direction_attention(dirs, d):
    """Cosine attention of each lattice direction against a unit vector d."""
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("attention direction must be a unit vector")
    return dirs @ d


def apply_attention(feature, attention):
    """Element-wise product of a local feature with an attention vector."""
    feature = np.asarray(feature, dtype=float)
    attention = np.asarray(attention, dtype=float)
    if feature.shape != attention.shape:
        raise ValueError(f"length mismatch: {feature.shape} vs {attention.shape}")
    return feature * attention


def ear_features(pose, feature, dirs=None):
    """Per-ear attended copies of a local feature vector: (left, right)."""
    if dirs is None:
        dirs = fibonacci_directions(feature.shape[0])
    d_l, d_r = ear_directions(pose)
    att_l = direction_attention(dirs, d_l)
    att_r = direction_attention(dirs, d_r)
    return apply_attention(feature, att_l), apply_attention(feature, att_r)


def save_local_feature(stem, feature, pose, cfg):
    """Dump a local feature vector with its pose and config for inspection."""
    return binio.write_f32(
        stem,
        feature,
        meta={
            "G": int(feature.shape[0]),
            "pose": pose.to_dict(),
            "config": {"G": cfg.G, "H": cfg.H, "r_min": cfg.r_min, "r_max": cfg.r_max},
        },
    )
